import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustsgd.core import ConfigurationError, ContractViolation, DenseVector, RngStream
from robustsgd.problems import (
    NoiseModel,
    build_classification_task,
    build_hetero_lower_bound,
    build_noise_lower_bound,
    build_random_quadratic_family,
    build_synthetic_family,
    certify_dissimilarity,
    dissimilarity_gap,
    sample_check_dissimilarity,
    stochastic_gradient,
    with_noise,
)

pos = st.floats(min_value=0.1, max_value=10.0, allow_nan=False)
nonneg = st.floats(min_value=0.0, max_value=2.0, allow_nan=False)


# ---- two-worker heterogeneous family --------------------------------------


class TestHeteroFamily:
    def test_frozen_construction_values(self):
        # independently derived by hand for (mu, G, B, kappa) = (1, 1, 0.5, 0.1):
        #   delta = sqrt(3)/4, eps = 1/2,
        #   x_F*  = (sqrt(0.1)/2) / (1 - sqrt(0.1)*sqrt(3)/4)
        inst = build_hetero_lower_bound(mu=1.0, G=1.0, B=0.5, kappa=0.1)
        assert inst.params["delta"] == pytest.approx(0.4330127018922193, abs=1e-15)
        assert inst.analytic.L == pytest.approx(1.4330127018922193, abs=1e-15)
        assert float(inst.analytic.x_F_star.values[0]) == pytest.approx(
            0.18319950889480757, abs=1e-15
        )
        assert float(inst.analytic.x_star.values[0]) == 0.0

    @given(pos, nonneg, st.floats(0.0, 0.9), st.floats(-3.0, 3.0))
    @settings(max_examples=60)
    def test_honest_average_gradient_is_mu_x(self, mu, G, B, x):
        inst = build_hetero_lower_bound(mu=mu, G=G, B=B)
        got = inst.grad_f_H(DenseVector([x])).values[0]
        assert got == pytest.approx(mu * x, rel=1e-12, abs=1e-12)

    def test_dissimilarity_certificate_tight(self):
        inst = build_hetero_lower_bound(mu=1.0, G=1.0, B=0.5)
        res = certify_dissimilarity(inst, G=1.0, B=0.5)
        assert res.passed
        assert res.status == "tight"

    def test_dissimilarity_fails_below_declared(self):
        inst = build_hetero_lower_bound(mu=1.0, G=1.0, B=0.5)
        res = certify_dissimilarity(inst, G=0.5, B=0.5)
        assert not res.passed
        # the witness must be a genuine violation
        assert dissimilarity_gap(inst, 0.5, 0.5, res.witness) > 0

    def test_drift_denominator_must_stay_positive(self):
        with pytest.raises(ConfigurationError, match="positive"):
            build_hetero_lower_bound(mu=1.0, G=1.0, B=2.0, kappa=4.0)

    def test_multidimensional_certificate_dimension_free(self):
        for d in (1, 3, 7):
            inst = build_hetero_lower_bound(mu=1.0, G=1.0, B=0.5, d=d)
            assert certify_dissimilarity(inst, 1.0, 0.5).passed


# ---- two-worker noisy family ----------------------------------------------


class TestNoiseFamily:
    def test_frozen_construction_values(self):
        inst = build_noise_lower_bound(mu=1.0, B=0.5, sigma=1.0, kappa=0.1)
        assert inst.analytic.L == pytest.approx(1.5, abs=0)
        x_F = float(inst.analytic.x_F_star.values[0])
        assert x_F == pytest.approx(0.1716869262977801, abs=1e-15)
        assert x_F * x_F == pytest.approx(0.029476400661579374, rel=1e-14)

    def test_bernoulli_oracle_is_unbiased_and_bounded(self):
        inst = build_noise_lower_bound(mu=1.0, B=0.5, sigma=0.7)
        x = DenseVector([2.0])
        draws = [
            stochastic_gradient(inst, 0, x, RngStream(s, 0, "t")).values[0]
            for s in range(400)
        ]
        exact = inst.local_grad(0, x).values[0]
        # every draw is exact +/- sigma, and both signs occur
        offs = {round(v - exact, 12) for v in draws}
        assert offs == {0.7, -0.7}

    def test_curvatures(self):
        inst = build_noise_lower_bound(mu=2.0, B=0.5, sigma=1.0)
        assert inst.locals[0].a[0] == pytest.approx(3.0)
        assert inst.locals[1].a[0] == pytest.approx(1.0)


# ---- synthetic three-group family -----------------------------------------


class TestSyntheticFamily:
    def test_frozen_coefficients(self):
        # hand-derived for (n, k, a, G, B) = (20, 7, 1, 1, 1):
        #   c = sqrt(20/14), d_coef = 20/(sqrt(84) - 6)
        inst = build_synthetic_family(n=20, k=7, a=1.0, G=1.0, B=1.0)
        assert inst.params["c"] == pytest.approx(1.1952286093343936, abs=1e-15)
        assert inst.params["d_coef"] == pytest.approx(6.318813079129868, abs=1e-13)

    @given(
        st.integers(2, 6),
        pos,
        st.floats(0.0, 1.5),
        st.floats(0.0, 1.0),
    )
    @settings(max_examples=40)
    def test_equality_family_is_certified_tight(self, k, a, G, B):
        n = 2 * k + 3
        if B * B >= 2 * k / (n - 2 * k):
            return
        inst = build_synthetic_family(n=n, k=k, a=a, G=G, B=B)
        res = certify_dissimilarity(inst, G, B)
        assert res.passed

    def test_pointwise_equality_when_B_positive(self):
        inst = build_synthetic_family(n=20, k=7, a=1.0, G=1.0, B=0.8)
        for x in (-3.0, -0.5, 0.0, 1.0, 4.0):
            gap = dissimilarity_gap(inst, 1.0, 0.8, DenseVector([x]))
            assert gap == pytest.approx(0.0, abs=1e-10)

    def test_inadmissible_B_rejected(self):
        # 2k/(n-2k) = 14/6; B = 1.6 gives B^2 = 2.56 past the edge
        with pytest.raises(ConfigurationError, match="B\\^2 < 2k"):
            build_synthetic_family(n=20, k=7, a=1.0, G=1.0, B=1.6)

    def test_shape_constraint(self):
        with pytest.raises(ConfigurationError, match="0 < 2k < n"):
            build_synthetic_family(n=10, k=5, a=1.0, G=1.0, B=0.5)


# ---- random quadratic family ----------------------------------------------


class TestRandomQuadraticFamily:
    def test_declared_analytics_are_exact(self):
        rng = RngStream(3, 0, "t")
        inst = build_random_quadratic_family(n=6, d=4, rng=rng)
        xs = inst.analytic.x_star
        assert np.allclose(inst.grad_f_H(xs).values, 0.0, atol=1e-12)
        assert inst.analytic.L >= inst.analytic.mu > 0

    def test_shared_curvature_declares_valid_certificate(self):
        for k in range(8):
            rng = RngStream(11 + k, 0, "t")
            inst = build_random_quadratic_family(n=5, d=3, rng=rng, shared_curvature=True)
            G, B = inst.analytic.G, inst.analytic.B
            assert B == 0.0
            res = certify_dissimilarity(inst, G, B)
            assert res.passed

    def test_byzantine_slots_excluded_from_analytics(self):
        rng = RngStream(5, 0, "t")
        inst = build_random_quadratic_family(n=7, d=2, rng=rng, b=3)
        assert inst.pop.byzantine_ids == frozenset({4, 5, 6})
        ids = inst.pop.honest_sorted()
        A = np.stack([inst.locals[i].a for i in ids])
        assert inst.analytic.L >= float(A.max()) - 1e-15


# ---- certifier vs grid sampling -------------------------------------------


class TestCertifierGridEquivalence:
    def test_agreement_on_dense_grid(self):
        rng = RngStream(81, 0, "t")
        gen = rng.generator
        for k in range(30):
            inst = build_random_quadratic_family(
                n=int(gen.integers(2, 6)), d=1, rng=rng.spawn(f"g{k}")
            )
            G = float(gen.uniform(0, 1.5))
            B = float(gen.uniform(0, 1.2))
            exact = certify_dissimilarity(inst, G, B)
            grid = [DenseVector([x]) for x in np.linspace(-60, 60, 2001)]
            sampled = sample_check_dissimilarity(inst, G, B, grid)
            if exact.passed:
                assert sampled.passed
            else:
                assert dissimilarity_gap(inst, G, B, exact.witness) > 0

    def test_sample_check_rejects_empty_grid(self):
        inst = build_hetero_lower_bound(mu=1.0, G=1.0, B=0.5)
        with pytest.raises(ConfigurationError, match="nonempty"):
            sample_check_dissimilarity(inst, 1.0, 0.5, [])

    def test_certifier_refuses_nonquadratic(self):
        task = build_classification_task(n_workers=3, n_classes=3, dim=4,
                                         samples_per_class=6)
        with pytest.raises(ConfigurationError, match="quadratic"):
            certify_dissimilarity(task, 1.0, 0.5)


# ---- noise overrides and oracles ------------------------------------------


class TestStochasticOracles:
    def test_with_noise_preserves_everything_else(self):
        base = build_hetero_lower_bound(mu=1.0, G=1.0, B=0.5, kappa=0.1)
        noisy = with_noise(base, NoiseModel("gaussian", sigma=0.3))
        assert noisy.noise.kind == "gaussian"
        assert noisy.analytic is base.analytic
        assert noisy.locals is base.locals

    def test_zero_sigma_returns_exact_gradient(self):
        inst = with_noise(
            build_hetero_lower_bound(mu=1.0, G=1.0, B=0.5),
            NoiseModel("gaussian", sigma=0.0),
        )
        x = DenseVector([1.5])
        g = stochastic_gradient(inst, 0, x, RngStream(0, 0, "t"))
        assert g == inst.local_grad(0, x)

    def test_gaussian_noise_total_second_moment(self):
        # sigma^2 is split across coordinates: E||g - grad||^2 = sigma^2
        inst = with_noise(
            build_hetero_lower_bound(mu=1.0, G=0.0, B=0.0, d=4),
            NoiseModel("gaussian", sigma=2.0),
        )
        x = DenseVector(np.zeros(4))
        exact = inst.local_grad(0, x).values
        gen_draws = [
            stochastic_gradient(inst, 0, x, RngStream(s, 0, "mm")).values
            for s in range(3000)
        ]
        sq = np.mean([np.sum((g - exact) ** 2) for g in gen_draws])
        assert sq == pytest.approx(4.0, rel=0.1)

    def test_byzantine_worker_has_no_honest_oracle(self):
        rng = RngStream(5, 0, "t")
        inst = build_random_quadratic_family(n=5, d=2, rng=rng, b=2)
        with pytest.raises(ContractViolation, match="not honest"):
            stochastic_gradient(inst, 4, DenseVector([0.0, 0.0]), RngStream(0, 4, "t"))


# ---- classification task ---------------------------------------------------


class TestClassificationTask:
    def test_every_worker_gets_data(self):
        inst = build_classification_task(n_workers=6, n_classes=4, dim=5,
                                         samples_per_class=15, alpha=0.5)
        for w in range(6):
            assert inst.task.labels[w].size >= 1
            assert set(np.unique(inst.task.labels[w])) <= set(range(4))

    def test_loss_grad_finite_and_correct_shape(self):
        inst = build_classification_task(n_workers=3, n_classes=3, dim=4,
                                         samples_per_class=8)
        x = DenseVector(np.zeros(inst.dim))
        v, g = inst.task.loss_grad(0, x.values)
        assert math.isfinite(v)
        assert g.shape == (inst.dim,)
        # at x = 0 the softmax is uniform: loss = log(n_classes)
        assert v == pytest.approx(math.log(3.0), rel=1e-12)

    def test_minibatch_oracle_uses_rng(self):
        inst = build_classification_task(n_workers=3, n_classes=3, dim=4,
                                         samples_per_class=8, minibatch=2)
        x = DenseVector(np.ones(inst.dim) * 0.1)
        a = stochastic_gradient(inst, 0, x, RngStream(1, 0, "mb"))
        b = stochastic_gradient(inst, 0, x, RngStream(1, 0, "mb"))
        c = stochastic_gradient(inst, 0, x, RngStream(2, 0, "mb"))
        assert a == b
        assert a != c

    def test_deterministic_rebuild(self):
        a = build_classification_task(n_workers=4, n_classes=3, dim=4,
                                      samples_per_class=10, seed=7)
        b = build_classification_task(n_workers=4, n_classes=3, dim=4,
                                      samples_per_class=10, seed=7)
        for w in range(4):
            assert np.array_equal(a.task.features[w], b.task.features[w])
            assert np.array_equal(a.task.labels[w], b.task.labels[w])
