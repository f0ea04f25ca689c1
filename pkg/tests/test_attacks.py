import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustsgd.aggregators import AggregatorSpec, aggregate
from robustsgd.attacks import (
    DEFAULT_ALIE_CANDIDATES,
    AdversaryView,
    AttackSpec,
    alie,
    label_flip,
    sign_flip,
)
from robustsgd.core import ConfigurationError, DataError, DenseVector

coord = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class TestSignFlip:
    @given(st.lists(coord, min_size=1, max_size=5))
    @settings(max_examples=60)
    def test_involution(self, vals):
        g = DenseVector(vals)
        assert sign_flip(sign_flip(g)) == g

    @given(st.lists(coord, min_size=1, max_size=5))
    @settings(max_examples=60)
    def test_is_exact_negation(self, vals):
        g = DenseVector(vals)
        assert np.array_equal(sign_flip(g).values, -np.asarray(vals))


class TestLabelFlip:
    @given(st.integers(0, 9))
    def test_involution_ten_classes(self, y):
        sample = ("feat", y)
        flipped = label_flip(sample, n_classes=10)
        assert flipped[1] == 9 - y
        assert label_flip(flipped, n_classes=10)[1] == y

    def test_features_pass_through_untouched(self):
        feats = np.array([1.0, 2.0])
        out_feats, _ = label_flip((feats, 3), n_classes=10)
        assert out_feats is feats

    @pytest.mark.parametrize("y,C", [(-1, 10), (10, 10), (5, 3)])
    def test_out_of_range_label_rejected(self, y, C):
        with pytest.raises(DataError, match="out of range"):
            label_flip(("f", y), n_classes=C)

    def test_two_classes(self):
        assert label_flip(("f", 0), n_classes=2)[1] == 1
        assert label_flip(("f", 1), n_classes=2)[1] == 0


class TestAttackSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown attack kind"):
            AttackSpec(kind="gradient_ascent")

    def test_alie_needs_candidates(self):
        with pytest.raises(ConfigurationError, match="nonempty candidate"):
            AttackSpec(kind="alie", candidate_alphas=())

    def test_byzantine_ids_coerced(self):
        spec = AttackSpec(kind="sign_flip", byzantine_ids=[2, 4])
        assert spec.byzantine_ids == frozenset({2, 4})

    def test_only_alie_is_omniscient(self):
        assert AttackSpec(kind="alie").omniscient
        assert not AttackSpec(kind="sign_flip").omniscient


def _view(honest_rows, n, rule_spec, x=None):
    honest = [DenseVector(r) for r in honest_rows]
    return AdversaryView(
        honest_updates=honest,
        honest_ids=list(range(len(honest))),
        aggregator=rule_spec,
        x=x or DenseVector(np.zeros(len(honest_rows[0]))),
        n=n,
    )


class TestAlie:
    def test_against_average_picks_largest_magnitude(self):
        # versus the plain mean the deviation is (b/n)*|alpha|*sigma_dev per
        # coordinate, strictly increasing in |alpha|: a candidate with
        # |alpha| = 2 must win
        spec = AggregatorSpec(rule="average", n=5, b=0)
        view = _view([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], n=5, rule_spec=spec)
        out = alie(view).values
        hmat = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        mu = hmat.mean(axis=0)
        sigma_dev = math.sqrt(((hmat - mu) ** 2).sum())
        chosen_alpha = (out - mu)[0] / sigma_dev
        assert abs(chosen_alpha) == pytest.approx(2.0, rel=1e-12)

    def test_tie_goes_to_first_listed_candidate(self):
        spec = AggregatorSpec(rule="average", n=4, b=0)
        view = _view([[0.0], [2.0]], n=4, rule_spec=spec)
        out = alie(view).values
        mu, sigma_dev = 1.0, math.sqrt(2.0)
        # +/-2 score identically against the mean; -2 is listed first
        assert out[0] == pytest.approx(mu - 2.0 * sigma_dev, rel=1e-12)

    def test_zero_dispersion_is_inert(self):
        spec = AggregatorSpec(rule="average", n=3, b=0)
        view = _view([[1.5, -2.0], [1.5, -2.0]], n=3, rule_spec=spec)
        assert np.allclose(alie(view).values, [1.5, -2.0], atol=0)

    def test_matches_independent_greedy_replay(self):
        gen = np.random.default_rng(17)
        for rule, kw in (("cwm", {}), ("krum", {"b": 2}), ("cwtm", {"q": 1}),
                         ("gm", {})):
            spec = AggregatorSpec(rule=rule, n=6, **kw)
            rows = gen.normal(size=(4, 2))
            view = _view(rows.tolist(), n=6, rule_spec=spec)
            got = alie(view).values

            mu = rows.mean(axis=0)
            sigma_dev = math.sqrt(((rows - mu) ** 2).sum())
            best, best_score = None, -1.0
            for a in DEFAULT_ALIE_CANDIDATES:
                g = DenseVector(mu + a * sigma_dev)
                full = [DenseVector(r) for r in rows] + [g, g]
                out = aggregate(spec, full).values
                score = float(np.linalg.norm(out - mu))
                if score > best_score:
                    best_score, best = score, mu + a * sigma_dev
            assert np.array_equal(got, best), rule

    def test_custom_candidates_respected(self):
        spec = AggregatorSpec(rule="average", n=4, b=0)
        view = _view([[0.0], [2.0]], n=4, rule_spec=spec)
        out = alie(view, candidate_alphas=(0.5, -7.0)).values
        assert out[0] == pytest.approx(1.0 - 7.0 * math.sqrt(2.0), rel=1e-12)

    def test_needs_honest_updates(self):
        spec = AggregatorSpec(rule="average", n=2, b=0)
        view = AdversaryView(honest_updates=[], honest_ids=[], aggregator=spec,
                             x=DenseVector([0.0]), n=2)
        with pytest.raises(ConfigurationError, match="at least one honest"):
            alie(view)
