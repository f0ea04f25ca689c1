"""Aggregation rules and an empirical robustness estimator.

Implemented rules: plain averaging, Krum and Multi-Krum, coordinatewise
median and trimmed mean, the smoothed-Weiszfeld geometric median, and
three oracle-adversarial rules that know the honest set and inject the
largest deviation a (b, kappa)-robust rule is allowed:

    ||A(x_1..x_n) - mean_H||^2 = kappa * (1/h) sum_H ||x_i - mean_H||^2.

Honest indices are never passed to the ordinary rules — only the
oracle-adversarial variants receive them, by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    ConfigurationError,
    DenseVector,
    RngStream,
    as_matrix,
)

RULES = ("average", "krum", "multi_krum", "cwm", "cwtm", "gm", "oracle_adversarial")
ORACLE_VARIANTS = ("variance_sign", "hetero_c1", "noise_c2")


@dataclass(frozen=True)
class AggregatorSpec:
    rule: str
    n: int
    b: int = 0
    q: Optional[int] = None          # multi_krum / cwtm
    iters: int = 50                  # gm
    nu: float = 1e-8                 # gm smoothing floor
    kappa: Optional[float] = None    # oracle_adversarial
    variant: Optional[str] = None    # oracle_adversarial

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown aggregation rule {self.rule!r}")
        if self.n < 1 or self.b < 0 or not self.b < self.n / 2:
            raise ConfigurationError(
                f"aggregator requires 0 <= b < n/2; got n={self.n}, b={self.b}"
            )
        if self.rule in ("krum", "multi_krum") and self.n - self.b - 1 < 1:
            raise ConfigurationError("krum requires n - b - 1 >= 1")
        if self.rule == "multi_krum":
            if self.q is None or not 1 <= self.q <= self.n:
                raise ConfigurationError("multi_krum requires 1 <= q <= n")
        if self.rule == "cwtm":
            if self.q is None or self.q < 1 or self.n - 2 * self.q < 1:
                raise ConfigurationError("cwtm requires 1 <= q and n - 2q >= 1")
        if self.rule == "gm":
            if self.iters < 1 or not self.nu > 0:
                raise ConfigurationError("gm requires iters >= 1 and nu > 0")
        if self.rule == "oracle_adversarial":
            if self.kappa is None or self.kappa < 0:
                raise ConfigurationError("oracle_adversarial requires kappa >= 0")
            if self.variant not in ORACLE_VARIANTS:
                raise ConfigurationError(
                    f"oracle_adversarial variant must be one of {ORACLE_VARIANTS}"
                )

    @property
    def honest_aware(self) -> bool:
        return self.rule == "oracle_adversarial"


@dataclass(frozen=True)
class OracleContext:
    """Side information the oracle-adversarial variants need: the current
    model x, the honest minimizer x_star, and (for construction-bound
    variants) the problem instance itself."""

    x: Optional[DenseVector] = None
    x_star: Optional[DenseVector] = None
    instance: object = None


@dataclass
class RobustnessEstimate:
    kappa_hat: float
    samples: int
    worst_case_input: Optional[dict]
    violation: bool = False


# ---------------------------------------------------------------------------
# ordinary rules (honest-set blind)


def average(updates: Sequence[DenseVector]) -> DenseVector:
    return DenseVector(as_matrix(updates).mean(axis=0))


def _krum_scores(mat: np.ndarray, b: int) -> np.ndarray:
    """Score of each vector: sum of squared distances to its n-b-1 nearest
    other vectors."""
    n = mat.shape[0]
    keep = n - b - 1
    if keep < 1:
        raise ConfigurationError("krum requires n - b - 1 >= 1")
    diff = mat[:, None, :] - mat[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    d2.sort(axis=1)
    return d2[:, :keep].sum(axis=1)


def krum(updates: Sequence[DenseVector], b: int) -> DenseVector:
    """Vector closest to its n-b-1 neighbors; ties broken by smallest index."""
    mat = as_matrix(updates)
    scores = _krum_scores(mat, b)
    return DenseVector(mat[int(np.argmin(scores))])


def multi_krum(updates: Sequence[DenseVector], b: int, q: int) -> DenseVector:
    """Mean of the q lowest-score vectors (q = 1 reduces to Krum; q = n with
    b = 0 is the plain average)."""
    mat = as_matrix(updates)
    if not 1 <= q <= mat.shape[0]:
        raise ConfigurationError("multi_krum requires 1 <= q <= n")
    scores = _krum_scores(mat, b)
    chosen = np.argsort(scores, kind="stable")[:q]
    return DenseVector(mat[chosen].mean(axis=0))


def cwm(updates: Sequence[DenseVector]) -> DenseVector:
    """Coordinatewise median; even count takes the midpoint of the central
    pair."""
    return DenseVector(np.median(as_matrix(updates), axis=0))


def cwtm(updates: Sequence[DenseVector], q: int) -> DenseVector:
    """Coordinatewise trimmed mean: drop the q smallest and q largest values
    per coordinate, average the rest."""
    mat = as_matrix(updates)
    n = mat.shape[0]
    if q < 1 or n - 2 * q < 1:
        raise ConfigurationError("cwtm requires 1 <= q and n - 2q >= 1")
    srt = np.sort(mat, axis=0)
    return DenseVector(srt[q : n - q].mean(axis=0))


def geometric_median(
    updates: Sequence[DenseVector], iters: int = 50, nu: float = 1e-8
) -> DenseVector:
    """Smoothed Weiszfeld iteration, run for exactly `iters` rounds from the
    coordinatewise mean:

        beta_i = 1 / max(nu, ||v - x_i||),   v <- sum beta_i x_i / sum beta_i
    """
    if iters < 1 or not nu > 0:
        raise ConfigurationError("geometric_median requires iters >= 1, nu > 0")
    mat = as_matrix(updates)
    v = mat.mean(axis=0)
    for _ in range(iters):
        dist = np.sqrt(((mat - v) ** 2).sum(axis=1))
        beta = 1.0 / np.maximum(nu, dist)
        v = (beta[:, None] * mat).sum(axis=0) / beta.sum()
    return DenseVector(v)


# ---------------------------------------------------------------------------
# oracle-adversarial rules (honest-set aware)


def _honest_stats(mat: np.ndarray, honest: Sequence[int]):
    hm = mat[list(honest)]
    mean = hm.mean(axis=0)
    disp = float(((hm - mean) ** 2).sum(axis=1).mean())
    return mean, disp


def oracle_adversarial(
    updates: Sequence[DenseVector],
    honest_ids: Sequence[int],
    kappa: float,
    variant: str,
    context: Optional[OracleContext] = None,
) -> DenseVector:
    """Honest-set-aware rules that realize the worst deviation permitted by
    (b, kappa)-robustness, exactly:

    variance_sign   mean_H -/+ sqrt(kappa * V^2) * u, with V^2 the honest
                    dispersion and u the unit displacement of the model from
                    x_star (at zero displacement: +e_1), so the model is
                    pushed away from the optimum each step;
    hetero_c1       mean_H - sqrt(kappa) * (u_first - mean_H), the drift rule
                    for the two-worker heterogeneous construction (valid for
                    both gradient and momentum submissions);
    noise_c2        mean_H - sqrt(kappa) * W(x; xi_1, xi_2) for the
                    two-worker Bernoulli construction, with the coin values
                    reconstructed from the submissions.
    """
    if kappa < 0:
        raise ConfigurationError("kappa must be >= 0")
    honest = sorted(int(i) for i in honest_ids)
    if not honest:
        raise ConfigurationError("oracle rules need a nonempty honest set")
    mat = as_matrix(updates)
    mean, disp = _honest_stats(mat, honest)
    sk = math.sqrt(kappa)

    if variant == "variance_sign":
        if context is None or context.x is None or context.x_star is None:
            raise ConfigurationError(
                "variance_sign needs context with the model x and x_star"
            )
        disp_vec = context.x.values - context.x_star.values
        nrm = math.sqrt(float(np.dot(disp_vec, disp_vec)))
        mag = math.sqrt(kappa * disp)
        if nrm == 0.0:
            out = mean.copy()
            out[0] += mag
        else:
            out = mean - mag * (disp_vec / nrm)
        return DenseVector(out)

    inst = context.instance if context is not None else None
    if variant == "hetero_c1":
        if inst is None or getattr(inst, "construction", None) != "hetero":
            raise ConfigurationError(
                "hetero_c1 applies only to the two-worker heterogeneous construction"
            )
        if len(honest) != 2 or len(updates) != 2:
            raise ConfigurationError("hetero_c1 expects exactly two honest workers")
        return DenseVector(mean - sk * (mat[honest[0]] - mean))

    if variant == "noise_c2":
        if inst is None or getattr(inst, "construction", None) != "noise":
            raise ConfigurationError(
                "noise_c2 applies only to the two-worker Bernoulli construction"
            )
        if context.x is None:
            raise ConfigurationError("noise_c2 needs context with the model x")
        sigma = inst.noise.sigma
        if not sigma > 0:
            raise ConfigurationError("noise_c2 requires bernoulli_pm noise with sigma > 0")
        if len(honest) != 2 or len(updates) != 2 or mat.shape[1] != 1:
            raise ConfigurationError("noise_c2 expects the 1-D two-worker instance")
        x = float(context.x.values[0])
        mu = inst.analytic.mu
        B = inst.analytic.B
        xi = []
        for w in honest:
            resid = float(mat[w, 0]) - float(inst.local_grad(w, context.x).values[0])
            if abs(abs(resid) - sigma) > 1e-6 * max(1.0, sigma):
                raise ConfigurationError(
                    "noise_c2 could not reconstruct the coin values; submissions "
                    "must be plain Bernoulli gradient draws (no momentum)"
                )
            xi.append(0 if resid > 0 else 1)
        if xi[0] == xi[1]:
            W = B * mu * x
        elif xi[0] == 1:           # (1, 0)
            W = -B * mu * x + sigma
        else:                      # (0, 1)
            W = B * mu * x + sigma
        return DenseVector(mean - sk * np.array([W]))

    raise ConfigurationError(f"unknown oracle variant {variant!r}")


# ---------------------------------------------------------------------------
# dispatch


def aggregate(
    spec: AggregatorSpec,
    updates: Sequence[DenseVector],
    honest_ids: Optional[Sequence[int]] = None,
    context: Optional[OracleContext] = None,
) -> DenseVector:
    """Apply the configured rule to n update vectors.

    honest_ids must be supplied iff the rule is oracle_adversarial; passing
    them to any other rule is a configuration error (ordinary rules are
    honest-set blind by contract).
    """
    if len(updates) != spec.n:
        raise ConfigurationError(
            f"expected {spec.n} updates, got {len(updates)}"
        )
    if spec.honest_aware:
        if honest_ids is None:
            raise ConfigurationError(
                "oracle_adversarial requires honest_ids"
            )
        return oracle_adversarial(updates, honest_ids, spec.kappa, spec.variant, context)
    if honest_ids is not None:
        raise ConfigurationError(
            f"rule {spec.rule!r} must not receive honest_ids"
        )
    if spec.rule == "average":
        return average(updates)
    if spec.rule == "krum":
        return krum(updates, spec.b)
    if spec.rule == "multi_krum":
        return multi_krum(updates, spec.b, spec.q)
    if spec.rule == "cwm":
        return cwm(updates)
    if spec.rule == "cwtm":
        return cwtm(updates, spec.q)
    if spec.rule == "gm":
        return geometric_median(updates, spec.iters, spec.nu)
    raise ConfigurationError(f"unhandled rule {spec.rule!r}")


# ---------------------------------------------------------------------------
# empirical robustness estimation


def _ratio(spec, mat, honest, context) -> float:
    updates = [DenseVector(row) for row in mat]
    if spec.honest_aware:
        out = oracle_adversarial(updates, honest, spec.kappa, spec.variant, context)
    else:
        out = aggregate(spec, updates)
    mean, disp = _honest_stats(mat, honest)
    dev = out.values - mean
    num = float(np.dot(dev, dev))
    if disp == 0.0:
        return math.inf if num > 1e-24 else 0.0
    return num / disp


def estimate_kappa(
    spec: AggregatorSpec,
    n: Optional[int] = None,
    b: Optional[int] = None,
    samples: int = 1000,
    dim: int = 2,
    rng: Optional[RngStream] = None,
) -> RobustnessEstimate:
    """Empirical lower bound on any valid robustness coefficient kappa for
    the rule: the max over sampled input families and honest subsets of

        ||A(x) - mean_H||^2 / ((1/h) sum_H ||x_i - mean_H||^2).

    Families mix Gaussian clouds (scales 0.1/1/10), planted outliers at
    magnitudes 1/1e3/1e6, and coordinate-axis spikes. A zero-dispersion
    family with a nonzero numerator is flagged as a robustness violation.
    """
    n = spec.n if n is None else n
    b = spec.b if b is None else b
    if n != spec.n or b != spec.b:
        raise ConfigurationError("estimate_kappa n/b must match the aggregator spec")
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    if spec.honest_aware and spec.variant != "variance_sign":
        raise ConfigurationError(
            "estimate_kappa supports the variance_sign oracle variant only; "
            "the construction-bound variants need their own instances"
        )
    if rng is None:
        rng = RngStream(0, worker=0, purpose="kappa")
    gen = rng.generator
    h = n - b

    all_subsets = None
    if math.comb(n, h) <= 120:
        all_subsets = [list(s) for s in itertools.combinations(range(n), h)]

    best = 0.0
    worst = None
    violation = False
    scales = (0.1, 1.0, 10.0)
    outlier_mags = (1.0, 1e3, 1e6)

    for s in range(samples):
        kind = s % 3
        scale_ = scales[(s // 3) % len(scales)]
        mat = scale_ * gen.standard_normal((n, dim))
        if kind == 1 and b >= 1:
            mag = outlier_mags[(s // 9) % len(outlier_mags)]
            direction = gen.standard_normal(dim)
            direction /= math.sqrt(float(np.dot(direction, direction)))
            for j in range(b):
                mat[n - 1 - j] = mag * direction
        elif kind == 2:
            mat = np.zeros((n, dim))
            for i in range(n):
                mat[i, i % dim] = scale_ * (1 + i)
        context = None
        if spec.honest_aware:
            context = OracleContext(
                x=DenseVector(gen.standard_normal(dim)),
                x_star=DenseVector(np.zeros(dim)),
            )
        if all_subsets is not None:
            subsets = all_subsets
        else:
            subsets = [sorted(gen.choice(n, size=h, replace=False).tolist()) for _ in range(32)]
        for honest in subsets:
            r = _ratio(spec, mat, honest, context)
            if math.isinf(r):
                violation = True
            if r > best or worst is None:
                best = min(r, math.inf)
                worst = {"inputs": mat.tolist(), "honest_ids": list(honest)}
    return RobustnessEstimate(
        kappa_hat=best, samples=samples, worst_case_input=worst, violation=violation
    )
