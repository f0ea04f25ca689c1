"""Byzantine worker behaviors: sign flip, label flip, and the omniscient
"a little is enough" attack that probes the server's actual aggregation
rule before choosing its submission."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .aggregators import AggregatorSpec, OracleContext, aggregate
from .core import ConfigurationError, DataError, DenseVector, as_matrix

ATTACK_KINDS = ("none", "sign_flip", "label_flip", "alie")
DEFAULT_ALIE_CANDIDATES = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    byzantine_ids: frozenset = frozenset()
    candidate_alphas: Tuple[float, ...] = DEFAULT_ALIE_CANDIDATES

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(f"unknown attack kind {self.kind!r}")
        object.__setattr__(
            self, "byzantine_ids", frozenset(int(i) for i in self.byzantine_ids)
        )
        if self.kind == "alie" and not self.candidate_alphas:
            raise ConfigurationError("alie needs a nonempty candidate set")

    @property
    def omniscient(self) -> bool:
        return self.kind == "alie"


@dataclass
class AdversaryView:
    """What an omniscient adversary gets to see in one iteration: every
    honest update (aligned with honest_ids order), the server's aggregator,
    and the current model."""

    honest_updates: Sequence[DenseVector]
    honest_ids: Sequence[int]
    aggregator: AggregatorSpec
    x: DenseVector
    n: int
    context: Optional[OracleContext] = None


def sign_flip(honest_style_gradient: DenseVector) -> DenseVector:
    """Return the negated update. The Byzantine worker computes an honest
    stochastic gradient with its own data and noise stream first; honest
    workers' streams are untouched."""
    return -honest_style_gradient


def label_flip(sample, n_classes: int = 10):
    """Map a sample (features, y) to (features, (C-1) - y)."""
    features, y = sample
    y = int(y)
    if not 0 <= y < n_classes:
        raise DataError(
            f"label {y} out of range for {n_classes} classes"
        )
    return (features, (n_classes - 1) - y)


def alie(view: AdversaryView, candidate_alphas: Optional[Sequence[float]] = None) -> DenseVector:
    """Craft the common Byzantine submission mu + alpha*sigma_dev, where mu
    is the honest mean, sigma_dev = sqrt(sum_H ||x_i - mu||^2) (total squared
    deviation over honest workers, not averaged), and the scalar
    alpha*sigma_dev is added to every coordinate.

    alpha is chosen greedily: every Byzantine slot is filled with the
    candidate vector, the server's actual rule is applied, and the candidate
    maximizing ||A(...) - mu|| wins. Ties go to the first candidate in
    listed order; with zero honest dispersion every candidate collapses to
    mu and the attack is inert.
    """
    cands = tuple(candidate_alphas) if candidate_alphas is not None else DEFAULT_ALIE_CANDIDATES
    if not cands:
        raise ConfigurationError("alie needs a nonempty candidate set")
    honest = list(view.honest_updates)
    if not honest:
        raise ConfigurationError("alie needs at least one honest update")
    hmat = as_matrix(honest)
    mu = hmat.mean(axis=0)
    sigma_dev = math.sqrt(float(((hmat - mu) ** 2).sum()))
    if sigma_dev == 0.0:
        return DenseVector(mu)

    honest_ids = [int(i) for i in view.honest_ids]
    byz_ids = sorted(set(range(view.n)) - set(honest_ids))
    spec = view.aggregator
    best_alpha = None
    best_score = -1.0
    for alpha in cands:
        g = DenseVector(mu + alpha * sigma_dev)
        full = [None] * view.n
        for i, u in zip(honest_ids, honest):
            full[i] = u
        for j in byz_ids:
            full[j] = g
        out = aggregate(
            spec,
            full,
            honest_ids=honest_ids if spec.honest_aware else None,
            context=view.context,
        )
        dev = out.values - mu
        score = math.sqrt(float(np.dot(dev, dev)))
        if score > best_score:
            best_score = score
            best_alpha = alpha
    return DenseVector(mu + best_alpha * sigma_dev)
