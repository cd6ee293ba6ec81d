"""Large-dimension prediction of the target-task error rate.

For a test point x ~ N(mu_tj, I_p) independent of training, the score
v.x has unit variance and mean w.mu_tj / ||w||. With empirical means
mu_hat_q = mu_q + noise of covariance I_p / n_q,

    E[w . mu_tj]  = sum_q y_q n_q G[q, (t,j)]
    E[||w||^2]    = sum_{q,q'} y_q n_q y_q' n_q' G[q,q'] + p * sum_q y_q^2 n_q

and both concentrate, which gives deterministic score means m_t1, m_t2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LabelKind, LabelVector, build_similarity, naive_labels, optimal_labels
from .errors import DegenerateModelError, StructuralError
from .layout import ProblemLayout
from .stats import GramEstimate


def gaussian_tail(x: float) -> float:
    """Q(x) = P(N(0,1) > x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def score_means(gram: GramEstimate, labels: LabelVector, layout: ProblemLayout, target: int) -> tuple[float, float]:
    g = np.asarray(gram.g, dtype=np.float64)
    y = np.asarray(labels.y, dtype=np.float64)
    if g.shape != (2 * layout.k,) * 2 or y.shape != (2 * layout.k,):
        raise StructuralError("Gram, labels and layout sizes disagree")
    n = layout.n_flat
    yn = y * n
    den2 = float(yn @ g @ yn) + layout.p * float(np.sum(y * y * n))
    if not den2 > 0:
        raise DegenerateModelError(f"score variance proxy is not positive ({den2})")
    den = math.sqrt(den2)
    m1 = float(yn @ g[:, layout.index(target, 1)]) / den
    m2 = float(yn @ g[:, layout.index(target, 2)]) / den
    return m1, m2


def predicted_error(gram: GramEstimate, layout: ProblemLayout, target: int, labels: LabelVector) -> float:
    """Balanced error of the midpoint rule, Q((m1 - m2) / 2)."""
    m1, m2 = score_means(gram, labels, layout, target)
    zeta = 0.5 * (m1 + m2)
    return 0.5 * gaussian_tail(m1 - zeta) + 0.5 * gaussian_tail(zeta - m2)


@dataclass(frozen=True)
class TheoryModel:
    gram: GramEstimate = field(repr=False)
    layout: ProblemLayout = field(repr=False)
    labels: LabelVector = field(repr=False)
    target: int
    m1: float
    m2: float
    err: float

    @classmethod
    def build(
        cls, gram: GramEstimate, layout: ProblemLayout, target: int, labels: LabelKind | LabelVector = "optimal"
    ) -> "TheoryModel":
        if labels == "optimal":
            labels = optimal_labels(build_similarity(gram, layout), layout, target)
        elif labels == "naive":
            labels = naive_labels(layout, target)
        m1, m2 = score_means(gram, labels, layout, target)
        err = predicted_error(gram, layout, target, labels)
        return cls(gram, layout, labels, target, m1, m2, err)

    @classmethod
    def from_means(
        cls, means: np.ndarray, layout: ProblemLayout, target: int, labels: LabelKind | LabelVector = "optimal"
    ) -> "TheoryModel":
        """Use the true p x 2k mean matrix (q order) in place of estimates."""
        means = np.asarray(means, dtype=np.float64)
        return cls.build(GramEstimate(means.T @ means), layout, target, labels)
