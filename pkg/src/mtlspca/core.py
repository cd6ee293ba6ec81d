"""Similarity matrix, target-specific labels, projection and decision rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DataError, DegenerateModelError, StructuralError
from .layout import ProblemLayout
from .stats import GramEstimate, TaskStats, gram_estimate, layout_from_stats, sort_stats

LabelKind = Literal["optimal", "naive"]


@dataclass(frozen=True)
class SimilarityMatrix:
    m: np.ndarray


@dataclass(frozen=True)
class LabelVector:
    y: np.ndarray
    target: int | None = None

    def scaled(self, alpha: float) -> "LabelVector":
        return LabelVector(alpha * self.y, self.target)


@dataclass(frozen=True)
class ClassifierBundle:
    """Unit projection direction and threshold for one target task."""

    v: np.ndarray = field(repr=False)
    zeta: float
    target: int
    labels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.v))
        if abs(norm - 1.0) > 1e-12:
            raise StructuralError(f"projection vector must be unit norm, got {norm!r}")

    @property
    def p(self) -> int:
        return self.v.shape[0]


def _check_gram(gram: GramEstimate, layout: ProblemLayout) -> np.ndarray:
    g = np.asarray(gram.g, dtype=np.float64)
    size = 2 * layout.k
    if g.shape != (size, size):
        raise StructuralError(f"Gram has shape {g.shape}, layout needs {(size, size)}")
    if not np.all(np.isfinite(g)):
        raise DataError("Gram estimate has non-finite entries")
    return g


def build_similarity(gram: GramEstimate, layout: ProblemLayout) -> SimilarityMatrix:
    """(1/c0) D_c^{1/2} G D_c^{1/2}, symmetrized and clipped to the PSD cone."""
    g = _check_gram(gram, layout)
    d = np.sqrt(layout.c)
    m = (d[:, None] * g * d[None, :]) / layout.c0
    m = (m + m.T) / 2
    evals, evecs = np.linalg.eigh(m)
    if evals[0] < 0:
        m = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
        m = (m + m.T) / 2
    return SimilarityMatrix(m)


def optimal_labels(sim: SimilarityMatrix, layout: ProblemLayout, target: int) -> LabelVector:
    """D_c^{-1/2} (M + I)^{-1} M D_c^{-1/2} (e_{t1} - e_{t2})."""
    e = layout.contrast(target)
    d = np.sqrt(layout.c)
    m = np.asarray(sim.m, dtype=np.float64)
    if m.shape != (2 * layout.k,) * 2:
        raise StructuralError(f"similarity has shape {m.shape}, layout has k={layout.k}")
    y = np.linalg.solve(m + np.eye(m.shape[0]), m @ (e / d)) / d
    return LabelVector(y, target)


def naive_labels(layout: ProblemLayout, target: int | None = None) -> LabelVector:
    """+1 on every class-1 slot, -1 on every class-2 slot."""
    return LabelVector(np.tile([1.0, -1.0], layout.k), target)


def projection(
    all_stats: Sequence[TaskStats], labels: LabelVector, layout: ProblemLayout
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(w, v)`` with w = sum_q y_q n_q mu_q and v = w / ||w||."""
    ordered = sort_stats(all_stats)
    y = np.asarray(labels.y, dtype=np.float64)
    if y.shape != (2 * layout.k,):
        raise StructuralError(f"labels have shape {y.shape}, layout needs {(2 * layout.k,)}")
    if tuple(s.task_id for s in ordered) != layout.task_ids:
        raise StructuralError("stats and layout cover different tasks")
    w = np.zeros(layout.p)
    q = 0
    for s in ordered:
        for cls in s.classes:
            if cls.p != layout.p:
                raise StructuralError(f"task {s.task_id} has p={cls.p}, layout has p={layout.p}")
            w += y[q] * cls.weighted_sum
            q += 1
    norm = float(np.linalg.norm(w))
    if not norm > 0:
        raise DegenerateModelError("projection direction is zero (labels vanish or cancel)")
    return w, w / norm


def threshold(gram: GramEstimate, labels: LabelVector, layout: ProblemLayout, w_norm: float, target: int | None = None) -> float:
    """Midpoint of the two estimated class score means of the target task."""
    if not w_norm > 0:
        raise DegenerateModelError(f"||w|| must be positive, got {w_norm}")
    target = labels.target if target is None else target
    if target is None:
        raise StructuralError("threshold needs a target task")
    g = _check_gram(gram, layout)
    yn = np.asarray(labels.y, dtype=np.float64) * layout.n_flat
    m1 = float(yn @ g[:, layout.index(target, 1)]) / w_norm
    m2 = float(yn @ g[:, layout.index(target, 2)]) / w_norm
    return 0.5 * (m1 + m2)


def score(bundle: ClassifierBundle, x: np.ndarray) -> float | np.ndarray:
    """g(x) = v.x - zeta. ``x`` may be one sample or a p x m matrix of samples."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != bundle.p or x.ndim > 2:
        raise StructuralError(f"sample dimension {x.shape[0]} does not match p={bundle.p}")
    g = bundle.v @ x - bundle.zeta
    return float(g) if x.ndim == 1 else g


def classify(g: float | np.ndarray) -> int | np.ndarray:
    """Class 1 when g >= 0 (ties go to class 1), class 2 otherwise."""
    arr = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError("score is not finite")
    out = np.where(arr >= 0, 1, 2)
    return int(out) if out.ndim == 0 else out


def fit_bundle(all_stats: Sequence[TaskStats], target: int, labels: LabelKind = "optimal") -> ClassifierBundle:
    """Full estimation chain from shared statistics to a target classifier."""
    layout = layout_from_stats(all_stats)
    layout.position(target)
    gram = gram_estimate(all_stats, layout)
    if labels == "optimal":
        y = optimal_labels(build_similarity(gram, layout), layout, target)
    elif labels == "naive":
        y = naive_labels(layout, target)
    else:
        raise StructuralError(f"unknown label kind {labels!r}")
    w, v = projection(all_stats, y, layout)
    zeta = threshold(gram, y, layout, float(np.linalg.norm(w)), target)
    return ClassifierBundle(v=v, zeta=zeta, target=target, labels=y.y)
