"""Per-client sufficient statistics and the Gram estimate built from them.

Nothing below looks at individual samples once :func:`class_stats` has run:
the half-split means and counts are all that ever leaves a client.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, InsufficientDataError, StructuralError
from .layout import ProblemLayout


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ClassStats:
    n_a: int
    n_b: int
    h_a: np.ndarray = field(repr=False)
    h_b: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.n_a < 1 or self.n_b < 1:
            raise InsufficientDataError(f"both halves need a sample (n_a={self.n_a}, n_b={self.n_b})")
        h_a, h_b = _frozen(self.h_a), _frozen(self.h_b)
        if h_a.ndim != 1 or h_a.shape != h_b.shape:
            raise StructuralError(f"half means must be equal-length vectors: {h_a.shape} vs {h_b.shape}")
        if not (np.all(np.isfinite(h_a)) and np.all(np.isfinite(h_b))):
            raise DataError("half means contain non-finite values")
        object.__setattr__(self, "h_a", h_a)
        object.__setattr__(self, "h_b", h_b)

    @property
    def n(self) -> int:
        return self.n_a + self.n_b

    @property
    def p(self) -> int:
        return self.h_a.shape[0]

    @property
    def weighted_sum(self) -> np.ndarray:
        """Sum of all samples, i.e. ``n * mu``."""
        return self.n_a * self.h_a + self.n_b * self.h_b

    @property
    def mu(self) -> np.ndarray:
        return self.weighted_sum / self.n


@dataclass(frozen=True)
class TaskStats:
    task_id: int
    classes: tuple[ClassStats, ClassStats]

    def __post_init__(self) -> None:
        if len(self.classes) != 2:
            raise StructuralError(f"expected 2 classes, got {len(self.classes)}")
        if self.classes[0].p != self.classes[1].p:
            raise StructuralError(
                f"task {self.task_id}: classes disagree on p ({self.classes[0].p} vs {self.classes[1].p})"
            )

    @property
    def p(self) -> int:
        return self.classes[0].p

    @property
    def counts(self) -> tuple[int, int]:
        return self.classes[0].n, self.classes[1].n


@dataclass(frozen=True)
class GramEstimate:
    """Estimate of M^T M. Diagonal entries may be negative at small n."""

    g: np.ndarray

    def __post_init__(self) -> None:
        g = _frozen(self.g)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise StructuralError(f"Gram must be square, got {g.shape}")
        object.__setattr__(self, "g", g)


def class_stats(data: np.ndarray, shuffle_seed: int | None = None) -> ClassStats:
    """Summarize one class of one task (samples as columns).

    The first ``ceil(n/2)`` columns form half a. Pass ``shuffle_seed`` to
    permute the columns first when the on-disk order is not exchangeable.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise StructuralError(f"class data must be a p x n matrix, got shape {x.shape}")
    n = x.shape[1]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples per class, got {n}")
    if not np.all(np.isfinite(x)):
        raise DataError("class data contains non-finite values")
    if shuffle_seed is not None:
        x = x[:, np.random.default_rng(shuffle_seed).permutation(n)]
    n_a = (n + 1) // 2
    return ClassStats(n_a=n_a, n_b=n - n_a, h_a=x[:, :n_a].mean(axis=1), h_b=x[:, n_a:].mean(axis=1))


def task_stats(task_id: int, class1: np.ndarray, class2: np.ndarray, shuffle_seed: int | None = None) -> TaskStats:
    return TaskStats(task_id, (class_stats(class1, shuffle_seed), class_stats(class2, shuffle_seed)))


def sort_stats(all_stats: Sequence[TaskStats]) -> list[TaskStats]:
    ordered = sorted(all_stats, key=lambda s: s.task_id)
    ids = [s.task_id for s in ordered]
    if len(set(ids)) != len(ids):
        raise StructuralError(f"duplicate task ids: {ids}")
    return ordered


def layout_from_stats(all_stats: Sequence[TaskStats]) -> ProblemLayout:
    ordered = sort_stats(all_stats)
    if not ordered:
        raise StructuralError("no tasks")
    ps = {s.p for s in ordered}
    if len(ps) != 1:
        raise StructuralError(f"tasks disagree on feature dimension: {sorted(ps)}")
    return ProblemLayout.from_counts(ps.pop(), [s.counts for s in ordered], [s.task_id for s in ordered])


def _check_against_layout(ordered: Sequence[TaskStats], layout: ProblemLayout) -> None:
    if tuple(s.task_id for s in ordered) != layout.task_ids:
        raise StructuralError(
            f"stats cover tasks {[s.task_id for s in ordered]}, layout expects {list(layout.task_ids)}"
        )
    for s in ordered:
        if s.p != layout.p:
            raise StructuralError(f"task {s.task_id} has p={s.p}, layout has p={layout.p}")
        if s.counts != tuple(layout.counts[layout.position(s.task_id)]):
            raise StructuralError(f"task {s.task_id} counts {s.counts} disagree with the layout")


def mean_matrix(all_stats: Sequence[TaskStats], layout: ProblemLayout) -> np.ndarray:
    """Empirical means as a p x 2k matrix in q order."""
    ordered = sort_stats(all_stats)
    _check_against_layout(ordered, layout)
    return np.column_stack([c.mu for s in ordered for c in s.classes])


def gram_estimate(all_stats: Sequence[TaskStats], layout: ProblemLayout) -> GramEstimate:
    """Off-diagonal: inner products of full means. Diagonal: cross-half products.

    The cross-half product h_a . h_b is unbiased for ||mu||^2 for any split
    sizes since the halves are independent.
    """
    ordered = sort_stats(all_stats)
    _check_against_layout(ordered, layout)
    mus = np.column_stack([c.mu for s in ordered for c in s.classes])
    g = mus.T @ mus
    diag = [float(c.h_a @ c.h_b) for s in ordered for c in s.classes]
    np.fill_diagonal(g, diag)
    return GramEstimate((g + g.T) / 2)
