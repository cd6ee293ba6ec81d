"""Task/class bookkeeping: sample counts, size ratios and the flat class index."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import StructuralError

NUM_CLASSES = 2


@dataclass(frozen=True)
class ProblemLayout:
    """Sizes of a k-task, 2-class problem.

    Tasks are kept in ascending ``task_id`` order and class ``j`` of the task
    at position ``i`` (both 0-based) lives at flat index ``q = 2*i + j``.
    """

    p: int
    task_ids: tuple[int, ...]
    counts: np.ndarray = field(repr=False)  # (k, 2) int64

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if self.p < 1:
            raise StructuralError(f"feature dimension must be positive, got {self.p}")
        if counts.ndim != 2 or counts.shape[1] != NUM_CLASSES or counts.shape[0] < 1:
            raise StructuralError(f"counts must have shape (k, 2), got {counts.shape}")
        if len(self.task_ids) != counts.shape[0]:
            raise StructuralError("one task id per row of counts is required")
        if list(self.task_ids) != sorted(set(self.task_ids)):
            raise StructuralError(f"task ids must be unique and ascending: {self.task_ids}")
        if np.any(counts < 2):
            raise StructuralError("every class needs at least 2 samples")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_counts(
        cls, p: int, counts: Sequence[Sequence[int]], task_ids: Iterable[int] | None = None
    ) -> "ProblemLayout":
        counts = np.asarray(counts, dtype=np.int64)
        if task_ids is None:
            task_ids = range(1, len(counts) + 1)
        return cls(p=int(p), task_ids=tuple(int(t) for t in task_ids), counts=counts)

    @property
    def k(self) -> int:
        return len(self.task_ids)

    @property
    def n_flat(self) -> np.ndarray:
        """Counts flattened in q order, as float64."""
        return self.counts.reshape(-1).astype(np.float64)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def c(self) -> np.ndarray:
        return self.n_flat / self.n

    @property
    def c0(self) -> float:
        return self.p / self.n

    def position(self, task_id: int) -> int:
        try:
            return self.task_ids.index(task_id)
        except ValueError:
            raise StructuralError(f"unknown task {task_id}; known: {self.task_ids}") from None

    def index(self, task_id: int, j: int) -> int:
        """Flat index of class ``j`` (1 or 2) of ``task_id``."""
        if j not in (1, 2):
            raise StructuralError(f"class must be 1 or 2, got {j}")
        return NUM_CLASSES * self.position(task_id) + (j - 1)

    def contrast(self, task_id: int) -> np.ndarray:
        """The vector e_{t1} - e_{t2}."""
        e = np.zeros(NUM_CLASSES * self.k)
        e[self.index(task_id, 1)] = 1.0
        e[self.index(task_id, 2)] = -1.0
        return e
