"""Synthetic Gaussian-mixture tasks and CSV feature ingestion.

Matrices are stored with samples as columns (p x n). On disk, CSV files hold
one sample per row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, StructuralError
from .layout import ProblemLayout
from .stats import TaskStats, task_stats


@dataclass(frozen=True)
class SyntheticSpec:
    p: int
    beta: float
    counts: tuple[tuple[int, int], ...]
    n_test: int = 10_000
    seed: int = 0
    target: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise StructuralError(f"beta must lie in [0, 1], got {self.beta}")
        if any(n < 2 for pair in self.counts for n in pair):
            raise StructuralError("every class needs at least 2 training samples")
        if not 1 <= self.target <= len(self.counts):
            raise StructuralError(f"target {self.target} outside 1..{len(self.counts)}")
        if self.p < 1 or self.n_test < 0:
            raise StructuralError("p must be positive and n_test non-negative")


def transfer_spec(beta: float, seed: int = 0, p: int = 100, n_source: int = 1000, n_target: int = 50, n_test: int = 10_000) -> SyntheticSpec:
    """Two tasks, a large source (task 1) and a small target (task 2)."""
    return SyntheticSpec(p, beta, ((n_source, n_source), (n_target, n_target)), n_test, seed, target=2)


def added_tasks_spec(beta: float, k: int, seed: int = 0, p: int = 100, n_source: int = 50, n_target: int = 20, n_test: int = 10_000) -> SyntheticSpec:
    """k tasks where task 2 (or task 1 when k == 1) is the target."""
    target = 2 if k >= 2 else 1
    counts = tuple((n_target, n_target) if t == target else (n_source, n_source) for t in range(1, k + 1))
    return SyntheticSpec(p, beta, counts, n_test, seed, target)


@dataclass(frozen=True)
class Dataset:
    """Training matrices per task plus a labelled test split for the target."""

    tasks: dict[int, tuple[np.ndarray, np.ndarray]] = field(repr=False)
    target: int
    test_x: np.ndarray = field(repr=False)
    test_y: np.ndarray = field(repr=False)
    means: np.ndarray | None = field(default=None, repr=False)  # true p x 2k means, q order

    @property
    def p(self) -> int:
        return next(iter(self.tasks.values()))[0].shape[0]

    @property
    def task_ids(self) -> list[int]:
        return sorted(self.tasks)

    def layout(self) -> ProblemLayout:
        ids = self.task_ids
        return ProblemLayout.from_counts(self.p, [(self.tasks[t][0].shape[1], self.tasks[t][1].shape[1]) for t in ids], ids)

    def stats(self, shuffle_seed: int | None = None) -> list[TaskStats]:
        return [task_stats(t, *self.tasks[t], shuffle_seed=shuffle_seed) for t in self.task_ids]

    def subset(self, task_ids: Iterable[int]) -> "Dataset":
        ids = sorted(set(task_ids))
        if self.target not in ids:
            raise StructuralError(f"subset must keep the target task {self.target}")
        means = None
        if self.means is not None:
            pos = {t: i for i, t in enumerate(self.task_ids)}
            cols = [2 * pos[t] + j for t in ids for j in (0, 1)]
            means = self.means[:, cols]
        return Dataset({t: self.tasks[t] for t in ids}, self.target, self.test_x, self.test_y, means)


def _sample_tasks(rng: np.random.Generator, spec: SyntheticSpec, task_means: np.ndarray) -> Dataset:
    # class j of task t has mean (-1)^j mu_t
    p = spec.p
    tasks: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    cols = []
    for t, (n1, n2) in enumerate(spec.counts, start=1):
        mu = task_means[:, t - 1]
        x1 = rng.standard_normal((p, n1)) - mu[:, None]
        x2 = rng.standard_normal((p, n2)) + mu[:, None]
        tasks[t] = (x1, x2)
        cols += [-mu, mu]
    mu_t = task_means[:, spec.target - 1]
    test_y = rng.integers(1, 3, size=spec.n_test)
    signs = np.where(test_y == 1, -1.0, 1.0)
    test_x = rng.standard_normal((p, spec.n_test)) + mu_t[:, None] * signs[None, :]
    return Dataset(tasks, spec.target, test_x, test_y, np.column_stack(cols))


def transfer_means(p: int, beta: float) -> np.ndarray:
    """mu_1 = e_1 and mu_2 = beta e_1 + sqrt(1 - beta^2) e_2, as columns."""
    if p < 2 and beta < 1:
        raise StructuralError("p >= 2 is needed for a direction orthogonal to mu_1")
    means = np.zeros((p, 2))
    means[0, 0] = 1.0
    means[0, 1] = beta
    if p >= 2:
        means[1, 1] = math.sqrt(1.0 - beta * beta)
    return means


def gen_transfer(spec: SyntheticSpec) -> Dataset:
    if len(spec.counts) != 2:
        raise StructuralError("the transfer setting has exactly 2 tasks")
    rng = np.random.default_rng(spec.seed)
    return _sample_tasks(rng, spec, transfer_means(spec.p, spec.beta))


def added_task_means(rng: np.random.Generator, p: int, beta: float, k: int) -> np.ndarray:
    """mu_t = beta e_1 + sqrt(1 - beta^2) u_t with u_t uniform on the unit sphere of e_1's complement."""
    if p < 2:
        raise StructuralError("p >= 2 is needed for directions orthogonal to e_1")
    means = np.zeros((p, k))
    for t in range(k):
        u = rng.standard_normal(p - 1)
        u /= np.linalg.norm(u)
        means[0, t] = beta
        means[1:, t] = math.sqrt(1.0 - beta * beta) * u
    return means


def gen_added_tasks(spec: SyntheticSpec, k: int | None = None) -> Dataset:
    k = len(spec.counts) if k is None else k
    if k < 1 or k != len(spec.counts):
        raise StructuralError(f"spec lists {len(spec.counts)} tasks, asked for k={k}")
    rng = np.random.default_rng(spec.seed)
    return _sample_tasks(rng, spec, added_task_means(rng, spec.p, spec.beta, k))


# --- CSV ingestion ---------------------------------------------------------

MANIFEST_CLASSES = {"1": (1, False), "2": (2, False), "test1": (1, True), "test2": (2, True)}


@dataclass(frozen=True)
class ManifestRecord:
    task: int
    cls: int
    test: bool
    path: Path
    count: int


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    """Parse ``task,class,path,count`` lines; blank lines and ``#`` comments are skipped.

    ``class`` is 1 or 2 for training data, ``test1``/``test2`` for labelled
    held-out samples of the target task. Relative paths resolve against the
    manifest's directory.
    """
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected task,class,path,count; got {len(row)} fields")
            task_s, cls_s, file_s, count_s = (f.strip() for f in row)
            if cls_s not in MANIFEST_CLASSES:
                raise DataError(f"{path}:{lineno}: class must be one of {sorted(MANIFEST_CLASSES)}, got {cls_s!r}")
            try:
                task, count = int(task_s), int(count_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: task and count must be integers") from None
            cls, test = MANIFEST_CLASSES[cls_s]
            file_path = Path(file_s)
            if not file_path.is_absolute():
                file_path = path.parent / file_path
            records.append(ManifestRecord(task, cls, test, file_path, count))
    return records


def read_matrix(path: str | Path, p: int | None = None) -> np.ndarray:
    """Read a headerless numeric CSV (rows are samples) into a p x n matrix."""
    path = Path(path)
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if p is None:
                p = len(row)
            if len(row) != p:
                raise DataError(f"{path}:{lineno}: expected {p} columns, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if p is None:
        raise DataError(f"{path}: file is empty")
    return np.array(rows, dtype=np.float64).reshape(len(rows), p).T


def write_matrix(path: str | Path, x: np.ndarray) -> None:
    # %.17g round-trips every float64 exactly
    np.savetxt(path, np.asarray(x).T, fmt="%.17g", delimiter=",")


def load_csv(manifest: str | Path, target: int | None = None) -> Dataset:
    records = read_manifest(manifest)
    if not records:
        raise DataError(f"{manifest}: manifest has no records")
    train: dict[tuple[int, int], np.ndarray] = {}
    test: dict[tuple[int, int], np.ndarray] = {}
    p = None
    for rec in records:
        x = read_matrix(rec.path, p)
        p = x.shape[0]
        if x.shape[1] != rec.count:
            raise DataError(f"{rec.path}: manifest declares {rec.count} rows, file has {x.shape[1]}")
        bucket = test if rec.test else train
        if (rec.task, rec.cls) in bucket:
            kind = "test" if rec.test else "training"
            raise DataError(f"{manifest}: duplicate {kind} record for task {rec.task} class {rec.cls}")
        bucket[(rec.task, rec.cls)] = x
    task_ids = sorted({t for t, _ in train})
    for t in task_ids:
        if (t, 1) not in train or (t, 2) not in train:
            raise DataError(f"{manifest}: task {t} needs both classes")
    test_tasks = sorted({t for t, _ in test})
    if target is None:
        if len(test_tasks) > 1:
            raise DataError(f"{manifest}: test data for several tasks {test_tasks}; choose a target")
        target = test_tasks[0] if test_tasks else task_ids[-1]
    if target not in task_ids:
        raise StructuralError(f"target task {target} has no training data in {manifest}")
    parts_x, parts_y = [], []
    for cls in (1, 2):
        if (target, cls) in test:
            x = test[(target, cls)]
            parts_x.append(x)
            parts_y.append(np.full(x.shape[1], cls))
    test_x = np.concatenate(parts_x, axis=1) if parts_x else np.zeros((p, 0))
    test_y = np.concatenate(parts_y) if parts_y else np.zeros(0, dtype=np.int64)
    tasks = {t: (train[(t, 1)], train[(t, 2)]) for t in task_ids}
    return Dataset(tasks, target, test_x, test_y)


def write_csv(dataset: Dataset, directory: str | Path) -> Path:
    """Write every matrix plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for t in dataset.task_ids:
        for cls, x in zip((1, 2), dataset.tasks[t]):
            name = f"task{t}_class{cls}.csv"
            write_matrix(directory / name, x)
            lines.append(f"{t},{cls},{name},{x.shape[1]}")
    for cls in (1, 2):
        x = dataset.test_x[:, dataset.test_y == cls]
        if x.shape[1]:
            name = f"task{dataset.target}_test{cls}.csv"
            write_matrix(directory / name, x)
            lines.append(f"{dataset.target},test{cls},{name},{x.shape[1]}")
    manifest = directory / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
