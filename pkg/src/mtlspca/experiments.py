"""Seeded experiment grids comparing MTL-SPCA against its two baselines.

ST-SPCA is the same pipeline restricted to the target task; N-SPCA keeps all
tasks but uses +/-1 labels. Every repetition draws from its own generator,
derived from ``(seed, grid point, repetition)``, so a report is a pure
function of its arguments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ClassifierBundle, classify, fit_bundle, score
from .datasets import (
    Dataset,
    added_tasks_spec,
    gen_added_tasks,
    gen_transfer,
    load_csv,
    transfer_means,
    transfer_spec,
)
from .layout import ProblemLayout
from .errors import StructuralError
from .theory import TheoryModel

MTL, ST, NAIVE, THEORY = "MTL-SPCA", "ST-SPCA", "N-SPCA", "THEORY"
METHOD_ORDER = {MTL: 0, ST: 1, NAIVE: 2, THEORY: 3}
TRANSFER_BETAS = tuple(float(b) for b in np.linspace(0.0, 1.0, 10))


def derive_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def error_rate(bundle: ClassifierBundle, test_x: np.ndarray, test_y: np.ndarray) -> float:
    if test_x.shape[1] == 0:
        raise StructuralError("no test samples to evaluate")
    pred = classify(score(bundle, test_x))
    return float(np.count_nonzero(pred != test_y)) / test_y.size


def evaluate_methods(dataset: Dataset, methods: Sequence[str] = (MTL, ST, NAIVE)) -> dict[str, float]:
    stats = dataset.stats()
    t = dataset.target
    out = {}
    for method in methods:
        if method == MTL:
            bundle = fit_bundle(stats, t, "optimal")
        elif method == ST:
            bundle = fit_bundle([s for s in stats if s.task_id == t], t, "optimal")
        elif method == NAIVE:
            bundle = fit_bundle(stats, t, "naive")
        else:
            raise StructuralError(f"unknown method {method!r}")
        out[method] = error_rate(bundle, dataset.test_x, dataset.test_y)
    return out


@dataclass(frozen=True)
class ReportRow:
    method: str
    beta: float | None
    num_tasks: int | None
    error: float
    std: float
    reps: int
    n_test: int
    seed: int | None
    added_task: int | None = None


@dataclass
class ExperimentReport:
    kind: str
    columns: tuple[str, ...]
    rows: list[ReportRow] = field(default_factory=list)

    def sorted_rows(self) -> list[ReportRow]:
        return sorted(
            self.rows,
            key=lambda r: (METHOD_ORDER.get(r.method, 99), r.beta if r.beta is not None else -1, r.num_tasks or 0),
        )

    def select(self, method: str, **where: object) -> list[ReportRow]:
        return [r for r in self.sorted_rows() if r.method == method and all(getattr(r, k) == v for k, v in where.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.sorted_rows():
            writer.writerow([_fmt(getattr(row, c)) for c in self.columns])
        return buf.getvalue()

    def to_gnuplot(self) -> str:
        """One whitespace-separated block per method, blocks separated by two blank lines."""
        blocks = []
        numeric = [c for c in self.columns if c != "method"]
        for method in sorted({r.method for r in self.rows}, key=lambda m: METHOD_ORDER.get(m, 99)):
            lines = [f"# {method}", "# " + " ".join(numeric)]
            lines += [" ".join(_fmt(getattr(r, c)) or "NaN" for c in numeric) for r in self.select(method)]
            blocks.append("\n".join(lines))
        return "\n\n\n".join(blocks) + "\n"

    def write(self, path: str | Path, gnuplot: str | Path | None = None) -> None:
        Path(path).write_text(self.to_csv())
        if gnuplot is not None:
            Path(gnuplot).write_text(self.to_gnuplot())


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _summary(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def transfer_theory(
    beta: float, p: int = 100, n_source: int = 1000, n_target: int = 50, labels: str = "optimal"
) -> TheoryModel:
    """Predicted target error for the two-task layout with the true means."""
    mu = transfer_means(p, beta)
    means = np.column_stack([-mu[:, 0], mu[:, 0], -mu[:, 1], mu[:, 1]])
    layout = ProblemLayout.from_counts(p, [(n_source, n_source), (n_target, n_target)])
    return TheoryModel.from_means(means, layout, 2, labels)  # type: ignore[arg-type]


def transfer_experiment(
    betas: Iterable[float] = TRANSFER_BETAS,
    reps: int = 10,
    seed: int = 0,
    p: int = 100,
    n_source: int = 1000,
    n_target: int = 50,
    n_test: int = 10_000,
) -> ExperimentReport:
    """Error versus task relatedness for two tasks (large source, small target)."""
    betas = [float(b) for b in betas]
    if not betas or any(not 0.0 <= b <= 1.0 for b in betas):
        raise StructuralError(f"beta grid must be non-empty and inside [0, 1]: {betas}")
    if reps < 1:
        raise StructuralError("reps must be >= 1")
    report = ExperimentReport("transfer", ("method", "beta", "error", "std", "seed", "reps", "n_test"))
    for i, beta in enumerate(betas):
        errs: dict[str, list[float]] = {MTL: [], ST: [], NAIVE: []}
        for r in range(reps):
            ds = gen_transfer(transfer_spec(beta, derive_seed(seed, i, r), p, n_source, n_target, n_test))
            for method, e in evaluate_methods(ds).items():
                errs[method].append(e)
        for method, values in errs.items():
            mean, std = _summary(values)
            report.rows.append(ReportRow(method, beta, 2, mean, std, reps, n_test, seed))
        theory = transfer_theory(beta, p, n_source, n_target)
        report.rows.append(ReportRow(THEORY, beta, 2, theory.err, 0.0, 1, 0, seed))
    return report


def _task_order(target: int, k: int) -> list[int]:
    return [target] + [t for t in range(1, k + 1) if t != target]


def add_tasks_experiment(
    betas: Iterable[float] = (0.0, 0.5, 1.0),
    k_max: int = 10,
    reps: int = 10,
    seed: int = 0,
    p: int = 100,
    n_source: int = 50,
    n_target: int = 20,
    n_test: int = 10_000,
) -> ExperimentReport:
    """Error versus the number of tasks k (target plus k - 1 sources)."""
    betas = [float(b) for b in betas]
    if k_max < 1:
        raise StructuralError("k_max must be >= 1")
    if not betas or any(not 0.0 <= b <= 1.0 for b in betas):
        raise StructuralError(f"beta grid must be non-empty and inside [0, 1]: {betas}")
    if reps < 1:
        raise StructuralError("reps must be >= 1")
    report = ExperimentReport(
        "add-tasks", ("method", "beta", "num_tasks", "error", "std", "seed", "reps", "n_test")
    )
    for i, beta in enumerate(betas):
        errs = {(m, k): [] for m in (MTL, ST, NAIVE, THEORY) for k in range(1, k_max + 1)}
        for r in range(reps):
            full = gen_added_tasks(added_tasks_spec(beta, k_max, derive_seed(seed, i, r), p, n_source, n_target, n_test))
            order = _task_order(full.target, k_max)
            for k in range(1, k_max + 1):
                ds = full.subset(order[:k])
                for method, e in evaluate_methods(ds).items():
                    errs[(method, k)].append(e)
                errs[(THEORY, k)].append(TheoryModel.from_means(ds.means, ds.layout(), ds.target).err)
        for (method, k), values in errs.items():
            mean, std = _summary(values)
            report.rows.append(
                ReportRow(method, beta, k, mean, std, reps, 0 if method == THEORY else n_test, seed)
            )
    return report


def csv_experiment(
    manifest: str | Path, target: int | None = None, order: Sequence[int] | None = None, shuffle_seed: int | None = None
) -> ExperimentReport:
    """Add source tasks one at a time, in ``order``, to a target read from CSV features."""
    full = load_csv(manifest, target)
    if full.test_y.size == 0:
        raise StructuralError(f"{manifest}: the target task {full.target} has no test records")
    sources = [t for t in full.task_ids if t != full.target]
    order = list(sources if order is None else order)
    if sorted(order) != sorted(set(order)) or not set(order) <= set(sources):
        raise StructuralError(f"order {order} must list distinct source tasks from {sources}")
    report = ExperimentReport("csv", ("method", "num_tasks", "added_task", "error", "std", "seed", "reps", "n_test"))
    n_test = int(full.test_y.size)

    def run(ds: Dataset, methods: Sequence[str]) -> dict[str, float]:
        stats = ds.stats(shuffle_seed)
        out = {}
        for m in methods:
            chosen = [s for s in stats if s.task_id == ds.target] if m == ST else stats
            bundle = fit_bundle(chosen, ds.target, "naive" if m == NAIVE else "optimal")
            out[m] = error_rate(bundle, ds.test_x, ds.test_y)
        return out

    base = run(full.subset([full.target]), (ST,))
    report.rows.append(ReportRow(ST, None, 1, base[ST], 0.0, 1, n_test, shuffle_seed, None))
    for i, added in enumerate(order, start=1):
        ds = full.subset([full.target, *order[:i]])
        for m, e in run(ds, (MTL, NAIVE)).items():
            report.rows.append(ReportRow(m, None, i + 1, e, 0.0, 1, n_test, shuffle_seed, added))
        report.rows.append(ReportRow(ST, None, i + 1, base[ST], 0.0, 1, n_test, shuffle_seed, added))
    return report
