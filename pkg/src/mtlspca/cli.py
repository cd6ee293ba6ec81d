"""Command line entry point: ``mtlspca serve | client | experiment ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import asyncio
import logging
import os
import signal
import sys
from functools import wraps
from pathlib import Path

import click
import numpy as np

from .datasets import read_manifest, read_matrix
from .errors import MTLSPCAError
from .experiments import TRANSFER_BETAS, ExperimentReport, add_tasks_experiment, csv_experiment, transfer_experiment
from .protocol.client import CentralClient, parse_addr, target_client_run
from .protocol.codec import ProtocolError
from .protocol.server import CentralRegistry, CentralServer

DEFAULT_PORT = 7654
log = logging.getLogger("mtlspca")


def _runtime_errors(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (MTLSPCAError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _parse_floats(text: str | None, default: tuple[float, ...]) -> list[float]:
    if text is None:
        return list(default)
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


def _parse_ints(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated task ids, got {text!r}") from None


def _output_path(out: str | None) -> Path | None:
    if out is None or out == "-":
        return None
    path = Path(out)
    base = os.environ.get("MTLSPCA_OUT_DIR")
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _emit(report: ExperimentReport, out: str | None, gnuplot: str | None) -> None:
    path = _output_path(out)
    if path is None:
        click.echo(report.to_csv(), nl=False)
    else:
        path.write_text(report.to_csv())
        click.echo(f"wrote {len(report.rows)} rows to {path}", err=True)
    gp = _output_path(gnuplot)
    if gp is not None:
        gp.write_text(report.to_gnuplot())


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose: int) -> None:
    """Distributed multi-task supervised PCA."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


async def _serve(host: str, port: int, http_port: int | None) -> None:
    registry = CentralRegistry()
    server = CentralServer(registry, host, port)
    await server.start()
    click.echo(f"central client listening on {host}:{server.port}", err=True)
    tasks = [asyncio.create_task(server.serve_forever())]
    if http_port is not None:
        import uvicorn

        from .service import create_app

        config = uvicorn.Config(create_app(registry), host=host, port=http_port, log_level="warning")
        tasks.append(asyncio.create_task(uvicorn.Server(config).serve()))
        click.echo(f"HTTP API on {host}:{http_port}", err=True)

    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, stop.set)
    waiter = asyncio.create_task(stop.wait())
    done, _ = await asyncio.wait([waiter, *tasks], return_when=asyncio.FIRST_COMPLETED)
    for t in [waiter, *tasks]:
        t.cancel()
    await server.close()
    for t in done:
        if t is not waiter and not t.cancelled() and t.exception() is not None:
            raise t.exception()  # type: ignore[misc]


@main.command()
@click.option("--port", type=int, default=DEFAULT_PORT, envvar="MTLSPCA_PORT", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--http-port", type=int, default=None, envvar="MTLSPCA_HTTP_PORT", help="Also serve the HTTP API.")
@_runtime_errors
def serve(port: int, host: str, http_port: int | None) -> None:
    """Run the central client until interrupted."""
    try:
        asyncio.run(_serve(host, port, http_port))
    except OSError as exc:
        raise click.ClickException(f"cannot listen on {host}:{port}: {exc}") from exc
    except KeyboardInterrupt:
        pass


@main.command()
@click.option("--addr", default=f"127.0.0.1:{DEFAULT_PORT}", show_default=True, help="host:port of the central client.")
@click.option("--task-id", type=int, required=True)
@click.option(
    "--train",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    required=True,
    help="Directory holding class1.csv and class2.csv (rows are samples).",
)
@click.option("--test", "test_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--out", default="-", show_default=True, help="Where to write one predicted class per test row.")
@click.option("--source-only", is_flag=True, help="Upload statistics without requesting a classifier.")
@click.option("--wait", type=float, default=0.0, show_default=True, help="Seconds to wait for other tasks' uploads.")
@click.option("--shuffle-seed", type=int, default=None, help="Shuffle samples before the half split.")
@_runtime_errors
def client(addr, task_id, train, test_file, out, source_only, wait, shuffle_seed) -> None:
    """Upload this task's statistics and classify its test rows."""
    files = [train / "class1.csv", train / "class2.csv"]
    for f in files:
        if not f.is_file():
            raise click.UsageError(f"missing training file {f}")
    if test_file is None and not source_only:
        raise click.UsageError("--test is required unless --source-only is given")
    x1 = read_matrix(files[0])
    x2 = read_matrix(files[1], x1.shape[0])
    test_x = read_matrix(test_file) if test_file is not None else None
    host, port = parse_addr(addr, DEFAULT_PORT)
    with CentralClient(host, port) as conn:
        try:
            pred = target_client_run(conn, task_id, x1, x2, test_x, request=not source_only, wait=wait, shuffle_seed=shuffle_seed)
        except ProtocolError as exc:
            raise click.ClickException(f"central client refused: {exc}") from exc
        log.info("sent %d bytes", conn.bytes_sent)
    if pred is None:
        return
    text = "".join(f"{int(c)}\n" for c in np.asarray(pred))
    path = _output_path(out)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


@main.group()
def experiment() -> None:
    """Reproduce the synthetic and CSV-based experiment grids."""


def _common(fn):
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--out", default=None, help="CSV report path (stdout when omitted).")(fn)
    fn = click.option("--gnuplot", default=None, help="Also write a gnuplot table here.")(fn)
    return fn


@experiment.command("transfer")
@click.option("--beta-grid", default=None, help="Comma-separated betas (default: 10 points on [0, 1]).")
@click.option("--reps", type=int, default=10, show_default=True)
@click.option("--p", "p", type=int, default=100, show_default=True)
@click.option("--n-source", type=int, default=1000, show_default=True)
@click.option("--n-target", type=int, default=50, show_default=True)
@click.option("--n-test", type=int, default=10_000, show_default=True)
@_common
@_runtime_errors
def experiment_transfer(beta_grid, reps, p, n_source, n_target, n_test, seed, out, gnuplot) -> None:
    """Error versus task relatedness (two tasks)."""
    betas = _parse_floats(beta_grid, TRANSFER_BETAS)
    if not betas or any(not 0 <= b <= 1 for b in betas):
        raise click.BadParameter("betas must lie in [0, 1]", param_hint="--beta-grid")
    report = transfer_experiment(betas, reps, seed, p, n_source, n_target, n_test)
    _emit(report, out, gnuplot)


@experiment.command("add-tasks")
@click.option("--beta-grid", default=None, help="Comma-separated betas (default: 0,0.5,1).")
@click.option("--k-max", type=int, default=10, show_default=True)
@click.option("--reps", type=int, default=10, show_default=True)
@click.option("--p", "p", type=int, default=100, show_default=True)
@click.option("--n-source", type=int, default=50, show_default=True)
@click.option("--n-target", type=int, default=20, show_default=True)
@click.option("--n-test", type=int, default=10_000, show_default=True)
@_common
@_runtime_errors
def experiment_add_tasks(beta_grid, k_max, reps, p, n_source, n_target, n_test, seed, out, gnuplot) -> None:
    """Error versus the number of source tasks."""
    betas = _parse_floats(beta_grid, (0.0, 0.5, 1.0))
    if not betas or any(not 0 <= b <= 1 for b in betas):
        raise click.BadParameter("betas must lie in [0, 1]", param_hint="--beta-grid")
    if k_max < 1:
        raise click.BadParameter("must be >= 1", param_hint="--k-max")
    report = add_tasks_experiment(betas, k_max, reps, seed, p, n_source, n_target, n_test)
    _emit(report, out, gnuplot)


@experiment.command("csv")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--target", type=int, default=None, help="Target task (default: the task with test records).")
@click.option("--order", default=None, help="Comma-separated source tasks, in order of addition.")
@click.option("--shuffle-seed", type=int, default=None)
@click.option("--out", default=None, help="CSV report path (stdout when omitted).")
@click.option("--gnuplot", default=None)
@_runtime_errors
def experiment_csv(manifest, target, order, shuffle_seed, out, gnuplot) -> None:
    """Successively add source tasks read from feature CSVs."""
    if not read_manifest(manifest):
        raise click.UsageError(f"manifest {manifest} has no records")
    report = csv_experiment(manifest, target, _parse_ints(order), shuffle_seed)
    _emit(report, out, gnuplot)


if __name__ == "__main__":
    main()
