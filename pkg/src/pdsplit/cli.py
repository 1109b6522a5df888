"""CLI entry point for the pdsplit LASSO benchmark.

Usage:
    pdsplit gen --n 1024 --seed 0 --out instance.npz
    pdsplit run --solver minibatch --n 1024 --batches 4 --eps 1e-5 --seed 0 --out-dir results
    pdsplit report results/runs.csv
"""

import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, NoReturn

import click

from .config import load_config, load_schedule
from .executor import ExperimentExecutor
from .lasso import SAMPLE_RATIO, SPARSITY_RATIO, gen_lasso
from .report import format_table, read_runs_csv, summarize, write_runs_csv, write_table_csv
from .schedule import ScheduleError
from .types import SolverError, SolverName

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

# Exit status for a rejected stepsize schedule
EXIT_SCHEDULE_INVALID = 2


def _set_verbose(verbose: bool) -> None:
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def _fail(error: SolverError) -> NoReturn:
    click.echo(f"Error: {error}", err=True)
    sys.exit(EXIT_SCHEDULE_INVALID if isinstance(error, ScheduleError) else 1)


@click.group()
@click.version_option()
def cli() -> None:
    """pdsplit - primal-dual splitting with dynamic stepsizes on LASSO benchmarks."""
    pass


@cli.command()
@click.option("--n", "n", type=int, default=1024, show_default=True, help="Number of unknowns (multiple of 64)")
@click.option("--lam", type=float, default=None, help="Regularization weight (default 0.1 ||A^T b||_inf)")
@click.option("--seed", type=int, default=0, show_default=True, help="Instance seed")
@click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("instance.npz"),
    show_default=True,
    help="Output .npz file",
)
@click.option("-v", "--verbose", is_flag=True, help="Enable verbose logging")
def gen(n: int, lam: float | None, seed: int, out: Path, verbose: bool) -> None:
    """Generate a seeded LASSO instance with m = n/4 and n/64 nonzeros."""
    _set_verbose(verbose)
    try:
        inst = gen_lasso(n, lam=lam, seed=seed)
        out.parent.mkdir(parents=True, exist_ok=True)
        inst.save(out)
    except SolverError as e:
        _fail(e)
    click.echo(f"m={n // SAMPLE_RATIO} n={n} K={n // SPARSITY_RATIO} lam={inst.lam:.6g} -> {out}")


@cli.command()
@click.option(
    "--config",
    "config_file",
    type=click.Path(exists=True, path_type=Path),
    help="Path to an experiment YAML file",
)
@click.option("--n", "n", type=int, default=None, help="Number of unknowns (multiple of 64)")
@click.option("--batches", type=int, default=None, help="Number of batches N")
@click.option("--eps", type=float, multiple=True, help="Stopping tolerance; repeat for several")
@click.option("--seed", "seeds", type=int, multiple=True, help="Seed; repeat for several")
@click.option(
    "--solver",
    "solvers",
    type=click.Choice([s.value for s in SolverName]),
    multiple=True,
    help="Solver; repeat for several",
)
@click.option("--max-iters", type=int, default=None, help="Iteration cap")
@click.option("--lam", type=float, default=None, help="Regularization weight")
@click.option(
    "--schedule-file",
    type=click.Path(exists=True, path_type=Path),
    help="YAML stepsize schedule",
)
@click.option(
    "--graph-file",
    type=click.Path(exists=True, path_type=Path),
    help="Edge list for the distributed solvers (1-indexed)",
)
@click.option("--instance-file", type=click.Path(exists=True, path_type=Path), help="Instance written by gen")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Output directory")
@click.option("--workers", type=int, default=None, help="Parallel runs")
@click.option("--timing/--no-timing", default=None, help="Record wall time per run")
@click.option("-v", "--verbose", is_flag=True, help="Enable verbose logging")
def run(
    config_file: Path | None,
    n: int | None,
    batches: int | None,
    eps: tuple[float, ...],
    seeds: tuple[int, ...],
    solvers: tuple[str, ...],
    max_iters: int | None,
    lam: float | None,
    schedule_file: Path | None,
    graph_file: Path | None,
    instance_file: Path | None,
    out_dir: Path | None,
    workers: int | None,
    timing: bool | None,
    verbose: bool,
) -> None:
    """Run the solver grid and write runs.csv, traces, curves and configs."""
    _set_verbose(verbose)

    # Flags override the config file, which overrides the defaults
    overrides: dict[str, Any] = {
        "n": n,
        "batches": batches,
        "eps": list(eps) or None,
        "seeds": list(seeds) or None,
        "solvers": list(solvers) or None,
        "max_iters": max_iters,
        "lam": lam,
        "graph_file": str(graph_file) if graph_file else None,
        "instance_file": str(instance_file) if instance_file else None,
        "out_dir": str(out_dir) if out_dir else None,
        "workers": workers,
        "timing": timing,
    }
    try:
        if schedule_file:
            overrides["schedule"] = load_schedule(schedule_file).model_dump()
        config = load_config(config_file, overrides)
        executor = ExperimentExecutor(config)
        reports = asyncio.run(executor.run_experiment())
    except SolverError as e:
        _fail(e)

    runs_path = executor.out_dir / "runs.csv"
    write_runs_csv(runs_path, reports)
    table = summarize(read_runs_csv(runs_path))
    write_table_csv(executor.out_dir / "table.csv", table)
    click.echo(format_table(table))


@cli.command()
@click.argument("runs_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write the table as CSV")
@click.option("-v", "--verbose", is_flag=True, help="Enable verbose logging")
def report(runs_csv: Path, out: Path | None, verbose: bool) -> None:
    """Aggregate a runs.csv into medians over seeds per (solver, n, N, eps)."""
    _set_verbose(verbose)
    try:
        table = summarize(read_runs_csv(runs_csv))
    except (KeyError, ValueError) as e:
        click.echo(f"Error: malformed runs file {runs_csv}: {e}", err=True)
        sys.exit(1)
    if out:
        write_table_csv(out, table)
        logger.info(f"Wrote table to {out}")
    click.echo(format_table(table))


@cli.command()
def version() -> None:
    """Show version information."""
    from . import __version__

    click.echo(f"pdsplit {__version__}")


def main() -> None:
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
