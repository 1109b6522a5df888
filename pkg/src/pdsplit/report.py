"""Per-run CSV files and Table-style summaries.

Handles:
- Writing and reading the per-run CSV (one row per solver, seed and tolerance)
- Aggregating medians over seeds per (solver, n, N, eps)
- Rendering the summary as CSV and as a plain-text table
"""

import csv
import logging
import statistics
from collections.abc import Iterable
from pathlib import Path
from typing import Any

from .types import REPORT_COLUMNS, RunReport

logger = logging.getLogger(__name__)

# Columns of the aggregated table
TABLE_COLUMNS = ["solver", "n", "N", "eps", "runs", "converged", "Err", "fval", "k", "seconds"]


def write_runs_csv(path: Path, reports: Iterable[RunReport]) -> int:
    """Write one row per run in the order given.

    Returns:
        Number of rows written
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [report.to_row() for report in reports]
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"Wrote {len(rows)} run(s) to {path}")
    return len(rows)


def read_runs_csv(path: Path) -> list[dict[str, str]]:
    """Read a per-run CSV into raw string rows."""
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _median(values: list[float]) -> float | None:
    return statistics.median(values) if values else None


def summarize(rows: Iterable[dict[str, str]]) -> list[dict[str, Any]]:
    """Median Err, fval, k and seconds over seeds for each (solver, n, N, eps).

    Groups keep the order in which they first appear.
    """
    groups: dict[tuple[str, str, str, str], list[dict[str, str]]] = {}
    for row in rows:
        key = (row["solver"], row["n"], row["N"], row["eps"])
        groups.setdefault(key, []).append(row)

    table: list[dict[str, Any]] = []
    for (solver, n, batches, eps), members in groups.items():
        seconds = [float(r["seconds"]) for r in members if r.get("seconds")]
        table.append(
            {
                "solver": solver,
                "n": int(n),
                "N": int(batches),
                "eps": float(eps),
                "runs": len(members),
                "converged": sum(int(r["converged"]) for r in members),
                "Err": _median([float(r["Err"]) for r in members]),
                "fval": _median([float(r["fval"]) for r in members]),
                "k": _median([float(r["k"]) for r in members]),
                "seconds": _median(seconds),
            }
        )
    return table


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def write_table_csv(path: Path, table: list[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in table:
            writer.writerow({key: "" if row[key] is None else row[key] for key in TABLE_COLUMNS})


def format_table(table: list[dict[str, Any]]) -> str:
    """Render the summary as an aligned plain-text table."""
    cells = [TABLE_COLUMNS] + [[_cell(row[c]) for c in TABLE_COLUMNS] for row in table]
    widths = [max(len(line[i]) for line in cells) for i in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(value.rjust(width) for value, width in zip(line, widths, strict=True)) for line in cells]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)
