"""JSONL traces and (k, fval) curve files."""

import csv
import logging
from collections.abc import Iterable
from pathlib import Path

from pydantic import ValidationError

from .types import SolverError, TraceHeader, TraceRecord

logger = logging.getLogger(__name__)


def write_trace(path: Path, header: TraceHeader, records: Iterable[TraceRecord]) -> int:
    """Write a header line followed by one JSON object per record.

    Returns:
        Number of records written
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w") as f:
        f.write(header.model_dump_json() + "\n")
        for record in records:
            f.write(record.model_dump_json(exclude_none=True) + "\n")
            count += 1
    logger.debug(f"Wrote {count} trace records to {path}")
    return count


def read_trace(path: Path) -> tuple[TraceHeader, list[TraceRecord]]:
    """Read a trace written by write_trace.

    Raises:
        SolverError: If the file is empty or a line does not parse
    """
    with open(path) as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise SolverError(f"trace {path} is empty")
    try:
        header = TraceHeader.model_validate_json(lines[0])
        records = [TraceRecord.model_validate_json(line) for line in lines[1:]]
    except ValidationError as e:
        raise SolverError(f"malformed trace {path}: {e}") from e
    return header, records


def write_curve(path: Path, records: Iterable[TraceRecord]) -> int:
    """Write the (k, fval) pairs of records that carry an objective."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["k", "fval"])
        for record in records:
            if record.objective is not None:
                writer.writerow([record.k, repr(record.objective)])
                count += 1
    return count
