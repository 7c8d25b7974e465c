"""CSV export of iteration traces."""

from __future__ import annotations

import csv
from typing import Iterable, List

from .solver import IterationRecord

HEADER = ["k", "block", "tau", "backtracks", "lambda", "boost_attempts", "phi", "dir_norm", "elapsed_ns"]


def fmt(value: float) -> str:
    return format(value, ".17g")


def trace_rows(records: Iterable[IterationRecord], timing: bool = False) -> List[List[str]]:
    # elapsed_ns stays empty unless timing is requested, so default traces are reproducible
    return [
        [str(r.k), str(r.block), fmt(r.tau), str(r.backtracks), fmt(r.lam),
         str(r.boost_attempts), fmt(r.phi), fmt(r.dir_norm),
         str(r.elapsed_ns) if timing else ""]
        for r in records
    ]


def write_trace(path, records: Iterable[IterationRecord], timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        writer.writerows(trace_rows(records, timing))


def read_trace(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
