"""CSV reading and writing for observed samples (header ``l,a,delta,x``)."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable

from ..coarsening import ObservedRecord
from ..errors import SampleFormatError

HEADER = ("l", "a", "delta", "x")


def _int(text: str, name: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise SampleFormatError(f"line {line}: {name}={text!r} is not an integer") from None


def parse_sample(text: str, source: str = "<sample>") -> list[ObservedRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SampleFormatError(f"{source}: empty file") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise SampleFormatError(f"{source}: line 1: header must be {','.join(HEADER)}, got {','.join(header)}")
    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 4:
            raise SampleFormatError(f"{source}: line {line}: expected 4 fields, got {len(row)}")
        l, a, delta, x = (cell.strip() for cell in row)
        if not l:
            raise SampleFormatError(f"{source}: line {line}: empty covariate label")
        try:
            records.append(ObservedRecord(l, _int(a, "a", line), _int(delta, "delta", line), _int(x, "x", line)))
        except SampleFormatError as exc:
            raise SampleFormatError(f"{source}: {exc}") from None
        except ValueError as exc:
            raise SampleFormatError(f"{source}: line {line}: {exc}") from None
    if not records:
        raise SampleFormatError(f"{source}: no data rows")
    return records


def read_sample(path: str | Path) -> list[ObservedRecord]:
    path = Path(path)
    return parse_sample(path.read_text(), source=str(path))


def format_sample(records: Iterable[ObservedRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow((r.l, r.a, r.delta, r.x))
    return buf.getvalue()


def write_sample(records: Iterable[ObservedRecord], path: str | Path) -> None:
    Path(path).write_text(format_sample(records))
