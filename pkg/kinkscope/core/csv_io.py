"""
Copyright 2026 [kinkscope contributors]

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""


from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from kinkscope.core.trace_buffer import ProbabilityTrace
from kinkscope.utils.errors import InvariantViolation, TraceFormatError

log = logging.getLogger(__name__)

TRACE_HEADER = ["t", "n", "p"]
METRICS_HEADER = ["key", "value"]
COHERENCE_HEADER = ["t", "coherence", "expected"]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


# public API


def trace_to_text(trace: ProbabilityTrace) -> str:
    """One row per (time, link), times in order, links 0..M-1 within a time."""
    buf, writer = _writer()
    writer.writerow(TRACE_HEADER)
    for t, p in zip(trace.times, trace.distributions):
        ts = format_float(t)
        writer.writerows([ts, n, format_float(v)] for n, v in enumerate(p))
    return buf.getvalue()


def trace_from_text(text: str) -> ProbabilityTrace:
    times: List[float] = []
    blocks: List[List[float]] = []
    rows = _rows(text, TRACE_HEADER)
    line = 1
    for line, row in rows:
        t, p = _floats(row[0], row[2], line=line)
        try:
            n = int(row[1])
        except ValueError:
            raise TraceFormatError(f"unparseable link index {row[1]!r}", line=line) from None

        if n == 0:
            if blocks and len(blocks[-1]) != len(blocks[0]):
                raise TraceFormatError(f"time {times[-1]!r} has {len(blocks[-1])} links, expected {len(blocks[0])}", line=line)
            times.append(t)
            blocks.append([])
        elif not blocks or t != times[-1] or n != len(blocks[-1]):
            raise TraceFormatError(f"link {n} out of sequence", line=line)
        blocks[-1].append(p)

    if not blocks:
        raise TraceFormatError("trace holds no rows", line=1)
    if len(blocks[-1]) != len(blocks[0]):
        raise TraceFormatError(f"last time block has {len(blocks[-1])} links, expected {len(blocks[0])}", line=line)
    try:
        return ProbabilityTrace(times=np.array(times), distributions=np.array(blocks))
    except (InvariantViolation, ValueError) as e:
        raise TraceFormatError(f"not a valid probability trace: {e}", line=None) from e


def metrics_to_text(metrics: Mapping[str, float]) -> str:
    buf, writer = _writer()
    writer.writerow(METRICS_HEADER)
    writer.writerows([k, format_float(v)] for k, v in metrics.items())
    return buf.getvalue()


def metrics_from_text(text: str) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for line, row in _rows(text, METRICS_HEADER):
        try:
            out[row[0]] = float(row[1])
        except ValueError:
            raise TraceFormatError(f"unparseable value {row[1]!r}", line=line) from None
    return out


def coherence_to_text(times: Sequence[float], coherence: Sequence[float], expected: Sequence[float]) -> str:
    buf, writer = _writer()
    writer.writerow(COHERENCE_HEADER)
    writer.writerows([format_float(t), format_float(c), format_float(e)] for t, c, e in zip(times, coherence, expected))
    return buf.getvalue()


def coherence_from_text(text: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(times, measured coherence, expected coherence)."""
    cols: List[Tuple[float, float, float]] = []
    for line, row in _rows(text, COHERENCE_HEADER):
        t, c, e = _floats(row[0], row[1], row[2], line=line)
        if cols and t <= cols[-1][0]:
            raise TraceFormatError(f"time {t!r} not increasing", line=line)
        cols.append((t, c, e))
    if not cols:
        raise TraceFormatError("coherence curve holds no rows", line=1)
    t, c, e = (np.array(col) for col in zip(*cols))
    return t, c, e


def write_text_atomic(path: str, text: str) -> None:
    """Write through a temporary file in the same directory, then rename over path."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".kinkscope-", suffix=".tmp", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    log.debug("wrote %s (%d bytes)", path, len(text))


def read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return f.read()


def write_trace(path: str, trace: ProbabilityTrace) -> None:
    write_text_atomic(path, trace_to_text(trace))


def read_trace(path: str) -> ProbabilityTrace:
    try:
        return trace_from_text(read_text(path))
    except TraceFormatError as e:
        raise e.with_context(path=path)


def write_metrics(path: str, metrics: Mapping[str, float]) -> None:
    write_text_atomic(path, metrics_to_text(metrics))


def read_metrics(path: str) -> Dict[str, float]:
    try:
        return metrics_from_text(read_text(path))
    except TraceFormatError as e:
        raise e.with_context(path=path)


def write_coherence(path: str, times: Sequence[float], coherence: Sequence[float], expected: Sequence[float]) -> None:
    write_text_atomic(path, coherence_to_text(times, coherence, expected))


def read_coherence(path: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return coherence_from_text(read_text(path))
    except TraceFormatError as e:
        raise e.with_context(path=path)


# internal usage


def _writer():
    buf = io.StringIO()
    return buf, csv.writer(buf, lineterminator="\n")


def _rows(text: str, header: List[str]) -> Iterator[Tuple[int, List[str]]]:
    """(line number, row) after the header; blank lines are skipped."""
    reader = csv.reader(io.StringIO(text, newline=""))
    first = next(reader, None)
    if first is None or [c.strip() for c in first] != header:
        raise TraceFormatError(f"expected header {','.join(header)!r}", line=1)
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise TraceFormatError(f"expected {len(header)} columns, found {len(row)}", line=reader.line_num)
        yield reader.line_num, row


def _floats(*fields: str, line: int) -> Tuple[float, ...]:
    try:
        values = tuple(float(f) for f in fields)
    except ValueError:
        raise TraceFormatError(f"unparseable value in {','.join(fields)!r}", line=line) from None
    if not all(math.isfinite(v) for v in values):
        raise TraceFormatError(f"non-finite value in {','.join(fields)!r}", line=line)
    return values
