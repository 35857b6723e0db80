"""CSV and JSON file formats.

All CSVs are UTF-8, comma separated, with a mandatory header row and '.'
decimals. Floats are written with ``repr`` (shortest string that round-trips
to the same double), so output is byte-stable across runs and platforms.
See docs/formats.md for the full column reference.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import MartingaleTrace, TrialArrays
from .simulators import GamblerTrajectory, IblSession
from .tangent import StepDistribution

SCHEMA = "seqmart/1"
TRIAL_COLUMNS = ("t", "b", "r", "r_mean", "r_var")
STEP_COLUMNS = ("t", "x", "values", "probs")
SESSION_COLUMNS = ("t", "block", "stimulus", "choice", "reward", "rho", "h")
GAMBLER_COLUMNS = ("t", "stake", "outcome", "profit", "cumulative")
TRACE_COLUMNS = ("t", "x", "s", "v", "z", "s_ref95")
#: one-sided 5% critical value used for the reference curve s = 1.645 * sqrt(v)
REFERENCE_Z = 1.645


class CsvFormatError(ValueError):
    """Malformed input file; ``line`` is the 1-based physical line (header is line 1)."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}" if path is not None else "<input>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        return ""
    return repr(v)


def _write_rows(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _read_rows(path):
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError("empty file (a header row is required)", path, 1) from None
    header = [h.strip() for h in header]
    rows = []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        rows.append((reader.line_num, row))
    return header, rows


def _parse_float(cell: str, name: str, path, line: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise CsvFormatError(f"column {name!r}: not a number ({cell!r})", path, line) from None
    if not math.isfinite(v):
        raise CsvFormatError(f"column {name!r}: not finite ({cell!r})", path, line)
    return v


def _check_t(cell: str, expected: int, path, line: int):
    try:
        t = int(cell)
    except ValueError:
        raise CsvFormatError(f"column 't': not an integer ({cell!r})", path, line) from None
    if t != expected:
        raise CsvFormatError(f"column 't': expected {expected}, got {t} (t must run 1, 2, 3, ... without gaps)", path, line)


def sniff_kind(path) -> str:
    """'trials' or 'steps', from the header row."""
    header, _ = _read_rows(path)
    if tuple(header[:len(TRIAL_COLUMNS)]) == TRIAL_COLUMNS:
        return "trials"
    if tuple(header[:len(STEP_COLUMNS)]) == STEP_COLUMNS:
        return "steps"
    raise CsvFormatError(f"unrecognised header {header!r}; expected {','.join(TRIAL_COLUMNS)} or {','.join(STEP_COLUMNS)}", path, 1)


def read_trials_csv(path) -> TrialArrays:
    header, rows = _read_rows(path)
    if tuple(header) != TRIAL_COLUMNS:
        raise CsvFormatError(f"header must be {','.join(TRIAL_COLUMNS)}, got {','.join(header)}", path, 1)
    cols = {k: [] for k in TRIAL_COLUMNS[1:]}
    for expected, (line, row) in enumerate(rows, start=1):
        if len(row) != len(TRIAL_COLUMNS):
            raise CsvFormatError(f"expected {len(TRIAL_COLUMNS)} fields, got {len(row)}", path, line)
        _check_t(row[0], expected, path, line)
        vals = [_parse_float(c, k, path, line) for k, c in zip(TRIAL_COLUMNS[1:], row[1:])]
        if vals[3] < 0:
            raise CsvFormatError(f"column 'r_var': must be >= 0, got {row[4]!r}", path, line)
        for k, v in zip(TRIAL_COLUMNS[1:], vals):
            cols[k].append(v)
    return TrialArrays(**{k: np.array(v, dtype=float) for k, v in cols.items()})


def write_trials_csv(path, trials: TrialArrays) -> None:
    _write_rows(path, TRIAL_COLUMNS,
                ((t, b, r, m, v) for t, (b, r, m, v) in enumerate(zip(trials.b, trials.r, trials.r_mean, trials.r_var), 1)))


def read_steps_csv(path) -> tuple[np.ndarray, list[StepDistribution]]:
    """Observed increments and per-step laws; ``values``/``probs`` cells are ';'-separated."""
    header, rows = _read_rows(path)
    if tuple(header) != STEP_COLUMNS:
        raise CsvFormatError(f"header must be {','.join(STEP_COLUMNS)}, got {','.join(header)}", path, 1)
    xs, steps = [], []
    for expected, (line, row) in enumerate(rows, start=1):
        if len(row) != len(STEP_COLUMNS):
            raise CsvFormatError(f"expected {len(STEP_COLUMNS)} fields, got {len(row)}", path, line)
        _check_t(row[0], expected, path, line)
        xs.append(_parse_float(row[1], "x", path, line))
        vals = [_parse_float(c, "values", path, line) for c in row[2].split(";")]
        probs = [_parse_float(c, "probs", path, line) for c in row[3].split(";")]
        try:
            steps.append(StepDistribution(vals, probs))
        except ValueError as exc:
            raise CsvFormatError(str(exc), path, line) from None
    return np.array(xs, dtype=float), steps


def write_steps_csv(path, x, steps: list[StepDistribution]) -> None:
    _write_rows(path, STEP_COLUMNS, (
        (t, xi, ";".join(fmt(v) for v in st.values), ";".join(fmt(p) for p in st.probs))
        for t, (xi, st) in enumerate(zip(x, steps), 1)
    ))


def write_session_csv(path, session: IblSession) -> None:
    _write_rows(path, SESSION_COLUMNS, (
        (t, int(bl), int(a), int(c), int(r), rho, h)
        for t, (bl, a, c, r, rho, h) in enumerate(
            zip(session.block, session.stimulus, session.choice, session.reward, session.rho, session.habit), 1)
    ))


def write_gambler_csv(path, traj: GamblerTrajectory) -> None:
    _write_rows(path, GAMBLER_COLUMNS, (
        (t, st, "win" if w else "lose", pr, cu)
        for t, (st, w, pr, cu) in enumerate(zip(traj.stakes, traj.outcomes, traj.profits, traj.cumulative), 1)
    ))


def write_trace_csv(path, trace: MartingaleTrace) -> None:
    """Plot data: X, S, V, running Z (blank where V = 0) and the 1.645*sqrt(V) reference curve."""
    z = trace.z_path()
    ref = REFERENCE_Z * np.sqrt(trace.v)
    _write_rows(path, TRACE_COLUMNS, (
        (t, x, s, v, zz, rf) for t, (x, s, v, zz, rf) in enumerate(zip(trace.x, trace.s, trace.v, z, ref), 1)
    ))


def to_jsonable(obj):
    """Plain JSON types from dataclasses, enums and numpy values; non-finite floats become null."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(to_jsonable(report), indent=2, allow_nan=False) + "\n"
