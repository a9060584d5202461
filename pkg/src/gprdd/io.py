"""CSV ingest, shift tables, key=value config files and atomic writes."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import EmptySide, ParseError
from .model import Assumption, RddDataset

FIT_METHODS = ("gpr", "gpr-cut", "gpr-mle", "llr")


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything a ``fit`` needs besides the data file.

    Config files use one ``key = value`` per line with ``#`` comments; keys
    are the field names below (dashes or underscores). ``outcomes`` is a
    comma-separated list; empty means every column other than the running
    and cohort columns. ``shifts`` maps cohort labels to running-variable
    offsets and is usually loaded from a ``cohort,offset`` table.
    """

    boundary: float = 0.0
    method: str = "gpr"
    assumption: str = "same-cov"
    mean_order: int = 2
    prior_beta_sd: float = 100.0
    prior_hc_scale: float = 5.0
    chains: int = 4
    iters: int = 2000
    warmup: int = 1000
    seed: int = 0
    group_by_running: bool = False
    running_column: str = "running"
    cohort_column: str = "cohort"
    outcomes: tuple = ()
    shifts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.boundary):
            raise ValueError("boundary must be finite")
        if self.method not in FIT_METHODS:
            raise ValueError(f"method must be one of {', '.join(FIT_METHODS)}, got {self.method!r}")
        Assumption(self.assumption)
        if self.mean_order < 0:
            raise ValueError("mean order must be >= 0")


_CONFIG_TYPES = {f.name: f.type for f in fields(AnalysisConfig)}


def _coerce(key: str, raw: str, kind: str):
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "tuple":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines to a dict of raw strings, keys normalized to
    underscores. Unknown keys are kept; callers decide what they accept."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}: line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ParseError(f"{source}: line {lineno}: empty key")
        out[key] = value.strip()
    return out


def config_from_mapping(values: dict, base: AnalysisConfig = AnalysisConfig()) -> AnalysisConfig:
    """Apply string (or already typed) values for known ``AnalysisConfig`` keys."""
    updates = {}
    for key, raw in values.items():
        if key not in _CONFIG_TYPES or key == "shifts":
            continue
        kind = _CONFIG_TYPES[key]
        updates[key] = _coerce(key, raw, kind) if isinstance(raw, str) else raw
    return replace(base, **updates)


def read_shift_table(path) -> dict:
    """``cohort,offset`` CSV to ``{cohort: offset}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["cohort", "offset"]:
            raise ParseError(f"{path}: row 1: header must be 'cohort,offset'")
        shifts = {}
        for rownum, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}: row {rownum}: expected 2 fields, got {len(row)}")
            try:
                shifts[row[0].strip()] = float(row[1])
            except ValueError:
                raise ParseError(f"{path}: row {rownum}, column 'offset': not a number: {row[1]!r}") from None
    return shifts


def ingest_csv(path, config: AnalysisConfig = AnalysisConfig()) -> dict:
    """One ``RddDataset`` per outcome column, keyed by column name.

    Rows are shifted by their cohort's offset, then optionally averaged per
    distinct (shifted) running value. Empty outcome cells are missing values
    and drop that row for that outcome only.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ParseError(f"{path}: row 1: missing header")
        header = [h.strip() for h in header]
        if config.running_column not in header:
            raise ParseError(f"{path}: row 1: no running-variable column {config.running_column!r}")
        cohort_idx = header.index(config.cohort_column) if config.cohort_column in header else None
        run_idx = header.index(config.running_column)
        skip = {run_idx} | ({cohort_idx} if cohort_idx is not None else set())
        if config.outcomes:
            missing = [o for o in config.outcomes if o not in header]
            if missing:
                raise ParseError(f"{path}: row 1: outcome column(s) {missing} not found")
            outcome_names = list(config.outcomes)
        else:
            outcome_names = [h for i, h in enumerate(header) if i not in skip]
        if not outcome_names:
            raise ParseError(f"{path}: row 1: no outcome columns")
        out_idx = [header.index(o) for o in outcome_names]

        xs = {o: [] for o in outcome_names}
        ys = {o: [] for o in outcome_names}
        for rownum, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {rownum}: expected {len(header)} fields, got {len(row)}")
            x = _number(row[run_idx], path, rownum, config.running_column)
            if x is None:
                raise ParseError(f"{path}: row {rownum}, column {config.running_column!r}: empty running value")
            if cohort_idx is not None:
                label = row[cohort_idx].strip()
                if label not in config.shifts and config.shifts:
                    raise ParseError(f"{path}: row {rownum}, column {config.cohort_column!r}: "
                                     f"cohort {label!r} has no shift")
                x += config.shifts.get(label, 0.0)
            for o, j in zip(outcome_names, out_idx):
                y = _number(row[j], path, rownum, o)
                if y is not None:
                    xs[o].append(x)
                    ys[o].append(y)

    result = {}
    for o in outcome_names:
        x, y = np.array(xs[o]), np.array(ys[o])
        if config.group_by_running:
            x, y = group_by_value(x, y)
        data = RddDataset(x, y, config.boundary)
        for side, mask in (("below", x < config.boundary), ("at or above", x >= config.boundary)):
            if not mask.any():
                raise EmptySide(f"{path}: outcome {o!r} has no rows {side} the boundary {config.boundary:g}")
        result[o] = data
    return result


def _number(cell: str, path, rownum: int, column: str):
    cell = cell.strip()
    if not cell:
        return None
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"{path}: row {rownum}, column {column!r}: not a number: {cell!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: row {rownum}, column {column!r}: non-finite value {cell!r}")
    return v


def group_by_value(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted mean of ``y`` per distinct ``x``, sorted by ``x``."""
    groups = defaultdict(list)
    for xi, yi in zip(np.asarray(x, dtype=float), np.asarray(y, dtype=float)):
        groups[xi].append(yi)
    keys = sorted(groups)
    return np.array(keys), np.array([math.fsum(groups[k]) / len(groups[k]) for k in keys])


def atomic_write(path, data, mode: str = "w"):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        text_opts = {} if "b" in mode else {"newline": "", "encoding": "utf-8"}
        with os.fdopen(fd, mode, **text_opts) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
