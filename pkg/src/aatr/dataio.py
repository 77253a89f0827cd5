"""Reading irregularly sampled daily measurements and putting them on a grid.

Long curve files have a ``unit,time,value`` header; each unit (typically a
date) is one curve. Times are clock times, either ``HH:MM[:SS]``, a full
ISO timestamp, or a number of hours, and the day ``[00:00, 24:00)`` is mapped
linearly onto the grid interval. Response files have a ``unit,response``
header and may list several values per unit, which are then aggregated.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, time as dtime
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import FunctionalDataset, Grid

log = logging.getLogger(__name__)

TRANSFORMS = ("identity", "mean", "log")
DAY_HOURS = 24.0


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class RawSeries:
    unit_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.shape != v.shape or t.ndim != 1:
            raise DataError(f"unit {self.unit_id}: times and values differ in length")
        if t.size < 4:
            raise DataError(f"unit {self.unit_id}: need at least 4 points, got {t.size}")
        if np.any(np.diff(t) <= 0):
            raise DataError(f"unit {self.unit_id}: times must be strictly increasing")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(t)):
            raise DataError(f"unit {self.unit_id}: non-finite values")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DatasetSpec:
    curve_file: Path
    response_file: Path | None = None
    p: int = 200
    a: float = -1.0
    b: float = 1.0
    min_points_per_unit: int = 4
    response_transform: str = "identity"
    min_variance: float | None = None

    def __post_init__(self):
        if self.p < 10:
            raise ValueError(f"grid size must be at least 10, got {self.p}")
        if self.min_points_per_unit < 4:
            raise ValueError("cubic interpolation needs at least 4 points per unit")
        if self.response_transform not in TRANSFORMS:
            raise ValueError(
                f"response_transform must be one of {TRANSFORMS}, got {self.response_transform!r}"
            )

    @property
    def grid(self) -> Grid:
        return Grid(self.p, self.a, self.b)


@dataclass
class LoadReport:
    """Which units were kept and which were dropped, with the reason."""

    retained: list[str] = field(default_factory=list)
    excluded: dict[str, str] = field(default_factory=dict)

    @property
    def n_in(self) -> int:
        return len(self.retained) + len(self.excluded)


def parse_clock(text: str) -> float:
    """Hours since midnight for ``HH:MM[:SS]``, an ISO timestamp or a plain number."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        t = dtime.fromisoformat(text)
    except ValueError:
        t = datetime.fromisoformat(text).time()
    return t.hour + t.minute / 60 + (t.second + t.microsecond * 1e-6) / 3600


def clock_to_domain(hours, a: float, b: float):
    return a + (b - a) * np.asarray(hours, dtype=np.float64) / DAY_HOURS


def _read_rows(path: Path, required: tuple[str, ...]):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}; header is {header}")
        reader.fieldnames = header
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def load_long_csv(path, spec: DatasetSpec | None = None) -> tuple[list[RawSeries], LoadReport]:
    """Group a ``unit,time,value`` file into per-unit series mapped onto the grid interval.

    Units with too few points (or, if ``spec.min_variance`` is set, too little
    variance) are excluded and listed in the report. Units come back in
    lexicographic order of their id.
    """
    spec = spec or DatasetSpec(Path(path))
    groups: dict[str, list[tuple[float, float]]] = defaultdict(list)
    bad = []
    for lineno, row in _read_rows(path, ("unit", "time", "value")):
        try:
            hours = parse_clock(row["time"])
            value = float(row["value"])
        except (TypeError, ValueError):
            bad.append(lineno)
            continue
        if not (0.0 <= hours < DAY_HOURS) or not math.isfinite(value):
            bad.append(lineno)
            continue
        groups[row["unit"].strip()].append((hours, value))
    if bad:
        shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
        raise DataError(f"{path}: {len(bad)} unparseable row(s) at line(s) {shown}")

    report = LoadReport()
    series = []
    for unit in sorted(groups):
        pts = sorted(groups[unit])
        hours = np.array([h for h, _ in pts])
        values = np.array([v for _, v in pts])
        if np.any(np.diff(hours) == 0):
            raise DataError(f"{path}: duplicate timestamps in unit {unit!r}")
        if hours.size < spec.min_points_per_unit:
            report.excluded[unit] = f"{hours.size} points < {spec.min_points_per_unit}"
            continue
        if spec.min_variance is not None and np.var(values) < spec.min_variance:
            report.excluded[unit] = f"variance {np.var(values):.3g} < {spec.min_variance}"
            continue
        series.append(RawSeries(unit, clock_to_domain(hours, spec.a, spec.b), values))
        report.retained.append(unit)
    for unit, reason in report.excluded.items():
        log.warning("excluded unit %s: %s", unit, reason)
    if not series:
        raise DataError(f"{path}: no usable units")
    return series, report


def load_responses(path) -> dict[str, list[float]]:
    out: dict[str, list[float]] = defaultdict(list)
    bad = []
    for lineno, row in _read_rows(path, ("unit", "response")):
        try:
            value = float(row["response"])
        except (TypeError, ValueError):
            bad.append(lineno)
            continue
        out[row["unit"].strip()].append(value)
    if bad:
        raise DataError(f"{path}: unparseable response at line(s) {', '.join(map(str, bad[:10]))}")
    return dict(out)


MIN_SPAN = 0.6


def resample_to_grid(series: RawSeries, grid: Grid) -> np.ndarray:
    """Natural cubic spline through the observations, held constant past the ends."""
    t, v = series.times, series.values
    if t.size < 4:
        raise DataError(f"unit {series.unit_id}: need at least 4 points")
    if t[-1] - t[0] < MIN_SPAN * grid.length:
        raise DataError(
            f"unit {series.unit_id}: observations span {t[-1] - t[0]:.3g}, "
            f"less than {MIN_SPAN:.0%} of the domain"
        )
    spline = CubicSpline(t, v, bc_type="natural")
    pts = grid.points
    return spline(np.clip(pts, t[0], t[-1]))


def aggregate_response(values, transform: str) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("no response values")
    if transform == "identity":
        if values.size != 1:
            raise DataError(
                f"identity transform needs one response per unit, got {values.size}; use 'mean'"
            )
        return float(values[0])
    mean = float(values.mean())
    if transform == "mean":
        return mean
    if transform == "log":
        if mean <= 0:
            raise DataError(f"log transform needs positive responses, got {mean}")
        return math.log(mean)
    raise ValueError(f"unknown transform {transform!r}")


def build_dataset(
    series: list[RawSeries], responses: dict, grid: Grid, transform: str = "identity"
) -> FunctionalDataset:
    """Stack resampled curves (in the given order) with their aggregated responses."""
    units = [s.unit_id for s in series]
    missing = [u for u in units if u not in responses]
    if missing:
        raise DataError(f"no response for unit(s) {', '.join(missing[:10])}")
    extra = sorted(set(responses) - set(units))
    if extra:
        raise DataError(f"responses given for unknown unit(s) {', '.join(extra[:10])}")
    x = np.vstack([resample_to_grid(s, grid) for s in series])
    y = []
    for u in units:
        vals = responses[u]
        vals = [vals] if np.isscalar(vals) else vals
        y.append(aggregate_response(vals, transform))
    return FunctionalDataset(grid, x, np.array(y))


def load_dataset(spec: DatasetSpec) -> tuple[FunctionalDataset, list[str], LoadReport]:
    series, report = load_long_csv(spec.curve_file, spec)
    if spec.response_file is None:
        raise DataError("a response file is required for long-format curves")
    responses = load_responses(spec.response_file)
    # responses of excluded units are dropped with them
    responses = {u: v for u, v in responses.items() if u not in report.excluded}
    ds = build_dataset(series, responses, spec.grid, spec.response_transform)
    return ds, [s.unit_id for s in series], report


# ---------------------------------------------------------------------------
# Wide format: y,x_1,...,x_p
# ---------------------------------------------------------------------------


def fmt(v: float) -> str:
    return repr(float(v))


def write_wide_csv(path, x, y=None, units=None) -> None:
    x = np.asarray(x, dtype=np.float64)
    p = x.shape[1]
    header = (["unit"] if units is not None else []) + (["y"] if y is not None else [])
    header += [f"x_{j + 1}" for j in range(p)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(x.shape[0]):
            row = [units[i]] if units is not None else []
            row += [fmt(y[i])] if y is not None else []
            w.writerow(row + [fmt(v) for v in x[i]])


def read_wide_csv(path, p: int | None = None):
    """Read ``[unit,][y,]x_1..x_p``; returns ``(x, y or None, units or None)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
        if not xcols:
            raise DataError(f"{path}: no x_1..x_p columns in header")
        if [header[i] for i in xcols] != [f"x_{j + 1}" for j in range(len(xcols))]:
            raise DataError(f"{path}: curve columns must be x_1..x_p in order")
        if p is not None and len(xcols) != p:
            raise DataError(f"{path}: data has p={len(xcols)} grid values, model expects p={p}")
        ycol = header.index("y") if "y" in header else None
        ucol = header.index("unit") if "unit" in header else None
        xs, ys, units = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                xs.append([float(row[i]) for i in xcols])
                if ycol is not None:
                    ys.append(float(row[ycol]))
            except (ValueError, IndexError):
                raise DataError(f"{path}: unparseable row at line {lineno}") from None
            units.append(row[ucol] if ucol is not None else str(len(units)))
    x = np.array(xs, dtype=np.float64).reshape(len(xs), len(xcols))
    y = np.array(ys, dtype=np.float64) if ycol is not None else None
    return x, y, units
