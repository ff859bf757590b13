"""Hysteresis sweeps, oscillation-amplitude curves and 2-D parameter scans."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from qmem.dynamics import (DEFAULT_SETTLE_FRACTION, DEFAULT_T_END, SPAN_THRESHOLD,
                           integrate, steady_span)
from qmem.errors import ConfigurationError, DomainError, FitError, QmemError
from qmem.model import DEFAULT_INITIAL_STATE, CircuitParams, DeviceParams, State, validate
from qmem.overlap import OverlapTable, build_overlap_table

logger = logging.getLogger(__name__)

DEFAULT_T_RELAX = 200.0
DEFAULT_STEP = 0.05
FIT_FRACTION = 0.4
MIN_FIT_POINTS = 5
SCAN_AXES = ("V_n", "R_n", "Gamma", "Z_T", "alpha")


def max_workers() -> int:
    """Scan parallelism, capped by the ``QMEM_THREADS`` environment variable."""
    n = os.cpu_count() or 1
    cap = os.environ.get("QMEM_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigurationError(f"QMEM_THREADS must be an integer, got {cap!r}")
    return n


def _map(fn, items, workers: int | None):
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _table_for(dev: DeviceParams, table: OverlapTable | None) -> OverlapTable:
    if table is not None and table.geom == dev.geom:
        return table
    return build_overlap_table(dev.geom)


# ---------------------------------------------------------------- hysteresis

@dataclass(frozen=True)
class SweepEntry:
    direction: str
    V_n: float
    V_low: float
    V_high: float
    oscillating: bool
    settled: bool = True


@dataclass(frozen=True, eq=False)
class SweepResult:
    entries: list[SweepEntry]
    R_n: float

    def branch(self, direction: str) -> list[SweepEntry]:
        return [e for e in self.entries if e.direction == direction]

    def jumps(self, direction: str, threshold: float = 0.2) -> list[float]:
        """Biases at which the settled voltage jumps by more than ``threshold``.

        The reported bias is the first step after the discontinuity.
        """
        seq = self.branch(direction)
        out = []
        for a, b in zip(seq[:-1], seq[1:]):
            mid_a = 0.5 * (a.V_low + a.V_high)
            mid_b = 0.5 * (b.V_low + b.V_high)
            if abs(mid_b - mid_a) > threshold:
                out.append(b.V_n)
        return out


def updown_path(v_start: float, v_turn: float, step: float = DEFAULT_STEP) -> np.ndarray:
    """Monotone ramp ``v_start -> v_turn -> v_start`` with spacing ``step``."""
    n = int(round(abs(v_turn - v_start) / step))
    if n < 1:
        raise ConfigurationError("ramp needs at least one step")
    up = np.linspace(v_start, v_turn, n + 1)
    return np.concatenate([up, up[-2::-1]])


def _directions(path: np.ndarray) -> list[str]:
    dirs = ["up" if path[1] >= path[0] else "down"]
    for prev, cur in zip(path[:-1], path[1:]):
        dirs.append("up" if cur > prev else "down" if cur < prev else dirs[-1])
    return dirs


def hysteresis_sweep(dev: DeviceParams, r_n: float, v_n_path, t_relax: float = DEFAULT_T_RELAX,
                     s0: State = DEFAULT_INITIAL_STATE, table: OverlapTable | None = None,
                     settle_fraction: float = DEFAULT_SETTLE_FRACTION,
                     rel_tol: float = 1e-8, abs_tol: float = 1e-10) -> SweepResult:
    """Quasi-static ramp of the bias carrying the state from step to step.

    Each entry records the range of V over the settled part of the step; an
    entry is flagged unsettled when the two halves of that window disagree.
    """
    path = np.asarray(v_n_path, dtype=float)
    if path.ndim != 1 or path.size < 2:
        raise ConfigurationError("sweep path needs at least two biases")
    table = _table_for(dev, table)
    dirs = _directions(path)
    state = s0
    entries = []
    for v_n, d in zip(path, dirs):
        traj = integrate(state, dev, CircuitParams(r_n, float(v_n)), t_end=t_relax,
                         rel_tol=rel_tol, abs_tol=abs_tol, table=table)
        span = steady_span(traj, settle_fraction)
        window = traj.tail(settle_fraction).V
        half = window.size // 2
        a, b = window[:half], window[half:]
        drift = max(abs(a.min() - b.min()), abs(a.max() - b.max()))
        settled = drift <= max(1e-3, 0.1 * span.span)
        if not settled:
            logger.warning("sweep step V_n=%g did not settle (drift %.3g)", v_n, drift)
        entries.append(SweepEntry(d, float(v_n), span.V_min, span.V_max, span.oscillating,
                                  settled))
        state = traj.final_state
    return SweepResult(entries, r_n)


# ------------------------------------------------------------- sqrt-law fits

@dataclass(frozen=True)
class SqrtFit:
    """``span = c * sqrt(p - p0)`` (side ``above``) or ``c * sqrt(p0 - p)``."""

    c: float
    p0: float
    residual: float
    side: str
    n_points: int

    def __call__(self, p):
        arg = np.asarray(p, dtype=float) - self.p0
        if self.side == "below":
            arg = -arg
        return self.c * np.sqrt(np.clip(arg, 0.0, None))


def fit_sqrt_law(points, side: str = "above",
                 span_threshold: float = SPAN_THRESHOLD) -> SqrtFit:
    """Least-squares fit of ``span^2`` as a linear function of the parameter."""
    if side not in ("above", "below"):
        raise DomainError(f"side must be 'above' or 'below', got {side!r}")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = pts[np.isfinite(pts).all(axis=1) & (pts[:, 1] > span_threshold)]
    if len(pts) < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} oscillating points, got {len(pts)}")
    p, y = pts[:, 0], pts[:, 1] ** 2
    slope, intercept = np.polyfit(p, y, 1)
    residual = float(np.sqrt(np.mean((slope * p + intercept - y) ** 2)))
    if slope == 0.0 or abs(slope) * np.ptp(p) <= residual:
        raise FitError("degenerate fit: no trend in span^2 beyond the misfit")
    if (slope > 0) != (side == "above"):
        raise FitError(f"span decreases with the parameter, inconsistent with side={side!r}")
    return SqrtFit(float(math.sqrt(abs(slope))), float(-intercept / slope), residual, side,
                   len(pts))


# ------------------------------------------------------------ amplitude curves

@dataclass(frozen=True, eq=False)
class AmplitudeCurve:
    param: str
    values: np.ndarray
    spans: np.ndarray
    fit: SqrtFit | None = None
    fit_error: str | None = None

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.values, self.spans])


def _set_param(dev: DeviceParams, circ: CircuitParams, name: str, value: float):
    if name == "V_n":
        return dev, CircuitParams(circ.R_n, value)
    if name == "R_n":
        return dev, CircuitParams(value, circ.V_n)
    if name in ("Gamma", "Z_T", "alpha", "Omega"):
        return dev.replace(**{name: value}), circ
    raise DomainError(f"unknown parameter {name!r}")


def _span_cell(dev: DeviceParams, circ: CircuitParams, table: OverlapTable, t_end: float,
               settle_fraction: float, s0: State) -> tuple[float, bool]:
    if any(i.severity == "violation" for i in validate(dev, circ)):
        return math.nan, False
    try:
        traj = integrate(s0, dev, circ, t_end=t_end, table=table)
        sp = steady_span(traj, settle_fraction)
    except QmemError as exc:
        logger.warning("cell %s %s failed: %s", dev, circ, exc)
        return math.nan, False
    return sp.span, sp.oscillating


def amplitude_sweep(dev: DeviceParams, r_n: float, param_name: str, grid, v_n: float = 2.0,
                    t_end: float = DEFAULT_T_END,
                    settle_fraction: float = DEFAULT_SETTLE_FRACTION,
                    fit_fraction: float = FIT_FRACTION, side: str | None = None,
                    s0: State = DEFAULT_INITIAL_STATE, table: OverlapTable | None = None,
                    workers: int | None = None) -> AmplitudeCurve:
    """Oscillation span versus ``V_n`` or ``Z_T``, each point from ``s0``.

    The square-root law is fitted only to oscillating points whose span is
    below ``fit_fraction`` of the largest span on the curve.  ``v_n`` is the
    fixed bias when sweeping ``Z_T``.
    """
    if param_name not in ("V_n", "Z_T"):
        raise DomainError(f"amplitude sweeps vary V_n or Z_T, not {param_name!r}")
    values = np.asarray(grid, dtype=float)
    table = _table_for(dev, table)
    base = CircuitParams(r_n, v_n)

    def cell(value):
        d, c = _set_param(dev, base, param_name, float(value))
        return _span_cell(d, c, table, t_end, settle_fraction, s0)[0]

    spans = np.array(_map(cell, list(values), workers))
    ok = np.isfinite(spans) & (spans > SPAN_THRESHOLD)
    if not np.any(ok):
        return AmplitudeCurve(param_name, values, spans, None, "no oscillating points")
    near = ok & (spans <= fit_fraction * np.nanmax(spans))
    if side is None:
        side = "above" if np.corrcoef(values[ok], spans[ok])[0, 1] >= 0 else "below"
    try:
        fit = fit_sqrt_law(np.column_stack([values[near], spans[near]]), side)
    except FitError as exc:
        return AmplitudeCurve(param_name, values, spans, None, str(exc))
    return AmplitudeCurve(param_name, values, spans, fit)


# ----------------------------------------------------------------- 2-D scans

@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.name not in SCAN_AXES:
            raise ConfigurationError(f"scan axis must be one of {SCAN_AXES}, got {self.name!r}")
        if self.count < 1:
            raise ConfigurationError("axis needs at least one point")
        if self.count > 1 and not self.hi > self.lo:
            raise ConfigurationError(f"axis {self.name}: max must exceed min")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True, eq=False)
class GridMap:
    """Spans on an axis1 x axis2 grid; NaN marks invalid or failed cells."""

    axis1: str
    axis2: str
    grid1: np.ndarray
    grid2: np.ndarray
    spans: np.ndarray
    oscillating: np.ndarray = field(repr=False)

    def boundary(self, along: int = 1) -> np.ndarray:
        """Largest oscillating value of the ``along`` axis for each line of the other.

        NaN where a line has no oscillating cell.
        """
        if along == 1:
            osc, grid = self.oscillating.T, self.grid1
        else:
            osc, grid = self.oscillating, self.grid2
        out = np.full(osc.shape[0], np.nan)
        for k, row in enumerate(osc):
            if row.any():
                out[k] = grid[np.nonzero(row)[0].max()]
        return out


def scan2d(dev: DeviceParams, circ: CircuitParams, axis1: Axis, axis2: Axis,
           t_end: float = DEFAULT_T_END, settle_fraction: float = DEFAULT_SETTLE_FRACTION,
           s0: State = DEFAULT_INITIAL_STATE, table: OverlapTable | None = None,
           workers: int | None = None) -> GridMap:
    """Integrate every grid cell independently and record its span."""
    if axis1.name == axis2.name:
        raise ConfigurationError("scan axes must differ")
    table = _table_for(dev, table)
    g1, g2 = axis1.values, axis2.values
    cells = [(i, j) for i in range(g1.size) for j in range(g2.size)]

    def cell(ij):
        i, j = ij
        d, c = _set_param(dev, circ, axis1.name, float(g1[i]))
        d, c = _set_param(d, c, axis2.name, float(g2[j]))
        return _span_cell(d, c, table, t_end, settle_fraction, s0)

    results = _map(cell, cells, workers)
    spans = np.full((g1.size, g2.size), np.nan)
    osc = np.zeros((g1.size, g2.size), dtype=bool)
    for (i, j), (sp, o) in zip(cells, results):
        spans[i, j] = sp
        osc[i, j] = o
    return GridMap(axis1.name, axis2.name, g1, g2, spans, osc)
