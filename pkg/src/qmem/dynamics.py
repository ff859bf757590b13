"""Time integration, stationary-regime span and power spectra of V(t)."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from qmem import _kernels
from qmem.errors import DomainError, InsufficientDataError, NumericalError, StiffnessError
from qmem.model import (DEFAULT_INITIAL_STATE, CircuitParams, DeviceParams, State, check,
                        param_vector)
from qmem.overlap import DEFAULT_NODES, OverlapTable, gauss_hermite

logger = logging.getLogger(__name__)

DEFAULT_T_END = 600.0
DEFAULT_SETTLE_FRACTION = 0.6
DEFAULT_SAMPLE_DT = 0.01
SPAN_THRESHOLD = 1e-3
PURITY_WARN = 1.0 + 1e-6
MIN_SPECTRUM_SAMPLES = 64

_EMPTY_GRID = np.empty(0)
_EMPTY_DATA = np.empty((3, 3, 0))


class PurityWarning(RuntimeWarning):
    """The Bloch vector left the unit ball by more than the tolerance."""


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled solution.

    ``y`` has shape ``(len(t), 4)`` with columns ``X, Y, Z, V``.
    """

    t: np.ndarray
    y: np.ndarray
    omega: float = 7.0
    steps: int = 0
    rejected: int = 0
    max_purity: float = float("nan")

    def __post_init__(self):
        if self.t.ndim != 1 or self.y.shape != (self.t.size, 4):
            raise DomainError("trajectory arrays have mismatched shapes")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise DomainError("trajectory times must be strictly increasing")

    @classmethod
    def from_voltage(cls, t, v, omega: float = 7.0) -> Trajectory:
        """Wrap a bare voltage series (Bloch columns set to NaN)."""
        t = np.asarray(t, dtype=float)
        y = np.full((t.size, 4), np.nan)
        y[:, 3] = v
        return cls(t, y, omega)

    @property
    def X(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def Y(self) -> np.ndarray:
        return self.y[:, 1]

    @property
    def Z(self) -> np.ndarray:
        return self.y[:, 2]

    @property
    def V(self) -> np.ndarray:
        return self.y[:, 3]

    @property
    def final_state(self) -> State:
        return State(*map(float, self.y[-1]))

    def tail(self, settle_fraction: float) -> Trajectory:
        if not 0.0 <= settle_fraction < 1.0:
            raise DomainError(f"settle_fraction must lie in [0, 1), got {settle_fraction}")
        start = self.t[0] + settle_fraction * (self.t[-1] - self.t[0])
        keep = self.t >= start - 1e-12
        return Trajectory(self.t[keep], self.y[keep], self.omega, self.steps,
                          self.rejected, self.max_purity)


def integrate(s0: State, dev: DeviceParams, circ: CircuitParams,
              t_end: float = DEFAULT_T_END, rel_tol: float = 1e-8, abs_tol: float = 1e-10,
              sample_dt: float = DEFAULT_SAMPLE_DT, table: OverlapTable | None = None,
              n_nodes: int = DEFAULT_NODES, max_steps: int = 50_000_000) -> Trajectory:
    """Integrate the model with an adaptive Dormand-Prince 5(4) pair.

    Overlaps come from direct quadrature unless a ``table`` built for the
    same geometry is given; the table is much faster and is what the sweeps
    use.
    """
    check(dev, circ)
    if not (t_end > 0 and math.isfinite(t_end)):
        raise DomainError(f"t_end must be positive, got {t_end}")
    for name, tol in (("rel_tol", rel_tol), ("abs_tol", abs_tol)):
        if not 0 < tol <= 1e-2:
            raise DomainError(f"{name} must lie in (0, 1e-2], got {tol}")
    if not 0 < sample_dt <= t_end:
        raise DomainError(f"sample_dt must lie in (0, t_end], got {sample_dt}")
    y0 = np.array(tuple(s0), dtype=float)
    if y0.shape != (4,) or not np.all(np.isfinite(y0)):
        raise DomainError(f"initial state must be 4 finite numbers, got {s0}")
    if table is not None:
        if table.geom != dev.geom:
            raise DomainError("overlap table was built for a different geometry")
        grid, data = table.x, table.data
    else:
        grid, data = _EMPTY_GRID, _EMPTY_DATA
    u, w = gauss_hermite(n_nodes)

    ts, ys, n_done, status, steps, rejected, max_purity, t_reached = _kernels.dopri5(
        y0, float(t_end), float(rel_tol), float(abs_tol), float(sample_dt),
        param_vector(dev, circ), float(dev.geom.lam), grid, data, u, w, int(max_steps))

    if status == _kernels.STATUS_STIFF:
        raise StiffnessError(f"step size underflow at t={t_reached:.6g}", t_reached)
    if status == _kernels.STATUS_NAN:
        raise NumericalError(f"state became non-finite near t={t_reached:.6g}")
    if status == _kernels.STATUS_MAX_STEPS:
        raise NumericalError(f"step budget of {max_steps} exhausted at t={t_reached:.6g}")
    if n_done != ts.size:
        raise NumericalError(f"dense output incomplete: {n_done} of {ts.size} samples")
    if max_purity > PURITY_WARN:
        warnings.warn(f"Bloch purity reached {max_purity:.9f} > 1 + 1e-6",
                      PurityWarning, stacklevel=2)
    logger.debug("integrated to t=%g in %d steps (%d rejected)", t_end, steps, rejected)
    return Trajectory(ts, ys, dev.Omega, int(steps), int(rejected), float(max_purity))


@dataclass(frozen=True)
class Span:
    V_min: float
    V_max: float
    span: float
    oscillating: bool


def steady_span(traj: Trajectory, settle_fraction: float = DEFAULT_SETTLE_FRACTION,
                span_threshold: float = SPAN_THRESHOLD, min_periods: float = 20.0) -> Span:
    """Range of V after discarding the first ``settle_fraction`` of the run."""
    if not 0.0 < settle_fraction < 1.0:
        raise DomainError(f"settle_fraction must lie in (0, 1), got {settle_fraction}")
    window = traj.tail(settle_fraction)
    needed = min_periods * 2.0 * math.pi / traj.omega
    if window.t.size < 2 or window.t[-1] - window.t[0] < needed * (1 - 1e-9):
        raise InsufficientDataError(
            f"retained window {window.t[-1] - window.t[0]:.3g} shorter than "
            f"{min_periods:g} periods ({needed:.3g})")
    v = window.V
    lo, hi = float(v.min()), float(v.max())
    return Span(lo, hi, hi - lo, (hi - lo) > span_threshold)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided power spectral density of V over angular frequency."""

    omega: np.ndarray
    power: np.ndarray
    peak_omega: float
    peak_power: float
    noise_floor: float = field(default=float("nan"))

    def power_near(self, target: float, half_width: int = 3) -> float:
        """Largest power within ``half_width`` bins of ``target``."""
        k = int(round(target / (self.omega[1] - self.omega[0])))
        lo, hi = max(k - half_width, 0), min(k + half_width + 1, self.omega.size)
        if lo >= hi:
            return 0.0
        return float(self.power[lo:hi].max())

    def harmonic_db(self, n: int) -> float:
        """Height of the ``n``-th harmonic above the noise floor, in dB."""
        return 10.0 * math.log10(self.power_near(n * self.peak_omega) / self.noise_floor)


def periodogram(v: np.ndarray, dt: float) -> Spectrum:
    """Hann-windowed periodogram with a parabolic log-power peak refinement."""
    v = np.asarray(v, dtype=float)
    if v.size < MIN_SPECTRUM_SAMPLES:
        raise InsufficientDataError(
            f"need at least {MIN_SPECTRUM_SAMPLES} samples, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise NumericalError("voltage series contains non-finite samples")
    window = np.hanning(v.size)
    spec = np.fft.rfft((v - v.mean()) * window)
    power = (np.abs(spec) ** 2) * dt / (2.0 * math.pi * np.sum(window ** 2))
    power[1:] *= 2.0
    if v.size % 2 == 0:
        power[-1] /= 2.0
    omega = 2.0 * math.pi * np.fft.rfftfreq(v.size, dt)
    positive = power[1:]
    floor = float(np.median(positive[positive > 0])) if np.any(positive > 0) else 0.0
    if not np.any(positive > 0):
        return Spectrum(omega, power, 0.0, 0.0, floor)

    k = 1 + int(np.argmax(positive))
    peak_omega, peak_power = float(omega[k]), float(power[k])
    if 1 <= k - 1 and k + 1 < power.size and min(power[k - 1], power[k + 1]) > 0:
        a, b, c = np.log(power[k - 1:k + 2])
        denom = a - 2.0 * b + c
        if denom < 0:
            delta = 0.5 * (a - c) / denom
            peak_omega = float((k + delta) * (omega[1] - omega[0]))
            peak_power = float(math.exp(b - 0.25 * (a - c) * delta))
    return Spectrum(omega, power, peak_omega, peak_power, floor)


def power_spectrum(traj: Trajectory, settle_fraction: float = 0.0) -> Spectrum:
    """Spectrum of V(t) over the post-transient part of a uniform trajectory."""
    window = traj.tail(settle_fraction) if settle_fraction > 0 else traj
    dts = np.diff(window.t)
    if dts.size == 0:
        raise InsufficientDataError("trajectory has a single sample")
    dt = float(dts.mean())
    if np.max(np.abs(dts - dt)) > 1e-9 * max(1.0, dt):
        raise DomainError("power_spectrum needs uniformly sampled data")
    return periodogram(window.V, dt)
