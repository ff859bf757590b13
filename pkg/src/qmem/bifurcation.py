"""Cusp, saddle-node and Andronov-Hopf points of the circuit equilibria.

Folds and cusps follow from the balance function alone: a fold is a root of
``f`` that is also a root of ``D_V f``; the cusp is where two folds merge,
i.e. ``D_V f = D_V^2 f = 0`` at a local maximum of ``D_V f``.  Hopf points
are located by tracking an equilibrium branch in ``V_n`` and bracketing sign
changes of the real part of its complex eigenvalue pair.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from qmem.equilibria import (diag_terms, eigenvalues_and_classify, f_derivatives,
                             find_roots, jacobian_at)
from qmem.errors import ConfigurationError, NumericalError
from qmem.model import CircuitParams, DeviceParams, check

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
V_RANGE = (-10.0, 10.0)
N_V_SCAN = 8192
TANGENCY_TOL = 1e-8


@dataclass(frozen=True)
class CuspPoint:
    V: float
    R_n: float
    V_n: float


@dataclass(frozen=True)
class SaddleNodePoint:
    V: float
    V_n: float
    R_n: float


@dataclass(frozen=True)
class HopfPoint:
    V_n: float
    V_star: float
    omega: float
    R_n: float
    segment: int = 0


def _cusp_condition(v, dev: DeviceParams):
    """``l S'' V - sqrt(2) S'``, proportional to ``D_V^2 f`` for any R_n > 0."""
    s = diag_terms(v, dev, 2)
    out = dev.geom.l * s[2] * v - SQRT2 * s[1]
    return float(out) if np.ndim(out) == 0 else out


def _scan_roots(func, lo: float, hi: float, n: int, args=()) -> list[float]:
    grid = np.linspace(lo, hi, n)
    vals = func(grid, *args)
    roots = []
    for k in range(n - 1):
        if vals[k] == 0.0:
            roots.append(float(grid[k]))
        elif vals[k] * vals[k + 1] < 0.0:
            roots.append(brentq(func, grid[k], grid[k + 1], args=args,
                                xtol=1e-15, rtol=1e-15, maxiter=200))
    return roots


def _df_extrema(dev: DeviceParams, v_range, n_scan) -> list[tuple[float, bool]]:
    """Extrema of ``D_V f`` as ``(V, is_maximum)``; independent of R_n > 0."""
    out = []
    for v in _scan_roots(_cusp_condition, v_range[0], v_range[1], n_scan, (dev,)):
        d3 = float(f_derivatives(v, dev, CircuitParams(1.0, 0.0), 3)[3])
        out.append((v, d3 < 0.0))
    return out


def find_cusp(dev: DeviceParams, v_range=V_RANGE, n_scan: int = N_V_SCAN) -> list[CuspPoint]:
    """Cusp points with positive critical resistance, sorted by ``R_n``."""
    check(dev)
    cusps = []
    c = dev.geom.l * SQRT2
    for v, is_max in _df_extrema(dev, v_range, n_scan):
        if not is_max:
            continue
        s = diag_terms(v, dev, 1)
        denom = float(s[0] - c * s[1] * v)
        if denom >= 0.0:
            continue  # would need R_n <= 0
        r_n = -2.0 / denom
        v_n = (1.0 + 0.5 * r_n * float(s[0])) * v
        cusps.append(CuspPoint(v, r_n, v_n))
    return sorted(cusps, key=lambda p: p.R_n)


def find_saddle_nodes(dev: DeviceParams, r_n: float, v_range=V_RANGE,
                      n_scan: int = N_V_SCAN) -> list[SaddleNodePoint]:
    """Fold points at fixed ``R_n`` ordered by ``V``.

    Roots of ``D_V f`` are bracketed between consecutive extrema of
    ``D_V f``, so close pairs near a cusp are not missed; a tangential
    maximum (``R_n`` at the cusp value) yields a coincident pair.
    """
    circ = CircuitParams(r_n, 0.0)
    check(dev, circ)
    if r_n <= 0:
        return []

    def dfdv(v):
        out = f_derivatives(v, dev, circ, 1)[1]
        return float(out) if np.ndim(out) == 0 else out

    ext = _df_extrema(dev, v_range, n_scan)
    knots = [v_range[0]] + [v for v, _ in ext] + [v_range[1]]
    folds = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        flo, fhi = dfdv(lo), dfdv(hi)
        if flo * fhi < 0.0:
            folds.append(brentq(dfdv, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200))
    for v, is_max in ext:
        if is_max and abs(dfdv(v)) <= TANGENCY_TOL:
            folds.extend([v, v])
    folds.sort()
    out = []
    for v in folds:
        s0 = float(diag_terms(v, dev, 0)[0])
        out.append(SaddleNodePoint(v, (1.0 + 0.5 * r_n * s0) * v, r_n))
    return out


@dataclass(frozen=True, eq=False)
class BranchTrack:
    """Equilibrium branch followed along a V_n grid.

    ``re``/``im`` belong to the complex eigenvalue pair with the largest real
    part (NaN when the spectrum is real).  ``segment`` increments whenever the
    followed branch is destroyed at a fold and the tracker restarts on the
    surviving one.
    """

    v_n: np.ndarray
    v_star: np.ndarray
    re: np.ndarray
    im: np.ndarray
    segment: np.ndarray


def _complex_pair(vals: np.ndarray) -> tuple[float, float]:
    cplx = vals[np.abs(vals.imag) > 1e-8]
    if cplx.size == 0:
        return math.nan, math.nan
    k = int(np.argmax(cplx.real))
    return float(cplx[k].real), float(abs(cplx[k].imag))


def track_branch(dev: DeviceParams, r_n: float, v_n_grid, n_scan: int = 1024) -> BranchTrack:
    """Follow the lowest-``|V|`` equilibrium branch through ``v_n_grid``."""
    v_n_grid = np.asarray(v_n_grid, dtype=float)
    v_star, re, im, seg = [], [], [], []
    prev_roots: list[float] | None = None
    idx = 0
    segment = 0
    for v_n in v_n_grid:
        circ = CircuitParams(r_n, float(v_n))
        roots, _ = find_roots(dev, circ, n_scan)
        if prev_roots is None:
            idx = 0
        elif len(roots) == len(prev_roots):
            pass
        elif len(roots) < len(prev_roots):
            # Count dropped: the closest adjacent pair annihilated at a fold.
            lost = len(prev_roots) - len(roots)
            gaps = np.diff(prev_roots)
            dead = set()
            for k in np.argsort(gaps)[: lost // 2]:
                dead.update((int(k), int(k) + 1))
            if idx in dead:
                segment += 1
                logger.info("branch lost at V_n=%g; restarting on surviving branch", v_n)
                idx = int(np.argmin(np.abs(np.asarray(roots) - prev_roots[idx])))
            else:
                idx -= sum(1 for d in dead if d < idx)
        else:
            idx = int(np.argmin(np.abs(np.asarray(roots) - prev_roots[idx])))
        idx = min(idx, len(roots) - 1)
        vs = roots[idx]
        vals, _ = eigenvalues_and_classify(jacobian_at(vs, dev, circ))
        r, i = _complex_pair(vals)
        v_star.append(vs)
        re.append(r)
        im.append(i)
        seg.append(segment)
        prev_roots = roots
    return BranchTrack(v_n_grid, np.array(v_star), np.array(re), np.array(im),
                       np.array(seg, dtype=int))


def _root_near(v_guess: float, lo: float, hi: float, dev, circ, n_scan: int) -> float:
    v = v_guess
    for _ in range(20):
        f, fp = (float(a) for a in f_derivatives(v, dev, circ, 1))
        if abs(f) <= 1e-13:
            break
        v -= f / fp
    pad = 0.1 * (hi - lo) + 1e-6
    if lo - pad <= v <= hi + pad and abs(float(f_derivatives(v, dev, circ, 0)[0])) <= 1e-10:
        return v
    roots, _ = find_roots(dev, circ, n_scan)
    return min(roots, key=lambda r: abs(r - v_guess))


def find_hopf(dev: DeviceParams, r_n: float, v_n_range=(0.05, 4.0), n_grid: int = 80,
              n_scan: int = 1024) -> list[HopfPoint]:
    """Andronov-Hopf points on the branch followed from the low-V_n end."""
    if n_grid < 16:
        raise ConfigurationError(f"n_grid must be at least 16, got {n_grid}")
    check(dev, CircuitParams(r_n, v_n_range[0]))
    grid = np.linspace(v_n_range[0], v_n_range[1], n_grid)
    track = track_branch(dev, r_n, grid, n_scan)
    points = []
    for k in range(n_grid - 1):
        if track.segment[k] != track.segment[k + 1]:
            continue
        ra, rb = track.re[k], track.re[k + 1]
        if not (np.isfinite(ra) and np.isfinite(rb)) or ra * rb > 0.0:
            continue
        va, vb = track.v_star[k], track.v_star[k + 1]
        lo_v, hi_v = min(va, vb), max(va, vb)

        def pair_re(v_n, _a=grid[k], _b=grid[k + 1]):
            t = (v_n - _a) / (_b - _a)
            circ = CircuitParams(r_n, v_n)
            vs = _root_near(va + t * (vb - va), lo_v, hi_v, dev, circ, n_scan)
            vals, _ = eigenvalues_and_classify(jacobian_at(vs, dev, circ))
            return _complex_pair(vals)[0], vs, vals

        v_n_h = brentq(lambda x: pair_re(x)[0], grid[k], grid[k + 1], xtol=1e-13,
                       rtol=1e-15, maxiter=200)
        re_h, vs_h, vals = pair_re(v_n_h)
        if abs(re_h) >= 1e-7:
            raise NumericalError(f"Hopf refinement stalled at V_n={v_n_h}", residual=abs(re_h))
        im_h = _complex_pair(vals)[1]
        others = vals[np.abs(np.abs(vals.imag) - im_h) > 1e-8]
        if np.all(others.real < 0.0):
            points.append(HopfPoint(float(v_n_h), float(vs_h), float(im_h), r_n,
                                    int(track.segment[k])))
    return points


def reduced_frequency(dev: DeviceParams) -> float:
    """Eigenfrequency ``sqrt(Omega^2 + Gamma^2)`` of the reduced oscillator."""
    return math.sqrt(dev.Omega ** 2 + dev.Gamma ** 2)
