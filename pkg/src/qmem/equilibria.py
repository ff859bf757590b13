"""DC equilibria, their Jacobian and linear stability.

At an equilibrium the Bloch vector sits at its thermal value
``(0, 0, Z_T)`` and the voltage is a root of the balance function

    f(V) = V_n - {1 + R_n/2 [(1+Z_T) F00(x_V) + (1-Z_T) F11(x_V)]} V.

Jacobians use the variable order ``(V, Z, X, Y)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from qmem.errors import DomainError, NumericalError
from qmem.model import CircuitParams, DeviceParams, check
from qmem.overlap import overlap_all

SQRT2 = math.sqrt(2.0)
N_SCAN = 4096
STABILITY_MARGIN = 1e-9
MERGE_TOL = 1e-6
TANGENCY_TOL = 1e-10


class Stability(enum.Enum):
    STABLE = "stable"
    SADDLE = "saddle"
    UNSTABLE_FOCUS = "unstable-focus"
    CENTER_MARGINAL = "center-marginal"


@dataclass(frozen=True, eq=False)
class Equilibrium:
    V_star: float
    eigenvalues: np.ndarray
    stability: Stability
    residual: float
    near_saddle_node: bool = False

    @property
    def stable(self) -> bool:
        return self.stability is Stability.STABLE


def diag_terms(v, dev: DeviceParams, max_order: int = 2) -> np.ndarray:
    """``S_k(V) = (1+Z_T) F00^(k) + (1-Z_T) F11^(k)`` for k = 0..max_order.

    Derivatives are with respect to ``x_V``.  Shape ``(max_order+1,) + shape(v)``.
    """
    v = np.asarray(v, dtype=float)
    f = overlap_all(dev.geom.x_of_v(v), dev.geom, max_order=max_order)
    return (1.0 + dev.Z_T) * f[:, 0] + (1.0 - dev.Z_T) * f[:, 2]


def f_derivatives(v, dev: DeviceParams, circ: CircuitParams, max_order: int = 1):
    """``[f, D_V f, ..., D_V^max_order f]`` evaluated at ``v``.

    Uses ``dx_V/dV = -l sqrt(2)`` and the analytic overlap derivatives.
    """
    if not 0 <= max_order <= 3:
        raise DomainError("max_order must lie in 0..3")
    v = np.asarray(v, dtype=float)
    s = diag_terms(v, dev, max_order)
    c = -dev.geom.l * SQRT2
    half_r = 0.5 * circ.R_n
    # d^k/dV^k of S(x_V(V)) = c^k S_k
    sv = [c ** k * s[k] for k in range(max_order + 1)]
    out = [circ.V_n - (1.0 + half_r * sv[0]) * v]
    if max_order >= 1:
        out.append(-1.0 - half_r * (sv[0] + sv[1] * v))
    if max_order >= 2:
        out.append(-half_r * (2.0 * sv[1] + sv[2] * v))
    if max_order >= 3:
        out.append(-half_r * (3.0 * sv[2] + sv[3] * v))
    return out


def f_of_v(v, dev: DeviceParams, circ: CircuitParams):
    """DC balance function; its roots are the equilibrium voltages."""
    out = f_derivatives(v, dev, circ, 0)[0]
    return float(out) if np.ndim(out) == 0 else out


def df_dv(v, dev: DeviceParams, circ: CircuitParams):
    out = f_derivatives(v, dev, circ, 1)[1]
    return float(out) if np.ndim(out) == 0 else out


def _polish(v: float, dev: DeviceParams, circ: CircuitParams, tol: float = 1e-12) -> float:
    for _ in range(8):
        f, fp = (float(a) for a in f_derivatives(v, dev, circ, 1))
        if abs(f) <= tol or fp == 0.0:
            break
        v -= f / fp
    return v


def _tangent_roots(grid: np.ndarray, fv: np.ndarray, dev: DeviceParams,
                   circ: CircuitParams) -> list[float]:
    """Root pairs hidden between scan points near a fold.

    Where ``|f|`` has a local minimum without a sign change, the extremum of
    ``f`` is located exactly; if it touches or crosses zero the (near-)double
    root is returned.
    """
    out = []
    for k in range(1, grid.size - 1):
        a, b, c = fv[k - 1], fv[k], fv[k + 1]
        if not (a * b > 0 and b * c > 0 and abs(b) <= abs(a) and abs(b) <= abs(c)):
            continue
        lo, hi = grid[k - 1], grid[k + 1]
        if df_dv(lo, dev, circ) * df_dv(hi, dev, circ) > 0:
            continue
        ext = brentq(df_dv, lo, hi, args=(dev, circ), xtol=1e-15, rtol=1e-15, maxiter=200)
        fe = f_of_v(ext, dev, circ)
        if fe * b < 0:
            out.append(brentq(f_of_v, lo, ext, args=(dev, circ), xtol=1e-15, rtol=1e-15))
            out.append(brentq(f_of_v, ext, hi, args=(dev, circ), xtol=1e-15, rtol=1e-15))
        elif abs(fe) <= TANGENCY_TOL:
            out.extend([ext, ext])
    return out


def find_roots(dev: DeviceParams, circ: CircuitParams, n_scan: int = N_SCAN):
    """Sorted roots of f on the bracket between 0 and V_n.

    Returns ``(roots, near_flags)``.  Roots closer than 1e-6 are merged and
    flagged as a near-tangency (saddle-node neighbourhood).
    """
    check(dev, circ)
    v_n = circ.V_n
    if v_n == 0.0:
        return [0.0], [False]
    lo, hi = (0.0, v_n) if v_n > 0 else (v_n, 0.0)
    grid = np.linspace(lo, hi, n_scan)
    fv = f_of_v(grid, dev, circ)
    raw = []
    for k in range(n_scan):
        if fv[k] == 0.0:
            raw.append(float(grid[k]))
        elif k + 1 < n_scan and fv[k] * fv[k + 1] < 0.0:
            root = brentq(f_of_v, grid[k], grid[k + 1], args=(dev, circ),
                          xtol=1e-15, rtol=1e-15, maxiter=200)
            raw.append(_polish(root, dev, circ))
    raw.extend(_tangent_roots(grid, fv, dev, circ))
    if not raw:
        raise NumericalError(
            f"no equilibrium found for V_n={v_n}, R_n={circ.R_n}: sign bracket violated")
    raw.sort()
    roots, flags = [raw[0]], [False]
    for r in raw[1:]:
        if r - roots[-1] < MERGE_TOL:
            roots[-1] = 0.5 * (roots[-1] + r)
            flags[-1] = True
        else:
            roots.append(r)
            flags.append(False)
    return roots, flags


def jacobian_at(v_star: float, dev: DeviceParams, circ: CircuitParams,
                residual_tol: float = 1e-8) -> np.ndarray:
    """4x4 Jacobian at ``(X, Y, Z, V) = (0, 0, Z_T, V*)`` in order (V, Z, X, Y)."""
    check(dev, circ)
    res = abs(f_of_v(v_star, dev, circ))
    if res > residual_tol:
        raise DomainError(f"V*={v_star} is not an equilibrium (|f|={res:.3g})")
    g = dev.geom
    f = overlap_all(g.x_of_v(v_star), g, max_order=1)
    f00, f01, f11 = f[0]
    d00, _, d11 = f[1]
    z_t, r_n, v = dev.Z_T, circ.R_n, v_star
    c = g.l * SQRT2
    dvv = -(1.0 + 0.5 * r_n * ((1.0 + z_t) * (f00 - c * d00 * v)
                               + (1.0 - z_t) * (f11 - c * d11 * v)))
    dvz = 0.5 * r_n * (f11 - f00) * v
    dvx = -r_n * f01 * v
    return np.array([
        [dvv, dvz, dvx, 0.0],
        [0.0, -dev.alpha * dev.Gamma, 0.0, 0.0],
        [2.0 * z_t * dvv, 2.0 * z_t * dvz, 2.0 * z_t * dvx - dev.Gamma, dev.Omega],
        [0.0, 0.0, -dev.Omega, -dev.Gamma],
    ])


def eigenvalues_and_classify(m: np.ndarray, margin: float = STABILITY_MARGIN):
    """Eigenvalues sorted by decreasing real part, and a stability class.

    Raises :class:`NumericalError` when an eigenpair has a backward error
    above ``1e-9 * ||M||``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4) or not np.all(np.isfinite(m)):
        raise DomainError("expected a finite 4x4 matrix")
    try:
        vals, vecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    scale = max(np.linalg.norm(m, 2), 1e-300)
    backward = np.linalg.norm(m @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    if np.max(backward) > 1e-9 * scale:
        raise NumericalError("eigenvalue backward error too large",
                             residual=float(np.max(backward)))
    order = np.lexsort((-vals.imag, -vals.real))
    vals = vals[order]
    return vals, classify(vals, margin)


def classify(vals: np.ndarray, margin: float = STABILITY_MARGIN) -> Stability:
    re = vals.real
    unstable = re > margin
    if np.any(unstable):
        real_unstable = unstable & (np.abs(vals.imag) <= margin * np.maximum(1.0, np.abs(vals)))
        return Stability.SADDLE if np.any(real_unstable) else Stability.UNSTABLE_FOCUS
    if np.any(np.abs(re) <= margin):
        return Stability.CENTER_MARGINAL
    return Stability.STABLE


def equilibrium_at(v_star: float, dev: DeviceParams, circ: CircuitParams,
                   near_saddle_node: bool = False) -> Equilibrium:
    residual = abs(f_of_v(v_star, dev, circ))
    vals, stab = eigenvalues_and_classify(jacobian_at(v_star, dev, circ))
    return Equilibrium(v_star, vals, stab, residual, near_saddle_node)


def find_equilibria(dev: DeviceParams, circ: CircuitParams,
                    n_scan: int = N_SCAN) -> list[Equilibrium]:
    """All equilibria, ordered by ``V*``; one or three for the usual geometry."""
    roots, flags = find_roots(dev, circ, n_scan)
    return [equilibrium_at(r, dev, circ, fl) for r, fl in zip(roots, flags)]
