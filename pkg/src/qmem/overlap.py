"""Overlap integrals of the two lowest oscillator eigenfunctions with a sech kernel.

For a particle in a harmonic trap of length ``l`` the tunnelling conductance
seen by the circuit is a sech of the particle position shifted by ``x_V``.
Its matrix elements in the basis {psi_0, psi_1} are

    F_ij(x_V) = N_ij / (l sqrt(pi)) * Int exp(-x^2/l^2) H_i(x/l) H_j(x/l)
                                      * sech((x + x_V) / lam) dx

with ``N_ij = 1/sqrt(2^(i+j) i! j!)``.  After ``u = x / l`` the Gaussian is
exactly the Gauss-Hermite weight, so the integrals are evaluated with a
high-order Gauss-Hermite rule.  Derivatives in ``x_V`` are taken under the
integral sign on the sech factor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import roots_hermite

from qmem import _kernels
from qmem.errors import ConfigurationError, DomainError, NumericalError

#: Default Gauss-Hermite order.  The sech factor has poles a distance
#: pi*lam/(2l) from the real axis, which limits the convergence rate; 800
#: nodes reach ~1e-14 relative accuracy at lam/l = 0.26.
DEFAULT_NODES = 800
MIN_NODES = 200

# (i, j) ordering used for every stacked array in this module.
PAIRS = ((0, 0), (0, 1), (1, 1))
_PAIR_INDEX = {pair: k for k, pair in enumerate(PAIRS)}
_PAIR_INDEX[(1, 0)] = 1

TABLE_COLUMNS = (
    "x_V",
    "F00", "F01", "F11",
    "F00'", "F01'", "F11'",
    "F00''", "F01''", "F11''",
)


@dataclass(frozen=True)
class Geometry:
    """Tunnelling geometry in units of the half gap ``L``.

    Attributes:
        l: oscillator length sqrt(hbar / (m Omega_p)).
        x0: offset of the trap minimum.
        lam: electron tunnelling length.
    """

    l: float = 0.5
    x0: float = 0.8
    lam: float = 0.13

    def __post_init__(self):
        if not (math.isfinite(self.l) and self.l > 0):
            raise DomainError(f"oscillator length l must be positive, got {self.l}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"tunnelling length lam must be positive, got {self.lam}")
        if not math.isfinite(self.x0):
            raise DomainError(f"trap offset x0 must be finite, got {self.x0}")

    def x_of_v(self, v):
        """Shifted position ``x_V = x0 - l*sqrt(2)*V``."""
        return self.x0 - self.l * math.sqrt(2.0) * v


@lru_cache(maxsize=8)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for weight exp(-u^2), weights pre-divided by sqrt(pi)."""
    if n < 2:
        raise ConfigurationError(f"need at least 2 quadrature nodes, got {n}")
    u, w = roots_hermite(n)
    u.setflags(write=False)
    w = w / math.sqrt(math.pi)
    w.setflags(write=False)
    return u, w


def _check_nodes(n_nodes: int) -> None:
    if n_nodes < MIN_NODES:
        raise ConfigurationError(
            f"quadrature order {n_nodes} below the minimum of {MIN_NODES}")


def overlap_all(x_v, geom: Geometry, n_nodes: int = DEFAULT_NODES,
                max_order: int = 2) -> np.ndarray:
    """All overlaps and their derivatives up to ``max_order`` (at most 3).

    Returns an array of shape ``(max_order + 1, 3) + shape(x_v)`` indexed as
    ``[deriv_order, pair]`` with pairs ordered as :data:`PAIRS`.
    """
    if max_order not in (0, 1, 2, 3):
        raise DomainError(f"max_order must be between 0 and 3, got {max_order}")
    _check_nodes(n_nodes)
    return _overlap_raw(x_v, geom, n_nodes, max_order)


def _overlap_raw(x_v, geom: Geometry, n_nodes: int, max_order: int) -> np.ndarray:
    x = np.asarray(x_v, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("x_V must be finite")
    u, w = gauss_hermite(n_nodes)
    flat = x.reshape(-1)
    out = np.empty((max_order + 1, 3, flat.size))
    # Chunk so the (points x nodes) work arrays stay small.
    step = max(1, 2_000_000 // n_nodes)
    for start in range(0, flat.size, step):
        stop = min(start + step, flat.size)
        _kernels.overlap_block(flat[start:stop], u, w, geom.l, geom.lam,
                               out[:, :, start:stop])
    return out.reshape((max_order + 1, 3) + x.shape)


def overlap_values(x_v, geom: Geometry, deriv_order: int = 0,
                   n_nodes: int = DEFAULT_NODES) -> np.ndarray:
    """``(F00, F01, F11)`` (or a derivative of them) stacked on axis 0."""
    if deriv_order not in (0, 1, 2):
        raise DomainError(f"deriv_order must be 0, 1 or 2, got {deriv_order}")
    return overlap_all(x_v, geom, n_nodes)[deriv_order]


def overlap_f(i: int, j: int, x_v: float, geom: Geometry, deriv_order: int = 0,
              n_nodes: int = DEFAULT_NODES, check: bool = True) -> float:
    """Single overlap ``F_ij`` or its ``deriv_order``-th derivative at ``x_v``.

    With ``check`` set, the result is compared against a rule with three
    quarters of the nodes; a disagreement beyond 1e-9 (scaled by
    ``lam**-deriv_order``) raises :class:`NumericalError`.
    """
    if (i, j) not in _PAIR_INDEX:
        raise DomainError(f"level indices must be 0 or 1, got ({i}, {j})")
    if deriv_order not in (0, 1, 2):
        raise DomainError(f"deriv_order must be 0, 1 or 2, got {deriv_order}")
    if not math.isfinite(x_v):
        raise DomainError(f"x_V must be finite, got {x_v}")
    k = _PAIR_INDEX[(i, j)]
    value = float(overlap_all(x_v, geom, n_nodes)[deriv_order, k])
    if check:
        coarse = float(_overlap_raw(x_v, geom, (3 * n_nodes) // 4, 2)[deriv_order, k])
        residual = abs(value - coarse)
        if residual > 1e-9 * geom.lam ** (-deriv_order):
            raise NumericalError(
                f"F_{i}{j} quadrature not converged at x_V={x_v} "
                f"with {n_nodes} nodes", residual=residual)
    return value


@dataclass(frozen=True, eq=False)
class OverlapTable:
    """Uniform-grid cache of the overlaps with quintic Hermite interpolation.

    The stored first and second derivatives make the interpolant match
    ``F``, ``F'`` and ``F''`` exactly at every node.  Queries outside the
    grid fall back to direct quadrature.
    """

    geom: Geometry
    x: np.ndarray
    data: np.ndarray  # (3 derivs, 3 pairs, n)
    n_nodes: int = DEFAULT_NODES
    order: int = field(default=5, init=False)

    def __post_init__(self):
        if self.x.ndim != 1 or self.x.size < 4:
            raise ConfigurationError("table grid needs at least 4 nodes")
        if not np.all(np.diff(self.x) > 0):
            raise ConfigurationError("table grid must be strictly ascending")
        if self.data.shape != (3, 3, self.x.size) or not np.all(np.isfinite(self.data)):
            raise ConfigurationError("table values malformed or non-finite")
        self.x.setflags(write=False)
        self.data.setflags(write=False)

    @property
    def x_min(self) -> float:
        return float(self.x[0])

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.x.size - 1)

    def values(self, x_v, deriv_order: int = 0) -> np.ndarray:
        """Interpolated ``(F00, F01, F11)`` derivative stack at ``x_v``."""
        if deriv_order not in (0, 1, 2):
            raise DomainError(f"deriv_order must be 0, 1 or 2, got {deriv_order}")
        x = np.asarray(x_v, dtype=float)
        if not np.all(np.isfinite(x)):
            raise DomainError("x_V must be finite")
        flat = x.reshape(-1)
        out = np.empty((3, flat.size))
        inside = (flat >= self.x_min) & (flat <= self.x_max)
        if np.any(inside):
            sink = np.empty((3, int(inside.sum())))
            _kernels.table_eval_many(flat[inside], self.x, self.data, deriv_order, sink)
            out[:, inside] = sink
        if not np.all(inside):
            out[:, ~inside] = overlap_values(flat[~inside], self.geom, deriv_order,
                                             self.n_nodes)
        return out.reshape((3,) + x.shape)

    def f(self, i: int, j: int, x_v: float, deriv_order: int = 0) -> float:
        if (i, j) not in _PAIR_INDEX:
            raise DomainError(f"level indices must be 0 or 1, got ({i}, {j})")
        return float(self.values(x_v, deriv_order)[_PAIR_INDEX[(i, j)]])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TABLE_COLUMNS)
            cols = [self.x] + [self.data[d, k] for d in range(3) for k in range(3)]
            for row in zip(*cols):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, geom: Geometry,
                 n_nodes: int = DEFAULT_NODES) -> OverlapTable:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TABLE_COLUMNS:
                raise ConfigurationError(f"unexpected overlap table header {header}")
            rows = np.array([[float(v) for v in row] for row in reader])
        data = rows[:, 1:].T.reshape(3, 3, -1).copy()
        return cls(geom, rows[:, 0].copy(), data, n_nodes)


def build_overlap_table(geom: Geometry, x_min: float = -12.0, x_max: float = 12.0,
                        n: int = 4801, n_nodes: int = DEFAULT_NODES) -> OverlapTable:
    """Tabulate the overlaps on ``n`` uniform nodes over ``[x_min, x_max]``.

    The default spacing of 0.005 keeps the interpolation error of ``F`` below
    1e-10 at the default geometry.
    """
    if n < 4:
        raise ConfigurationError(f"overlap table needs n >= 4 nodes, got {n}")
    if not (math.isfinite(x_min) and math.isfinite(x_max) and x_min < x_max):
        raise ConfigurationError(f"bad table range [{x_min}, {x_max}]")
    x = np.linspace(x_min, x_max, n)
    return OverlapTable(geom, x, overlap_all(x, geom, n_nodes), n_nodes)
