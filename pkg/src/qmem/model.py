"""Dimensionless model of the neuron circuit with a quantum memristive element.

State variables are the Bloch components ``(X, Y, Z)`` of the particle's
two-level density matrix and the voltage ``V`` across the device.  Time is
measured in units of the circuit constant ``tau_c = C_ext R_ext``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import constants

from qmem.errors import DomainError
from qmem.overlap import DEFAULT_NODES, Geometry, overlap_values

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class DeviceParams:
    """Parameters of the quantum element.

    ``Omega`` and ``Gamma`` are the trap frequency and pure dephasing rate in
    units of ``1/tau_c``; the relaxation rate is ``alpha * Gamma``.  Values
    are not range-checked here so that out-of-range sets can still be
    reported by :func:`validate`.
    """

    Omega: float = 7.0
    Gamma: float = 0.1
    alpha: float = 1.0
    Z_T: float = 1.0
    geom: Geometry = field(default_factory=Geometry)

    def replace(self, **changes) -> DeviceParams:
        geom_keys = {"l", "x0", "lam"}
        geom_changes = {k: changes.pop(k) for k in list(changes) if k in geom_keys}
        geom = self.geom
        if geom_changes:
            geom = Geometry(**{**asdict(self.geom), **geom_changes})
        return DeviceParams(**{**self._scalars(), **changes, "geom": geom})

    def _scalars(self) -> dict:
        return {"Omega": self.Omega, "Gamma": self.Gamma, "alpha": self.alpha, "Z_T": self.Z_T}

    def as_dict(self) -> dict:
        return {**self._scalars(), **asdict(self.geom)}


@dataclass(frozen=True)
class CircuitParams:
    """External resistance ratio ``R_ext / R_0`` and dimensionless bias."""

    R_n: float = 5.0
    V_n: float = 0.23

    def as_dict(self) -> dict:
        return {"R_n": self.R_n, "V_n": self.V_n}


class State(NamedTuple):
    X: float = 0.0
    Y: float = 0.0
    Z: float = 1.0
    V: float = 0.0

    @property
    def purity(self) -> float:
        """Squared Bloch radius ``X^2 + Y^2 + Z^2``."""
        return self.X * self.X + self.Y * self.Y + self.Z * self.Z


class StateDerivative(NamedTuple):
    dX: float
    dY: float
    dZ: float
    dV: float


#: Pure ground state with an uncharged circuit.
DEFAULT_INITIAL_STATE = State(0.0, 0.0, 1.0, 0.0)


class Issue(NamedTuple):
    severity: str  # "violation" or "warning"
    field: str
    message: str


def validate(dev: DeviceParams, circ: CircuitParams | None = None) -> list[Issue]:
    """Check physical admissibility; an empty list means everything holds."""
    issues = []

    def bad(name, msg):
        issues.append(Issue("violation", name, msg))

    if not (math.isfinite(dev.Omega) and dev.Omega > 0):
        bad("Omega", f"Omega must be positive, got {dev.Omega}")
    if not (math.isfinite(dev.Gamma) and dev.Gamma >= 0):
        bad("Gamma", f"Gamma must be non-negative, got {dev.Gamma}")
    if not (math.isfinite(dev.alpha) and 0.0 <= dev.alpha <= 2.0):
        bad("alpha", f"alpha={dev.alpha} outside [0, 2]: relaxation faster than twice "
                     "the dephasing rate drives the Bloch vector out of the unit ball")
    if not (math.isfinite(dev.Z_T) and 0.0 <= dev.Z_T <= 1.0):
        bad("Z_T", f"Z_T={dev.Z_T} outside [0, 1] (zero to infinite temperature)")
    if dev.Gamma == 0:
        issues.append(Issue("warning", "Gamma",
                            "Gamma = 0 (coherent limit): Bloch variables do not relax "
                            "and equilibria are not attracting"))
    if circ is not None:
        if not (math.isfinite(circ.R_n) and circ.R_n >= 0):
            bad("R_n", f"R_n must be non-negative, got {circ.R_n}")
        if not math.isfinite(circ.V_n):
            bad("V_n", f"V_n must be finite, got {circ.V_n}")
    return issues


def check(dev: DeviceParams, circ: CircuitParams | None = None) -> None:
    """Raise :class:`DomainError` listing every hard violation."""
    hard = [i.message for i in validate(dev, circ) if i.severity == "violation"]
    if hard:
        raise DomainError("; ".join(hard))


def _overlaps(v: float, geom: Geometry, n_nodes: int = DEFAULT_NODES):
    f00, f01, f11 = overlap_values(geom.x_of_v(v), geom, 0, n_nodes)
    return float(f00), float(f01), float(f11)


def rhs(s: State, dev: DeviceParams, circ: CircuitParams) -> StateDerivative:
    """Time derivatives of ``(X, Y, Z, V)``.

    ``dV/dt`` depends only on the state, so it is computed first and then
    substituted into the Bloch equations.
    """
    check(dev, circ)
    x, y, z, v = s
    if not all(math.isfinite(c) for c in s):
        raise DomainError(f"state must be finite, got {tuple(s)}")
    f00, f01, f11 = _overlaps(v, dev.geom)
    g2 = (1.0 + z) * f00 + 2.0 * x * f01 + (1.0 - z) * f11
    dv = circ.V_n - (1.0 + 0.5 * circ.R_n * g2) * v
    dz = -2.0 * dv * x - dev.alpha * dev.Gamma * (z - dev.Z_T)
    dx = dev.Omega * y + 2.0 * dv * z - dev.Gamma * x
    dy = -dev.Omega * x - dev.Gamma * y
    return StateDerivative(dx, dy, dz, dv)


def conductance_and_current(s: State, dev: DeviceParams) -> tuple[float, float]:
    """Dimensionless device conductance ``G`` and current ``I = G V``."""
    check(dev)
    x, _, z, v = s
    f00, f01, f11 = _overlaps(v, dev.geom)
    g = 0.5 * (1.0 + z) * f00 + x * f01 + 0.5 * (1.0 - z) * f11
    return g, g * v


def static_iv_curve(v, dev: DeviceParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``(G, I)`` along the thermal branch ``X = 0, Z = Z_T``."""
    check(dev)
    v = np.asarray(v, dtype=float)
    f00, _, f11 = overlap_values(dev.geom.x_of_v(v), dev.geom, 0)
    g = 0.5 * (1.0 + dev.Z_T) * f00 + 0.5 * (1.0 - dev.Z_T) * f11
    return g, g * v


def thermal_z(theta: float) -> float:
    """Equilibrium Bloch ``Z`` for ``theta = hbar Omega_p / (2 k_B T)``."""
    if math.isnan(theta) or theta < 0:
        raise DomainError(f"theta must be non-negative, got {theta}")
    return math.tanh(theta)


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional description of device and circuit (SI units).

    ``T = 0`` is accepted and maps to ``Z_T = 1``.
    """

    m: float
    q: float
    Omega_p: float
    L: float
    x0: float
    lam: float
    gamma: float
    gamma_T: float
    T: float
    C_ext: float
    R_ext: float
    R_0: float
    V_ext: float
    V_m: float = 0.0

    @property
    def l(self) -> float:
        return math.sqrt(constants.hbar / (self.m * self.Omega_p))

    @property
    def tau_c(self) -> float:
        return self.C_ext * self.R_ext

    @property
    def voltage_scale(self) -> float:
        """Factor turning volts into the dimensionless voltage."""
        return self.q / (2.0 * SQRT2 * self.m * self.Omega_p ** 2 * self.L * self.l)

    @property
    def theta(self) -> float:
        if self.T == 0:
            return math.inf
        return constants.hbar * self.Omega_p / (2.0 * constants.k * self.T)

    @property
    def V(self) -> float:
        """Dimensionless memristor voltage for ``V_m``."""
        return self.voltage_scale * self.V_m


def to_dimensionless(p: PhysicalParams) -> tuple[DeviceParams, CircuitParams]:
    """Rescale a physical parameter set onto the dimensionless model."""
    for name in ("m", "Omega_p", "L", "lam", "R_0"):
        if not getattr(p, name) > 0:
            raise DomainError(f"{name} must be positive, got {getattr(p, name)}")
    if not p.tau_c > 0:
        raise DomainError(f"tau_c = C_ext*R_ext must be positive, got {p.tau_c}")
    if p.gamma < 0 or p.gamma_T < 0 or p.T < 0:
        raise DomainError("rates and temperature must be non-negative")
    if p.gamma == 0:
        if p.gamma_T > 0:
            raise DomainError("gamma = 0 with gamma_T > 0 leaves alpha undefined")
        alpha = 1.0  # irrelevant: only alpha*Gamma enters the model
    else:
        alpha = p.gamma_T / p.gamma
    geom = Geometry(l=p.l / p.L, x0=p.x0 / p.L, lam=p.lam / p.L)
    dev = DeviceParams(Omega=p.Omega_p * p.tau_c, Gamma=p.gamma * p.tau_c, alpha=alpha,
                       Z_T=thermal_z(p.theta) if math.isfinite(p.theta) else 1.0,
                       geom=geom)
    circ = CircuitParams(R_n=p.R_ext / p.R_0, V_n=p.voltage_scale * p.V_ext)
    return dev, circ


def param_vector(dev: DeviceParams, circ: CircuitParams) -> np.ndarray:
    """Flat parameter array in the layout expected by the compiled kernels."""
    return np.array([dev.Omega, dev.Gamma, dev.alpha, dev.Z_T, circ.R_n, circ.V_n,
                     dev.geom.x0, dev.geom.l], dtype=float)
