import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from qmem.bifurcation import reduced_frequency
from qmem.dynamics import (PurityWarning, Trajectory, integrate, periodogram, power_spectrum,
                           steady_span)
from qmem.equilibria import find_roots
from qmem.errors import DomainError, InsufficientDataError, NumericalError
from qmem.model import DEFAULT_INITIAL_STATE, CircuitParams, DeviceParams, State, rhs

FREE = CircuitParams(0.0, 0.0)


def free_decay(t, s0, dev):
    """Exact undriven solution: damped rotation of (X, Y), relaxation of Z."""
    x0, y0, z0, _ = s0
    e = np.exp(-dev.Gamma * t)
    c, s = np.cos(dev.Omega * t), np.sin(dev.Omega * t)
    x = e * (x0 * c + y0 * s)
    y = e * (y0 * c - x0 * s)
    z = dev.Z_T + (z0 - dev.Z_T) * np.exp(-dev.alpha * dev.Gamma * t)
    return np.column_stack([x, y, z, np.zeros_like(t)])


def test_free_decay_matches_closed_form(dev, table):
    s0 = State(1.0, 0.0, 0.0, 0.0)
    tr = integrate(s0, dev, FREE, t_end=50.0, table=table)
    assert np.max(np.abs(tr.y - free_decay(tr.t, s0, dev))) < 1e-6


def test_direct_and_table_paths_agree(dev, table):
    circ = CircuitParams(5.0, 1.0)
    a = integrate(DEFAULT_INITIAL_STATE, dev, circ, t_end=10.0)
    b = integrate(DEFAULT_INITIAL_STATE, dev, circ, t_end=10.0, table=table)
    assert np.max(np.abs(a.y - b.y)) < 1e-7


def test_error_shrinks_with_tolerance(dev, table):
    s0 = State(0.6, 0.0, 0.8, 0.0)
    errs = []
    for tol in (1e-5, 1e-7, 1e-9):
        tr = integrate(s0, dev, FREE, t_end=30.0, rel_tol=tol, abs_tol=tol * 1e-2, table=table)
        errs.append(np.max(np.abs(tr.y - free_decay(tr.t, s0, dev))))
    assert errs[0] > errs[1] > errs[2]


def test_cross_check_against_scipy(dev):
    circ = CircuitParams(5.0, 1.0)
    s0 = State(0.1, 0.0, 0.9, 0.2)
    ref = solve_ivp(lambda t, y: rhs(State(*y), dev, circ), (0.0, 5.0), list(s0),
                    method="DOP853", rtol=1e-11, atol=1e-13)
    tr = integrate(s0, dev, circ, t_end=5.0)
    np.testing.assert_allclose(tr.y[-1], ref.y[:, -1], atol=1e-7)


def test_converges_below_threshold(dev, table):
    circ = CircuitParams(5.0, 0.1)
    (v_star,), _ = find_roots(dev, circ)
    tr = integrate(DEFAULT_INITIAL_STATE, dev, circ, t_end=500.0, table=table)
    assert abs(tr.V[-1] - v_star) < 1e-6
    sp = steady_span(tr)
    assert sp.span < 1e-6 and not sp.oscillating


def test_oscillates_at_onset(dev, table):
    tr = integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(5.0, 0.23), table=table)
    sp = steady_span(tr)
    assert sp.oscillating and sp.span < 0.05


@pytest.mark.parametrize("v_n", [0.3, 1.73])
def test_span_stable_under_resolution_and_duration(dev, table, v_n):
    circ = CircuitParams(5.0, v_n)
    base = steady_span(integrate(DEFAULT_INITIAL_STATE, dev, circ, table=table)).span
    longer = steady_span(integrate(DEFAULT_INITIAL_STATE, dev, circ, t_end=1200.0,
                                   table=table)).span
    finer = steady_span(integrate(DEFAULT_INITIAL_STATE, dev, circ, sample_dt=0.005,
                                  table=table)).span
    assert longer == pytest.approx(base, rel=0.02)
    assert finer == pytest.approx(base, rel=0.02)


def test_small_cycle_frequency_near_reduced_frequency(dev, table):
    tr = integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(5.0, 0.24), table=table)
    w = power_spectrum(tr, 0.6).peak_omega
    assert w > dev.Omega
    assert w == pytest.approx(reduced_frequency(dev), rel=0.01)


bloch_sphere = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda p: 0.1 < np.linalg.norm(p))


@settings(max_examples=15, deadline=None)
@given(bloch_sphere, st.floats(0.0, 2.0), st.floats(0.0, 1.0), st.floats(0.01, 1.0))
def test_free_purity_never_exceeds_one(table, p, alpha, z_t, gamma):
    x, y, z = np.asarray(p) / np.linalg.norm(p)
    dev = DeviceParams(Gamma=gamma, alpha=alpha, Z_T=z_t)
    tr = integrate(State(x, y, z, 0.0), dev, FREE, t_end=40.0, table=table)
    assert np.max(np.sum(tr.y[:, :3] ** 2, axis=1)) <= 1.0 + 1e-8


def test_driven_purity_monitored(dev, table):
    tr = integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(5.0, 1.73), table=table)
    assert tr.max_purity <= 1.0 + 1e-6


def test_purity_warning():
    with pytest.warns(PurityWarning):
        integrate(State(0.0, 0.0, 1.2, 0.0), DeviceParams(), FREE, t_end=1.0)


def test_trajectory_invariants(dev, table):
    tr = integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(), t_end=3.0, table=table)
    assert np.all(np.diff(tr.t) > 0) and tr.y.shape == (tr.t.size, 4)
    assert tr.t[0] == 0.0 and tr.t[-1] == pytest.approx(3.0)
    assert tr.steps > 0 and tr.final_state == State(*tr.y[-1])


def test_integrate_argument_errors(dev):
    with pytest.raises(DomainError):
        integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(), t_end=0.0)
    with pytest.raises(DomainError):
        integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(), rel_tol=0.1)
    with pytest.raises(DomainError):
        integrate(State(math.nan, 0, 1, 0), dev, CircuitParams())
    with pytest.raises(DomainError):
        integrate(DEFAULT_INITIAL_STATE, dev.replace(alpha=2.5), CircuitParams())
    with pytest.raises(NumericalError):
        integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(), t_end=10.0, max_steps=5)


def test_steady_span_needs_long_window(dev, table):
    tr = integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(), t_end=20.0, table=table)
    with pytest.raises(InsufficientDataError):
        steady_span(tr)
    with pytest.raises(DomainError):
        steady_span(tr, 1.0)


def test_periodogram_of_sinusoid():
    t = np.arange(0.0, 200.0, 0.01)
    spec = periodogram(np.sin(7.0 * t), 0.01)
    assert spec.peak_omega == pytest.approx(7.0, rel=1e-3)
    assert np.all(spec.power >= 0) and np.all(np.diff(spec.omega) > 0)
    assert spec.omega[0] == 0.0


def test_periodogram_harmonic_detection():
    t = np.arange(0.0, 200.0, 0.01)
    v = np.sin(7.0 * t) + 0.05 * np.sin(14.0 * t) + 1e-4 * np.sin(3.3 * t)
    spec = periodogram(v, 0.01)
    assert spec.harmonic_db(2) > 20.0


def test_spectrum_errors():
    with pytest.raises(InsufficientDataError):
        periodogram(np.zeros(10), 0.01)
    t = np.concatenate([np.arange(0, 1, 0.01), np.arange(1, 2, 0.02)])
    with pytest.raises(DomainError):
        power_spectrum(Trajectory.from_voltage(t, np.sin(t)))
