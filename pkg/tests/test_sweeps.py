import numpy as np
import pytest

from qmem.dynamics import integrate, steady_span
from qmem.equilibria import find_equilibria
from qmem.errors import ConfigurationError, DomainError, FitError
from qmem.model import DEFAULT_INITIAL_STATE, CircuitParams, DeviceParams, State
from qmem.overlap import build_overlap_table
from qmem.sweeps import (Axis, amplitude_sweep, fit_sqrt_law, hysteresis_sweep, max_workers,
                         scan2d, updown_path)


def test_fit_exact_law():
    p = np.array([1.1, 1.2, 1.3, 1.4, 1.5])
    fit = fit_sqrt_law(np.column_stack([p, 0.5 * np.sqrt(p - 1.0)]), "above")
    assert fit.c == pytest.approx(0.5, abs=1e-10)
    assert fit.p0 == pytest.approx(1.0, abs=1e-10)
    assert fit.residual < 1e-12
    assert fit(1.25) == pytest.approx(0.25)


def test_fit_law_below():
    p = np.linspace(2.0, 2.9, 7)
    fit = fit_sqrt_law(np.column_stack([p, 0.03 * np.sqrt(3.0 - p)]), "below")
    assert (fit.c, fit.p0) == pytest.approx((0.03, 3.0), abs=1e-10)


def test_fit_rejects_degenerate_and_sparse():
    p = np.linspace(0, 1, 8)
    with pytest.raises(FitError):
        fit_sqrt_law(np.column_stack([p, np.full(8, 0.2)]), "above")
    with pytest.raises(FitError):
        fit_sqrt_law([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4]], "above")
    with pytest.raises(FitError):
        fit_sqrt_law(np.column_stack([p, np.sqrt(p + 0.1)]), "below")
    with pytest.raises(DomainError):
        fit_sqrt_law(np.column_stack([p, p]), "sideways")


def test_fit_ignores_sub_threshold_points():
    p = np.linspace(1.0, 2.0, 11)
    span = 0.5 * np.sqrt(np.clip(p - 1.3, 0, None))
    fit = fit_sqrt_law(np.column_stack([p, span]), "above")
    assert fit.n_points == 7 and fit.p0 == pytest.approx(1.3, abs=1e-10)


def test_updown_path():
    path = updown_path(0.0, 1.0, 0.25)
    assert list(path) == [0, 0.25, 0.5, 0.75, 1.0, 0.75, 0.5, 0.25, 0]
    with pytest.raises(ConfigurationError):
        updown_path(0.0, 0.01, 0.05)


def _loops(dev, step=0.05, t_relax=200.0, reach=8.0):
    """(up jump, down jump) for the positive and the negative bias loops."""
    table = build_overlap_table(dev.geom)
    out = []
    for turn in (reach, -reach):
        res = hysteresis_sweep(dev, 10.0, updown_path(0.0, turn, step), t_relax=t_relax,
                               table=table)
        for d in ("up", "down"):
            vs = [e.V_n for e in res.branch(d)]
            assert np.all(np.diff(vs) > 0) if d == "up" else np.all(np.diff(vs) < 0)
        away, back = ("up", "down") if turn > 0 else ("down", "up")
        (j_away,), (j_back,) = res.jumps(away), res.jumps(back)
        out.append((j_away, j_back))
    return out


def test_mirror_loops_for_centred_trap():
    pos, neg = _loops(DeviceParams(Gamma=1.0).replace(x0=0.0))
    assert pos[0] == pytest.approx(-neg[0], abs=1e-9)
    assert pos[1] == pytest.approx(-neg[1], abs=1e-9)
    w_pos, w_neg = pos[0] - pos[1], neg[1] - neg[0]
    assert w_pos > 0 and w_neg == pytest.approx(w_pos, rel=0.01)


def test_offset_swaps_loop_asymmetry():
    widths = {}
    for x0 in (0.1, -0.1):
        pos, neg = _loops(DeviceParams(Gamma=1.0).replace(x0=x0), step=0.1, t_relax=100.0)
        widths[x0] = (pos[0] - pos[1], neg[1] - neg[0])
    a, b = widths[0.1], widths[-0.1]
    assert (a[0] - a[1]) * (b[0] - b[1]) < 0
    assert a == pytest.approx(b[::-1], abs=0.1 + 1e-9)


def test_coexistence_of_cycle_and_fixed_point(table):
    dev = DeviceParams()
    circ = CircuitParams(5.0, 3.0)
    upper = find_equilibria(dev, circ)[-1]
    osc = steady_span(integrate(DEFAULT_INITIAL_STATE, dev, circ, table=table))
    rest = steady_span(integrate(State(0, 0, 1, upper.V_star), dev, circ, table=table))
    assert osc.oscillating and not rest.oscillating


def test_amplitude_sweep_without_oscillation(table):
    curve = amplitude_sweep(DeviceParams(Z_T=0.0), 5.0, "V_n", np.linspace(0.3, 1.0, 4),
                            t_end=200.0, table=table, workers=1)
    assert curve.fit is None and curve.fit_error
    assert np.all(curve.spans >= 0) and np.all(curve.spans < 1e-3)


def test_amplitude_sweep_rejects_other_parameters(table):
    with pytest.raises(DomainError):
        amplitude_sweep(DeviceParams(), 5.0, "Gamma", [0.1], table=table)


def test_scan_independent_of_order_and_threads(table):
    dev, circ = DeviceParams(), CircuitParams(6.0, 2.0)
    a1, a2 = Axis("Gamma", 0.1, 0.9, 3), Axis("alpha", 1.0, 3.0, 3)
    kw = dict(t_end=150.0, settle_fraction=0.5, table=table)
    one = scan2d(dev, circ, a1, a2, workers=1, **kw)
    two = scan2d(dev, circ, a1, a2, workers=2, **kw)
    flipped = scan2d(dev, circ, a2, a1, workers=2, **kw)
    np.testing.assert_array_equal(one.spans, two.spans)
    np.testing.assert_array_equal(one.spans, flipped.spans.T)
    assert one.spans.shape == (3, 3)
    assert np.all(np.isnan(one.spans[:, 2])) and not one.oscillating[:, 2].any()
    assert np.all(one.spans[:, :2] >= 0)


def test_scan_axis_validation():
    with pytest.raises(ConfigurationError):
        Axis("Omega", 1, 2, 3)
    with pytest.raises(ConfigurationError):
        Axis("Gamma", 1, 0, 3)
    with pytest.raises(ConfigurationError):
        scan2d(DeviceParams(), CircuitParams(), Axis("Gamma", 0, 1, 2), Axis("Gamma", 0, 1, 2))


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("QMEM_THREADS", "1")
    assert max_workers() == 1
    monkeypatch.setenv("QMEM_THREADS", "many")
    with pytest.raises(ConfigurationError):
        max_workers()
