import math

import numpy as np
import pytest

from qmem.bifurcation import (find_cusp, find_hopf, find_saddle_nodes, reduced_frequency,
                              track_branch)
from qmem.dynamics import integrate, steady_span
from qmem.equilibria import f_derivatives, find_roots
from qmem.errors import ConfigurationError
from qmem.model import DEFAULT_INITIAL_STATE, CircuitParams, DeviceParams


@pytest.fixture(scope="module")
def hopf_default():
    return find_hopf(DeviceParams(), 5.0, (0.05, 4.0), 80)


def test_cusp_default(dev):
    c = find_cusp(dev)[0]
    assert c.V == pytest.approx(1.8866, rel=1e-3)
    assert c.R_n == pytest.approx(1.7779, rel=1e-3)
    assert c.V_n == pytest.approx(2.4454, rel=1e-3)


def test_cusp_conditions_hold(dev):
    for c in find_cusp(dev):
        f, d1, d2, d3 = (float(x) for x in f_derivatives(c.V, dev, CircuitParams(c.R_n, c.V_n), 3))
        assert max(abs(f), abs(d1), abs(d2)) < 1e-8
        assert d3 < 0


def test_cusps_mirror_when_trap_centred():
    cusps = find_cusp(DeviceParams().replace(x0=0.0))
    assert len(cusps) == 2
    a, b = sorted(cusps, key=lambda p: p.V)
    assert a.V == pytest.approx(-b.V, abs=1e-9)
    assert a.V_n == pytest.approx(-b.V_n, abs=1e-9)
    assert a.R_n == pytest.approx(b.R_n, rel=1e-9)
    assert a.R_n < 10.0  # both hysteresis regions open by R_n = 10


def test_saddle_nodes_default():
    folds = find_saddle_nodes(DeviceParams(Gamma=1.0), 8.0)
    assert [p.V for p in folds] == pytest.approx([1.4336, 2.6689], rel=1e-3)
    assert [p.V_n for p in folds] == pytest.approx([5.4501, 2.9232], rel=1e-3)


def test_saddle_nodes_satisfy_definition(dev):
    for p in find_saddle_nodes(dev, 8.0):
        f, d1 = f_derivatives(p.V, dev, CircuitParams(8.0, p.V_n), 1)
        assert abs(f) < 1e-8 and abs(d1) < 1e-8
        roots, flags = find_roots(dev, CircuitParams(8.0, p.V_n))
        near = [r for r in roots if abs(r - p.V) < 1e-3]
        assert near and any(fl for r, fl in zip(roots, flags) if abs(r - p.V) < 1e-3)


def test_no_folds_below_cusp(dev):
    assert find_saddle_nodes(dev, 1.0) == []


def test_folds_merge_at_cusp(dev):
    c = find_cusp(dev)[0]
    folds = find_saddle_nodes(dev, c.R_n)
    near = [p for p in folds if abs(p.V - c.V) < 1e-2]
    assert len(near) == 2
    assert all(abs(p.V - c.V) < 1e-4 for p in near)


def test_hopf_window(hopf_default):
    assert len(hopf_default) == 2
    on, off = hopf_default
    assert on.V_n == pytest.approx(0.23, abs=0.01)
    assert off.V_n == pytest.approx(3.31, abs=0.01)
    assert on.omega == pytest.approx(7.0224, rel=5e-3)
    assert on.omega > reduced_frequency(DeviceParams())


def test_no_hopf_at_infinite_temperature():
    assert find_hopf(DeviceParams(Z_T=0.0), 5.0, (0.05, 4.0), 80) == []


@pytest.mark.parametrize("k,inside", [(0, +1), (1, -1)])
def test_hopf_agrees_with_dynamics(hopf_default, table, k, inside):
    dev = DeviceParams()
    v_h = hopf_default[k].V_n
    for sign, expected in ((inside, True), (-inside, False)):
        tr = integrate(DEFAULT_INITIAL_STATE, dev, CircuitParams(5.0, v_h + 0.02 * sign),
                       table=table)
        assert steady_span(tr).oscillating is expected


def test_branch_segment_restarts_after_fold():
    track = track_branch(DeviceParams(), 8.0, np.linspace(5.0, 6.0, 21))
    assert track.segment[0] == 0 and track.segment[-1] == 1
    assert track.v_star[-1] > 4.0  # landed on the upper branch


def test_hopf_and_folds_coexist():
    dev = DeviceParams()
    folds = find_saddle_nodes(dev, 8.0)
    hopf = find_hopf(dev, 8.0, (0.05, 7.0), 120)
    assert find_saddle_nodes(dev, 8.0) == folds
    lo, hi = sorted(p.V_n for p in folds)
    assert any(lo < h.V_n < hi for h in hopf)


def test_hopf_grid_too_coarse(dev):
    with pytest.raises(ConfigurationError):
        find_hopf(dev, 5.0, n_grid=8)


def test_reduced_frequency():
    assert reduced_frequency(DeviceParams(Gamma=0.0)) == 7.0
    assert reduced_frequency(DeviceParams(Gamma=0.1)) == math.sqrt(49.01)
