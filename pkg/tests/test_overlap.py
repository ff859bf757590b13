import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmem.errors import ConfigurationError, DomainError, NumericalError
from qmem.overlap import (Geometry, OverlapTable, build_overlap_table, gauss_hermite,
                          overlap_all, overlap_f, overlap_values)

# Composite trapezoid, 10^6 intervals on [-10 l, 10 l], computed independently.
TRAPEZOID = {
    0.8: (0.05700234308076815, -0.09584571762140921, 0.18117596480260376),
    -0.3: (0.3048957504191082, 0.20184182458567096, 0.2039926011473505),
    0.123: (0.38540643768077804, -0.1052114446311394, 0.11239775443597992),
}
PAIRS = ((0, 0), (0, 1), (1, 1))

finite_x = st.floats(-8.0, 8.0, allow_nan=False)


@pytest.mark.parametrize("x_v", sorted(TRAPEZOID))
@pytest.mark.parametrize("k", range(3))
def test_matches_trapezoid_oracle(geom, x_v, k):
    ref = TRAPEZOID[x_v][k]
    got = overlap_f(*PAIRS[k], x_v, geom)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-15)


def test_f01_vanishes_at_origin(geom):
    assert abs(overlap_f(0, 1, 0.0, geom)) < 1e-15


def test_symmetric_index_order(geom):
    assert overlap_f(1, 0, 0.4, geom) == overlap_f(0, 1, 0.4, geom)


@pytest.mark.parametrize("x_v", [50.0, -50.0])
def test_tails_vanish(geom, x_v):
    assert abs(overlap_f(0, 0, x_v, geom)) < 1e-12


def test_wide_kernel_recovers_normalisation():
    g = Geometry(lam=1e6)
    for x_v in (-1.0, 0.0, 2.5):
        assert overlap_f(1, 1, x_v, g) == pytest.approx(1.0, abs=1e-6)
        assert overlap_f(0, 0, x_v, g) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(finite_x)
def test_parity(x_v):
    g = Geometry()
    f00, f01, f11 = overlap_values(np.array([x_v, -x_v]), g)
    assert f00[0] == pytest.approx(f00[1], abs=1e-13)
    assert f01[0] == pytest.approx(-f01[1], abs=1e-13)
    assert f11[0] == pytest.approx(f11[1], abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.floats(-30.0, 30.0, allow_nan=False), st.floats(0.05, 2.0), st.floats(0.02, 1.0))
def test_bounds(x_v, l, lam):
    f00, f01, f11 = overlap_values(x_v, Geometry(l=l, lam=lam))
    assert 0.0 <= f00 <= 1.0 and 0.0 <= f11 <= 1.0
    assert abs(f01) <= 1.0
    # Cauchy-Schwarz in the sech-weighted inner product
    assert f01 ** 2 <= 2.0 * f00 * f11 + 1e-15


@pytest.mark.parametrize("x_v", [-1.3, 0.0, 0.45, 0.8, 2.0])
def test_derivatives_match_finite_differences(geom, x_v):
    h = 1e-4
    d = overlap_all(np.array([x_v - h, x_v, x_v + h]), geom)
    fd1 = (d[0, :, 2] - d[0, :, 0]) / (2 * h)
    fd2 = (d[1, :, 2] - d[1, :, 0]) / (2 * h)
    np.testing.assert_allclose(d[1, :, 1], fd1, atol=1e-5)
    np.testing.assert_allclose(d[2, :, 1], fd2, atol=1e-5)


def test_third_derivative_matches_finite_difference(geom):
    h = 1e-4
    d = overlap_all(np.array([0.3 - h, 0.3, 0.3 + h]), geom, max_order=3)
    np.testing.assert_allclose(d[3, :, 1], (d[2, :, 2] - d[2, :, 0]) / (2 * h), atol=1e-4)


def test_shape_single_maximum_and_sign_change(geom):
    x = np.linspace(-5, 5, 2001)
    f00, f01, f11 = overlap_values(x, geom)
    peaks = lambda f: x[1:-1][(f[1:-1] > f[:-2]) & (f[1:-1] > f[2:])]
    assert peaks(f00).size == 1
    # |psi_1|^2 has two lobes, so the F11 maximum is a mirror pair
    p11 = peaks(f11)
    assert p11.size == 2 and p11[0] == pytest.approx(-p11[1])
    assert np.count_nonzero(np.diff(np.sign(f01[np.abs(f01) > 1e-14])) != 0) == 1


def test_domain_errors(geom):
    with pytest.raises(DomainError):
        overlap_f(0, 2, 0.0, geom)
    with pytest.raises(DomainError):
        overlap_f(0, 0, math.nan, geom)
    with pytest.raises(DomainError):
        overlap_f(0, 0, 0.0, geom, deriv_order=3)
    with pytest.raises(DomainError):
        Geometry(l=-1.0)
    with pytest.raises(DomainError):
        Geometry(lam=0.0)
    with pytest.raises(ConfigurationError):
        overlap_all(0.0, geom, n_nodes=100)


def test_unconverged_quadrature_reports_residual():
    # A kernel much narrower than the node spacing, centred on a node of the
    # fine rule, gives wildly different answers with the coarse rule.
    g = Geometry(l=5.0, lam=1e-3)
    u, _ = gauss_hermite(200)
    with pytest.raises(NumericalError) as info:
        overlap_f(0, 0, -g.l * u[100], g, n_nodes=200)
    assert info.value.residual > 0


def test_gauss_hermite_weights_normalised():
    u, w = gauss_hermite(800)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert (w * u ** 2).sum() == pytest.approx(0.5, abs=1e-14)


def test_table_node_exact(geom):
    t = build_overlap_table(geom, -5, 5, 2001)
    direct = overlap_values(0.0, geom)
    assert np.array_equal(t.values(0.0), direct)
    k = 777
    assert np.array_equal(t.values(t.x[k], 1), t.data[1, :, k])


def test_table_off_node_accuracy(table, geom):
    for x_v in (0.123, -2.71828, 4.4444):
        for d in range(3):
            np.testing.assert_allclose(table.values(x_v, d), overlap_values(x_v, geom, d),
                                       atol=1e-7 * 10 ** d)
    np.testing.assert_allclose(table.values(0.123), overlap_values(0.123, geom), atol=1e-10)


def test_table_out_of_range_falls_back(geom):
    t = build_overlap_table(geom, -1, 1, 101)
    assert np.array_equal(t.values(3.0), overlap_values(3.0, geom))


def test_table_rejects_degenerate_grid(geom):
    with pytest.raises(ConfigurationError):
        build_overlap_table(geom, -5, 5, 2)


def test_table_csv_roundtrip(tmp_path, geom):
    t = build_overlap_table(geom, -2, 2, 41)
    path = tmp_path / "table.csv"
    t.to_csv(path)
    assert path.read_text().splitlines()[0] == "x_V,F00,F01,F11,F00',F01',F11',F00'',F01'',F11''"
    back = OverlapTable.from_csv(path, geom)
    assert np.array_equal(back.x, t.x) and np.array_equal(back.data, t.data)
