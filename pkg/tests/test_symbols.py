import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from stochlp.symbols import (
    check_derivative_bounds,
    check_dyadic_condition,
    check_ellipticity,
    default_frequency_grid,
    derivative,
    make_fractional_symbol,
    make_heat_symbol,
    make_high_order_symbol,
    make_nonlocal_symbol,
    parse_symbol,
)


def test_fractional_vanishes_at_origin():
    sym = make_fractional_symbol(1, 0.5)
    assert sym.evaluate(0.0, [[0.0]])[0] == 0.0


def test_fractional_time_integral_unit_sphere():
    sym = make_fractional_symbol(2, 1.5)
    xi = np.array([[0.6, 0.8]])
    assert sym.time_integral(1.0, 3.0, xi)[0] == pytest.approx(-2.0, abs=1e-14)


def test_second_order_matches_heat():
    xi = default_frequency_grid(1)
    sym = make_high_order_symbol(1, lambda t, a, b: 1.0, d=1, constant=True)
    heat = make_heat_symbol(1)
    np.testing.assert_allclose(sym.evaluate(0.3, xi), heat.evaluate(0.3, xi), rtol=1e-14, atol=0)


def test_order4_symbol():
    sym = parse_symbol("order4")
    xi = np.array([[0.5], [2.0], [-3.0]])
    np.testing.assert_allclose(sym.evaluate(0.0, xi), -xi[:, 0] ** 4, rtol=1e-14)
    assert sym.order == 4


@pytest.mark.parametrize("ident", ["heat", "frac:0.5", "frac:1", "frac:1.5", "order4", "nonlocal:1:const"])
def test_symbol_zero_at_origin(ident):
    sym = parse_symbol(ident, 2 if ident.startswith("nonlocal") else 1)
    assert abs(sym.evaluate(0.0, np.zeros((1, sym.d)))[0]) == 0.0


@pytest.mark.parametrize("ident", ["heat", "frac:1"])
def test_ellipticity_ratio_one(ident):
    rep = check_ellipticity(parse_symbol(ident))
    assert rep.passed
    assert abs(rep.quantities["inf_ratio"] - 1.0) <= 1e-12


def test_heat_first_derivative_bound():
    sym = make_heat_symbol(1)
    xi = np.array([[0.3], [7.0], [-40.0]])
    d1 = derivative(sym, 0.0, xi, (1,))
    np.testing.assert_allclose(np.abs(d1) / np.abs(xi[:, 0]), 2.0, rtol=1e-7)
    assert check_derivative_bounds(sym).passed


def test_dyadic_heat_oracle_six():
    # int_{R<=|xi|<2R} |2 xi| dxi / R^2 = 2 * (4R^2 - R^2) / R^2 = 6
    R = np.logspace(-2, 2, 9)
    rep = check_dyadic_condition(make_heat_symbol(1), R, [(((1,),), (1,))])
    ratios = [r["ratio"] for r in rep.tables["dyadic"]]
    np.testing.assert_allclose(ratios, 6.0, rtol=1e-6)


def test_dyadic_requires_four_decades():
    with pytest.raises(ValueError):
        check_dyadic_condition(make_heat_symbol(1), [1.0, 10.0], [(((1,),), (1,))])


def test_unknown_symbol():
    with pytest.raises(ValueError):
        parse_symbol("nope")
    with pytest.raises(ValueError):
        make_fractional_symbol(1, 2.5)


def _time_dependent():
    return make_high_order_symbol(1, lambda t, a, b: 1.0 + 0.5 * np.sin(3 * t), d=1)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0, 2), dt=st.floats(0.01, 2), k=st.floats(0.1, 20))
def test_time_integral_matches_quad(s, dt, k):
    sym = _time_dependent()
    xi = np.array([[k]])
    ref, _ = quad(lambda r: float(np.real(sym.evaluate(r, xi)[0])), s, s + dt, epsabs=0, epsrel=1e-13)
    got = float(np.real(sym.time_integral(s, s + dt, xi)[0]))
    assert got == pytest.approx(ref, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(g=st.floats(0.2, 2.0), s=st.floats(0, 3), dt=st.floats(0.01, 3), k=st.floats(0.01, 100))
def test_fractional_closed_form_integral(g, s, dt, k):
    sym = make_fractional_symbol(1, g)
    xi = np.array([[k]])
    assert sym.time_integral(s, s + dt, xi)[0] == pytest.approx(sym.quadrature_integral(s, s + dt, xi)[0],
                                                                 rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(g=st.floats(0.2, 2.0))
def test_ellipticity_fractional_any_gamma(g):
    rep = check_ellipticity(make_fractional_symbol(1, g))
    assert abs(rep.quantities["inf_ratio"] - 1.0) <= 1e-12


@settings(max_examples=10, deadline=None)
@given(g=st.floats(0.3, 1.9))
def test_dyadic_ratio_constant_for_homogeneous(g):
    # the difference step is relative only for |xi| >= 1, so the sweep starts there
    rep = check_dyadic_condition(make_fractional_symbol(1, g), np.logspace(0, 4, 5), [(((1,),), (1,))])
    r = np.array([row["ratio"] for row in rep.tables["dyadic"]])
    assert r.max() / r.min() - 1 <= 1e-6


def test_nonlocal_constant_density_is_fractional_multiple():
    sym = make_nonlocal_symbol(1.0, lambda t, w: np.ones(w.shape[:-1]), d=2)
    frac = make_fractional_symbol(2, 1.0)
    xi = default_frequency_grid(2)
    ratio = sym.evaluate(0.0, xi) / frac.evaluate(0.0, xi)
    assert np.all(ratio.real > 0)
    assert np.max(np.abs(ratio / np.mean(ratio) - 1)) <= 1e-6
