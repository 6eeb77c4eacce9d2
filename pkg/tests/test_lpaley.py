import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochlp.kernels import KernelFamily, SpaceTimeGrid
from stochlp.lpaley import (
    BatteryField,
    ScalarField,
    VectorField,
    g_l2_squared_exact,
    g_operator,
    kernel_convolve,
    lp_battery,
    lp_norm,
    maximal_function,
    maximal_inequality_check,
    sharp_function,
    verify_lpaley,
)
from stochlp.metric import parabolic_metric
from stochlp.symbols import make_fractional_symbol, make_heat_symbol

GRID = SpaceTimeGrid(math.pi, 32, 1, 1.0, 8)
RHO = parabolic_metric(2.0)


def mode_field(k, grid=GRID, K=2, amp=1.0):
    x = grid.points()[..., 0]
    vals = np.zeros((K, grid.n_t) + grid.shape)
    vals[0] = amp * np.cos(k * x)[None]
    return VectorField(vals, grid)


def random_vector(seed, grid=GRID, K=2):
    rng = np.random.default_rng(seed)
    return VectorField(rng.normal(size=(K, grid.n_t) + grid.shape), grid)


def random_scalar(seed, grid=GRID):
    rng = np.random.default_rng(seed)
    return ScalarField(rng.normal(size=(grid.n_t,) + grid.shape), grid)


@pytest.mark.parametrize("gamma", [2.0, 1.0, 0.5])
def test_single_mode_closed_form(gamma):
    # G^2 = cos^2(kx) |k|^gamma int_0^t exp(-2 (t - r) |k|^gamma) dr
    fam = KernelFamily(make_fractional_symbol(1, gamma))
    k = 3.0
    G = g_operator(fam, mode_field(k)).values
    t = GRID.times[:, None]
    x = GRID.points()[..., 0][None]
    ref = np.sqrt(np.cos(k * x) ** 2 * -np.expm1(-2 * t * k ** gamma) / 2)
    assert np.max(np.abs(G - ref)) <= 1e-9


def test_g_of_zero_and_constant():
    fam = KernelFamily(make_heat_symbol(1))
    assert np.all(g_operator(fam, mode_field(0.0, amp=0.0)).values == 0)
    const = g_operator(fam, mode_field(0.0, amp=2.0)).values
    assert np.max(np.abs(const)) <= 1e-12


def test_kernel_convolve_constant_field_vanishes():
    fam = KernelFamily(make_heat_symbol(1))
    out = kernel_convolve(fam, mode_field(0.0, amp=3.0), 0.2, 0.7)
    assert np.max(np.abs(out)) <= 1e-12


def test_g_plancherel_identity():
    fam = KernelFamily(make_heat_symbol(1))
    f = random_vector(3)
    G = g_operator(fam, f)
    assert lp_norm(G, 2) ** 2 == pytest.approx(g_l2_squared_exact(fam, f), rel=1e-6)


@settings(max_examples=8, deadline=None)
@given(a=st.integers(0, 1000), b=st.integers(0, 1000))
def test_g_subadditive(a, b):
    fam = KernelFamily(make_heat_symbol(1))
    f1, f2 = random_vector(a), random_vector(b)
    s = VectorField(f1.values + f2.values, GRID)
    lhs = g_operator(fam, s).values
    rhs = g_operator(fam, f1).values + g_operator(fam, f2).values
    assert np.all(lhs <= rhs + 1e-10)


def test_maximal_of_constant():
    f = ScalarField(np.full((GRID.n_t,) + GRID.shape, 5.0), GRID)
    np.testing.assert_allclose(maximal_function(f, RHO).values, 5.0, rtol=1e-14)
    assert np.max(np.abs(sharp_function(f, RHO).values)) <= 1e-14


def test_lp_norm_of_one():
    f = ScalarField(np.ones((GRID.n_t,) + GRID.shape), GRID)
    V = GRID.T * GRID.volume
    for p in (1, 2, 4):
        assert lp_norm(f, p) == pytest.approx(V ** (1 / p), rel=1e-12)
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(-5, 5).filter(lambda c: c == 0 or abs(c) > 1e-3),
       p=st.sampled_from([1, 2, 3, 4]))
def test_norm_and_maximal_homogeneous(seed, c, p):
    f = random_scalar(seed)
    cf = ScalarField(c * f.values, GRID)
    assert lp_norm(cf, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(maximal_function(cf, RHO).values, abs(c) * maximal_function(f, RHO).values,
                               rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(sharp_function(cf, RHO).values, abs(c) * sharp_function(f, RHO).values,
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(a=st.integers(0, 10_000), b=st.integers(0, 10_000))
def test_maximal_sublinear(a, b):
    f, g = random_scalar(a), random_scalar(b)
    s = ScalarField(f.values + g.values, GRID)
    lhs = maximal_function(s, RHO).values
    rhs = maximal_function(f, RHO).values + maximal_function(g, RHO).values
    assert np.all(lhs <= rhs * (1 + 1e-12))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-10, 10))
def test_sharp_shift_invariant_and_bounded(seed, shift):
    f = random_scalar(seed)
    moved = ScalarField(f.values + shift, GRID)
    np.testing.assert_allclose(sharp_function(moved, RHO).values, sharp_function(f, RHO).values, atol=1e-10)
    assert np.all(sharp_function(f, RHO).values <= 2 * maximal_function(f, RHO).values * (1 + 1e-12))


def test_maximal_dominates_pointwise():
    f = random_scalar(7)
    assert np.all(maximal_function(f, RHO).values >= np.abs(f.values) * (1 - 1e-12))


def test_maximal_inequality_check_reports_fs_constant():
    fields = [random_scalar(s) for s in range(3)]
    rep = maximal_inequality_check(fields, RHO, 2)
    assert rep.passed
    assert rep.quantities["hl_constant"] >= 1.0
    assert rep.quantities["fs_constant"] is not None


def test_battery_size():
    fam = KernelFamily(make_heat_symbol(1))
    assert len(lp_battery(fam)) == 20
    assert len(lp_battery(fam, extended=True)) > 20


def test_verify_lpaley_small():
    fam = KernelFamily(make_heat_symbol(1))
    rep = verify_lpaley(fam, grid=SpaceTimeGrid(math.pi, 32, 1, 1.0, 8), refine=False)
    assert rep.passed
    assert rep.quantities["plancherel_rel_err"] <= 1e-6


def test_zero_field_excluded():
    fam = KernelFamily(make_heat_symbol(1))
    first = lp_battery(fam)[0]
    z = BatteryField("zero", "zero", lambda g: VectorField(np.zeros((2, g.n_t) + g.shape), g))
    rep = verify_lpaley(fam, test_fields=[first, z], grid=SpaceTimeGrid(math.pi, 32, 1, 1.0, 8), refine=False)
    assert any("excluded: zero input" in n for n in rep.notes)
