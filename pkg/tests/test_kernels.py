import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochlp.bernstein import catalog, subordinate_symbol
from stochlp.kernels import (
    KernelFamily,
    SpaceTimeGrid,
    bernstein_kernel_lhs,
    check_scaling_relations,
    frac_power_kernel,
    kernel_field,
    l1_tail,
    scaled_kernels_q,
    time_difference_l1,
    translation_difference_l1,
    verify_kernel_lemma,
)
from stochlp.symbols import make_fractional_symbol, make_heat_symbol, parse_symbol


def gaussian_images(x, tau, L, images=10):
    # heat kernel of d/dt = Laplacian: variance 2 tau, summed over periodic images
    k = np.arange(-images, images + 1)
    z = x[:, None] + 2 * L * k[None, :]
    return np.sum(np.exp(-z ** 2 / (4 * tau)), axis=1) / math.sqrt(4 * math.pi * tau)


def periodic_poisson(x, tau, L):
    # sum_k tau / (pi (tau^2 + (x + 2Lk)^2)) in closed form
    a = math.pi / L
    return np.sinh(a * tau) / (2 * L * (np.cosh(a * tau) - np.cos(a * x)))


def test_heat_kernel_matches_gaussian():
    grid = SpaceTimeGrid(16.0, 1024)
    kf = kernel_field(make_heat_symbol(1), 0.0, 0.25, grid)
    err = np.max(np.abs(kf.values - gaussian_images(grid.axis, 0.25, 16.0)))
    assert err <= 1e-9


def test_poisson_kernel_matches_cauchy():
    grid = SpaceTimeGrid(16.0, 1024)
    kf = kernel_field(make_fractional_symbol(1, 1.0), 0.0, 0.25, grid)
    err = np.max(np.abs(kf.values - periodic_poisson(grid.axis, 0.25, 16.0)))
    assert err <= 1e-7


def test_power_zero_is_kernel_field():
    grid = SpaceTimeGrid(8.0, 256)
    sym = make_fractional_symbol(1, 1.5)
    a = frac_power_kernel(sym, 0.0, 0.5, grid, 0.0).values
    b = kernel_field(sym, 0.0, 0.5, grid).values
    assert np.max(np.abs(a - b)) <= 1e-14


@pytest.mark.parametrize("s,t", [(0.0, 0.3), (1.0, 4.0)])
def test_heat_q1_is_unit_time_kernel(s, t):
    q1, _ = scaled_kernels_q(make_heat_symbol(1), s, t, SpaceTimeGrid(16.0, 512))
    ref = kernel_field(make_heat_symbol(1), 0.0, 1.0, q1.grid)
    assert np.max(np.abs(q1.values - ref.values)) <= 1e-9


def test_fractional_q1_is_unit_poisson():
    q1, _ = scaled_kernels_q(make_fractional_symbol(1, 1.0), 0.0, 0.7, SpaceTimeGrid(16.0, 1024))
    assert np.max(np.abs(q1.values - periodic_poisson(q1.grid.axis, 1.0, q1.grid.L))) <= 1e-7


def test_l1_tail_total_mass_and_outside_box():
    kf = kernel_field(make_heat_symbol(1), 0.0, 0.5, SpaceTimeGrid(16.0, 1024))
    assert l1_tail(kf, 0.0) == pytest.approx(1.0, abs=1e-8)
    with pytest.warns(RuntimeWarning):
        assert l1_tail(kf, 17.0) == 0.0


def test_translation_difference_trivial_shifts():
    kf = kernel_field(make_heat_symbol(1), 0.0, 0.5, SpaceTimeGrid(8.0, 256))
    assert translation_difference_l1(kf, 0.0) == 0.0
    assert translation_difference_l1(kf, 16.0) == 0.0


def test_time_difference_equal_times():
    assert time_difference_l1(make_heat_symbol(1), 0.0, 1.0, 1.0, SpaceTimeGrid(8.0, 256)) == 0.0


@settings(max_examples=15, deadline=None)
@given(g=st.floats(0.3, 2.0), tau=st.floats(0.05, 2.0))
def test_plancherel_consistency(g, tau):
    grid = SpaceTimeGrid(8.0, 256)
    kf = kernel_field(make_fractional_symbol(1, g), 0.0, tau, grid)
    rhs = float(np.sum(np.abs(kf.hat) ** 2)) / grid.volume
    assert kf.l2_squared() == pytest.approx(rhs, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(g=st.floats(0.5, 2.0), cs=st.lists(st.floats(0, 7.9), min_size=2, max_size=6))
def test_l1_tail_monotone(g, cs):
    kf = kernel_field(make_fractional_symbol(1, g), 0.0, 0.4, SpaceTimeGrid(8.0, 256))
    vals = [l1_tail(kf, c) for c in sorted(cs)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


@settings(max_examples=15, deadline=None)
@given(g=st.floats(0.5, 2.0), k=st.integers(-200, 200))
def test_translation_difference_bounded(g, k):
    grid = SpaceTimeGrid(8.0, 256)
    kf = kernel_field(make_fractional_symbol(1, g), 0.0, 0.4, grid)
    assert translation_difference_l1(kf, k * grid.dx) <= 2 * kf.l1() * (1 + 1e-12)


@pytest.mark.parametrize("ident", ["heat", "frac:1", "frac:1.5", "order4"])
def test_scaling_relations(ident):
    rep = check_scaling_relations(parse_symbol(ident), 0.0, 0.5)
    assert rep.passed, rep.quantities


def test_kernel_family_zero_after_t():
    fam = KernelFamily(make_heat_symbol(1))
    grid = SpaceTimeGrid(8.0, 64)
    h = fam.hats([0.2, 1.0, 1.5], 1.0, grid)
    assert np.all(h[1:] == 0)
    assert np.any(h[0] != 0)


@pytest.mark.parametrize("lemma", ["mc2", "mc3"])
def test_lemma_slopes_heat(lemma):
    rep = verify_kernel_lemma(make_heat_symbol(1), None, lemma, refine=False, frequency=False)
    assert abs(rep.quantities["slope"] - 2.0) <= 0.1


def test_bernstein_kernel_lhs_decays_with_distance():
    phi = catalog(1, 0.25, 0.75)
    vals = [bernstein_kernel_lhs(phi, 1.0, x) for x in (0.5, 2.0, 8.0)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert subordinate_symbol(phi).bernstein is phi
