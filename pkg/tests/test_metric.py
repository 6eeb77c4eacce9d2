import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochlp.bernstein import catalog
from stochlp.kernels import KernelFamily
from stochlp.metric import (
    ball_volume,
    doubling_check,
    hormander_grid,
    hormander_integral,
    hormander_sup_estimate,
    parabolic_metric,
    stratified_pairs,
    subordinate_metric,
)
from stochlp.symbols import make_fractional_symbol, make_heat_symbol

# heat, X = (1, 0), Y = (0.9, 0.1), T = 2, default scale-adapted grid
HEAT_GOLDEN = 0.01080075402419712


def test_parabolic_distance_d2():
    rho = parabolic_metric(2.0)
    assert rho.evaluate((2.0, [0.0, 0.0]), (1.0, [3.0, 4.0])) == pytest.approx(6.0, abs=1e-14)


def test_sqrt_subordinate_is_l1_distance():
    rho = subordinate_metric(catalog("power", 0.5))
    assert rho.evaluate((0.5, [0.0]), (0.0, [1.0])) == pytest.approx(1.5, rel=1e-9)


def test_identity_inverse_doubling_constant():
    rho = subordinate_metric(catalog("identity"))
    assert rho.meta["N_phi"] == pytest.approx(2.0, rel=1e-9)
    assert rho.C0 == pytest.approx(4 * rho.meta["N_phi"])


@pytest.mark.parametrize("rho", [parabolic_metric(2.0), parabolic_metric(1.0), parabolic_metric(0.5),
                                 subordinate_metric(catalog(1, 0.25, 0.75))], ids=lambda r: r.label)
def test_gamma0_identity(rho):
    assert rho.gamma0 == (2 * rho.C0 * rho.N_rho + 1) * rho.N_rho


def test_parabolic_ball_volume_closed_form():
    # |B_c| = int_{-c^2}^{c^2} 2 (c - sqrt|tau|) dtau = 4 c^3 / 3 in d = 1
    rho = parabolic_metric(2.0)
    exact = 4.0 / 3.0 * 0.5 ** 3
    assert ball_volume(rho, 0.5) == pytest.approx(exact, rel=1e-9)


def test_doubling_unit_factor():
    rep = doubling_check(parabolic_metric(2.0), 1.0)
    assert rep.quantities["max_ratio"] == pytest.approx(1.0, abs=1e-14)


def test_doubling_heat_exact_ratio():
    rep = doubling_check(parabolic_metric(2.0), 2.0)
    assert rep.passed
    assert rep.quantities["max_ratio_exact"] == pytest.approx(8.0, rel=1e-9)


def test_hormander_same_point_is_zero():
    fam = KernelFamily(make_heat_symbol(1))
    assert hormander_integral(fam, parabolic_metric(2.0), (1.0, [0.0]), (1.0, [0.0]), 2.0) == 0.0


def test_hormander_golden_and_refinement():
    fam = KernelFamily(make_heat_symbol(1))
    rho = parabolic_metric(2.0)
    X, Y = (1.0, [0.0]), (0.9, [0.1])
    base = hormander_integral(fam, rho, X, Y, 2.0)
    assert base == pytest.approx(HEAT_GOLDEN, rel=1e-9)
    g = hormander_grid(rho.evaluate(X, Y), rho.C0, points_per_radius=256)
    fine = hormander_integral(fam, rho, X, Y, 2.0, grid=g)
    assert max(fine / base, base / fine) < 1.1


def test_hormander_equal_times_finite():
    fam = KernelFamily(make_fractional_symbol(1, 1.0))
    v = hormander_integral(fam, parabolic_metric(1.0), (1.0, [0.0]), (1.0, [0.2]), 2.0)
    assert np.isfinite(v) and v > 0


@settings(max_examples=6, deadline=None)
@given(shift=st.floats(-3, 3))
def test_hormander_translation_invariant(shift):
    fam = KernelFamily(make_heat_symbol(1))
    rho = parabolic_metric(2.0)
    a = hormander_integral(fam, rho, (1.0, [0.0]), (0.95, [0.1]), 2.0)
    b = hormander_integral(fam, rho, (1.0, [shift]), (0.95, [shift + 0.1]), 2.0)
    assert b == pytest.approx(a, rel=1e-9)


def test_hormander_swap_symmetry_equal_times():
    fam = KernelFamily(make_heat_symbol(1))
    rho = parabolic_metric(2.0)
    a = hormander_integral(fam, rho, (1.0, [0.0]), (1.0, [0.15]), 2.0)
    b = hormander_integral(fam, rho, (1.0, [0.15]), (1.0, [0.0]), 2.0)
    assert b == pytest.approx(a, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), g=st.sampled_from([0.5, 1.0, 2.0]))
def test_exterior_region_inequality(seed, g):
    # X, Y in B_c(X0) and Z outside B_{gamma0 c}(X0) imply rho(Z, X) >= C0 rho(X, Y)
    rho = parabolic_metric(g)
    rng = np.random.default_rng(seed)
    c = 10 ** rng.uniform(-2, 1)
    X0 = (0.0, np.zeros(1))

    def inside(radius):
        tau = rho.time_radius(radius) * rng.uniform(-1, 1)
        dist = radius - rho.time_part(abs(tau))
        return (tau, np.array([dist * rng.uniform(-1, 1)]))

    X, Y = inside(c), inside(c)
    R = rho.gamma0 * c * (1 + rng.uniform(0, 3))
    theta = rng.uniform(0, 1)
    tau = rho.w_inv(theta * R) * rng.choice([-1, 1])
    Z = (tau, np.array([(1 - theta) * R * rng.choice([-1, 1])]))
    assert rho.evaluate(Z, X0) >= rho.gamma0 * c * (1 - 1e-12)
    assert rho.evaluate(Z, X) >= rho.C0 * rho.evaluate(X, Y) * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_subordinate_quasi_triangle(seed):
    rho = subordinate_metric(catalog(1, 0.25, 0.75))
    rng = np.random.default_rng(seed)
    P = [(rng.uniform(0, 5), rng.uniform(-3, 3, 1)) for _ in range(3)]
    lhs = rho.evaluate(P[0], P[2])
    rhs = rho.N_rho * (rho.evaluate(P[0], P[1]) + rho.evaluate(P[1], P[2]))
    assert lhs <= rhs * (1 + 1e-12)


def test_stratified_pairs_hit_their_scales():
    rho = parabolic_metric(2.0)
    pairs = stratified_pairs(rho, per_scale=3)
    assert len(pairs) == 8 * 3
    for p in pairs:
        assert rho.evaluate(p["X"], p["Y"]) == pytest.approx(p["rho"], rel=1e-9)
        assert 0 < p["X"][0] < p["T"] and 0 < p["Y"][0] < p["T"]


def test_sup_estimate_small_heat():
    rep = hormander_sup_estimate(KernelFamily(make_heat_symbol(1)), parabolic_metric(2.0), n_scales=3,
                                 per_scale=2, refine=False)
    assert rep.passed
    assert math.isfinite(rep.quantities["sup"])
