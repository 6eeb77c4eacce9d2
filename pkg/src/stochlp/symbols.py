"""Pseudo-differential symbols psi(t, xi) and numerical certificates.

Frequencies are arrays whose last axis has length ``d``; for ``d == 1`` a
plain array of scalars is accepted as well.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .quadrature import (fd_derivative, gauss_legendre, midpoint_doubling, multi_indices,
                         shell_integral, sphere_rule)
from .report import CheckReport

__all__ = [
    "Symbol",
    "sqnorm",
    "as_points",
    "make_heat_symbol",
    "make_fractional_symbol",
    "make_high_order_symbol",
    "make_nonlocal_symbol",
    "parse_symbol",
    "check_ellipticity",
    "check_derivative_bounds",
    "check_dyadic_condition",
    "derivative",
]


def as_points(xi, d: int) -> np.ndarray:
    """Return ``xi`` as a float array with trailing axis of length d."""
    xi = np.asarray(xi, dtype=float)
    if d == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        return xi[..., None]
    if xi.shape[-1] != d:
        raise ValueError(f"frequency array has trailing axis {xi.shape[-1]}, expected {d}")
    return xi


def sqnorm(xi, d: int) -> np.ndarray:
    """|xi|^2 over the trailing axis (same summation order everywhere)."""
    xi = as_points(xi, d)
    return np.sum(xi * xi, axis=-1)


@dataclass(frozen=True)
class Symbol:
    """Time-dependent Fourier symbol psi(t, xi).

    Attributes
    ----------
    label : str
        Operator family name (catalog id when built from one).
    d : int
        Spatial dimension.
    order : float
        Homogeneity order gamma.
    nu : float
        Claimed ellipticity constant in Re[-psi] >= nu |xi|^gamma.
    func : callable
        ``func(t, xi)`` with xi of shape (..., d).
    integral : callable, optional
        Closed form of int_s^t psi(r, xi) dr.
    multiplier_func : callable, optional
        Half-power multiplier; defaults to |xi|^{gamma/2}.
    time_independent : bool
        psi does not depend on t.
    """

    label: str
    d: int
    order: float
    nu: float
    func: Callable[[float, np.ndarray], np.ndarray]
    integral: Callable[[float, float, np.ndarray], np.ndarray] | None = None
    multiplier_func: Callable[[np.ndarray], np.ndarray] | None = None
    time_independent: bool = False
    meta: dict = field(default_factory=dict)
    bernstein: Any = None
    numeric_integral: Callable[[float, float, np.ndarray], np.ndarray] | None = None

    @property
    def d0(self) -> int:
        return self.d // 2 + 1

    @property
    def has_closed_form(self) -> bool:
        return self.integral is not None

    def __call__(self, t: float, xi) -> np.ndarray:
        return self.evaluate(t, xi)

    def evaluate(self, t: float, xi) -> np.ndarray:
        return self.func(float(t), as_points(xi, self.d))

    def time_integral(self, s: float, t: float, xi) -> np.ndarray:
        """int_s^t psi(r, xi) dr, closed form when available."""
        xi = as_points(xi, self.d)
        if self.integral is not None:
            return self.integral(float(s), float(t), xi)
        if self.numeric_integral is not None:
            return self.numeric_integral(float(s), float(t), xi)
        return self.quadrature_integral(s, t, xi)

    def quadrature_integral(self, s: float, t: float, xi, rtol: float = 1e-9) -> np.ndarray:
        """Composite midpoint with panel doubling, independent of any closed form."""
        xi = as_points(xi, self.d)
        if t == s:
            return np.zeros(xi.shape[:-1])
        if self.time_independent:
            return (t - s) * self.func(float(s), xi)
        return midpoint_doubling(lambda r: np.stack([self.func(float(ri), xi) for ri in r]),
                                 float(s), float(t), rtol=rtol)

    def multiplier(self, xi) -> np.ndarray:
        """Half-power multiplier m(xi); |xi|^{gamma/2} unless overridden."""
        xi = as_points(xi, self.d)
        if self.multiplier_func is not None:
            return self.multiplier_func(xi)
        return np.sqrt(np.sum(xi * xi, axis=-1) ** (self.order / 2))

    def dissipation(self, t: float, xi) -> np.ndarray:
        """Re[-psi(t, xi)]."""
        return np.real(-self.evaluate(t, xi))


# --------------------------------------------------------------- catalog

def make_fractional_symbol(d: int, gamma: float, label: str | None = None) -> Symbol:
    """psi(t, xi) = -|xi|^gamma, 0 < gamma <= 2, with closed-form time integral."""
    if not (0 < gamma <= 2):
        raise ValueError("fractional order must lie in (0, 2]")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    g = float(gamma)
    h = g / 2

    def evaluate(t, xi):
        return -(np.sum(xi * xi, axis=-1) ** h)

    def integral(s, t, xi):
        return -(t - s) * np.sum(xi * xi, axis=-1) ** h

    return Symbol(label or f"frac:{g:g}", d, g, 1.0, evaluate, integral, time_independent=True)


def make_heat_symbol(d: int = 1) -> Symbol:
    """psi(t, xi) = -|xi|^2."""
    return make_fractional_symbol(d, 2.0, label="heat")


def make_high_order_symbol(m: int, coeffs, d: int = 1, nu: float = 1.0, constant: bool = False,
                           label: str | None = None) -> Symbol:
    """psi(t, xi) = -sum_{|alpha|=|beta|=m} a^{alpha beta}(t) xi^alpha xi^beta.

    Parameters
    ----------
    m : int
        Half order; gamma = 2m.
    coeffs : callable
        ``coeffs(t, alpha, beta)`` returning a complex coefficient.
    nu : float
        Caller-claimed ellipticity constant.
    constant : bool
        Coefficients do not depend on t (enables the exact time integral).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    alphas = multi_indices(d, m, m)
    powers = np.array(alphas, dtype=float)

    def coef_matrix(t):
        return np.array([[complex(coeffs(t, a, b)) for b in alphas] for a in alphas])

    def monomials(xi):
        return np.prod(xi[..., None, :] ** powers, axis=-1)

    def contract(A, xi):
        mon = monomials(xi)
        out = -np.einsum("...a,ab,...b->...", mon, A, mon)
        return out.real.copy() if np.all(A.imag == 0) else out

    def evaluate(t, xi):
        return contract(coef_matrix(t), xi)

    def numeric(s, t, xi):
        if t == s:
            return np.zeros(xi.shape[:-1])
        if constant:
            return contract((t - s) * coef_matrix(s), xi)
        A = midpoint_doubling(lambda r: np.stack([coef_matrix(float(ri)) for ri in r]), s, t)
        return contract(A, xi)

    return Symbol(label or f"order{2 * m}", d, float(2 * m), float(nu), evaluate, None,
                  time_independent=constant, numeric_integral=numeric,
                  meta={"m": m, "multi_indices": [list(a) for a in alphas]})


# ---------------------------------------------------------- nonlocal

def _frame(xhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing xhat (N, 3) to an orthonormal frame."""
    helper = np.where(np.abs(xhat[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e2 = helper - np.sum(helper * xhat, axis=1, keepdims=True) * xhat
    e2 /= np.linalg.norm(e2, axis=1, keepdims=True)
    e3 = np.cross(xhat, e2)
    return e2, e3


def _aligned_rule(d: int, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sphere rule in coordinates (u, rest) with u = w . xhat.

    Returns u-values, weights, and the in-plane coordinates used to rebuild w.
    d=2: trapezoid on 512 angles measured from xhat (the kink of |u|^gamma sits
    on a node).  d=3: graded Gauss-Legendre in u on each hemisphere (u = v^4
    removes the |u|^gamma and log|u| endpoint singularities) times a 16-point
    azimuthal trapezoid: 2*24*16 = 768 nodes.
    """
    if d == 1:
        return np.array([1.0, -1.0]), np.array([1.0, 1.0]), np.zeros(2), np.zeros(2)
    if d == 2:
        th = 2 * np.pi * np.arange(512) / 512
        c, s = np.cos(th), np.sin(th)
        c[np.abs(c) < 1e-14] = 0.0
        return c, np.full(512, 2 * np.pi / 512), s, np.zeros(512)
    v, wv = gauss_legendre(24, 0.0, 1.0)
    u = v ** 4
    wu = 4 * v ** 3 * wv
    az = 2 * np.pi * np.arange(16) / 16
    U = np.concatenate([u, -u])
    WU = np.concatenate([wu, wu])
    uu, aa = np.meshgrid(U, az, indexing="ij")
    ww = np.repeat(WU, 16) * (2 * np.pi / 16)
    sin = np.sqrt(np.maximum(0.0, 1 - uu ** 2))
    return uu.ravel(), ww, (sin * np.cos(aa)).ravel(), (sin * np.sin(aa)).ravel()


def make_nonlocal_symbol(gamma: float, m_density, d: int = 2, time_independent: bool = True,
                         nu: float | None = None, label: str | None = None) -> Symbol:
    """Stable-type nonlocal symbol

        psi(t, xi) = -c1 int_{S^{d-1}} |(w, xi)|^gamma [1 - i phi(w, xi)] m(t, w) dS(w)

    with phi = c2 sgn(w, xi) for gamma != 1 and -(2/pi) sgn(w, xi) log|(w, xi)|
    for gamma = 1.  c2 = tan(pi gamma / 2); c1 normalizes the constant density
    m = 1 to -|xi|^gamma under the same quadrature rule.

    ``m_density(t, w)`` receives unit vectors of shape (..., d).  At gamma = 1
    the cancellation int m(t, w) w dS = 0 is verified at construction.
    """
    if not (0 < gamma < 2):
        raise ValueError("nonlocal order must lie in (0, 2)")
    if d not in (1, 2, 3):
        raise NotImplementedError("nonlocal symbols are provided for d <= 3")
    g = float(gamma)
    U, W, P1, P2 = _aligned_rule(d, g)
    absu = np.abs(U)
    base = absu ** g
    c1 = 1.0 / float(np.sum(W * base))
    c2 = math.tan(math.pi * g / 2) if g != 1.0 else None
    sgn = np.sign(U)
    with np.errstate(divide="ignore", invalid="ignore"):
        logu = np.where(absu > 0, np.log(np.where(absu > 0, absu, 1.0)), 0.0)

    t_probe = [0.0] if time_independent else list(np.linspace(0.0, 1.0, 5))
    if g == 1.0:
        dirs, wd = sphere_rule(d)
        for tp in t_probe:
            mv = np.asarray(m_density(tp, dirs), dtype=float)
            mom = np.sum((wd * mv)[:, None] * dirs, axis=0)
            tot = float(np.sum(wd * mv))
            if np.max(np.abs(mom)) > 1e-8 * max(tot, 1e-300):
                raise ValueError(f"cancellation condition violated at gamma=1: "
                                 f"int m w dS = {mom.tolist()} at t={tp}")

    def nodes(xi):
        r = np.sqrt(np.sum(xi * xi, axis=-1))
        safe = np.where(r > 0, r, 1.0)
        xhat = xi / safe[..., None]
        if d == 1:
            xhat = np.where(r[..., None] > 0, xhat, 1.0)
            return xhat[..., None, :] * U[:, None], r
        if d == 2:
            xhat = np.where(r[..., None] > 0, xhat, np.array([1.0, 0.0]))
            perp = np.stack([-xhat[..., 1], xhat[..., 0]], axis=-1)
            w = U[:, None] * xhat[..., None, :] + P1[:, None] * perp[..., None, :]
            return w, r
        flat = xhat.reshape(-1, 3)
        flat = np.where(r.reshape(-1, 1) > 0, flat, np.array([1.0, 0.0, 0.0]))
        e2, e3 = _frame(flat)
        w = (U[:, None] * flat[:, None, :] + P1[:, None] * e2[:, None, :] + P2[:, None] * e3[:, None, :])
        return w.reshape(xi.shape[:-1] + (len(U), 3)), r

    def evaluate(t, xi):
        w, r = nodes(xi)
        mv = np.asarray(m_density(t, w), dtype=float)
        rg = r[..., None] ** g
        if g == 1.0:
            logr = np.log(np.where(r > 0, r, 1.0))[..., None]
            phase = -(2 / np.pi) * sgn * (logu + logr)
        else:
            phase = c2 * sgn
        integrand = base * (1 - 1j * phase) * mv * W
        out = -c1 * rg[..., 0] * np.sum(integrand, axis=-1)
        return np.where(r > 0, out, 0.0)

    integral = None
    if time_independent:
        def integral(s, t, xi):
            return (t - s) * evaluate(s, xi)

    if nu is None:
        probe, _ = sphere_rule(d)
        nu = float(np.min(np.real(-evaluate(0.0, probe))))
    return Symbol(label or f"nonlocal:{g:g}", d, g, float(nu), evaluate, integral,
                  time_independent=time_independent,
                  meta={"c1": c1, "c2": c2, "calibration": "m=1 reproduces -|xi|^gamma"})


# ------------------------------------------------------------ parsing

def parse_symbol(ident: str, d: int = 1) -> Symbol:
    """Build a catalog symbol from its string id.

    Recognized: ``heat``, ``frac:<gamma>``, ``order<2m>``,
    ``nonlocal:<gamma>:const|aniso``, ``subord:<bernstein id>`` where the
    Bernstein id is e.g. ``alpha-beta:0.25:0.75`` or ``identity``.
    """
    parts = ident.split(":")
    head = parts[0]
    if head == "heat":
        return make_heat_symbol(d)
    if head == "frac":
        return make_fractional_symbol(d, float(parts[1]))
    if head.startswith("order"):
        order = int(head[5:])
        if order % 2:
            raise ValueError("order must be even")
        m = order // 2

        def unit(t, a, b):
            return 1.0 if a == b else 0.0
        # psi = -sum_{|alpha|=m} (xi^alpha)^2; nu is its minimum on the unit sphere
        sym = make_high_order_symbol(m, unit, d=d, constant=True, label=ident)
        if d > 1:
            dirs, _ = sphere_rule(d)
            sym = _replace(sym, nu=float(np.min(sym.dissipation(0.0, dirs))))
        return sym
    if head == "nonlocal":
        g = float(parts[1])
        kind = parts[2] if len(parts) > 2 else "const"
        if kind == "const":
            return make_nonlocal_symbol(g, lambda t, w: np.ones(w.shape[:-1]), d=max(d, 1), label=ident)
        if kind == "aniso":
            return make_nonlocal_symbol(g, lambda t, w: 1.0 + 0.5 * w[..., 0] ** 2, d=d, label=ident)
        raise ValueError(f"unknown nonlocal density {kind!r}")
    if head == "subord":
        from .bernstein import parse_bernstein, subordinate_symbol

        sym = subordinate_symbol(parse_bernstein(":".join(parts[1:])), d)
        return _replace(sym, label=ident)
    raise ValueError(f"unknown symbol id {ident!r}")


def _replace(sym: Symbol, **changes) -> Symbol:
    from dataclasses import replace

    return replace(sym, **changes)


# ------------------------------------------------------------- checks

def _time_list(sym: Symbol, t_samples) -> list[float]:
    return [0.0] if sym.time_independent and t_samples is None else list(
        np.atleast_1d(0.0 if t_samples is None else t_samples))


def _grid_points(sym: Symbol, xi_grid) -> np.ndarray:
    pts = as_points(xi_grid, sym.d).reshape(-1, sym.d)
    if pts.size == 0:
        raise ValueError("empty frequency grid")
    r = np.sqrt(np.sum(pts * pts, axis=-1))
    if np.any(r == 0):
        raise ValueError("frequency grid must exclude the origin")
    return pts


def default_frequency_grid(d: int, decades: int = 4, per_decade: int = 8) -> np.ndarray:
    """Origin-free radial grid times a few directions."""
    r = np.logspace(-decades / 2, decades / 2, decades * per_decade + 1)
    if d == 1:
        return np.concatenate([r, -r])[:, None]
    dirs, _ = sphere_rule(d, 16 if d == 2 else 0)
    if d == 3:
        dirs = dirs[::10]
    return (r[:, None, None] * dirs[None]).reshape(-1, d)


def check_ellipticity(sym: Symbol, t_samples=None, xi_grid=None, tol_rel: float = 1e-12) -> CheckReport:
    """inf over the grid of Re[-psi(t, xi)] / |xi|^gamma against nu."""
    pts = _grid_points(sym, default_frequency_grid(sym.d) if xi_grid is None else xi_grid)
    r = np.sqrt(np.sum(pts * pts, axis=-1))
    inf = np.inf
    nonneg = True
    for t in _time_list(sym, t_samples):
        diss = sym.dissipation(t, pts)
        nonneg &= bool(np.all(diss >= 0))
        inf = min(inf, float(np.min(diss / r ** sym.order)))
    passed = bool(nonneg and inf >= sym.nu * (1 - tol_rel))
    return CheckReport(f"ellipticity[{sym.label}]", passed,
                       {"inf_ratio": inf, "nonnegative_dissipation": nonneg},
                       {"nu": sym.nu}, {"rel": tol_rel})


def derivative(sym: Symbol, t: float, xi, alpha, rel_step: float = 1e-4) -> np.ndarray:
    """Central finite-difference D^alpha_xi psi(t, xi)."""
    pts = as_points(xi, sym.d)
    return fd_derivative(lambda p: sym.evaluate(t, p), pts, alpha, rel_step)


def check_derivative_bounds(sym: Symbol, t_samples=None, xi_grid=None, max_order: int | None = None,
                            strict: bool = True) -> CheckReport:
    """sup of |D^alpha psi| |xi|^{|alpha| - gamma} over the grid, |alpha| <= max_order."""
    max_order = sym.d0 if max_order is None else int(max_order)
    if strict and max_order > sym.d0:
        raise ValueError(f"max_order {max_order} exceeds d0 = {sym.d0}")
    pts = _grid_points(sym, default_frequency_grid(sym.d) if xi_grid is None else xi_grid)
    r = np.sqrt(np.sum(pts * pts, axis=-1))
    per_order = {}
    sup = 0.0
    for alpha in multi_indices(sym.d, max_order):
        k = sum(alpha)
        for t in _time_list(sym, t_samples):
            v = np.abs(derivative(sym, t, pts, alpha)) * r ** (k - sym.order)
            m = float(np.max(v))
            sup = max(sup, m)
            key = f"order_{k}"
            per_order[key] = max(per_order.get(key, 0.0), m)
    passed = bool(np.isfinite(sup))
    return CheckReport(f"derivative_bounds[{sym.label}]", passed,
                       {"sup": sup, **per_order, "max_order": max_order},
                       notes=["central differences, h = 1e-4 max(|xi|, 1)"])


def _normalize_combo(combo, d):
    alphas, ks = combo
    alphas = [tuple(np.atleast_1d(a).astype(int).tolist()) for a in alphas]
    for a in alphas:
        if len(a) != d:
            raise ValueError("multi-index length must match the dimension")
    return alphas, [int(k) for k in ks]


def check_dyadic_condition(sym: Symbol, R_list, index_combos, t_samples=None, nu_inv: float | None = None,
                           tol_rel: float = 1e-6, enforce_budget: bool = True) -> CheckReport:
    """Dyadic-shell integrals of products of symbol derivatives.

    For each R, combo ((alpha_i), (k_i)) and t, computes

        ratio = int_{R <= |xi| < 2R} prod |D^{alpha_i} psi|^{k_i} dxi / R^{d + sum k_i (gamma - |alpha_i|)}.

    Combos must satisfy sum |alpha_i| + sum k_i <= d0 + #{i: k_i > 0}
    (``enforce_budget=False`` skips this for exploratory runs).
    """
    R_list = np.asarray(R_list, dtype=float)
    if R_list.size == 0:
        raise ValueError("empty R list")
    if enforce_budget and math.log10(R_list.max() / R_list.min()) < 4 - 1e-9:
        raise ValueError("R sweep must span at least 4 decades")
    rows = []
    sup = 0.0
    spreads = {}
    for ci, combo in enumerate(index_combos):
        alphas, ks = _normalize_combo(combo, sym.d)
        budget = sym.d0 + sum(1 for k in ks if k > 0)
        used = sum(sum(a) for a in alphas) + sum(ks)
        if enforce_budget and used > budget:
            raise ValueError(f"combo {combo} uses {used} > budget {budget}")
        expo = sym.d + sum(k * (sym.order - sum(a)) for a, k in zip(alphas, ks))
        for t in _time_list(sym, t_samples):
            vals = []
            for R in R_list:
                def integrand(p):
                    out = np.ones(len(p))
                    for a, k in zip(alphas, ks):
                        if k:
                            out = out * np.abs(derivative(sym, t, p, a)) ** k
                    return out
                ratio = shell_integral(integrand, R, sym.d) / R ** expo
                vals.append(ratio)
                rows.append({"combo": ci, "t": float(t), "R": float(R), "ratio": float(ratio)})
            vals = np.array(vals)
            sup = max(sup, float(vals.max()))
            spreads[f"combo_{ci}_t_{t:g}"] = float(vals.max() / vals.min() - 1) if vals.min() > 0 else np.inf
    passed = bool(np.isfinite(sup))
    bounds = {}
    if nu_inv is not None:
        bounds["nu_inv"] = nu_inv
        passed = passed and sup <= nu_inv * (1 + tol_rel)
    return CheckReport(f"dyadic[{sym.label}]", passed, {"sup_ratio": sup, "relative_spread": spreads},
                       bounds, {"rel": tol_rel}, tables={"dyadic": rows})
