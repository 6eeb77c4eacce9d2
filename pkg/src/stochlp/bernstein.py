"""Bernstein functions, generalized inverses and scaling certificates.

A Bernstein function phi defines the subordinate operator phi(Delta) with
Fourier symbol -phi(|xi|^2).  The catalog below covers the standard examples
satisfying the usual weak scaling hypotheses, plus the identity (Brownian
motion) and pure powers (stable subordinators) as reference cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import bernoulli

from .report import CheckReport

__all__ = [
    "LAMBDA_MIN",
    "LAMBDA_MAX",
    "BernsteinFunction",
    "catalog",
    "catalog_table",
    "parse_bernstein",
    "generalized_inverse",
    "inverse_roundtrip_check",
    "log_grid",
    "envelope_exponents",
    "inverse_doubling_constant",
    "scaling_check",
    "subordinate_symbol",
    "verify_subordinate_lemma",
]

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12


def log_grid(n_per_decade: int = 10, lo: float = LAMBDA_MIN, hi: float = LAMBDA_MAX) -> np.ndarray:
    """Shared logarithmic grid for scaling fits and the inverse doubling constant."""
    decades = math.log10(hi) - math.log10(lo)
    return np.logspace(math.log10(lo), math.log10(hi), int(round(decades * n_per_decade)) + 1)


# ------------------------------------------------------------ numerics

def _log_cosh_sqrt(lam: np.ndarray) -> np.ndarray:
    x = np.sqrt(lam)
    out = np.empty_like(x)
    big = x > 20.0
    xs = x[~big]
    # cosh(x) - 1 = 2 sinh(x/2)^2 has no cancellation near 0
    out[~big] = np.log1p(2.0 * np.sinh(0.5 * xs) ** 2)
    xb = x[big]
    out[big] = xb + np.log1p(np.exp(-2.0 * xb)) - math.log(2.0)
    return out


_SINHC_TERMS = 24
_SINHC_COEF = np.array([
    2.0 ** (2 * k) * bernoulli(2 * k)[-1] / (2 * k * math.factorial(2 * k))
    for k in range(1, _SINHC_TERMS + 1)
])


def _log_sinhc_sqrt(lam: np.ndarray) -> np.ndarray:
    """log(sinh(sqrt(lam)) / sqrt(lam)), accurate from 0 to 1e12."""
    x = np.sqrt(lam)
    out = np.empty_like(x)
    small = lam < 0.25
    big = x > 20.0
    mid = ~(small | big)
    ls = lam[small]
    # even Bernoulli series; converges for |x| < pi
    out[small] = np.polynomial.polynomial.polyval(ls, np.concatenate([[0.0], _SINHC_COEF]))
    xm = x[mid]
    out[mid] = np.log(np.sinh(xm) / xm)
    xb = x[big]
    out[big] = xb + np.log1p(-np.exp(-2.0 * xb)) - math.log(2.0) - np.log(xb)
    return out


@dataclass(frozen=True)
class BernsteinFunction:
    """A Bernstein function phi: [0, inf) -> [0, inf).

    Attributes
    ----------
    label : str
        Catalog identifier, e.g. ``"alpha-beta(0.25,0.75)"``.
    func : callable
        Vectorized raw evaluation on lam > 0.
    exponents : tuple or None
        Claimed global scaling exponents (delta1, delta2), or None when the
        envelope only converges logarithmically and no claim is made.
    params : dict
        Catalog parameters.
    """

    label: str
    func: Callable[[np.ndarray], np.ndarray]
    exponents: tuple[float, float] | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, lam, strict: bool = True):
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < 0):
            raise ValueError("Bernstein functions are evaluated on lam >= 0")
        if strict and np.any(lam > LAMBDA_MAX):
            raise ValueError(f"lam beyond evaluable range (> {LAMBDA_MAX:g}); extrapolation refused")
        scalar = lam.ndim == 0
        lam1 = np.atleast_1d(lam)
        out = np.zeros_like(lam1)
        pos = lam1 > 0
        if np.all(pos):
            out = self.func(lam1)
        elif np.any(pos):
            out[pos] = self.func(lam1[pos])
        return float(out[0]) if scalar else out

    def inverse(self, t):
        return generalized_inverse(self, t)

    @property
    def is_identity(self) -> bool:
        return self.params.get("kind") == "identity"


def _check_open(name, v, lo, hi):
    if not (lo < v < hi):
        raise ValueError(f"parameter {name}={v} outside ({lo}, {hi})")


def catalog(ident, alpha: float | None = None, beta: float | None = None) -> BernsteinFunction:
    """Construct a catalog Bernstein function.

    ====  ============================================  ==============================
    id    phi(lam)                                      parameters
    ====  ============================================  ==============================
    1     lam^a + lam^b                                 0 < a < b < 1
    2     (lam + lam^a)^b                               a, b in (0, 1)
    3     lam^a log(1+lam)^b                            a in (0,1), b in (0, 1-a)
    4     lam^a log(1+lam)^(-b)                         a in (0,1), b in (0, a)
    5     log(cosh sqrt(lam))^a                         a in (0, 1)
    6     (log sinh sqrt(lam) - log sqrt(lam))^a        a in (0, 1)
    ====  ============================================  ==============================

    ``"identity"`` (lam) and ``"power"`` (lam^a, 0 < a <= 1) are also accepted.
    """
    key = str(ident)
    if key == "identity":
        return BernsteinFunction("identity", lambda lam: lam, (1.0, 1.0), {"kind": "identity"})
    if key == "power":
        if alpha is None or not (0 < alpha <= 1):
            raise ValueError("power requires 0 < alpha <= 1")
        a = float(alpha)
        if a == 1.0:
            return catalog("identity")
        return BernsteinFunction(f"power({a:g})", lambda lam: lam ** a, (a, a),
                                 {"kind": "power", "alpha": a})
    try:
        k = int(key)
    except ValueError:
        raise ValueError(f"unknown Bernstein catalog id {ident!r}") from None
    if k not in range(1, 7):
        raise ValueError(f"unknown Bernstein catalog id {ident!r}")
    if alpha is None:
        raise ValueError(f"catalog({k}) requires alpha")
    a = float(alpha)
    _check_open("alpha", a, 0.0, 1.0)
    params = {"kind": k, "alpha": a}
    if k in (1, 2, 3, 4):
        if beta is None:
            raise ValueError(f"catalog({k}) requires beta")
        b = float(beta)
        params["beta"] = b
    if k == 1:
        if not (0 < a < b < 1):
            raise ValueError("catalog(1) requires 0 < alpha < beta < 1")
        return BernsteinFunction(f"alpha-beta({a:g},{b:g})", lambda lam: lam ** a + lam ** b,
                                 (a, b), params)
    if k == 2:
        _check_open("beta", b, 0.0, 1.0)
        return BernsteinFunction(f"mixed({a:g},{b:g})", lambda lam: (lam + lam ** a) ** b,
                                 (a * b, b), params)
    if k == 3:
        _check_open("beta", b, 0.0, 1.0 - a)
        return BernsteinFunction(f"log({a:g},{b:g})",
                                 lambda lam: lam ** a * np.log1p(lam) ** b, None, params)
    if k == 4:
        _check_open("beta", b, 0.0, a)
        return BernsteinFunction(f"invlog({a:g},{b:g})",
                                 lambda lam: lam ** a * np.log1p(lam) ** (-b), None, params)
    if k == 5:
        return BernsteinFunction(f"logcosh({a:g})", lambda lam: _log_cosh_sqrt(lam) ** a,
                                 (0.5 * a, a), params)
    return BernsteinFunction(f"logsinh({a:g})", lambda lam: _log_sinhc_sqrt(lam) ** a,
                             (0.5 * a, a), params)


_NAMES = {"alpha-beta": 1, "mixed": 2, "log": 3, "invlog": 4, "logcosh": 5, "logsinh": 6}


def parse_bernstein(text: str) -> BernsteinFunction:
    """Parse ``"alpha-beta:0.25:0.75"``, ``"5:0.5"``, ``"identity"``, ``"power:0.5"``."""
    parts = text.split(":")
    head = parts[0]
    nums = [float(p) for p in parts[1:]]
    if head in ("identity", "power"):
        return catalog(head, *nums)
    k = _NAMES.get(head, head)
    return catalog(k, *nums)


def catalog_table() -> list[dict]:
    """Reference table of catalog members for documentation output."""
    return [
        {"id": "1", "name": "alpha-beta", "formula": "lam^a + lam^b", "range": "0<a<b<1",
         "exponents": "(a, b)"},
        {"id": "2", "name": "mixed", "formula": "(lam + lam^a)^b", "range": "a,b in (0,1)",
         "exponents": "(a*b, b)"},
        {"id": "3", "name": "log", "formula": "lam^a log(1+lam)^b", "range": "a in (0,1), b in (0,1-a)",
         "exponents": "none claimed (logarithmic approach)"},
        {"id": "4", "name": "invlog", "formula": "lam^a log(1+lam)^-b", "range": "a in (0,1), b in (0,a)",
         "exponents": "none claimed (logarithmic approach)"},
        {"id": "5", "name": "logcosh", "formula": "log(cosh sqrt lam)^a", "range": "a in (0,1)",
         "exponents": "(a/2, a)"},
        {"id": "6", "name": "logsinh", "formula": "(log sinh sqrt lam - log sqrt lam)^a",
         "range": "a in (0,1)", "exponents": "(a/2, a)"},
        {"id": "identity", "name": "identity", "formula": "lam", "range": "", "exponents": "(1, 1)"},
        {"id": "power", "name": "power", "formula": "lam^a", "range": "0<a<=1", "exponents": "(a, a)"},
    ]


# ------------------------------------------------------------ inverse

def generalized_inverse(phi: BernsteinFunction, t, iterations: int = 64):
    """phi^{-1}(t) = inf{s > 0 : phi(s) >= t} by bisection in log(s).

    The bracket is the evaluable range [LAMBDA_MIN, LAMBDA_MAX]; values of t
    outside [phi(LAMBDA_MIN), phi(LAMBDA_MAX)] raise ``ValueError``.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t1 = np.atleast_1d(t)
    if np.any(t1 <= 0):
        raise ValueError("generalized inverse requires t > 0")
    lo_val, hi_val = phi(LAMBDA_MIN), phi(LAMBDA_MAX)
    if np.any(t1 < lo_val) or np.any(t1 > hi_val):
        raise ValueError(f"t outside evaluable range [{lo_val:.3g}, {hi_val:.3g}]")
    lo = np.full(t1.shape, math.log(LAMBDA_MIN))
    hi = np.full(t1.shape, math.log(LAMBDA_MAX))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        ok = phi(np.exp(mid)) >= t1
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    out = np.exp(hi)
    return float(out[0]) if scalar else out


def inverse_roundtrip_check(phi: BernsteinFunction, grid: np.ndarray | None = None, tol: float = 1e-9) -> CheckReport:
    """max relative error of phi(phi^{-1}(t)) = t and phi^{-1}(phi(s)) = s over a log grid of s."""
    s = log_grid(4, 1e-10, 1e10) if grid is None else np.asarray(grid, float)
    t = phi(s)
    fwd = np.max(np.abs(phi(generalized_inverse(phi, t)) - t) / t)
    back = np.max(np.abs(generalized_inverse(phi, t) - s) / s)
    return CheckReport(f"inverse_roundtrip[{phi.label}]", bool(fwd <= tol and back <= tol),
                       {"forward_rel_err": float(fwd), "backward_rel_err": float(back), "n_points": int(len(s))},
                       {"rel_err_max": tol})


# ------------------------------------------------------------ scaling

def envelope_exponents(lam: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """inf and sup over grid pairs a < b of log(v(b)/v(a)) / log(b/a)."""
    ll, lv = np.log(lam), np.log(values)
    dl = ll[None, :] - ll[:, None]
    dv = lv[None, :] - lv[:, None]
    mask = dl > 0
    ratio = dv[mask] / dl[mask]
    return float(ratio.min()), float(ratio.max())


def _constants(lam, values, d1, d2):
    ll, lv = np.log(lam), np.log(values)
    dl = ll[None, :] - ll[:, None]
    dv = lv[None, :] - lv[:, None]
    mask = dl >= 0
    n1 = float(np.exp(np.min((dv - d1 * dl)[mask])))
    n2 = float(np.exp(np.max((dv - d2 * dl)[mask])))
    return n1, n2


def inverse_doubling_constant(phi: BernsteinFunction, grid: np.ndarray | None = None) -> float:
    """N_phi = max over a of phi^{-1}(a) / phi^{-1}(a/2) on the shared log grid."""
    lam = log_grid() if grid is None else np.asarray(grid, float)
    a = phi(lam)
    a = a[a / 2 >= phi(LAMBDA_MIN)]
    return float(np.max(generalized_inverse(phi, a) / generalized_inverse(phi, a / 2)))


def _h_conditions(phi: BernsteinFunction, d1: float, d2: float, n: int = 121) -> dict:
    """Grid constants for the weak scaling sufficient conditions H1/H2."""
    big = np.logspace(0, 6, n)
    lam, t = np.meshgrid(big, big, indexing="ij")
    r = phi(lam * t) / phi(t)
    c1 = float(np.min(r / lam ** d1))
    c2 = float(np.max(r / lam ** d2))
    small = np.logspace(-6, 0, n)
    lam, t = np.meshgrid(small, small, indexing="ij")
    r = phi(lam * t) / phi(t)
    # smallest admissible delta3 in (0,1] is the sup of the local elasticity
    d3 = float(min(1.0, np.max(np.log(r[lam < 1]) / np.log(lam[lam < 1]))))
    d3 = min(d3, 1.0)
    c3 = float(np.max(r / lam ** d3))
    return {"H1_c1": c1, "H1_c2": c2, "H1_delta1": d1, "H1_delta2": d2,
            "H2_c3": c3, "H2_delta3": d3}


def scaling_check(phi: BernsteinFunction, grid: np.ndarray | None = None,
                  claims: tuple[float, float] | None = None, tol: float = 0.02) -> CheckReport:
    """Envelope scaling exponents of phi and of its generalized inverse.

    The grid must span at least 12 decades.  With claims (defaulting to the
    catalog's), passes iff the fitted forward exponents lie within ``tol``.
    """
    lam = log_grid() if grid is None else np.sort(np.asarray(grid, float))
    if math.log10(lam[-1] / lam[0]) < 12 - 1e-9:
        raise ValueError("scaling grid must span at least 12 decades")
    claims = phi.exponents if claims is None else claims
    vals = phi(lam)
    d1, d2 = envelope_exponents(lam, vals)
    n1, n2 = _constants(lam, vals, d1, d2)
    tt = vals
    inv = generalized_inverse(phi, tt)
    i1, i2 = envelope_exponents(tt, inv)
    q = {"delta1_hat": d1, "delta2_hat": d2, "N1_hat": n1, "N2_hat": n2,
         "inverse_delta1_hat": i1, "inverse_delta2_hat": i2,
         "N_phi": inverse_doubling_constant(phi, lam),
         "grid_decades": float(math.log10(lam[-1] / lam[0]))}
    q.update(_h_conditions(phi, d1, d2))
    notes = []
    passed = bool(np.isfinite([d1, d2, i1, i2]).all() and d1 > 0 and i1 > 0)
    bounds = {}
    if claims is not None:
        bounds = {"delta1_claim": claims[0], "delta2_claim": claims[1]}
        passed = passed and abs(d1 - claims[0]) <= tol and abs(d2 - claims[1]) <= tol
    else:
        notes.append("no exponent claim: envelope approaches its limits logarithmically")
    # inverse exponents are reciprocals in reverse order
    passed = passed and i1 <= i2 and abs(i1 * d2 - 1) < 1e-6 and abs(i2 * d1 - 1) < 1e-6
    return CheckReport(f"scaling[{phi.label}]", passed, q, bounds, {"exponent_abs": tol}, {}, notes)


# ------------------------------------------------------------ symbols

def subordinate_symbol(phi: BernsteinFunction, d: int = 1, order: float | None = None):
    """Time-independent symbol -phi(|xi|^2) with multiplier phi(|xi|^2)^{1/2}.

    ``order`` records a nominal homogeneity 2*delta2 (the claimed upper
    exponent, or 2 when nothing is claimed); it is metadata only since
    subordinate symbols are not homogeneous in general.
    """
    from .symbols import Symbol, sqnorm

    if order is None:
        order = 2.0 * phi.exponents[1] if phi.exponents else 2.0
    lower = 2.0 * phi.exponents[0] if phi.exponents else None

    def evaluate(t, xi):
        return -phi(sqnorm(xi, d))

    def integral(s, t, xi):
        return -(t - s) * phi(sqnorm(xi, d))

    def multiplier(xi):
        return np.sqrt(phi(sqnorm(xi, d)))

    return Symbol(
        label=f"subord:{phi.label}", d=d, order=float(order), nu=1.0, func=evaluate,
        integral=integral, multiplier_func=multiplier, time_independent=True,
        meta={"bernstein": phi.label, "lower_order": lower}, bernstein=phi,
    )


def verify_subordinate_lemma(phi: BernsteinFunction, grid, which: str, sweep=None, d: int = 1,
                             refine: bool = True) -> CheckReport:
    """Envelope check of the subordinate kernel lemmas.

    ``which`` selects the estimate:

    - ``"615_1"``: int_s^t [int_{|z|>=c} |K(t-r,z)| dz]^2 dr against (t-s) phi(c^-2),
      swept over c;
    - ``"615_2"``: int_0^a ||K(t-r,.+h) - K(t-r,.)||_1^2 dr against
      |h|^2 phi^{-1}((t-a)^-1), swept over h;
    - ``"615_3"``: int_0^a ||K(t-r,.) - K(s-r,.)||_1^2 dr against
      (t-s)^2 (s-a)^-2, swept over t-s.

    Here K = phi(Delta)^{1/2} p.  Passes iff LHS/RHS stays within a factor 10
    across the sweep, on both the base and the refined grid, with the envelope
    constant drifting less than 10% under refinement.
    """
    from . import kernels

    sym = subordinate_symbol(phi, d)
    fam = kernels.KernelFamily(sym)
    key = {"615_1": "mc1", "615_2": "mc2", "615_3": "mc3"}.get(which)
    if key is None:
        raise ValueError(f"unknown lemma id {which!r}")
    sweep = kernels.default_sweep(key) if sweep is None else sweep
    grid = kernels.default_lemma_grid(sym, key) if grid is None else grid
    if len(sweep["values"]) < 4:
        raise ValueError("sweep needs at least 4 points")

    def rhs(v):
        if key == "mc1":
            return (sweep["t"] - sweep["s"]) * phi(v ** -2.0)
        if key == "mc2":
            return v ** 2 * generalized_inverse(phi, 1.0 / (sweep["t"] - sweep["a"]))
        return (v / (sweep["s"] - sweep["a"])) ** 2

    def run(g):
        lhs = np.array([kernels.lemma_lhs(fam, g, key, sweep, v) for v in sweep["values"]])
        r = np.array([rhs(v) for v in sweep["values"]])
        return lhs, lhs / r

    lhs, ratio = run(grid)
    spread = float(ratio.max() / ratio.min())
    q = {"lhs": lhs, "ratio": ratio, "envelope_constant": float(ratio.max()), "envelope_spread": spread,
         "sweep": list(map(float, sweep["values"]))}
    refinement = {}
    passed = bool(np.all(np.isfinite(lhs)) and spread <= 10.0)
    if refine:
        lhs2, ratio2 = run(grid.refined())
        drift = float(abs(ratio2.max() - ratio.max()) / ratio.max())
        refinement = {"ratio_refined": ratio2, "envelope_drift": drift,
                      "envelope_spread_refined": float(ratio2.max() / ratio2.min())}
        passed = passed and drift < 0.1 and ratio2.max() / ratio2.min() <= 10.0
    return CheckReport(f"subordinate_lemma[{which},{phi.label}]", passed, q,
                       {"envelope_spread_max": 10.0}, {"refinement_drift": 0.1}, refinement,
                       ["torus truncation: kernel tails beyond the box are folded periodically"])
