"""Space-time quasi-metrics, ball volumes and the stochastic Hoermander integral."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bernstein import (LAMBDA_MAX, LAMBDA_MIN, BernsteinFunction, generalized_inverse,
                        inverse_doubling_constant, log_grid)
from .kernels import KernelFamily, SpaceTimeGrid
from .quadrature import clustered_rule, loglog_slope
from .report import CheckReport

__all__ = [
    "QuasiMetric",
    "parabolic_metric",
    "subordinate_metric",
    "ball_volume",
    "doubling_check",
    "hormander_grid",
    "hormander_integral",
    "default_scales",
    "stratified_pairs",
    "hormander_sup_estimate",
]


def _split(X):
    """(t, x) -> (float t, 1-d array x)."""
    t, x = X
    return float(t), np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class QuasiMetric:
    """rho(X, Y) = w(|t - s|) + |x - y| on (0, inf) x R^d.

    ``w`` is tau^{1/gamma} for the parabolic metric and
    (phi^{-1}(1/tau))^{-1/2} for the subordinate one; ``w_inv`` is its inverse.
    """

    kind: str
    label: str
    w: object
    w_inv: object
    N_rho: float
    C0: float
    gamma: float | None = None
    phi: BernsteinFunction | None = None
    meta: dict = field(default_factory=dict)

    @property
    def gamma0(self) -> float:
        """Enlargement factor (2 C0 N_rho + 1) N_rho of the exterior region."""
        return (2.0 * self.C0 * self.N_rho + 1.0) * self.N_rho

    def time_part(self, tau) -> np.ndarray:
        tau = np.abs(np.asarray(tau, dtype=float))
        out = np.zeros_like(tau)
        pos = tau > 0
        if np.any(pos):
            out[pos] = self.w(tau[pos])
        return out

    def evaluate(self, X, Y) -> float:
        t, x = _split(X)
        s, y = _split(Y)
        return float(self.time_part(t - s)) + float(np.linalg.norm(x - y))

    __call__ = evaluate

    def evaluate_many(self, t, x, s, y) -> np.ndarray:
        """Vectorized rho for time arrays (N,) and space arrays (N, d)."""
        return self.time_part(np.asarray(t) - np.asarray(s)) + np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)

    def contains(self, tau, dist, c: float) -> np.ndarray:
        """rho < c for time gaps ``tau`` and spatial distances ``dist``, via w^{-1} only."""
        room = c - np.asarray(dist, dtype=float)
        out = np.zeros(np.broadcast(np.asarray(tau), room).shape, dtype=bool)
        pos = room > 0
        tau = np.broadcast_to(np.abs(np.asarray(tau, dtype=float)), out.shape)
        out[pos] = tau[pos] < self.w_inv(room[pos])
        return out

    def time_radius(self, c: float) -> float:
        """Largest |t - s| with w(|t - s|) <= c."""
        return float(self.w_inv(float(c))) if c > 0 else 0.0

    def N_doubling(self, gamma_factor: float, d: int = 1, c_list=None) -> float:
        """max over c of |B_{gamma_factor c}| / |B_c| from the exact volume formula."""
        c_list = np.geomspace(1e-3, 1e1, 17) if c_list is None else c_list
        return float(max(ball_volume(self, gamma_factor * c, d) / ball_volume(self, c, d) for c in c_list))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "label": self.label, "N_rho": self.N_rho, "C0": self.C0,
                "gamma0": self.gamma0, **self.meta}


def parabolic_metric(gamma: float, C0: float | None = None) -> QuasiMetric:
    """rho = |t - s|^{1/gamma} + |x - y| with N_rho = max(1, 2^{1/gamma - 1}), C0 = 4 2^{1/gamma}."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    g = float(gamma)
    n_rho = max(1.0, 2.0 ** (1.0 / g - 1.0))
    c0 = 4.0 * 2.0 ** (1.0 / g) if C0 is None else float(C0)
    return QuasiMetric("parabolic", f"parabolic({g:g})", lambda tau: tau ** (1.0 / g),
                       lambda c: c ** g, n_rho, c0, gamma=g,
                       meta={"gamma": g, "C0_override": C0 is not None})


def subordinate_metric(phi: BernsteinFunction, C0: float | None = None) -> QuasiMetric:
    """rho = (phi^{-1}(|t - s|^{-1}))^{-1/2} + |x - y| with C0 = 4 N_phi.

    N_phi = max_a phi^{-1}(a) / phi^{-1}(a/2) on the shared log grid.  Doubling
    of phi^{-1} gives w(2 tau) <= sqrt(N_phi) w(tau), hence N_rho = sqrt(N_phi).
    """
    lam = log_grid()
    vals = phi(lam)
    if np.any(np.diff(vals) < 0):
        raise ValueError(f"{phi.label} is not monotone on the evaluation grid")
    n_phi = inverse_doubling_constant(phi, lam)
    c0 = 4.0 * n_phi if C0 is None else float(C0)

    lo, hi = phi(LAMBDA_MIN), phi(LAMBDA_MAX)

    def w(tau):
        # saturates where 1/tau leaves the evaluable range of phi
        return generalized_inverse(phi, np.clip(1.0 / np.asarray(tau, dtype=float), lo, hi)) ** -0.5

    def w_inv(c):
        # w(tau) = c  <=>  phi^{-1}(1/tau) = c^{-2}  <=>  tau = 1/phi(c^{-2})
        lam = np.clip(np.asarray(c, dtype=float) ** -2.0, LAMBDA_MIN, LAMBDA_MAX)
        return 1.0 / phi(lam)

    return QuasiMetric("subordinate", f"subordinate[{phi.label}]", w, w_inv,
                       max(1.0, math.sqrt(n_phi)), c0, phi=phi,
                       meta={"N_phi": n_phi, "C0_override": C0 is not None})


# ------------------------------------------------------------- balls

def ball_volume(rho: QuasiMetric, c: float, d: int = 1) -> float:
    """|B_c| = int_{|tau| < w^{-1}(c)} V_d (c - w(|tau|))^d dtau (unbounded space-time)."""
    tmax = rho.time_radius(c)
    tau, wt = clustered_rule(0.0, tmax, "both", levels=30, per_level=4, rule="gauss", order=6)
    vd = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    rad = np.clip(c - rho.time_part(tau), 0.0, None)
    return float(2.0 * vd * np.sum(wt * rad ** d))


def _mc_ball_volume(rho, center, c, u, d):
    """Monte Carlo |B_c(center)| from reference samples u in [-1, 1]^{1+d}."""
    t, x = center
    tmax = rho.time_radius(c)
    s = t + tmax * u[:, 0]
    y = x + c * u[:, 1:]
    inside = rho.contains(s - t, np.linalg.norm(y - x, axis=-1), c)
    return float(np.mean(inside)) * (2 * tmax) * (2 * c) ** d


def doubling_check(rho: QuasiMetric, gamma_factor: float, sample_centers=None, c_list=None, d: int = 1,
                   T: float = 4.0, L: float = 4.0, n_samples: int = 100_000, seed: int = 0) -> CheckReport:
    """Monte Carlo ratio |B_{gamma c}(X)| / |B_c(X)| over centers and radii.

    Both balls are sampled from the same reference points mapped to their
    bounding boxes, so gamma_factor = 1 gives exactly 1.  A center whose larger
    ball leaves the box (0, T) x [-L, L]^d is flagged and discarded.  Passes iff
    the max ratio drifts by less than 5% when the sample count is doubled.
    """
    if n_samples < 100_000:
        raise ValueError("at least 1e5 samples per ball are required")
    c_list = [0.05, 0.1, 0.2, 0.4] if c_list is None else list(c_list)
    if sample_centers is None:
        sample_centers = [(0.5 * T, np.zeros(d)), (0.4 * T, np.full(d, 0.25 * L))]
    centers = [_split(X) for X in sample_centers]
    rows, notes = [], []

    def ratios(n, tag):
        out = []
        for ci, (t, x) in enumerate(centers):
            for ki, c in enumerate(c_list):
                big = gamma_factor * c
                if t - rho.time_radius(big) <= 0 or t + rho.time_radius(big) >= T or np.any(np.abs(x) + big > L):
                    if tag == "base":
                        notes.append(f"center {ci} discarded at c={c:g}: ball leaves the box")
                    continue
                rng = np.random.default_rng(np.random.SeedSequence([seed, ci, ki, n]))
                u = rng.uniform(-1.0, 1.0, size=(n, 1 + d))
                v1 = _mc_ball_volume(rho, (t, x), c, u, d)
                v2 = _mc_ball_volume(rho, (t, x), big, u, d)
                r = v2 / v1
                exact = ball_volume(rho, big, d) / ball_volume(rho, c, d)
                out.append(r)
                if tag == "base":
                    rows.append({"center": ci, "c": c, "volume": v1, "volume_big": v2, "ratio": r,
                                 "ratio_exact": exact})
        return out

    base = ratios(n_samples, "base")
    dbl = ratios(2 * n_samples, "doubled")
    if not base:
        return CheckReport(f"doubling[{rho.label},{gamma_factor:g}]", False, {"kept": 0},
                           notes=notes + ["every center discarded"])
    m1, m2 = max(base), max(dbl)
    drift = abs(m2 - m1) / m1
    exact = max(row["ratio_exact"] for row in rows)
    return CheckReport(f"doubling[{rho.label},{gamma_factor:g}]", bool(np.isfinite(m1) and drift < 0.05),
                       {"max_ratio": m1, "max_ratio_exact": exact, "kept": len(base)},
                       {}, {"drift": 0.05}, {"max_ratio_doubled": m2, "drift": drift}, notes,
                       tables={"doubling": rows})


# ------------------------------------------------------ Hoermander

def hormander_grid(rho_xy: float, C0: float, d: int = 1, box_factor: float = 8.0,
                   points_per_radius: int = 128) -> SpaceTimeGrid:
    """Box of half-width box_factor * C0 * rho with spacing C0 * rho / points_per_radius.

    The integrand lives outside the ball of radius ~C0 rho, so the grid is tied
    to that radius; n = 2 box_factor points_per_radius is scale-independent.
    """
    L = box_factor * C0 * rho_xy
    n = 2 ** int(math.ceil(math.log2(2 * box_factor * points_per_radius)))
    return SpaceTimeGrid(L, n, d)


def _levels(length: float, floor: float) -> int:
    """Dyadic levels needed to reach the age floor from ``length``."""
    return max(1, int(math.ceil(math.log2(max(length / floor, 2.0)))) + 2)


def hormander_integral(fam: KernelFamily, rho: QuasiMetric, X, Y, T: float, grid: SpaceTimeGrid | None = None,
                       per_level: int = 10, chunk: int = 64) -> float:
    """int_0^T [int_{rho(X,Z) >= C0 rho(X,Y)} |K(r,t,z,x) - K(r,s,z,y)| dz]^2 dr.

    Spatial coordinates are taken relative to x, so the difference field is
    F^{-1}[m(-xi) (e^{int_r^t psi(-xi)} 1_{r<t} - e^{-i xi (y-x)} e^{int_r^s psi(-xi)} 1_{r<s})]
    and the region is |z'| >= C0 rho(X,Y) - w(|t - r|).  Kernel ages below the
    grid's resolvable floor are evaluated at the floor; the time rule is
    clustered geometrically at r = min(s, t) and max(s, t) down to that floor.
    """
    t, x = _split(X)
    s, y = _split(Y)
    if not (0 < t < T and 0 < s < T):
        raise ValueError("X and Y must lie in (0, T) x R^d")
    rxy = rho.evaluate((t, x), (s, y))
    if rxy == 0:
        return 0.0
    grid = hormander_grid(rxy, rho.C0, fam.sym.d) if grid is None else grid
    if len(x) != grid.d:
        raise ValueError("point dimension does not match the grid")
    a = y - x
    xi = -grid.xi()
    mult = fam.multiplier(xi)
    phase = np.exp(-1j * np.tensordot(xi, a, axes=([-1], [0])))
    lo, hi = min(s, t), max(s, t)
    floor_t = fam.tau_floor(grid, t)
    floor_s = fam.tau_floor(grid, s)
    floor = min(floor_s, floor_t)
    r1, w1 = clustered_rule(0.0, lo, "right", _levels(lo, floor), per_level)
    if hi > lo:
        r2, w2 = clustered_rule(lo, hi, "both", _levels(0.5 * (hi - lo), floor), per_level)
    else:
        r2, w2 = np.empty(0), np.empty(0)
    r = np.concatenate([r1, r2])
    wts = np.concatenate([w1, w2])
    radius = grid.radius()
    thresh = rho.C0 * rxy - rho.time_part(t - r)
    inner = np.empty(len(r))
    for i0 in range(0, len(r), chunk):
        rc = r[i0:i0 + chunk]
        ht = fam.hats(np.minimum(rc, t - floor_t), t, grid, xi, mult)
        ht[rc >= t] = 0.0
        hs = fam.hats(np.minimum(rc, s - floor_s), s, grid, xi, mult)
        hs[rc >= s] = 0.0
        v = np.abs(grid.to_physical(ht - phase * hs))
        mask = radius[None] >= thresh[i0:i0 + chunk].reshape((-1,) + (1,) * grid.d)
        inner[i0:i0 + chunk] = np.sum((v * mask).reshape(len(rc), -1), axis=1) * grid.cell
    return float(np.sum(wts * inner ** 2))


def default_scales(rho: QuasiMetric, n_scales: int = 8, d: int = 1) -> tuple[float, float]:
    """Default (T, rho_top) for the stratified Hoermander sweep.

    Parabolic metrics: T = 2 and rho_top = w(T/2) / (32 C0), so the largest
    excluded ball spans a small fraction of the available time.  Subordinate
    metrics: the smallest scale is the finest one whose refined grid stays
    within the evaluable range of phi (|xi|^2 <= 1e10), and T is chosen so that
    w(T/2) = 32 C0 rho_top.
    """
    if rho.kind == "parabolic":
        T = 2.0
        return T, float(rho.time_part(T / 2)) / (32.0 * rho.C0)
    g = hormander_grid(1.0, rho.C0, d)
    # Nyquist of the refined grid at rho = 1, scaled by 1/rho
    kmax_unit = 2 * np.pi * g.n / (2 * g.L)
    rho_min = kmax_unit / 1e5
    rho_top = rho_min * 2.0 ** n_scales
    T = 2.0 * rho.time_radius(32.0 * rho.C0 * rho_top)
    return float(T), float(rho_top)


def stratified_pairs(rho: QuasiMetric, d: int = 1, T: float | None = None, n_scales: int = 8, per_scale: int = 32,
                     rho_top: float | None = None, seed: int = 0) -> list[dict]:
    """Pairs (X, Y) with rho(X, Y) log-uniform in dyadic bands rho_top 2^{-k-1} .. rho_top 2^{-k}.

    X = (t, x) has t uniform in [T/2, 3T/4] and x uniform in [-1, 1]^d; the
    distance is split at a uniform fraction between the time part and a
    uniformly oriented space part.  Pair i draws its shape (band position,
    split, orientation, sign, t, x) from the seed (seed, i), so every scale
    sees the same shapes and scale trends are not masked by sampling noise.
    T and rho_top default to :func:`default_scales`.
    """
    if T is None:
        T0, top0 = default_scales(rho, n_scales, d)
        T, rho_top = T0, top0 if rho_top is None else rho_top
    elif rho_top is None:
        rho_top = float(rho.time_part(T / 2)) / (32.0 * rho.C0)
    pairs = []
    for k in range(n_scales):
        for i in range(per_scale):
            # pair i has the same shape at every scale; only the band changes
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            target = rho_top * 2.0 ** (-k - rng.uniform())
            theta = rng.uniform()
            t = rng.uniform(T / 2, 3 * T / 4)
            x = rng.uniform(-1.0, 1.0, size=d)
            tau = rho.time_radius(theta * target)
            s = t + (tau if rng.uniform() < 0.5 else -tau)
            u = rng.normal(size=d)
            y = x + (1 - theta) * target * u / np.linalg.norm(u)
            pairs.append({"scale": k, "index": i, "seed": [seed, i],
                          "T": T, "X": (t, x), "Y": (s, y), "rho": rho.evaluate((t, x), (s, y))})
    return pairs


def hormander_sup_estimate(fam: KernelFamily, rho: QuasiMetric, pair_sampler=None, T: float | None = None,
                           grid: SpaceTimeGrid | None = None, refine: bool = True, threads: int = 1,
                           seed: int = 0, n_scales: int = 8, per_scale: int = 32) -> CheckReport:
    """Max of the Hoermander integral over stratified pairs.

    ``pair_sampler`` is a list of dicts with keys ``scale``, ``X``, ``Y`` (as
    produced by :func:`stratified_pairs`, the default).  Without ``grid`` each
    pair gets its own scale-adapted grid; refinement doubles n at fixed L.
    Passes iff the max is finite, drifts by less than 10% under refinement and
    the per-scale max does not grow toward small scales (slope of log max
    against log(1/rho) at most 0.1).
    """
    pairs = stratified_pairs(rho, fam.sym.d, T, n_scales, per_scale, seed=seed) if pair_sampler is None \
        else list(pair_sampler)
    if T is None:
        T = pairs[0].get("T") if pairs and "T" in pairs[0] else default_scales(rho, n_scales, fam.sym.d)[0]

    def one(p):
        g = hormander_grid(p["rho"] if "rho" in p else rho(p["X"], p["Y"]), rho.C0, fam.sym.d) \
            if grid is None else grid
        v = hormander_integral(fam, rho, p["X"], p["Y"], T, g)
        v2 = hormander_integral(fam, rho, p["X"], p["Y"], T, g.refined()) if refine else float("nan")
        return v, v2

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    rows = []
    for p, (v, v2) in zip(pairs, results):
        t, x = _split(p["X"])
        s, y = _split(p["Y"])
        rows.append({"scale": p["scale"], "rho": p.get("rho", rho(p["X"], p["Y"])), "t": t, "s": s,
                     **{f"x{i + 1}": xv for i, xv in enumerate(x)}, **{f"y{i + 1}": yv for i, yv in enumerate(y)},
                     "value": v, "value_refined": v2})
    vals = np.array([row["value"] for row in rows])
    scales = sorted({row["scale"] for row in rows})
    per_scale_max = [max(row["value"] for row in rows if row["scale"] == k) for k in scales]
    per_scale_rho = [float(np.exp(np.mean([np.log(row["rho"]) for row in rows if row["scale"] == k])))
                     for k in scales]
    sup = float(vals.max())
    slope = loglog_slope(1.0 / np.array(per_scale_rho), per_scale_max) if len(scales) >= 2 else 0.0
    ok = bool(np.all(np.isfinite(vals)) and slope <= 0.1)
    refinement = {}
    if refine:
        vals2 = np.array([row["value_refined"] for row in rows])
        drift = abs(float(vals2.max()) - sup) / sup
        refinement = {"sup_refined": float(vals2.max()), "drift": drift,
                      "max_pair_drift": float(np.max(np.abs(vals2 / vals - 1)))}
        ok = ok and drift < 0.1
    hist = [{"scale": k, "rho": r, "max": m, "count": sum(1 for row in rows if row["scale"] == k)}
            for k, r, m in zip(scales, per_scale_rho, per_scale_max)]
    return CheckReport(f"hormander[{fam.label},{rho.label}]", ok,
                       {"sup": sup, "scale_slope": slope, "per_scale_max": per_scale_max,
                        "per_scale_rho": per_scale_rho, "C0": rho.C0, "n_pairs": len(rows)},
                       {"scale_slope_max": 0.1}, {"refinement_drift": 0.1}, refinement,
                       ["torus truncation: the box half-width is 8 C0 rho(X,Y); kernel tails beyond it fold back",
                        "ages below the grid's resolvable floor evaluated at the floor"],
                       tables={"hormander_pairs": rows, "hormander_scales": hist})
