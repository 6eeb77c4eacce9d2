"""Square function G, maximal and sharp functions, and the empirical Littlewood-Paley check.

Time layout.  Input fields are piecewise constant in time: sample j holds on
[j dt, (j + 1) dt) ("left" layout, weights dt).  Outputs of G are sampled at
the right endpoints t_i = (i + 1) dt and integrated in time by the trapezoid
rule using G(0) = 0 ("right" layout, weights dt, ..., dt, dt/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelFamily, SpaceTimeGrid
from .quadrature import gauss_legendre
from .report import CheckReport

__all__ = [
    "VectorField",
    "ScalarField",
    "time_weights",
    "kernel_convolve",
    "g_operator",
    "plancherel_weights",
    "g_l2_squared_exact",
    "lp_norm",
    "l2_norm_plancherel",
    "ball_family",
    "maximal_function",
    "sharp_function",
    "maximal_inequality_check",
    "BatteryField",
    "lp_battery",
    "verify_lpaley",
]


def time_weights(grid: SpaceTimeGrid, layout: str) -> np.ndarray:
    """Time quadrature weights for the "left" or "right" layout."""
    w = np.full(grid.n_t, grid.dt)
    if layout == "right":
        w[-1] = 0.5 * grid.dt
    elif layout != "left":
        raise ValueError(f"unknown time layout {layout!r}")
    return w


def sample_times(grid: SpaceTimeGrid, layout: str) -> np.ndarray:
    j = np.arange(grid.n_t)
    return grid.dt * (j if layout == "left" else j + 1)


@dataclass
class ScalarField:
    """Real or complex values of shape (n_t, *space) on a space-time grid."""

    values: np.ndarray
    grid: SpaceTimeGrid
    layout: str = "left"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n_t,) + self.grid.shape:
            raise ValueError(f"values of shape {self.values.shape} do not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def times(self) -> np.ndarray:
        return sample_times(self.grid, self.layout)

    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


@dataclass
class VectorField:
    """l2-truncated vector field: values of shape (K, n_t, *space), left time layout."""

    values: np.ndarray
    grid: SpaceTimeGrid
    meta: dict = field(default_factory=dict)
    layout: str = "left"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != self.grid.d + 2 or self.values.shape[1:] != (self.grid.n_t,) + self.grid.shape:
            raise ValueError(f"values of shape {self.values.shape} do not match (K, n_t, *space)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def K_modes(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return sample_times(self.grid, self.layout)

    def modulus(self) -> np.ndarray:
        """|f(t, x)|_{l2} over the mode truncation."""
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=0))

    def hat(self) -> np.ndarray:
        """Frequency-side values, same shape as ``values``."""
        return self.grid.to_frequency(self.values)

    def is_zero(self) -> bool:
        return not np.any(self.values)


# --------------------------------------------------------- operator G

def _interval_index(grid: SpaceTimeGrid, r: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(r / grid.dt).astype(int), 0, grid.n_t - 1)


def kernel_convolve(fam: KernelFamily, f: VectorField, r: float, t: float) -> np.ndarray:
    """K f(r, t, .) = F^{-1}[m e^{int_r^t psi} F f(r, .)] per mode; zero for r >= t."""
    grid = f.grid
    if r >= t:
        return np.zeros((f.K_modes,) + grid.shape, dtype=f.values.dtype)
    j = int(_interval_index(grid, np.array([r]))[0])
    fh = grid.to_frequency(f.values[:, j])
    hk = fam.hats([r], t, grid)[0]
    out = grid.to_physical(hk[None] * fh)
    if np.isrealobj(f.values):
        return out.real
    return out


def _g_time_rule(t: float, dt: float, eps_octaves: int = 40, per_octave: int = 4, order: int = 6):
    """Nodes on (0, t - eps] graded geometrically toward r = t.

    Panels are aligned with the input intervals j dt and, in distance
    u = t - r, with the octave boundaries dt 2^{-k/per_octave}.  Returns nodes,
    weights, a mask of the nodes in the innermost octave [t - 2 eps, t - eps]
    and the input interval index of each node.
    """
    breaks = set(np.round(dt * np.arange(int(round(t / dt)) + 1), 14).tolist())
    # distances above dt: geometric toward t in octaves measured from t
    umax = t
    n_up = max(0, int(math.ceil(math.log2(umax / dt) * per_octave)))
    for k in range(1, n_up + 1):
        u = dt * 2.0 ** (k / per_octave)
        if u < umax:
            breaks.add(t - u)
    n_down = eps_octaves * per_octave
    for k in range(0, n_down + 1):
        breaks.add(t - dt * 2.0 ** (-k / per_octave))
    edges = np.array(sorted(b for b in breaks if 0.0 <= b <= t - dt * 2.0 ** (-eps_octaves) + 1e-300))
    eps = dt * 2.0 ** (-eps_octaves)
    nodes, weights, inner, interval = [], [], [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0:
            continue
        x, w = gauss_legendre(order, a, b)
        nodes.append(x)
        weights.append(w)
        inner.append(np.full(order, t - a <= 2.0 * eps * (1 + 1e-9)))
        # panels never straddle an input interval, so the midpoint decides
        interval.append(np.full(order, int(math.floor(0.5 * (a + b) / dt))))
    return (np.concatenate(nodes), np.concatenate(weights), np.concatenate(inner),
            np.concatenate(interval))


def g_operator(fam: KernelFamily, f: VectorField, eps_octaves: int = 40, chunk: int = 64,
               rtol: float = 1e-6) -> ScalarField:
    """Gf(t, x) = [int_0^t |K f(r, t, x)|_{l2}^2 dr]^{1/2} at the right endpoints.

    The r-integral over (0, t - eps) uses panels aligned with the input
    intervals and graded geometrically toward r = t; eps = dt 2^{-eps_octaves}.
    The epsilon limit is flagged as converged when dropping the innermost
    octave changes the result by less than ``rtol`` relative (max norm).
    """
    grid = f.grid
    K = f.K_modes
    fh = f.hat()
    xi = grid.xi()
    mult = fam.multiplier(xi)
    out = np.zeros((grid.n_t,) + grid.shape)
    flags, changes = [], []
    for i, t in enumerate(sample_times(grid, "right")):
        r, w, innermost, j = _g_time_rule(t, grid.dt, eps_octaves)
        acc = np.zeros(grid.shape)
        last = np.zeros(grid.shape)
        for i0 in range(0, len(r), chunk):
            sl = slice(i0, i0 + chunk)
            hk = fam.hats(r[sl], t, grid, xi, mult)
            v = grid.to_physical(hk[:, None] * fh[:, j[sl]].swapaxes(0, 1))
            sq = np.sum(np.abs(v) ** 2, axis=1)
            acc += np.tensordot(w[sl], sq, axes=(0, 0))
            inner = innermost[sl]
            if np.any(inner):
                last += np.tensordot(w[sl][inner], sq[inner], axes=(0, 0))
        scale = float(np.max(acc))
        change = float(np.max(last)) / scale if scale > 0 else 0.0
        changes.append(change)
        flags.append(change < rtol)
        out[i] = np.sqrt(acc)
    meta = {"converged": bool(all(flags)), "eps_change": max(changes) if changes else 0.0,
            "eps": grid.dt * 2.0 ** (-eps_octaves), "K_modes": K}
    return ScalarField(out, grid, "right", meta)


def plancherel_weights(fam: KernelFamily, grid: SpaceTimeGrid, n_gauss: int = 32) -> np.ndarray:
    """D[j, xi] with ||Gf||_{L2}^2 = (2L)^{-d} sum_{k, j, xi} D[j, xi] |F f_k(j, xi)|^2.

    D[j, xi] = m(xi)^2 sum_{i >= j} w_i int_{j dt}^{(j+1) dt} |e^{int_r^{t_i} psi}|^2 dr,
    in closed form for time-independent symbols, by Gauss-Legendre otherwise.
    """
    xi = grid.xi()
    m2 = np.abs(fam.multiplier(xi)) ** 2
    wt = time_weights(grid, "right")
    ts = sample_times(grid, "right")
    D = np.zeros((grid.n_t,) + grid.shape)
    if fam.sym.time_independent:
        c = 2.0 * np.real(fam.sym.evaluate(0.0, xi))
        for j in range(grid.n_t):
            a, b = j * grid.dt, (j + 1) * grid.dt
            for i in range(j, grid.n_t):
                t = ts[i]
                # int_a^b e^{c (t - r)} dr = e^{c (t - b)} (e^{c (b - a)} - 1) / c
                with np.errstate(divide="ignore", invalid="ignore"):
                    val = np.exp(c * (t - b)) * np.expm1(c * (b - a)) / c
                val = np.where(c == 0, b - a, val)
                D[j] += wt[i] * val
    else:
        for j in range(grid.n_t):
            r, w = gauss_legendre(n_gauss, j * grid.dt, (j + 1) * grid.dt)
            for i in range(j, grid.n_t):
                e = fam.exponent(r, ts[i], xi)
                D[j] += wt[i] * np.tensordot(w, np.exp(2.0 * np.real(e)), axes=(0, 0))
    return m2 * D


def g_l2_squared_exact(fam: KernelFamily, f: VectorField, D: np.ndarray | None = None) -> float:
    """||Gf||_{L2(O_T)}^2 from the frequency side (exact in r)."""
    grid = f.grid
    D = plancherel_weights(fam, grid) if D is None else D
    fh = f.hat()
    return float(np.sum(D[None] * np.abs(fh) ** 2) / grid.volume)


# ------------------------------------------------------------- norms

def lp_norm(f, p: float) -> float:
    """(sum_t w_t sum_x |f|^p dx)^{1/p}; |f| is the l2 modulus for vector fields."""
    if p < 1:
        raise ValueError("p must be at least 1")
    grid = f.grid
    a = f.modulus()
    w = time_weights(grid, f.layout)
    s = np.sum(w[(slice(None),) + (None,) * grid.d] * a ** p) * grid.cell
    return float(s ** (1.0 / p))


def l2_norm_plancherel(f) -> float:
    """L2 norm computed on the frequency side (discrete Parseval)."""
    grid = f.grid
    vals = f.values if isinstance(f, VectorField) else f.values[None]
    fh = grid.to_frequency(vals)
    w = time_weights(grid, f.layout)
    s = np.sum(w[(None, slice(None)) + (None,) * grid.d] * np.abs(fh) ** 2) / grid.volume
    return float(np.sqrt(s))


# --------------------------------------------- maximal / sharp functions

def ball_family(rho, grid: SpaceTimeGrid, center_step: int = 4, layout: str = "left"):
    """Dyadic radii c = 2^k dmin up to the box diameter and lattice footprints.

    dmin = min(dx, w(dt)); the diameter is w(T) + L sqrt(d) (torus in space).
    Returns (radii, footprints) where each footprint is an integer array of
    (time offset, space offsets...) rows with rho < c.
    """
    dmin = min(grid.dx, float(rho.time_part(grid.dt)))
    diam = float(rho.time_part(grid.T)) + grid.L * math.sqrt(grid.d)
    kmax = int(math.ceil(math.log2(diam / dmin)))
    radii = [dmin * 2.0 ** k for k in range(kmax + 1)]
    half = grid.n // 2
    axis = np.arange(-half, half)
    space = np.stack(np.meshgrid(*([axis] * grid.d), indexing="ij"), axis=-1).reshape(-1, grid.d)
    dist = np.linalg.norm(space * grid.dx, axis=1)
    feet = []
    for c in radii:
        qmax = min(grid.n_t - 1, int(math.floor(rho.time_radius(c) / grid.dt)))
        rows = []
        for q in range(-qmax, qmax + 1):
            keep = rho.contains(np.full(len(space), q * grid.dt), dist, c)
            if np.any(keep):
                sel = space[keep]
                rows.append(np.concatenate([np.full((len(sel), 1), q), sel], axis=1))
        feet.append(np.concatenate(rows) if rows else np.zeros((1, 1 + grid.d), dtype=int))
    return radii, feet


def _ball_stats(f, rho, center_step, mode):
    grid = f.grid
    a = f.modulus() if mode == "max" else np.real(f.values)
    if mode == "sharp" and np.iscomplexobj(f.values):
        raise ValueError("sharp function is defined for real fields")
    out = a.copy() if mode == "max" else np.zeros_like(a)
    flat = a.reshape(-1)
    res = out.reshape(-1)
    nt, n, d = grid.n_t, grid.n, grid.d
    tc = np.arange(0, nt, center_step)
    sc = np.arange(0, n, center_step)
    centers = np.stack(np.meshgrid(tc, *([sc] * d), indexing="ij"), axis=-1).reshape(-1, 1 + d)
    strides = np.array([n ** d] + [n ** (d - 1 - k) for k in range(d)])
    _, feet = ball_family(rho, grid, center_step, f.layout)
    for fp in feet:
        idx = centers[:, None, :] + fp[None, :, :]
        valid = (idx[..., 0] >= 0) & (idx[..., 0] < nt)
        idx[..., 1:] %= n
        idx[..., 0] = np.clip(idx[..., 0], 0, nt - 1)
        lin = idx @ strides
        vals = flat[lin]
        cnt = valid.sum(axis=1)
        mean = np.where(valid, vals, 0.0).sum(axis=1) / cnt
        if mode == "max":
            stat = mean
        else:
            stat = np.where(valid, np.abs(vals - mean[:, None]), 0.0).sum(axis=1) / cnt
        target = np.broadcast_to(stat[:, None], lin.shape)
        np.maximum.at(res, lin[valid], target[valid])
    return out


def maximal_function(f: ScalarField, rho, center_step: int = 4, refine: bool = False) -> ScalarField:
    """Discrete Mf(X) = max of |f| averages over family balls containing X.

    The family is every dyadic radius of :func:`ball_family` centered at every
    ``center_step``-th lattice point, plus the singleton ball {X}; averages run
    over the part of the ball inside the time interval.  ``refine`` halves
    the center step.
    """
    step = max(1, center_step // 2) if refine else center_step
    return ScalarField(_ball_stats(f, rho, step, "max"), f.grid, f.layout, {"center_step": step})


def sharp_function(f: ScalarField, rho, center_step: int = 4, refine: bool = False) -> ScalarField:
    """Discrete f#(X) = max mean oscillation over family balls containing X."""
    step = max(1, center_step // 2) if refine else center_step
    return ScalarField(_ball_stats(f, rho, step, "sharp"), f.grid, f.layout, {"center_step": step})


def maximal_inequality_check(fields, rho, p: float, center_step: int = 4) -> CheckReport:
    """Empirical Hardy-Littlewood and Fefferman-Stein constants on a finite box.

    Reports max ||Mf||_p / ||f||_p (passes iff finite and stable when the
    center density is doubled, < 10% drift) and max ||f||_p / ||f#||_p over
    the mean-zero parts f - mean(f), which is reported but not asserted.
    """
    hl, hl2, fs = [], [], []
    for f in fields:
        nf = lp_norm(f, p)
        if nf == 0:
            continue
        hl.append(lp_norm(maximal_function(f, rho, center_step), p) / nf)
        hl2.append(lp_norm(maximal_function(f, rho, center_step, refine=True), p) / nf)
        if np.isrealobj(f.values):
            fc = ScalarField(f.values - np.mean(f.values), f.grid, f.layout)
            sc = lp_norm(sharp_function(fc, rho, center_step), p)
            if sc > 0:
                fs.append(lp_norm(fc, p) / sc)
    m1, m2 = max(hl), max(hl2)
    drift = abs(m2 - m1) / m1
    q = {"hl_constant": m1, "fs_constant": max(fs) if fs else None, "n_fields": len(hl)}
    return CheckReport(f"maximal_inequality[p={p:g},{rho.label}]", bool(np.isfinite(m1) and drift < 0.1), q,
                       {}, {"drift": 0.1}, {"hl_constant_refined": m2, "drift": drift},
                       ["finite box: the Fefferman-Stein direction needs |D| = infinity; "
                        "its constant is reported on mean-zero fields only and not asserted"])


# ---------------------------------------------------------- battery

@dataclass(frozen=True)
class BatteryField:
    """A battery member: ``build(grid)`` samples it on any grid."""

    field_id: str
    family: str
    build: object

    def __call__(self, grid: SpaceTimeGrid) -> VectorField:
        return self.build(grid)


def _coords(grid):
    t = sample_times(grid, "left")
    x = grid.points()
    return t, x


def _mode_field(j: int, K: int):
    def build(grid):
        t, x = _coords(grid)
        k = j * math.pi / grid.L
        vals = np.zeros((K, grid.n_t) + grid.shape)
        vals[0] = np.cos(k * x[..., 0])[None]
        return VectorField(vals, grid, {"field_id": f"mode{j}"})
    return build


def _trig_field(seed: int, member: int, K: int, J: int = 8):
    def build(grid):
        rng = np.random.default_rng(np.random.SeedSequence([seed, member]))
        c = rng.normal(size=(K, J, grid.d + 2))
        t, x = _coords(grid)
        vals = np.zeros((K, grid.n_t) + grid.shape)
        for k in range(K):
            for jj in range(1, J + 1):
                direction = c[k, jj - 1, 2:] / np.linalg.norm(c[k, jj - 1, 2:])
                kv = np.round(jj * direction) * math.pi / grid.L
                phase = np.tensordot(x, kv, axes=([-1], [0])) + c[k, jj - 1, 0]
                amp = (1.0 + 0.5 * np.sin(2 * math.pi * t / grid.T * jj + c[k, jj - 1, 1])) / jj
                vals[k] += amp[(slice(None),) + (None,) * grid.d] * np.cos(phase)[None]
        return VectorField(vals, grid, {"field_id": f"trig{member}"})
    return build


def _indicator_field(a: float, b: float, sigma: float, K: int):
    def build(grid):
        t, x = _coords(grid)
        it = ((t >= a * grid.T) & (t < b * grid.T)).astype(float)
        vals = np.zeros((K, grid.n_t) + grid.shape)
        for k in range(K):
            shift = np.zeros(grid.d)
            shift[0] = (k - (K - 1) / 2) * sigma
            g = np.exp(-np.sum((x - shift) ** 2, axis=-1) / (2 * sigma ** 2))
            vals[k] = it[(slice(None),) + (None,) * grid.d] * g[None]
        return VectorField(vals, grid, {"field_id": f"ind[{a:g},{b:g}]x{sigma:g}"})
    return build


def _power_field(base, fam: KernelFamily, steps: int = 1):
    def build(grid):
        f = base(grid)
        D = plancherel_weights(fam, grid)
        fh = f.hat()
        for _ in range(steps):
            fh = D[None] * fh
        vals = np.real(grid.to_physical(fh))
        vals /= np.max(np.abs(vals))
        return VectorField(vals, grid, {"field_id": f"power{steps}({f.meta.get('field_id')})"})
    return build


def lp_battery(fam: KernelFamily, K: int = 2, seed: int = 0, extended: bool = False) -> list[BatteryField]:
    """20 test fields (24 with ``extended``).

    5 single Fourier modes, 5 seeded random trigonometric polynomials,
    5 time indicators times Gaussians, and 5 members obtained by one power
    iteration step of the p = 2 form f -> F^{-1}[D F f] (see
    :func:`plancherel_weights`) applied to the other families.
    """
    out = []
    for j in (1, 3, 7, 15, 31):
        out.append(BatteryField(f"mode{j}", "mode", _mode_field(j, K)))
    trig = []
    for m in range(5):
        tf = BatteryField(f"trig{m}", "trig", _trig_field(seed, m, K))
        trig.append(tf)
        out.append(tf)
    ind = []
    for a, b, s in ((0.0, 1.0, 0.5), (0.0, 0.25, 0.2), (0.5, 0.75, 0.1), (0.75, 1.0, 1.0), (0.25, 0.5, 0.05)):
        tf = BatteryField(f"ind[{a:g},{b:g}]x{s:g}", "indicator", _indicator_field(a, b, s, K))
        ind.append(tf)
        out.append(tf)
    for base in (out[0], out[4], trig[0], trig[1], ind[2]):
        out.append(BatteryField(f"power1({base.field_id})", "power", _power_field(base.build, fam, 1)))
    if extended:
        out.append(BatteryField(f"trig{5}", "trig", _trig_field(seed, 5, K)))
        out.append(BatteryField(f"trig{6}", "trig", _trig_field(seed, 6, K)))
        out.append(BatteryField("ind[0.875,1]x0.02", "indicator", _indicator_field(0.875, 1.0, 0.02, K)))
        out.append(BatteryField("power2(trig0)", "power", _power_field(trig[0].build, fam, 2)))
    return out


def verify_lpaley(fam: KernelFamily, test_fields=None, p_list=(2, 4), grid: SpaceTimeGrid | None = None,
                  refine: bool = True, K: int = 2, seed: int = 0) -> CheckReport:
    """max over the battery of ||Gf||_p / ||f||_p for each p.

    Passes iff, for every p, the max ratio is finite, drifts by less than 10%
    under grid refinement (space and time doubled) and by less than 10% when
    the battery is extended, and (p = 2) the quadrature ratio^2 matches the
    frequency-side exact value to 1e-6 relative.  Zero fields are excluded.
    """
    grid = SpaceTimeGrid(math.pi, 64, fam.sym.d, 1.0, 16) if grid is None else grid
    battery = lp_battery(fam, K, seed) if test_fields is None else list(test_fields)
    extra = [] if test_fields is not None else lp_battery(fam, K, seed, extended=True)[len(battery):]
    rows, notes = [], []

    def run(g, members, tag):
        D = plancherel_weights(fam, g)
        res = {p: [] for p in p_list}
        worst_l2 = 0.0
        for tf in members:
            f = tf(g)
            if f.is_zero():
                notes.append(f"{tf.field_id}: excluded: zero input")
                continue
            G = g_operator(fam, f)
            if not G.meta["converged"]:
                notes.append(f"{tf.field_id} ({tag}): epsilon limit not converged")
            for p in p_list:
                nf, ng = lp_norm(f, p), lp_norm(G, p)
                ratio = ng / nf
                res[p].append(ratio)
                row = {"grid": tag, "p": p, "field_id": tf.field_id, "norm_f": nf, "norm_Gf": ng, "ratio": ratio}
                if p == 2:
                    exact = g_l2_squared_exact(fam, f, D) / nf ** 2
                    rel = abs(ratio ** 2 - exact) / exact if exact > 0 else abs(ratio ** 2)
                    worst_l2 = max(worst_l2, rel)
                    row.update({"ratio2_exact": exact, "rel_err": rel})
                rows.append(row)
        return res, worst_l2

    base, err2 = run(grid, battery, "base")
    q, refinement, ok = {"n_fields": len(battery)}, {}, True
    ext = run(grid, extra, "extension")[0] if extra else None
    ref = run(grid.refined(space=True, time=True), battery, "refined")[0] if refine else None
    for p in p_list:
        m = max(base[p])
        q[f"max_ratio_p{p:g}"] = m
        ok = ok and np.isfinite(m)
        if ref is not None:
            m2 = max(ref[p])
            drift = abs(m2 - m) / m
            refinement[f"max_ratio_p{p:g}_refined"] = m2
            refinement[f"drift_p{p:g}"] = drift
            ok = ok and drift < 0.1
        if ext is not None:
            me = max(m, max(ext[p]))
            q[f"max_ratio_p{p:g}_extended"] = me
            ok = ok and (me - m) / m < 0.1
    if 2 in p_list:
        q["plancherel_rel_err"] = err2
        ok = ok and err2 <= 1e-6
    return CheckReport(f"lpaley[{fam.label}]", bool(ok), q,
                       {"plancherel_rel_err_max": 1e-6}, {"drift": 0.1, "extension": 0.1}, refinement,
                       notes, tables={"lpaley_ratios": rows})
