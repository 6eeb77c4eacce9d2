"""Quadrature rules, finite-difference stencils and small fitting helpers."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

__all__ = [
    "gauss_legendre",
    "clustered_rule",
    "composite_rule",
    "midpoint_doubling",
    "sphere_rule",
    "shell_integral",
    "multi_indices",
    "fd_derivative",
    "loglog_slope",
]


@lru_cache(maxsize=64)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _gl(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def _geometric_offsets(length: float, levels: int, per_level: int, stop: float | None,
                       rule: str, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int_0^length f(tau) dtau clustered at tau = 0."""
    nodes, weights = [], []
    hi = length
    for _ in range(levels):
        lo = 0.5 * hi
        edges = np.linspace(lo, hi, per_level + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            if rule == "midpoint":
                nodes.append(np.array([0.5 * (a + b)]))
                weights.append(np.array([b - a]))
            else:
                x, w = gauss_legendre(order, a, b)
                nodes.append(x)
                weights.append(w)
        hi = lo
        if stop is not None and hi <= stop:
            break
    # innermost piece [0, hi]: one panel of the same rule
    if rule == "midpoint":
        nodes.append(np.array([0.5 * hi]))
        weights.append(np.array([hi]))
    else:
        x, w = gauss_legendre(order, 0.0, hi)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def clustered_rule(a: float, b: float, cluster: str = "right", levels: int = 20,
                   per_level: int = 10, stop: float | None = None,
                   rule: str = "midpoint", order: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on [a, b] with panels refined geometrically at an endpoint.

    Each dyadic level (distance to the clustered endpoint halving) carries
    ``per_level`` equal panels; after ``levels`` levels, or once the level
    width drops below ``stop``, a single panel closes the gap.

    Parameters
    ----------
    cluster : {"right", "left", "both"}
        Which endpoint carries the singularity.
    rule : {"midpoint", "gauss"}
        Panel rule; ``"gauss"`` uses ``order`` Gauss-Legendre nodes per panel.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    if cluster == "both":
        m = 0.5 * (a + b)
        x1, w1 = clustered_rule(a, m, "left", levels, per_level, stop, rule, order)
        x2, w2 = clustered_rule(m, b, "right", levels, per_level, stop, rule, order)
        return np.concatenate([x1, x2]), np.concatenate([w1, w2])
    tau, w = _geometric_offsets(b - a, levels, per_level, stop, rule, order)
    if cluster == "right":
        return b - tau, w
    if cluster == "left":
        return a + tau, w
    raise ValueError(f"unknown cluster side {cluster!r}")


def composite_rule(edges, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with ``order`` nodes on every interval of ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = _gl(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def midpoint_doubling(f, s: float, t: float, panels_per_unit: int = 64, rtol: float = 1e-9,
                      max_panels: int = 2 ** 22):
    """Composite midpoint integral of ``f(r)`` over [s, t] with panel doubling.

    ``f`` maps a 1-d array of times to an array with the time axis first.
    The panel count starts at ``panels_per_unit * (t - s)`` and doubles until the
    relative change drops below ``rtol``; the last two levels are combined by
    Richardson extrapolation.
    """
    length = t - s
    n = max(1, int(np.ceil(panels_per_unit * abs(length))))

    def mid(n):
        h = length / n
        r = s + h * (np.arange(n) + 0.5)
        acc = None
        for chunk in np.array_split(np.arange(n), max(1, n // 256)):
            part = np.sum(f(r[chunk]), axis=0)
            acc = part if acc is None else acc + part
        return h * acc

    prev = mid(n)
    while True:
        n *= 2
        cur = mid(n)
        scale = np.max(np.abs(cur))
        if np.max(np.abs(cur - prev)) <= rtol * max(scale, 1e-300) or n >= max_panels:
            return (4.0 * cur - prev) / 3.0
        prev = cur


# ---------------------------------------------------------------- spheres

@lru_cache(maxsize=8)
def sphere_rule(d: int, n: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Fixed quadrature rule on the unit sphere of R^d.

    d=1: the two points +-1. d=2: trapezoid on ``n`` angles (default 512).
    d=3: Lebedev rule with 302 nodes. Weights sum to the surface area.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        n = n or 512
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(n, 2 * np.pi / n)
    if d == 3:
        from scipy.integrate import lebedev_rule

        x, w = lebedev_rule(29)
        return x.T.copy(), w.copy()
    raise NotImplementedError("sphere rules are provided for d <= 3")


def shell_integral(func, R: float, d: int, n_radial: int = 32) -> float:
    """Integral of ``func(points)`` over the shell R <= |xi| < 2R in R^d.

    ``func`` receives an array of shape (N, d) and returns N values.
    """
    r, wr = gauss_legendre(n_radial, R, 2 * R)
    if d == 1:
        pts = np.concatenate([r, -r])[:, None]
        w = np.concatenate([wr, wr])
        return float(np.sum(w * func(pts)))
    dirs, wd = sphere_rule(d, 128 if d == 2 else 0)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    w = (wr[:, None] * r[:, None] ** (d - 1) * wd[None, :]).ravel()
    return float(np.sum(w * func(pts)))


# ---------------------------------------------------------- differences

_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


def multi_indices(d: int, max_order: int, min_order: int = 0) -> list[tuple[int, ...]]:
    """All multi-indices alpha in N^d with min_order <= |alpha| <= max_order."""
    out = []
    for total in range(min_order, max_order + 1):
        for alpha in itertools.product(range(total + 1), repeat=d):
            if sum(alpha) == total:
                out.append(tuple(alpha))
    return out


def fd_derivative(f, xi: np.ndarray, alpha, rel_step: float = 1e-4, floor: float = 1.0) -> np.ndarray:
    """Central finite-difference D^alpha f at points ``xi`` of shape (N, d).

    The step is h = rel_step * max(|xi|, floor) per point, so that the relative
    accuracy is uniform across dyadic scales.  ``floor=0`` keeps the stencil
    away from the origin at every scale (needed when f is singular at 0).
    """
    xi = np.asarray(xi, dtype=float)
    alpha = tuple(int(a) for a in np.atleast_1d(alpha))
    if len(alpha) != xi.shape[-1]:
        raise ValueError("multi-index length must match the dimension")
    if max(alpha) > 4:
        raise ValueError("stencils are provided up to order 4 per coordinate")
    h = rel_step * np.maximum(np.linalg.norm(xi, axis=-1), floor)
    total = sum(alpha)
    acc = 0.0
    stencils = [_STENCILS[a] for a in alpha]
    for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
        coef = 1.0
        shift = np.zeros(xi.shape[-1])
        for j, idx in enumerate(combo):
            offs, wts = stencils[j]
            coef *= wts[idx]
            shift[j] = offs[idx]
        acc = acc + coef * f(xi + h[..., None] * shift)
    return acc / h ** total


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])
