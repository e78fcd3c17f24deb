"""Simplex and sphere routines plus the convex bodies used as strategy/forecast spaces."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9


def is_mixed_point(v: np.ndarray, tol: float = SUM_TOL) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(v.ndim == 1 and np.all(np.isfinite(v)) and np.all(v >= -tol) and abs(v.sum() - 1.0) <= tol)


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorted-threshold method)."""
    v = np.asarray(v, dtype=float)
    m = v.shape[0]
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, m + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


def sample_simplex_uniform(rng: np.random.Generator, m: int) -> np.ndarray:
    if m < 2:
        raise ValueError("m must be >= 2")
    return rng.dirichlet(np.ones(m))


def sample_sphere_in_hyperplane(rng: np.random.Generator, m: int, radius: float) -> np.ndarray:
    """Uniform draw from the radius-sphere intersected with the zero-sum hyperplane."""
    if m < 2 or radius <= 0:
        raise ValueError("need m >= 2 and radius > 0")
    while True:
        g = rng.standard_normal(m)
        g -= g.mean()
        nrm = np.linalg.norm(g)
        if nrm > 1e-12:
            return radius * g / nrm


def zero_sum_norm(a: np.ndarray) -> float:
    """Norm of a linear functional restricted to the simplex's affine hull."""
    a = np.asarray(a, dtype=float)
    return float(np.linalg.norm(a - a.mean()))


def _axis_grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(np.ceil((hi - lo) / step - 1e-9)) + 1
    return np.linspace(lo, hi, max(n, 2))


@dataclass(frozen=True)
class Simplex:
    """Probability simplex in R^m."""

    m: int

    @property
    def dim(self) -> int:
        return self.m

    def contains(self, x: np.ndarray, tol: float = SUM_TOL) -> bool:
        return is_mixed_point(x, tol)

    def center(self) -> np.ndarray:
        return np.full(self.m, 1.0 / self.m)

    def grid(self, step: float, cap: int = 200_000) -> np.ndarray:
        """Points with coordinates on multiples of 1/N, N = ceil(1/step)."""
        N = int(np.ceil(1.0 / step - 1e-9))
        if self.m == 2:
            x = np.arange(N + 1) / N
            return np.column_stack([1.0 - x, x])
        from math import comb

        size = comb(N + self.m - 1, self.m - 1)
        if size > cap:
            raise ValueError(f"simplex grid of {size} points exceeds cap {cap}")
        pts = []
        for c in itertools.product(range(N + 1), repeat=self.m - 1):
            if sum(c) <= N:
                pts.append((N - sum(c),) + c)
        return np.asarray(pts, dtype=float) / N

    def extreme_points(self, n_dirs: int = 0) -> np.ndarray:
        return np.eye(self.m)

    def max_linear(self, a: np.ndarray) -> float:
        return float(np.max(a))

    def inradius(self) -> float:
        return 1.0 / np.sqrt(self.m * (self.m - 1))

    def diameter(self) -> float:
        return float(np.sqrt(2.0))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi]."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("invalid box bounds")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= np.asarray(self.lo) - tol) and np.all(x <= np.asarray(self.hi) + tol))

    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    def grid(self, step: float, cap: int = 100_000) -> np.ndarray:
        axes = [_axis_grid(a, b, step) for a, b in zip(self.lo, self.hi)]
        size = int(np.prod([len(a) for a in axes]))
        if size > cap:
            raise ValueError(f"box grid of {size} points exceeds cap {cap}")
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g.ravel() for g in mesh])

    def extreme_points(self, n_dirs: int = 0) -> np.ndarray:
        return np.asarray(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def max_linear(self, a: np.ndarray) -> float:
        a = np.asarray(a, dtype=float)
        return float(np.sum(np.maximum(a * np.asarray(self.lo), a * np.asarray(self.hi))))

    def inradius(self) -> float:
        return float(np.min(np.asarray(self.hi) - np.asarray(self.lo)) / 2.0)

    def diameter(self) -> float:
        return float(np.linalg.norm(np.asarray(self.hi) - np.asarray(self.lo)))

    def project_shrunken(self, x: np.ndarray, delta: float) -> np.ndarray:
        if delta >= self.inradius():
            raise ValueError("shrinkage must be below the inradius")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.clip(x, np.asarray(self.lo) + delta, np.asarray(self.hi) - delta)


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of the given radius centred at the origin."""

    radius: float
    m: int

    @property
    def dim(self) -> int:
        return self.m

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(np.atleast_1d(x)) <= self.radius + tol)

    def center(self) -> np.ndarray:
        return np.zeros(self.m)

    def grid(self, step: float, cap: int = 100_000) -> np.ndarray:
        box = Box((-self.radius,) * self.m, (self.radius,) * self.m)
        pts = box.grid(step, cap)
        nrm = np.linalg.norm(pts, axis=1)
        inside = pts[nrm <= self.radius + 1e-12]
        # near-boundary lattice points are pulled onto the sphere to keep coverage within step
        near = (nrm > self.radius + 1e-12) & (nrm <= self.radius + step * np.sqrt(self.m) / 2)
        pulled = pts[near] * (self.radius / nrm[near])[:, None]
        out = np.vstack([inside, pulled])
        return np.unique(np.round(out, 12), axis=0)

    def extreme_points(self, n_dirs: int = 64) -> np.ndarray:
        if self.m == 1:
            return np.array([[-self.radius], [self.radius]])
        if self.m == 2:
            ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
            return self.radius * np.column_stack([np.cos(ang), np.sin(ang)])
        # Fibonacci sphere net
        i = np.arange(n_dirs) + 0.5
        z = 1 - 2 * i / n_dirs
        r = np.sqrt(1 - z**2)
        th = np.pi * (1 + 5**0.5) * i
        pts = np.column_stack([r * np.cos(th), r * np.sin(th), z])
        if self.m > 3:
            raise ValueError("ball forecast spaces supported for m <= 3")
        return self.radius * pts

    def max_linear(self, a: np.ndarray) -> float:
        return float(self.radius * np.linalg.norm(a))

    def inradius(self) -> float:
        return float(self.radius)

    def diameter(self) -> float:
        return 2.0 * float(self.radius)

    def project_shrunken(self, x: np.ndarray, delta: float) -> np.ndarray:
        if delta >= self.radius:
            raise ValueError("shrinkage must be below the inradius")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lim = self.radius - delta
        nrm = np.linalg.norm(x)
        return x if nrm <= lim else x * (lim / nrm)


def sample_unit_sphere(rng: np.random.Generator, m: int) -> np.ndarray:
    if m == 1:
        return np.array([rng.choice([-1.0, 1.0])])
    g = rng.standard_normal(m)
    return g / np.linalg.norm(g)
