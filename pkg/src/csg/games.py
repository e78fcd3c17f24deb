"""Finite and continuous Stackelberg games, best responses and exact Stackelberg oracles."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from csg.geometry import Ball, Box, Simplex, project_to_simplex, zero_sum_norm

TIE_TOL = 1e-9


@dataclass(frozen=True)
class FiniteGame:
    """u_principal[x, y], u_agent[x, y]: row = principal action, column = agent action.

    preference lists agent actions from most to least preferred for deterministic tie-breaking.
    """

    u_principal: np.ndarray
    u_agent: np.ndarray
    preference: tuple[int, ...] = ()

    def __post_init__(self):
        up = np.array(self.u_principal, dtype=float)
        ua = np.array(self.u_agent, dtype=float)
        if up.ndim != 2 or up.shape != ua.shape:
            raise ValueError("utility matrices must share an m x k shape")
        m, k = up.shape
        if m < 2 or k < 1:
            raise ValueError("need m >= 2 and k >= 1")
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(ua))):
            raise ValueError("utilities must be finite")
        pref = tuple(int(i) for i in self.preference) if len(self.preference) else tuple(range(k))
        if sorted(pref) != list(range(k)):
            raise ValueError("preference must be a permutation of the agent actions")
        up.setflags(write=False)
        ua.setflags(write=False)
        object.__setattr__(self, "u_principal", up)
        object.__setattr__(self, "u_agent", ua)
        object.__setattr__(self, "preference", pref)
        rank = np.empty(k, dtype=int)
        rank[list(pref)] = np.arange(k)
        rank.setflags(write=False)
        object.__setattr__(self, "_rank", rank)

    @property
    def m(self) -> int:
        return self.u_principal.shape[0]

    @property
    def k(self) -> int:
        return self.u_principal.shape[1]

    @property
    def rank(self) -> np.ndarray:
        """rank[y] = position of y in the preference order (0 = most preferred)."""
        return self._rank

    @property
    def space(self) -> Simplex:
        return Simplex(self.m)

    def u_max(self) -> float:
        """Largest principal utility over pure strategies (= over mixed ones)."""
        return float(self.u_principal.max())

    def normalized(self) -> "FiniteGame":
        return FiniteGame(_rescale(self.u_principal), _rescale(self.u_agent), self.preference)

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "u_principal": self.u_principal.tolist(),
            "u_agent": self.u_agent.tolist(),
            "preference": list(self.preference),
        }


def _rescale(u: np.ndarray) -> np.ndarray:
    lo, hi = float(u.min()), float(u.max())
    if hi - lo <= 0:
        return np.zeros_like(u)
    return (u - lo) / (hi - lo)


def load_game(path: str | Path, normalize: bool = True) -> FiniteGame:
    with open(path) as f:
        d = json.load(f)
    return game_from_json(d, normalize)


def game_from_json(d: dict, normalize: bool = True) -> FiniteGame:
    up = np.asarray(d["u_principal"], dtype=float)
    ua = np.asarray(d["u_agent"], dtype=float)
    if up.shape != (d["m"], d["k"]):
        raise ValueError(f"u_principal shape {up.shape} does not match m={d['m']}, k={d['k']}")
    g = FiniteGame(up, ua, tuple(d.get("preference", range(d["k"]))))
    return g.normalized() if normalize else g


def best_response_set(game: FiniteGame, p: np.ndarray) -> tuple[int, ...]:
    vals = np.asarray(p, dtype=float) @ game.u_agent
    return tuple(int(i) for i in np.nonzero(vals >= vals.max() - TIE_TOL)[0])


def best_response(
    game: FiniteGame, p: np.ndarray, tie_rule: str = "deterministic", rng: Optional[np.random.Generator] = None
) -> tuple[tuple[int, ...], int]:
    br = best_response_set(game, p)
    if tie_rule == "deterministic":
        chosen = min(br, key=lambda y: game.rank[y])
    elif tie_rule == "randomized":
        if rng is None:
            raise ValueError("randomized tie-breaking needs an rng")
        chosen = br[int(rng.integers(len(br)))] if len(br) > 1 else br[0]
    else:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    return br, int(chosen)


def best_response_many(game: FiniteGame, P: np.ndarray) -> np.ndarray:
    """Deterministic tie-broken best response for each row of P."""
    vals = np.asarray(P, dtype=float) @ game.u_agent
    ties = vals >= vals.max(axis=1, keepdims=True) - TIE_TOL
    score = np.where(ties, -game.rank[None, :], -np.inf)
    return np.argmax(score, axis=1)


def utilities(game: FiniteGame, h: np.ndarray, y: int) -> tuple[float, float]:
    h = np.asarray(h, dtype=float)
    return float(h @ game.u_principal[:, y]), float(h @ game.u_agent[:, y])


@dataclass(frozen=True)
class StackelbergSolution:
    value: float
    strategy: np.ndarray
    agent_action: int
    per_action_values: np.ndarray

    def to_json(self) -> dict:
        return {
            "V_star": self.value,
            "h_star": self.strategy.tolist(),
            "y_star": self.agent_action,
            "per_action_values": [None if not np.isfinite(v) else v for v in self.per_action_values],
        }


def _polytope_halfspaces(game: FiniteGame, y: int) -> np.ndarray:
    """Rows a with P_y = {h in simplex: <h, a> >= 0}, simplex faces included."""
    rows = [game.u_agent[:, y] - game.u_agent[:, yp] for yp in range(game.k) if yp != y]
    rows.extend(np.eye(game.m))
    return np.asarray(rows).reshape(-1, game.m)


def solve_restricted(game: FiniteGame, y: int, margin: float = 0.0) -> tuple[float, Optional[np.ndarray]]:
    """max <h, U_P(., y)> over the margin-shrunken best-response polytope of y."""
    A = _polytope_halfspaces(game, y)
    norms = np.array([zero_sum_norm(a) for a in A])
    res = linprog(
        -game.u_principal[:, y],
        A_ub=-A,
        b_ub=-margin * norms,
        A_eq=np.ones((1, game.m)),
        b_eq=[1.0],
        bounds=[(None, None)] * game.m,
        method="highs",
    )
    if res.status != 0:
        return -np.inf, None
    h = project_to_simplex(res.x)
    return float(h @ game.u_principal[:, y]), h


def solve_stackelberg(game: FiniteGame) -> StackelbergSolution:
    vals = np.full(game.k, -np.inf)
    pts: list[Optional[np.ndarray]] = [None] * game.k
    for y in range(game.k):
        vals[y], pts[y] = solve_restricted(game, y)
    if not np.any(np.isfinite(vals)):
        raise RuntimeError("every best-response polytope is empty")
    best = max(range(game.k), key=lambda y: (round(vals[y], 12), -game.rank[y]))
    return StackelbergSolution(float(vals[best]), pts[best], int(best), vals)


def grid_stackelberg(game: FiniteGame, step: float = 1e-3) -> float:
    """Brute-force reference: best principal utility over each grid point's best-response set."""
    P = Simplex(game.m).grid(step)
    va = P @ game.u_agent
    ties = va >= va.max(axis=1, keepdims=True) - TIE_TOL
    return float(np.max(np.where(ties, P @ game.u_principal, -np.inf)))


def conservative_membership_exact(
    game: FiniteGame, y: int, h: np.ndarray, margin: float, tol: float = TIE_TOL
) -> bool:
    """Is h inside P_y with a margin-ball (within the simplex's affine hull) to spare?"""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    h = np.asarray(h, dtype=float)
    if abs(h.sum() - 1.0) > tol:
        return False
    A = _polytope_halfspaces(game, y)
    norms = np.array([zero_sum_norm(a) for a in A])
    slack = A @ h - margin * norms
    return bool(np.all(slack >= -tol))


def membership_distance(game: FiniteGame, y: int, h: np.ndarray) -> float:
    """Signed distance (inside the affine hull) from h to the boundary of P_y; positive inside."""
    A = _polytope_halfspaces(game, y)
    dists = []
    for a in A:
        n = zero_sum_norm(a)
        v = float(a @ h)
        if n <= 1e-15:
            if v < -TIE_TOL:
                return -np.inf
            continue
        dists.append(v / n)
    return float(min(dists)) if dists else np.inf


def chebyshev_radius(game: FiniteGame, y: int) -> tuple[float, np.ndarray]:
    A = _polytope_halfspaces(game, y)
    norms = np.array([zero_sum_norm(a) for a in A])
    m = game.m
    # variables (h, r): maximise r subject to <h,a> >= r*|a|, sum h = 1
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, norms[:, None]])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=np.zeros(len(A)),
        A_eq=np.hstack([np.ones((1, m)), [[0.0]]]),
        b_eq=[1.0],
        bounds=[(None, None)] * m + [(0, None)],
        method="highs",
    )
    if res.status != 0 or res.x[-1] <= 1e-12:
        return 0.0, np.full(m, 1.0 / m)
    return float(res.x[-1]), project_to_simplex(res.x[:m])


def toy_g1() -> FiniteGame:
    """Two actions each side; the agent plays y1 iff h_1 >= 1/2, the principal wants y1 at h = (1, 0)."""
    return FiniteGame(np.array([[1.0, 0.0], [0.5, 0.2]]), np.array([[1.0, 0.0], [0.0, 1.0]]), (0, 1))


@dataclass(frozen=True)
class Regularity:
    """Declared constants of the continuous setting (not verified)."""

    L1: float = 1.0
    L2: float = 1.0
    L_BR: float = 1.0
    L_U: float = 1.0
    W_P: float = 1.0
    D_P: float = 2.0
    r: float = 1.0
    R: float = 1.0


@dataclass(frozen=True)
class ContinuousGame:
    domain: Box | Ball
    u_principal: Callable[[np.ndarray, np.ndarray], float]
    u_agent: Callable[[np.ndarray, np.ndarray], float]
    best_response: Callable[[np.ndarray], np.ndarray]
    k: int = 1
    constants: Regularity = field(default_factory=Regularity)
    name: str = "custom"

    @property
    def m(self) -> int:
        return self.domain.dim


def toy_g2() -> ContinuousGame:
    """Domain [-1, 1]; the agent tracks x/2, the principal wants x = 1/2 and y = 1/4."""

    def up(x, y):
        x = float(np.atleast_1d(x)[0])
        y = float(np.atleast_1d(y)[0])
        return 1.0 - (x - 0.5) ** 2 - (y - 0.25) ** 2

    def ua(x, y):
        x = float(np.atleast_1d(x)[0])
        y = float(np.atleast_1d(y)[0])
        return -((y - x / 2.0) ** 2)

    def br(x):
        return np.atleast_1d(np.asarray(x, dtype=float))[:1] / 2.0

    return ContinuousGame(
        domain=Box((-1.0,), (1.0,)),
        u_principal=up,
        u_agent=ua,
        best_response=br,
        k=1,
        constants=Regularity(L1=3.0, L2=1.5, L_BR=0.5, L_U=3.0, W_P=2.0, D_P=2.0, r=1.0, R=1.0),
        name="G2",
    )


TOYS: dict[str, Callable[[], object]] = {"G1": toy_g1, "G2": toy_g2}
