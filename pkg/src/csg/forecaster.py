"""Adaptively calibrated forecasting agent.

Sleeping experts indexed by (start round s, bin i, coordinate j, sign sigma) are weighted with
AdaNormalHedge; each round a forecast distribution is chosen so that the worst-case expected
expert loss is at most ``eps_nrbr``. Expert state is stored as dense arrays of shape
(cohorts, bins, coordinates, 2) with sign index 0 for sigma = +1 and 1 for sigma = -1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from csg.calibration import BinningSpec, bin_weights_many
from csg.games import ContinuousGame, FiniteGame, best_response
from csg.geometry import Ball, Box, Simplex

SIGNS = np.array([1.0, -1.0])


class NRBRError(RuntimeError):
    """The forecast grid cannot certify the configured expected-loss bound."""


def anh_weight(R: float, C: float) -> float:
    if C < 0:
        raise ValueError("C must be >= 0")
    phi_hi = math.exp(max(0.0, R + 1.0) ** 2 / (3.0 * (C + 1.0)))
    phi_lo = math.exp(max(0.0, R - 1.0) ** 2 / (3.0 * (C + 1.0)))
    return 0.5 * (phi_hi - phi_lo)


def anh_log_weight(R: np.ndarray, C: np.ndarray) -> np.ndarray:
    """log of anh_weight, elementwise; -inf where the weight is exactly zero."""
    a = np.maximum(R + 1.0, 0.0) ** 2 / (3.0 * (C + 1.0))
    b = np.maximum(R - 1.0, 0.0) ** 2 / (3.0 * (C + 1.0))
    gap = b - a
    out = np.full(np.shape(R), -np.inf)
    pos = gap < 0
    out[pos] = np.log(0.5) + a[pos] + np.log(-np.expm1(gap[pos]))
    return out


def expert_loss(w_i: float, sigma: int, h_j: float, p_j: float) -> float:
    return w_i * sigma * (h_j - p_j)


def start_rounds(scheme: str, T: int) -> np.ndarray:
    if scheme == "every_round":
        return np.arange(1, T + 1)
    if scheme == "dyadic":
        return 2 ** np.arange(int(math.floor(math.log2(max(T, 1)))) + 1)
    raise ValueError(f"unknown start scheme {scheme!r}")


@dataclass(frozen=True)
class ForecasterConfig:
    grid_step: float = 0.01
    start_scheme: str = "every_round"
    horizon: int = 5000
    eps_nrbr: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.grid_step <= 1):
            raise ValueError("grid_step must lie in (0, 1]")
        if self.start_scheme not in ("every_round", "dyadic"):
            raise ValueError(f"unknown start scheme {self.start_scheme!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def eps(self) -> float:
        return self.grid_step if self.eps_nrbr is None else self.eps_nrbr

    def to_json(self) -> dict:
        return {"grid_step": self.grid_step, "start_scheme": self.start_scheme, "eps_nrbr": self.eps}


@dataclass
class ANHState:
    n: int
    m: int
    horizon: int
    scheme: str
    R: np.ndarray
    C: np.ndarray
    starts: np.ndarray
    n_cohorts: int = 0
    t: int = 0  # rounds observed so far
    log_norm: float = 0.0

    @classmethod
    def create(cls, n: int, m: int, horizon: int, scheme: str) -> "ANHState":
        starts = start_rounds(scheme, horizon)
        cap = len(starts)
        st = cls(n, m, horizon, scheme, np.zeros((cap, n, m, 2)), np.zeros((cap, n, m, 2)), starts)
        st.log_norm = math.log(float(np.sum(1.0 / starts.astype(float) ** 2)) * n * m * 2)
        st._wake(1)
        return st

    def _wake(self, s: int) -> None:
        if self.n_cohorts < len(self.starts) and self.starts[self.n_cohorts] == s:
            self.n_cohorts += 1
        elif s > self.starts[-1] and self.scheme == "every_round":
            # past the declared horizon: extend storage, keep prior normalisation fixed
            self.starts = np.append(self.starts, s)
            grow = np.zeros((1, self.n, self.m, 2))
            self.R = np.concatenate([self.R, grow])
            self.C = np.concatenate([self.C, grow])
            self.n_cohorts += 1

    def log_prior(self) -> np.ndarray:
        s = self.starts[: self.n_cohorts].astype(float)
        return -2.0 * np.log(s) - self.log_norm

    def prior_mass(self) -> np.ndarray:
        """Prior of every expert over the declared horizon, shape (len(starts), n, m, 2)."""
        s = self.starts.astype(float)
        q = np.exp(-2.0 * np.log(s) - self.log_norm)
        return np.broadcast_to(q[:, None, None, None], (len(s), self.n, self.m, 2)).copy()


def anh_distribution(state: ANHState) -> np.ndarray:
    """pi over awake experts, shape (n_cohorts, n, m, 2)."""
    c = state.n_cohorts
    lw = anh_log_weight(state.R[:c], state.C[:c]) + state.log_prior()[:, None, None, None]
    top = lw.max()
    if not np.isfinite(top):
        lw = np.broadcast_to(state.log_prior()[:, None, None, None], lw.shape)
        top = lw.max()
    pi = np.exp(lw - top)
    return pi / pi.sum()


@dataclass(frozen=True)
class ForecastDistribution:
    support: np.ndarray
    probs: np.ndarray
    certified_value: float


def signed_mass(pi: np.ndarray) -> np.ndarray:
    """D[i, j] = sum_s pi(s, i, j, +) - pi(s, i, j, -)."""
    return (pi[..., 0] - pi[..., 1]).sum(axis=0)


def compute_Z(pi: np.ndarray, binning: BinningSpec, game: Optional[FiniteGame], p: np.ndarray) -> float:
    """Scalar drift for two principal actions: coordinate-1 signed mass minus coordinate-0 signed mass."""
    if pi.shape[2] != 2:
        raise ValueError("compute_Z is defined for m = 2")
    w = bin_weights_many(binning, game, np.atleast_2d(p))[0]
    D = signed_mass(pi)
    return float(w @ (D[:, 1] - D[:, 0]))


def _value(space, Zg: np.ndarray, pts: np.ndarray, probs: np.ndarray) -> float:
    """max over outcomes h of sum_q probs_q <Zg_q, h - p_q> (linear in h, so vertices suffice)."""
    a = probs @ Zg
    b = -float(np.sum(probs * np.einsum("qj,qj->q", Zg, pts)))
    return space.max_linear(a) + b


def select_scalar(x: np.ndarray, Z: np.ndarray) -> tuple[list[int], list[float]]:
    """Forecast mixture on an ascending 1-d grid given the drift Z at each grid point."""
    G = len(x)
    if np.all(Z == 0):
        return [G // 2], [1.0]
    if np.all(Z >= 0):
        return [G - 1], [1.0]
    if np.all(Z <= 0):
        return [0], [1.0]
    hi_val = lambda i, j, q: q * Z[i] * (x[j] - x[i])  # noqa: E731  value of a two-point mix
    best: tuple[float, list[int], list[float]] = (np.inf, [], [])
    if Z[-1] >= 0:
        best = (0.0, [G - 1], [1.0])
    if Z[0] <= 0 and 0.0 < best[0]:
        best = (0.0, [0], [1.0])
    zeros = np.nonzero(Z == 0)[0]
    if len(zeros) and 0.0 < best[0]:
        best = (0.0, [int(zeros[0])], [1.0])
    cross = np.nonzero(Z[:-1] * Z[1:] < 0)[0]
    for i in cross:
        q = -Z[i + 1] / (Z[i] - Z[i + 1])
        v = hi_val(i, i + 1, q)
        if v < best[0]:
            best = (v, [int(i), int(i) + 1], [float(q), float(1 - q)])
    return best[1], best[2]


class CalibratedForecaster:
    """Produces forecasts over a simplex (finite games) or a box/ball (continuous games)."""

    def __init__(
        self,
        config: ForecasterConfig,
        binning: BinningSpec,
        space: Simplex | Box | Ball,
        game: Optional[FiniteGame] = None,
        track_regret: bool = False,
    ):
        self.config = config
        self.binning = binning
        self.space = space
        self.game = game
        self.m = space.dim
        self.state = ANHState.create(binning.n, self.m, config.horizon, config.start_scheme)
        self.grid = space.grid(config.grid_step)
        self.W_grid = bin_weights_many(binning, game, self.grid)
        self.scalar = isinstance(space, Simplex) and space.m == 2 or isinstance(space, Box) and space.dim == 1
        self.extreme = space.extreme_points()
        self._pi: Optional[np.ndarray] = None
        self.last_distribution: Optional[ForecastDistribution] = None
        self.track_regret = track_regret
        self.max_regret_ratio = 0.0
        self.max_certified = -np.inf

    def distribution(self) -> np.ndarray:
        if self._pi is None:
            self._pi = anh_distribution(self.state)
        return self._pi

    def forecast_distribution(self) -> ForecastDistribution:
        pi = self.distribution()
        Zg = self.W_grid @ signed_mass(pi)  # (G, m)
        if self.scalar:
            if isinstance(self.space, Simplex):
                x, Z = self.grid[:, 1], Zg[:, 1] - Zg[:, 0]
            else:
                x, Z = self.grid[:, 0], Zg[:, 0]
            idx, probs = select_scalar(x, Z)
        else:
            idx, probs = self._solve_lp(Zg)
        idx = np.asarray(idx)
        probs = np.asarray(probs, dtype=float)
        val = _value(self.space, Zg[idx], self.grid[idx], probs)
        if val > self.config.eps + 1e-12:
            raise NRBRError(f"certified value {val:.3g} exceeds eps_nrbr {self.config.eps:.3g}")
        self.max_certified = max(self.max_certified, val)
        fd = ForecastDistribution(self.grid[idx], probs, val)
        self.last_distribution = fd
        return fd

    def _solve_lp(self, Zg: np.ndarray) -> tuple[list[int], list[float]]:
        G = len(self.grid)
        # cost[q, e] = <Zg_q, h_e - p_q>
        cost = Zg @ self.extreme.T - np.einsum("qj,qj->q", Zg, self.grid)[:, None]
        if np.allclose(cost, 0):
            return [G // 2], [1.0]
        E = cost.shape[1]
        c = np.zeros(G + 1)
        c[-1] = 1.0
        res = linprog(
            c,
            A_ub=np.hstack([cost.T, -np.ones((E, 1))]),
            b_ub=np.zeros(E),
            A_eq=np.hstack([np.ones((1, G)), [[0.0]]]),
            b_eq=[1.0],
            bounds=[(0, None)] * G + [(None, None)],
            method="highs",
        )
        if res.status != 0:
            raise NRBRError(f"forecast LP failed: {res.message}")
        q = np.maximum(res.x[:G], 0.0)
        keep = np.nonzero(q > 1e-12)[0]
        q = q[keep] / q[keep].sum()
        return keep.tolist(), q.tolist()

    def forecast(self, rng: np.random.Generator) -> np.ndarray:
        fd = self.forecast_distribution()
        j = 0 if len(fd.probs) == 1 else int(rng.choice(len(fd.probs), p=fd.probs))
        return fd.support[j].copy()

    def observe(self, p: np.ndarray, outcome: np.ndarray) -> None:
        st = self.state
        pi = self.distribution()
        c = st.n_cohorts
        w = bin_weights_many(self.binning, self.game, np.atleast_2d(p))[0]
        d = np.atleast_1d(np.asarray(outcome, dtype=float) - np.asarray(p, dtype=float))
        loss = w[:, None, None] * d[None, :, None] * SIGNS[None, None, :]  # (n, m, 2)
        l_hat = float(np.sum(pi * loss[None]))
        r = loss - l_hat
        st.R[:c] += r[None]
        st.C[:c] += np.abs(r)[None]
        st.t += 1
        if self.track_regret:
            t = st.t
            span = t - st.starts[:c] + 1
            bound = np.sqrt(span * math.log(max(self.binning.n * self.m * t, 2)))
            ratio = st.R[:c].reshape(c, -1).max(axis=1) / bound
            self.max_regret_ratio = max(self.max_regret_ratio, float(ratio.max()))
        st._wake(st.t + 1)
        self._pi = None


class CalibratedAgent:
    """Forecasts with a CalibratedForecaster and best responds to its own forecast.

    ``respond`` never reads the principal's strategy; it is accepted only so all agents share one interface.
    """

    def __init__(
        self,
        game: FiniteGame | ContinuousGame,
        forecaster: CalibratedForecaster,
        tie_rule: str = "deterministic",
        rng: Optional[np.random.Generator] = None,
    ):
        self.game = game
        self.forecaster = forecaster
        self.tie_rule = tie_rule
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._p: Optional[np.ndarray] = None

    def respond(self, h_hidden=None):
        p = self.forecaster.forecast(self.rng)
        self._p = p
        return p, _respond_to(self.game, p, self.tie_rule, self.rng)

    def observe(self, outcome: np.ndarray) -> None:
        self.forecaster.observe(self._p, outcome)


class ExactBRAgent:
    """Forecasts the principal's strategy exactly (p_t = h_t)."""

    def __init__(self, game, tie_rule: str = "deterministic", rng: Optional[np.random.Generator] = None):
        self.game = game
        self.tie_rule = tie_rule
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def respond(self, h):
        p = np.atleast_1d(np.asarray(h, dtype=float)).copy()
        return p, _respond_to(self.game, p, self.tie_rule, self.rng)

    def observe(self, outcome) -> None:
        pass


class ScriptedAgent:
    """Best responds to a fixed sequence of forecasts (cycled)."""

    def __init__(self, game, forecasts, tie_rule: str = "deterministic", rng: Optional[np.random.Generator] = None):
        self.game = game
        self.forecasts = [np.atleast_1d(np.asarray(f, dtype=float)) for f in forecasts]
        self.tie_rule = tie_rule
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._i = 0

    def respond(self, h_hidden=None):
        p = self.forecasts[self._i % len(self.forecasts)].copy()
        self._i += 1
        return p, _respond_to(self.game, p, self.tie_rule, self.rng)

    def observe(self, outcome) -> None:
        pass


def _respond_to(game, p: np.ndarray, tie_rule: str, rng: np.random.Generator):
    if isinstance(game, FiniteGame):
        return best_response(game, p, tie_rule, rng)[1]
    return np.atleast_1d(game.best_response(p))


def build_calibrated_agent(
    game: FiniteGame | ContinuousGame,
    config: ForecasterConfig,
    tie_rule: str = "deterministic",
    rng: Optional[np.random.Generator] = None,
    tent_eps: Optional[float] = None,
    track_regret: bool = False,
) -> CalibratedAgent:
    if isinstance(game, FiniteGame):
        binning = BinningSpec.for_game(game, tie_rule)
        fc = CalibratedForecaster(config, binning, game.space, game, track_regret)
    else:
        from csg.principal_continuous import build_tent_binning

        tb = build_tent_binning(game.domain, tent_eps if tent_eps is not None else 0.05)
        fc = CalibratedForecaster(config, tb.spec, game.domain, None, track_regret)
    return CalibratedAgent(game, fc, tie_rule, rng)
