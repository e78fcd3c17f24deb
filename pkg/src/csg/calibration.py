"""Binnings and post-hoc audit metrics: windowed calibration error, swap regret, l1 score."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from csg.games import TIE_TOL, FiniteGame, best_response_many
from csg.transcript import Transcript

BINNING_KINDS = ("deterministic_br", "randomized_br", "tent_grid", "explicit")


@dataclass(frozen=True)
class BinningSpec:
    kind: str
    n: int
    centers: Optional[np.ndarray] = None
    radius: Optional[float] = None
    table: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in BINNING_KINDS:
            raise ValueError(f"unknown binning kind {self.kind!r}")
        if self.kind == "tent_grid" and (self.centers is None or self.radius is None):
            raise ValueError("tent_grid needs centers and radius")
        if self.kind == "explicit" and self.table is None:
            raise ValueError("explicit binning needs a weight table")

    @classmethod
    def for_game(cls, game: FiniteGame, tie_rule: str = "deterministic") -> "BinningSpec":
        kind = {"deterministic": "deterministic_br", "randomized": "randomized_br"}[tie_rule]
        return cls(kind, game.k)

    @classmethod
    def tent(cls, centers: np.ndarray, radius: float) -> "BinningSpec":
        c = np.asarray(centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        return cls("tent_grid", len(c), centers=c, radius=float(radius))


def bin_weights_many(binning: BinningSpec, game: Optional[FiniteGame], P: np.ndarray) -> np.ndarray:
    """Weights for each row of P, shape (len(P), n)."""
    P = np.asarray(P, dtype=float)
    if binning.kind in ("deterministic_br", "randomized_br"):
        if game is None:
            raise ValueError("best-response binnings need a game")
        if binning.kind == "deterministic_br":
            W = np.zeros((len(P), game.k))
            W[np.arange(len(P)), best_response_many(game, P)] = 1.0
            return W
        va = P @ game.u_agent
        ties = (va >= va.max(axis=1, keepdims=True) - TIE_TOL).astype(float)
        return ties / ties.sum(axis=1, keepdims=True)
    if binning.kind == "tent_grid":
        if P.ndim == 1:
            P = P[:, None]
        d = np.linalg.norm(P[:, None, :] - binning.centers[None, :, :], axis=2)
        lam = np.maximum(binning.radius - d, 0.0)
        tot = lam.sum(axis=1, keepdims=True)
        if np.any(tot <= 0):
            raise ValueError("point not covered by any tent")
        return lam / tot
    return np.vstack([np.asarray(binning.table(p), dtype=float) for p in P])


def bin_weights(binning: BinningSpec, game: Optional[FiniteGame], p: np.ndarray) -> np.ndarray:
    return bin_weights_many(binning, game, np.atleast_1d(np.asarray(p, dtype=float))[None, :])[0]


@dataclass(frozen=True)
class WindowStats:
    bin: int
    s: int
    t: int
    n_eff: float
    p_bar: Optional[np.ndarray]
    h_bar: Optional[np.ndarray]
    cal_err: float

    def to_json(self) -> dict:
        return {
            "bin": self.bin,
            "s": self.s,
            "t": self.t,
            "n_eff": self.n_eff,
            "p_bar": None if self.p_bar is None else self.p_bar.tolist(),
            "h_bar": None if self.h_bar is None else self.h_bar.tolist(),
            "cal_err": self.cal_err,
        }


@dataclass(frozen=True)
class WindowScheme:
    kind: str = "all_pairs"

    def __post_init__(self):
        if self.kind not in ("all_pairs", "dyadic", "full_only"):
            raise ValueError(f"unknown window scheme {self.kind!r}")

    @classmethod
    def default_for(cls, T: int) -> "WindowScheme":
        return cls("all_pairs" if T <= 4000 else "dyadic")


def dyadic_windows(T: int) -> list[tuple[int, int]]:
    """Windows of 2^L rounds starting on multiples of 2^(L-1), plus the suffixes ending at T and [1, T]."""
    out = set()
    L = 1
    while (1 << L) <= 2 * T:
        size = 1 << L
        stride = max(size >> 1, 1)
        for s0 in range(0, T, stride):
            s, t = s0 + 1, min(s0 + size, T)
            if s < t:
                out.add((s, t))
        L += 1
    out.add((1, T))
    return sorted(out)


def _weights_and_gaps(tr: Transcript, binning: BinningSpec, game: Optional[FiniteGame]):
    W = bin_weights_many(binning, game, tr.P)
    return W, tr.P - tr.H


def cal_err_window(
    tr: Transcript, binning: BinningSpec, game: Optional[FiniteGame], s: int, t: int, i: int
) -> WindowStats:
    """Calibration error of bin i over rounds s..t (1-based, inclusive), denominator t - s."""
    if not (1 <= s < t <= len(tr)):
        raise ValueError("need 1 <= s < t <= T")
    W = bin_weights_many(binning, game, tr.P[s - 1 : t])[:, i]
    n_eff = float(W.sum())
    if n_eff <= 0:
        return WindowStats(i, s, t, 0.0, None, None, 0.0)
    p_bar = W @ tr.P[s - 1 : t] / n_eff
    h_bar = W @ tr.H[s - 1 : t] / n_eff
    err = n_eff / (t - s) * float(np.max(np.abs(p_bar - h_bar)))
    return WindowStats(i, s, t, n_eff, p_bar, h_bar, err)


@dataclass
class AuditResult:
    max_err: float
    worst: WindowStats
    table: list[WindowStats] = field(default_factory=list)


def adaptive_cal_err(
    tr: Transcript, binning: BinningSpec, game: Optional[FiniteGame], scheme: WindowScheme = WindowScheme()
) -> AuditResult:
    T = len(tr)
    if T < 2:
        raise ValueError("need at least two rounds")
    W, G = _weights_and_gaps(tr, binning, game)
    n = W.shape[1]
    # S[t, i, :] = sum_{tau <= t} w_i(p_tau) (p_tau - h_tau)
    S = np.zeros((T + 1, n, tr.m))
    np.cumsum(W[:, :, None] * G[:, None, :], axis=0, out=S[1:])
    best, arg = 0.0, (1, T, 0)
    if scheme.kind == "all_pairs":
        tt = np.arange(1, T + 1)
        for s in range(1, T):
            diff = np.abs(S[s + 1 :] - S[s - 1][None]).max(axis=2)  # t = s+1..T
            err = diff / (tt[s:] - s)[:, None]
            j = int(np.argmax(err))
            v = float(err.flat[j])
            if v > best:
                best, arg = v, (s, s + 1 + j // n, j % n)
    else:
        wins = [(1, T)] if scheme.kind == "full_only" else dyadic_windows(T)
        ss = np.array([w[0] for w in wins])
        ts = np.array([w[1] for w in wins])
        err = np.abs(S[ts] - S[ss - 1]).max(axis=2) / (ts - ss)[:, None]
        j = int(np.argmax(err))
        if err.flat[j] > 0:
            best = float(err.flat[j])
            arg = (int(ss[j // n]), int(ts[j // n]), j % n)
    worst = cal_err_window(tr, binning, game, *arg)
    table = [cal_err_window(tr, binning, game, 1, T, i) for i in range(n)]
    return AuditResult(max(best, worst.cal_err) if best > 0 else worst.cal_err, worst, table)


def full_window_errors(tr: Transcript, binning: BinningSpec, game: Optional[FiniteGame]) -> np.ndarray:
    T = len(tr)
    W, G = _weights_and_gaps(tr, binning, game)
    return np.abs(W.T @ G).max(axis=1) / (T - 1)


def swap_regret(game: FiniteGame, tr: Transcript) -> float:
    """Sum over played actions of the gain from the best fixed replacement."""
    Y = tr.Y.astype(int)
    gains = tr.H @ game.u_agent  # U_A(h_t, y') for every y'
    total = 0.0
    for i in np.unique(Y):
        g = gains[Y == i].sum(axis=0)
        total += float(g.max() - g[i])
    return total


def swap_regret_bruteforce(game: FiniteGame, tr: Transcript) -> float:
    import itertools

    Y = tr.Y.astype(int)
    gains = tr.H @ game.u_agent
    base = float(gains[np.arange(len(Y)), Y].sum())
    best = -np.inf
    for pi in itertools.product(range(game.k), repeat=game.k):
        best = max(best, float(gains[np.arange(len(Y)), np.asarray(pi)[Y]].sum()))
    return best - base


def standard_cal_score(tr: Transcript, binning: BinningSpec, game: Optional[FiniteGame] = None) -> float:
    return float(full_window_errors(tr, binning, game).sum())


def audit_report(
    tr: Transcript, binning: BinningSpec, game: Optional[FiniteGame], scheme: WindowScheme
) -> dict:
    res = adaptive_cal_err(tr, binning, game, scheme)
    return {
        "max_adaptive_cal_err": res.max_err,
        "worst_window": {"s": res.worst.s, "t": res.worst.t, "bin": res.worst.bin},
        "per_bin_full_window": [w.cal_err for w in res.table],
        "swap_regret": swap_regret(game, tr) if isinstance(game, FiniteGame) and not tr.real_actions else None,
        "l1_score": standard_cal_score(tr, binning, game),
        "scheme": scheme.kind,
    }
