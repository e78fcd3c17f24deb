"""Continuous games: tent binnings, shrunken projections and the epoch-based gradient-free principal."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from csg.calibration import BinningSpec
from csg.geometry import Ball, Box, sample_unit_sphere


@dataclass(frozen=True)
class TentBinning:
    centers: np.ndarray
    radius: float
    eps: float
    spec: BinningSpec


def build_tent_binning(domain: Box | Ball, eps: float, cap: int = 100_000) -> TentBinning:
    if eps <= 0:
        raise ValueError("eps must be positive")
    centers = domain.grid(eps, cap)
    if len(centers) == 0:
        raise ValueError("empty grid")
    return TentBinning(centers, 2.0 * eps, eps, BinningSpec.tent(centers, 2.0 * eps))


def project_shrunken(domain: Box | Ball, x: np.ndarray, delta: float) -> np.ndarray:
    return domain.project_shrunken(x, delta)


@dataclass(frozen=True)
class GDwoGConfig:
    gamma0: float = 0.5
    delta0: float = 0.3
    epochs: int = 500
    epoch_length: int = 1
    m: int = 1

    def __post_init__(self):
        if self.gamma0 < 0 or self.delta0 <= 0:
            raise ValueError("need gamma0 >= 0 and delta0 > 0")
        if self.epochs < 1 or self.epoch_length < 1:
            raise ValueError("epochs and epoch_length must be >= 1")

    @property
    def delta(self) -> float:
        return self.delta0 * self.m**0.5 * self.epochs**-0.25

    def to_json(self) -> dict:
        return {
            "gamma0": self.gamma0,
            "delta0": self.delta0,
            "epochs": self.epochs,
            "epoch_length": self.epoch_length,
        }


def gdwog_schedule(phi: int, config: GDwoGConfig) -> tuple[float, float]:
    if phi < 1:
        raise ValueError("epochs are numbered from 1")
    return config.gamma0 * config.m**-0.5 * phi**-0.75, config.delta


@dataclass
class GDwoGResult:
    x: np.ndarray  # x_phi for phi = 1..Phi (the point before each epoch's update)
    h: np.ndarray  # played h_phi
    y_bar: np.ndarray  # epoch-averaged agent response
    x_final: np.ndarray


def lazy_gdwog(env, game, config: GDwoGConfig, rng: np.random.Generator) -> GDwoGResult:
    """One-point gradient ascent; each perturbed strategy is replayed for a full epoch."""
    dom = game.domain
    if config.m != dom.dim:
        raise ValueError("config dimension does not match the domain")
    delta = config.delta
    if delta >= dom.inradius():
        raise ValueError(f"perturbation {delta:.3g} must be below the domain inradius {dom.inradius():.3g}")
    x = dom.project_shrunken(dom.center(), delta)
    xs, hs, ys = [], [], []
    for phi in range(1, config.epochs + 1):
        gamma, _ = gdwog_schedule(phi, config)
        S = sample_unit_sphere(rng, config.m)
        h = x + delta * S
        env.epoch = phi
        resp = np.array([np.atleast_1d(env.play(h)) for _ in range(config.epoch_length)])
        y_bar = resp.mean(axis=0)
        u = float(game.u_principal(h, y_bar))
        xs.append(x.copy())
        hs.append(h)
        ys.append(y_bar)
        x = dom.project_shrunken(x + gamma * (config.m / delta) * S * u, delta)
    return GDwoGResult(np.asarray(xs), np.asarray(hs), np.asarray(ys), x)


def continuous_v_star(game, step: float = 1e-4) -> tuple[float, np.ndarray]:
    """Dense grid search of U_P(x, BR(x)) over the domain (m <= 2)."""
    if game.m > 2:
        raise ValueError("grid search supports m <= 2")
    pts = game.domain.grid(step, cap=10**7)
    vals = np.array([game.u_principal(x, game.best_response(x)) for x in pts])
    j = int(np.argmax(vals))
    return float(vals[j]), pts[j]


@dataclass(frozen=True)
class Recalibration:
    far_fraction: float  # share of rounds with ||p - h|| >= eps0
    feedback_error: float  # ||mean response - BR(h)||


def recalibration(env, game, h: np.ndarray, rounds: int, eps0: float = 0.1) -> Recalibration:
    """Play a fixed h for `rounds` rounds and measure how the agent's forecasts settle on it."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    start = env.rounds
    resp = np.array([np.atleast_1d(env.play(h)) for _ in range(rounds)])
    P = env.transcript.P[start:]
    far = float(np.mean(np.linalg.norm(P - h[None, :], axis=1) >= eps0))
    err = float(np.linalg.norm(resp.mean(axis=0) - np.atleast_1d(game.best_response(h))))
    return Recalibration(far, err)
