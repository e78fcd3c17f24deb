"""The interaction handle through which principals reach the agent."""
from __future__ import annotations

from typing import Optional

import numpy as np

from csg.games import ContinuousGame, FiniteGame, utilities
from csg.transcript import Transcript


class BudgetError(RuntimeError):
    """A run needed more rounds (or probe length) than its budget allows."""

    def __init__(self, msg: str, transcript: Optional[Transcript] = None):
        super().__init__(msg)
        self.transcript = transcript


class AgentEnvironment:
    """Runs one protocol round per `play` call and records it.

    Principals see only the returned agent action; forecasts and agent utilities go to the
    transcript for audits. With ``sampled_outcomes`` the agent observes a pure action drawn
    from h instead of h itself.
    """

    def __init__(
        self,
        game: FiniteGame | ContinuousGame,
        agent,
        horizon: int,
        sampled_outcomes: bool = False,
        rng: Optional[np.random.Generator] = None,
    ):
        self._game = game
        self._agent = agent
        self.horizon = int(horizon)
        self._sampled = sampled_outcomes
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self.finite = isinstance(game, FiniteGame)
        self.transcript = Transcript(game.m, real_actions=not self.finite)
        self.epoch = 0

    @property
    def rounds(self) -> int:
        return len(self.transcript)

    @property
    def remaining(self) -> int:
        return self.horizon - self.rounds

    def play(self, h: np.ndarray):
        if self.rounds >= self.horizon:
            raise BudgetError(f"horizon of {self.horizon} rounds exhausted", self.transcript)
        h = np.atleast_1d(np.asarray(h, dtype=float))
        p, y = self._agent.respond(h)
        if self.finite:
            up, ua = utilities(self._game, h, y)
        else:
            up, ua = self._game.u_principal(h, y), self._game.u_agent(h, y)
        self.transcript.append(self.epoch, h, p, y, up, ua)
        if self._sampled and self.finite:
            outcome = np.zeros(self._game.m)
            outcome[self._rng.choice(self._game.m, p=h / h.sum())] = 1.0
        else:
            outcome = h
        self._agent.observe(outcome)
        return y
