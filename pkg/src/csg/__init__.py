"""Calibrated Stackelberg games: calibrated agents, their principals, and audit tooling."""
from csg.games import FiniteGame, solve_stackelberg, toy_g1, toy_g2
from csg.transcript import Transcript

__version__ = "0.1.0"
__all__ = ["FiniteGame", "Transcript", "solve_stackelberg", "toy_g1", "toy_g2"]
