import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from csg.games import FiniteGame, toy_g1, toy_g2

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def g1() -> FiniteGame:
    return toy_g1()


@pytest.fixture
def g2():
    return toy_g2()


def random_game(rng: np.random.Generator, m: int, k: int) -> FiniteGame:
    return FiniteGame(rng.uniform(0, 1, (m, k)), rng.uniform(0, 1, (m, k)))


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
