import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_game
from csg.games import (
    FiniteGame,
    best_response,
    best_response_many,
    best_response_set,
    chebyshev_radius,
    conservative_membership_exact,
    game_from_json,
    grid_stackelberg,
    membership_distance,
    solve_restricted,
    solve_stackelberg,
    toy_g2,
    utilities,
)


def test_g1_stackelberg(g1):
    sol = solve_stackelberg(g1)
    assert sol.value == pytest.approx(1.0)
    np.testing.assert_allclose(sol.strategy, [1.0, 0.0], atol=1e-9)
    assert sol.agent_action == 0
    assert sol.to_json()["y_star"] == 0


def test_g1_best_responses(g1):
    assert best_response_set(g1, np.array([0.5, 0.5])) == (0, 1)
    assert best_response(g1, np.array([0.5, 0.5]))[1] == 0
    assert best_response(g1, np.array([0.4, 0.6]))[1] == 1
    br, y = best_response(g1, np.array([0.5, 0.5]), "randomized", np.random.default_rng(0))
    assert br == (0, 1) and y in br
    P = np.array([[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]])
    np.testing.assert_array_equal(best_response_many(g1, P), [0, 0, 1])


def test_preference_order_breaks_ties():
    g = FiniteGame(np.eye(2), np.eye(2), (1, 0))
    assert best_response(g, np.array([0.5, 0.5]))[1] == 1


def test_utilities(g1):
    assert utilities(g1, np.array([0.8, 0.2]), 0) == pytest.approx((0.9, 0.8))


def test_invalid_games():
    with pytest.raises(ValueError):
        FiniteGame(np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        FiniteGame(np.ones((2, 2)), np.ones((2, 2)), (0, 0))
    with pytest.raises(ValueError):
        FiniteGame(np.array([[np.inf, 0], [0, 0]]), np.ones((2, 2)))


def test_single_agent_action_game():
    g = FiniteGame(np.array([[0.2], [0.9], [0.5]]), np.zeros((3, 1)))
    sol = solve_stackelberg(g)
    assert sol.value == pytest.approx(0.9)
    np.testing.assert_allclose(sol.strategy, [0, 1, 0], atol=1e-9)


def test_json_round_trip(g1):
    g = game_from_json(json.loads(json.dumps(g1.to_json())), normalize=False)
    np.testing.assert_array_equal(g.u_principal, g1.u_principal)
    np.testing.assert_array_equal(g.u_agent, g1.u_agent)


def test_normalisation_maps_into_unit_interval():
    d = {"m": 2, "k": 2, "u_principal": [[4, 0], [2, 1]], "u_agent": [[3, -1], [-1, 3]]}
    g = game_from_json(d)
    assert g.u_principal.min() >= 0 and g.u_principal.max() <= 1
    assert g.u_agent.min() >= 0 and g.u_agent.max() <= 1
    # best responses are preserved by positive affine maps
    assert best_response(g, np.array([0.7, 0.3]))[1] == 0


@pytest.mark.parametrize("shape", [(2, 2), (2, 3), (3, 2), (3, 3)])
def test_lp_matches_grid_oracle(shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(5):
        g = random_game(rng, *shape)
        step = 1e-3 if shape[0] == 2 else 1e-2
        assert solve_stackelberg(g).value == pytest.approx(grid_stackelberg(g, step), abs=3 * step + 1e-9)


def test_g1_chebyshev_centre(g1):
    r, c = chebyshev_radius(g1, 0)
    assert r == pytest.approx(np.sqrt(2) / 4)
    np.testing.assert_allclose(c, [0.75, 0.25], atol=1e-9)


@given(st.integers(0, 10**6), st.sampled_from([(2, 2), (2, 3), (3, 2), (3, 3)]))
def test_chebyshev_centre_passes_just_below_radius(seed, shape):
    g = random_game(np.random.default_rng(seed), *shape)
    for y in range(g.k):
        r, c = chebyshev_radius(g, y)
        if r > 1e-6:
            assert conservative_membership_exact(g, y, c, r - 1e-7)
            assert not conservative_membership_exact(g, y, c, r + 1e-4)


@given(st.integers(0, 10**6), st.floats(0, 0.3), st.floats(0, 0.3))
def test_membership_monotone_in_margin(seed, a, b):
    rng = np.random.default_rng(seed)
    g = random_game(rng, 3, 3)
    h = rng.dirichlet(np.ones(3))
    lo, hi = min(a, b), max(a, b)
    for y in range(3):
        if conservative_membership_exact(g, y, h, hi):
            assert conservative_membership_exact(g, y, h, lo)


def test_membership_examples(g1):
    assert conservative_membership_exact(g1, 0, np.array([0.9, 0.1]), 0.1)
    assert not conservative_membership_exact(g1, 0, np.array([0.45, 0.55]), 0.0)
    assert membership_distance(g1, 0, np.array([0.75, 0.25])) == pytest.approx(np.sqrt(2) / 4)


def test_restricted_lp_with_margin(g1):
    v, h = solve_restricted(g1, 0, 0.05)
    # moving 0.05 along the affine hull from (1, 0) costs 0.05 / sqrt(2) in h_1
    assert h[0] == pytest.approx(1 - 0.05 / np.sqrt(2))
    assert v == pytest.approx(h[0] + 0.5 * h[1])


def test_g2_toy():
    g = toy_g2()
    assert g.u_principal(np.array([0.5]), g.best_response(np.array([0.5]))) == pytest.approx(1.0)
    assert g.m == 1
