import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_game
from csg.environment import AgentEnvironment, BudgetError
from csg.forecaster import ExactBRAgent
from csg.games import FiniteGame, chebyshev_radius, conservative_membership_exact, solve_restricted, toy_g1
from csg.geometry import is_mixed_point
from csg.principal_finite import (
    ETCConfig,
    PrincipalView,
    RateModel,
    approx_mem,
    build_initialization_set,
    explore_then_commit,
    nearest_neighbour_order,
    optimize_over_membership,
    post_process,
    rate_inverse,
    rational_candidates,
    set_params_case,
)

FAST_RATE = RateModel("sqrt", 0.005)


def exact_env(game, T=10**6, seed=0):
    return AgentEnvironment(game, ExactBRAgent(game), T, rng=np.random.default_rng(seed))


def case2(eps, T=20000, m=2, k=2):
    return set_params_case("II", eps, eps, 0.01, T, m, k, FAST_RATE)


def test_rate_inverse_examples():
    r = RateModel("power", 1.0, 2.0)
    assert rate_inverse(r, 0.1) == 100
    assert rate_inverse(r, 5.0) == 1
    with pytest.raises(ValueError):
        rate_inverse(r, 0.0)
    with pytest.raises(BudgetError):
        rate_inverse(r, 1e-4, l_max=1000)


@given(st.floats(0.01, 2.0), st.floats(0.02, 0.5), st.sampled_from(["sqrt", "power"]))
def test_rate_inverse_is_minimal(c, target, form):
    r = RateModel(form, c, 2.0)
    l = rate_inverse(r, target)
    assert r(l) <= target
    if l >= 2:
        assert r(l - 1) > target


def test_case_two_example():
    p = set_params_case("II", 0.1, 0.1, 0.01, 10**4, 2, 2, FAST_RATE)
    assert p.eps_cal == pytest.approx(0.01)
    assert p.radius == pytest.approx(0.19)
    assert p.phi == 15
    assert p.l == rate_inverse(FAST_RATE, 0.01 / (2 * math.sqrt(2)))
    assert p.condition1()


def test_case_one_needs_wide_approximation():
    with pytest.raises(ValueError):
        set_params_case("I", 0.1, 0.05, 0.01, 10**4, 2, 2, RateModel())
    p = set_params_case("I", 0.5, 0.05, 0.01, 10**4, 2, 2, FAST_RATE)
    assert p.radius == pytest.approx(0.25) and p.condition1()


def test_case_three_and_unknown_case():
    p = set_params_case("III", 0.05, 0.05, 0.01, 10**4, 2, 2, FAST_RATE)
    assert p.radius == pytest.approx((0.05 + 0.05 / 6) * 1.5)
    assert p.condition1()
    with pytest.raises(ValueError):
        set_params_case("IV", 0.05, 0.05, 0.01, 10**4, 2, 2, FAST_RATE)


def test_strict_mode_enforces_epoch_bound():
    p = case2(0.05)
    assert p.phi < p.phi_condition
    with pytest.raises(ValueError):
        set_params_case("II", 0.05, 0.05, 0.01, 20000, 2, 2, FAST_RATE, strict=True)


def test_approx_mem_examples(g1):
    view, p = PrincipalView.of(g1), case2(0.05)
    rng = np.random.default_rng(0)
    assert approx_mem(exact_env(g1), view, 0, np.array([0.9, 0.1]), p, rng) is True
    assert approx_mem(exact_env(g1), view, 0, np.array([0.45, 0.55]), p, rng) is False


def test_approx_mem_reports_leaving_the_simplex(g1):
    view, p = PrincipalView.of(g1), case2(0.05)
    log = []
    rng = np.random.default_rng(1)
    assert approx_mem(exact_env(g1), view, 0, np.array([1.0, 0.0]), p, rng, log) is False
    assert log[-1].left_simplex


def test_approx_mem_label_mode(g1):
    view, p = PrincipalView.of(g1), case2(0.05)
    rng = np.random.default_rng(2)
    assert approx_mem(exact_env(g1), view, None, np.array([0.2, 0.8]), p, rng) == 1
    assert approx_mem(exact_env(g1), view, None, np.array([0.5, 0.5]), p, rng) is None


def test_every_probe_is_a_mixed_point(g1):
    env = exact_env(g1)
    rng = np.random.default_rng(3)
    for h in rng.dirichlet(np.ones(2), 30):
        approx_mem(env, PrincipalView.of(g1), 0, h, case2(0.05), rng)
    assert all(is_mixed_point(h) for h in env.transcript.H)


def test_approx_mem_soundness_small(g1):
    p = case2(0.05)
    rng = np.random.default_rng(4)
    inner = 0.05 + p.eps1  # B(P^{-eps2}, -eps1)
    env = exact_env(g1)
    for h in rng.dirichlet(np.ones(2), 60):
        out = approx_mem(env, PrincipalView.of(g1), 0, h, p, rng)
        if conservative_membership_exact(g1, 0, h, inner):
            assert out is True


def test_initialization_set_examples(g1):
    view, p = PrincipalView.of(g1), case2(0.0884)
    assert build_initialization_set(exact_env(g1), view, p, 0, np.random.default_rng(0)) == []
    eta = chebyshev_radius(g1, 0)[0]
    p = case2(eta / 4)
    hits = 0
    for seed in range(20):
        pairs = build_initialization_set(exact_env(g1), view, p, 50, np.random.default_rng(seed))
        assert all(is_mixed_point(h) for h, _ in pairs)
        hits += any(y == 0 and conservative_membership_exact(g1, 0, h, eta / 2) for h, y in pairs)
    assert hits >= 18


def test_nearest_neighbour_order_is_a_permutation():
    rng = np.random.default_rng(0)
    pts = list(rng.dirichlet(np.ones(3), 12))
    tour = nearest_neighbour_order(pts)
    assert sorted(map(tuple, tour)) == sorted(map(tuple, pts))
    assert nearest_neighbour_order([]) == []


def test_optimizer_constant_objective():
    x0 = np.array([0.2, 0.3, 0.5])
    res = optimize_over_membership(np.ones(3), lambda h: True, x0, 0.02, np.random.default_rng(0))
    np.testing.assert_array_equal(res.point, x0)
    assert res.stagnated


def test_optimizer_on_g1_against_lp(g1):
    lp, _ = solve_restricted(g1, 0, 0.05)
    oracle = lambda h: conservative_membership_exact(g1, 0, h, 0.05)  # noqa: E731
    res = optimize_over_membership(g1.u_principal[:, 0], oracle, np.array([0.75, 0.25]), 0.02, np.random.default_rng(0))
    assert res.value >= lp - 0.02
    assert conservative_membership_exact(g1, 0, res.point, 0.05)


def test_optimizer_on_random_three_action_games():
    rng = np.random.default_rng(11)
    ok = tried = 0
    while tried < 10:
        g = random_game(rng, 3, 3)
        for y in range(3):
            r, c = chebyshev_radius(g, y)
            if r > 0.05:
                break
        else:
            continue
        tried += 1
        obj = g.u_principal[:, y]
        lp, _ = solve_restricted(g, y, 0.02)
        oracle = lambda h, g=g, y=y: conservative_membership_exact(g, y, h, 0.02)  # noqa: E731
        res = optimize_over_membership(obj, oracle, c, 0.02, np.random.default_rng(tried), n_dirs=60, patience=8)
        ok += res.value >= lp - 0.02 * (obj.max() - obj.min())
    assert ok >= 9


def test_rational_candidates():
    c = rational_candidates(np.array([0.6, 0.4]), 1.0, 2)
    assert sorted(tuple(v) for v in c) == [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]
    c = rational_candidates(np.array([0.3, 0.3, 0.4]), 0.1, 4)
    assert all(is_mixed_point(v) for v in c)
    assert tuple(c[0]) == (0.25, 0.25, 0.5) or np.max(np.abs(c[0] - [0.3, 0.3, 0.4])) <= 0.1


def test_post_process_shrinks_twice(g1):
    eta = chebyshev_radius(g1, 0)[0]
    h0 = np.array([0.75, 0.25])
    ht = np.array([0.875, 0.125])
    lam = 0.05
    member = lambda h, tol: conservative_membership_exact(g1, 0, h, tol)  # noqa: E731
    res = post_process(member, ht, lam, h0, eta, 8, 0.01)
    a = 2 * lam / eta
    np.testing.assert_allclose(res.point, (1 - a) * ((1 - a) * ht + a * h0) + a * h0)
    assert res.ok and conservative_membership_exact(g1, 0, res.point, lam)


def test_post_process_without_shift(g1):
    member = lambda h, tol: conservative_membership_exact(g1, 0, h, tol)  # noqa: E731
    res = post_process(member, np.array([0.61, 0.39]), 0.0, np.array([0.75, 0.25]), 0.35, 10, 0.05)
    np.testing.assert_allclose(res.point, [0.6, 0.4])
    with pytest.raises(ValueError):
        post_process(member, np.array([0.61, 0.39]), 0.2, np.array([0.75, 0.25]), 0.35, 10, 0.05)


def test_post_process_failure_flag(g1):
    member = lambda h, tol: False  # noqa: E731
    res = post_process(member, np.array([0.6, 0.4]), 0.0, np.array([0.75, 0.25]), 0.35, 4, 0.01)
    assert not res.ok
    np.testing.assert_allclose(res.point, [0.6, 0.4])


def test_etc_single_action_game():
    g = FiniteGame(np.array([[0.2], [0.9], [0.5]]), np.zeros((3, 1)))
    env = exact_env(g, 20000)
    res = explore_then_commit(env, PrincipalView.of(g), ETCConfig(T=20000, eta=0.3), np.random.default_rng(0))
    assert res.y_tilde == 0
    assert int(np.argmax(res.h_tilde)) == 1 and res.value >= 0.8
    assert len(env.transcript) == 20000


def test_etc_exact_agent_ablation(g1):
    eta = chebyshev_radius(g1, 0)[0]
    ok = 0
    for seed in range(10):
        env = exact_env(g1, 20000)
        res = explore_then_commit(env, PrincipalView.of(g1), ETCConfig(T=20000, eta=eta), np.random.default_rng(seed))
        ok += res.y_tilde == 0 and conservative_membership_exact(g1, 0, res.h_tilde, 0.025) and res.value >= 0.85
        assert all(is_mixed_point(h) for h in env.transcript.H)
    assert ok >= 9


def test_etc_budget_error_keeps_partial_transcript(g1):
    env = exact_env(g1, 500)
    with pytest.raises(BudgetError) as e:
        explore_then_commit(env, PrincipalView.of(g1), ETCConfig(T=500, eta=0.35), np.random.default_rng(0))
    assert len(e.value.transcript) == 500


def test_etc_config_validation():
    with pytest.raises(ValueError):
        ETCConfig(T=10, eps_prime=0)
    with pytest.raises(ValueError):
        ETCConfig(T=10, eta=0.2, post_process=True, lam=0.15)
    assert ETCConfig(T=20000).initial_count() == math.ceil(2 * math.log(20000))
