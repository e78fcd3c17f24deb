import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csg.environment import AgentEnvironment
from csg.forecaster import ExactBRAgent, ForecasterConfig, build_calibrated_agent
from csg.geometry import Ball, Box
from csg.principal_continuous import (
    GDwoGConfig,
    build_tent_binning,
    continuous_v_star,
    gdwog_schedule,
    lazy_gdwog,
    project_shrunken,
    recalibration,
)
from csg.calibration import bin_weights_many


def test_tent_binning_example():
    tb = build_tent_binning(Box((0.0,), (1.0,)), 0.5)
    np.testing.assert_allclose(tb.centers[:, 0], [0.0, 0.5, 1.0])
    assert tb.radius == 1.0
    np.testing.assert_allclose(bin_weights_many(tb.spec, None, np.array([[0.25]]))[0], [3 / 7, 3 / 7, 1 / 7])


def test_tent_peaks_at_centres():
    tb = build_tent_binning(Box((-1.0,), (1.0,)), 0.1)
    W = bin_weights_many(tb.spec, None, tb.centers)
    np.testing.assert_array_equal(np.argmax(W, axis=1), np.arange(len(tb.centers)))


def test_tent_partition_of_unity_on_ball():
    tb = build_tent_binning(Ball(1.0, 2), 0.1)
    pts = np.random.default_rng(0).uniform(-0.7, 0.7, (1000, 2))
    W = bin_weights_many(tb.spec, None, pts)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-9)
    lam = np.maximum(tb.radius - np.linalg.norm(pts[:, None] - tb.centers[None], axis=2), 0).sum(axis=1)
    assert lam.min() >= tb.eps


def test_tent_grid_covers_domain():
    tb = build_tent_binning(Box((-1.0, -1.0), (1.0, 1.0)), 0.25)
    pts = np.random.default_rng(1).uniform(-1, 1, (500, 2))
    d = np.linalg.norm(pts[:, None] - tb.centers[None], axis=2).min(axis=1)
    assert d.max() <= 0.25
    with pytest.raises(ValueError):
        build_tent_binning(Box((0.0,), (1.0,)), 0.0)
    with pytest.raises(ValueError):
        build_tent_binning(Box((0.0,), (1.0,)), 1e-7, cap=1000)


def test_projection_examples():
    box = Box((-1.0,), (1.0,))
    np.testing.assert_allclose(project_shrunken(box, np.array([2.0]), 0.1), [0.9])
    np.testing.assert_allclose(project_shrunken(box, np.array([0.3]), 0.1), [0.3])
    np.testing.assert_allclose(project_shrunken(Ball(1.0, 2), np.array([1.5, 0.0]), 0.2), [0.8, 0.0])
    with pytest.raises(ValueError):
        project_shrunken(box, np.array([0.0]), 1.0)
    with pytest.raises(ValueError):
        project_shrunken(Ball(1.0, 2), np.zeros(2), 1.5)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0.0, 0.9))
def test_ball_projection_is_idempotent(x, delta):
    b = Ball(1.0, 2)
    y = project_shrunken(b, np.array(x), delta)
    assert np.linalg.norm(y) <= 1 - delta + 1e-12
    np.testing.assert_allclose(project_shrunken(b, y, delta), y)


def test_schedule_examples():
    cfg = GDwoGConfig(gamma0=1.0, delta0=0.3, epochs=500, m=1)
    assert gdwog_schedule(16, cfg)[0] == pytest.approx(1 / 8)
    cfg2 = GDwoGConfig(gamma0=0.5, delta0=0.3, epochs=500, m=2)
    assert gdwog_schedule(1, cfg2)[0] == pytest.approx(0.5 / np.sqrt(2))
    deltas = {gdwog_schedule(p, cfg)[1] for p in range(1, 501)}
    assert len(deltas) == 1
    assert deltas.pop() == pytest.approx(0.3 * 500**-0.25)
    with pytest.raises(ValueError):
        gdwog_schedule(0, cfg)
    with pytest.raises(ValueError):
        GDwoGConfig(gamma0=-1.0)


def run_exact(g2, cfg, seed):
    env = AgentEnvironment(g2, ExactBRAgent(g2), cfg.epochs * cfg.epoch_length)
    return env, lazy_gdwog(env, g2, cfg, np.random.default_rng(seed))


def test_zero_step_stays_at_centre(g2):
    env, res = run_exact(g2, GDwoGConfig(gamma0=0.0, delta0=0.3, epochs=50), 0)
    assert np.all(res.x == 0.0)
    assert len(env.transcript) == 50


def test_played_points_stay_in_domain(g2):
    env, res = run_exact(g2, GDwoGConfig(gamma0=2.0, delta0=0.5, epochs=200), 1)
    assert np.all(np.abs(env.transcript.H) <= 1.0 + 1e-12)
    np.testing.assert_allclose(np.abs(res.h - res.x), 0.5 * 200**-0.25)


def test_perturbation_must_fit_domain(g2):
    env = AgentEnvironment(g2, ExactBRAgent(g2), 10)
    with pytest.raises(ValueError):
        lazy_gdwog(env, g2, GDwoGConfig(delta0=5.0, epochs=10), np.random.default_rng(0))


def test_exact_agent_example_literal_constants(g2):
    # gamma0 = 0.5, delta0 = 0.3, 500 single-round epochs
    hits = 0
    for seed in range(10):
        _, res = run_exact(g2, GDwoGConfig(0.5, 0.3, 500, 1), seed)
        hits += abs(res.x[-100:, 0].mean() - 0.5) <= 0.1
    assert hits >= 8


def test_exact_agent_converges_with_wider_perturbation(g2):
    hits = 0
    for seed in range(10):
        _, res = run_exact(g2, GDwoGConfig(0.5, 2.0, 500, 1), seed)
        hits += abs(res.x[-100:, 0].mean() - 0.5) <= 0.1
    assert hits >= 9


def test_v_star_of_g2(g2):
    v, x = continuous_v_star(g2)
    assert v == pytest.approx(1.0)
    assert x[0] == pytest.approx(0.5)


def recal_run(g2, M, warm=500):
    agent = build_calibrated_agent(g2, ForecasterConfig(0.025, "dyadic", M + warm), rng=np.random.default_rng(0), tent_eps=0.05)
    env = AgentEnvironment(g2, agent, M + warm)
    recalibration(env, g2, np.array([-0.5]), warm)
    return recalibration(env, g2, np.array([0.3]), M)


def test_recalibration_improves_with_epoch_length(g2):
    short, long_ = recal_run(g2, 500), recal_run(g2, 2000)
    assert long_.far_fraction <= 0.5 * short.far_fraction
    assert long_.feedback_error <= 0.5 * short.feedback_error
