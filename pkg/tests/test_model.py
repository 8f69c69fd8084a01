from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcrmdp.envs import (
    LEFT,
    RIGHT,
    ChainConfig,
    PendulumConfig,
    RandomInstanceConfig,
    build_chain,
    build_pendulum,
    random_instance,
)
from tcrmdp.model import (
    ConfigError,
    ContractViolation,
    ModelValidationError,
    ParameterGrid,
    ParametricMDP,
    StepBall,
    apply_step,
    ball_neighbors,
    kernel_eval,
    neighbor_table,
    to_json_dict,
    validate,
)


@pytest.fixture(scope="module")
def pendulum():
    return build_pendulum()


def linear_chain(n=4, segments=11, **kw):
    return build_chain(ChainConfig(n_states=n, success_low=0.0, success_high=1.0, segments_per_dim=segments, **kw))


def test_grid_points_and_spacing():
    g = ParameterGrid(2, 11)
    assert g.size == 121
    assert g.spacing == pytest.approx(0.1)
    pts = g.points()
    assert pts.min() == 0.0 and pts.max() == 1.0
    assert g.flat_index(g.multi_index(57)) == 57
    assert g.nearest([0.52, 0.0]) == g.flat_index((5, 0))


def test_grid_rejects_single_point():
    with pytest.raises(ConfigError):
        ParameterGrid(1, 1)


def test_ball_size_and_null_first():
    for k, d in [(0, 1), (1, 1), (2, 2), (1, 3)]:
        moves = StepBall(k).displacements(d)
        assert len(moves) == (2 * k + 1) ** d
        assert not moves[0].any()
    assert StepBall(0).displacements(2).tolist() == [[0, 0]]


def test_radius_snapping():
    g = ParameterGrid(1, 11)
    assert StepBall.from_radius(0.1, g).radius_cells == 1
    assert StepBall.from_radius(0.001, g).radius_cells == 0
    assert StepBall.from_radius(0.25, ParameterGrid(2, 5)).radius_cells == 1


def test_apply_step_examples():
    g = ParameterGrid(2, 11)
    ball = StepBall(1)
    assert apply_step((2, 2), (0, 0), ball, g) == (2, 2)
    assert apply_step((0, 0), (-1, 0), ball, g) == (0, 0)
    assert apply_step((5, 5), (1, -1), ball, g) == (6, 4)


def test_apply_step_rejects_outside_ball():
    with pytest.raises(ContractViolation):
        apply_step((5, 5), (2, 0), StepBall(1), ParameterGrid(2, 11))


def test_ball_neighbors_examples():
    g1 = ParameterGrid(1, 11)
    assert ball_neighbors((4,), StepBall(0), g1) == {(4,)}
    assert ball_neighbors((0,), StepBall(1), g1) == {(0,), (1,)}
    assert len(ball_neighbors((5, 5), StepBall(1), ParameterGrid(2, 11))) == 9


def test_neighbor_table_matches_apply_step():
    g, ball = ParameterGrid(2, 4), StepBall(1)
    nbr = neighbor_table(g, ball)
    for p in range(g.size):
        for j, b in enumerate(ball.displacements(2)):
            assert nbr[p, j] == g.flat_index(apply_step(g.multi_index(p), b, ball, g))


def test_kernel_eval_linear_chain():
    mdp = linear_chain()
    top = mdp.grid.size - 1
    np.testing.assert_array_equal(kernel_eval(mdp, 0, RIGHT, top), [0, 1, 0, 0])
    np.testing.assert_allclose(kernel_eval(mdp, 0, RIGHT, 5), [0.5, 0.5, 0, 0])


def test_kernel_eval_bounds():
    mdp = linear_chain()
    with pytest.raises(IndexError):
        kernel_eval(mdp, 4, 0, 0)
    with pytest.raises(IndexError):
        kernel_eval(mdp, 0, 2, 0)
    with pytest.raises(IndexError):
        kernel_eval(mdp, 0, 0, 11)


def test_chain_frozen_success_is_deterministic():
    mdp = linear_chain()
    k = mdp.kernels[-1]
    assert np.all(k.max(axis=-1) == 1.0)


def test_chain_failed_moves_never_reach_goal():
    from tcrmdp.solvers import solve_nominal

    mdp = linear_chain()
    v, _ = solve_nominal(mdp, 0)
    np.testing.assert_allclose(v[:3], 0.0)


def test_chain_optimal_value_brute_force():
    # oracle: best of all 8 deterministic policies, solved as linear systems -> gamma^2 / (1 - gamma)
    from tcrmdp.solvers import solve_nominal

    mdp = build_chain(ChainConfig(n_states=3, success_low=1.0, success_high=1.0, gamma=0.9, segments_per_dim=2))
    v, _ = solve_nominal(mdp, 0, epsilon=1e-12)
    assert v[0] == pytest.approx(8.1, abs=1e-9)
    assert v[2] == pytest.approx(10.0, abs=1e-9)


def test_chain_config_errors():
    with pytest.raises(ConfigError):
        build_chain(ChainConfig(success_low=0.5, success_high=1.5))
    with pytest.raises(ConfigError):
        build_chain(ChainConfig(n_states=3, goal=5))


def test_mirrored_chain_left_move():
    mdp = build_chain(ChainConfig(n_states=5, goal=(0, 4), success_low=0.0, success_high=1.0, mirror_left=True))
    np.testing.assert_array_equal(kernel_eval(mdp, 2, LEFT, 0), [0, 1, 0, 0, 0])
    np.testing.assert_array_equal(kernel_eval(mdp, 2, RIGHT, 0), [0, 0, 1, 0, 0])
    assert mdp.reward[0].tolist() == [1, 1] and mdp.reward[4].tolist() == [1, 1]


def test_pendulum_shape(pendulum):
    assert pendulum.n_states == 225 and pendulum.n_actions == 3
    assert pendulum.grid.dims == 2 and pendulum.grid.size == 25


def test_pendulum_valid_and_support(pendulum):
    assert validate(pendulum) == []
    support = (pendulum.kernels > 0).sum(axis=-1)
    assert support.max() <= 4 and support.min() >= 1


def test_pendulum_upright_rest_stays():
    cfg = PendulumConfig()
    mdp = build_pendulum(cfg)
    upright = 0 * cfg.velocity_bins + cfg.velocity_bins // 2  # angle 0, velocity 0
    zero_torque = cfg.torques.index(0.0)
    for p in range(mdp.grid.size):
        row = mdp.kernels[p, upright, zero_torque]
        assert row.argmax() == upright and row[upright] == row.max()


def test_pendulum_continuous_matches_grid(pendulum):
    p = 7
    np.testing.assert_allclose(pendulum.kernel_at(pendulum.grid.point(p)), pendulum.kernels[p], atol=1e-12)


def test_pendulum_config_errors():
    with pytest.raises(ConfigError):
        build_pendulum(PendulumConfig(mass_range=(0.0, 1.0)))
    with pytest.raises(ConfigError):
        build_pendulum(PendulumConfig(angle_bins=1))


def test_constructors_deterministic():
    a, b = build_pendulum(), build_pendulum()
    assert np.array_equal(a.kernels, b.kernels) and np.array_equal(a.reward, b.reward)
    c, d = linear_chain(), linear_chain()
    assert np.array_equal(c.kernels, d.kernels)


def test_validate_reports_corrupted_row():
    mdp = linear_chain()
    kernels = mdp.kernels.copy()
    kernels[3, 1, 0] *= 0.9
    bad = ParametricMDP(mdp.gamma, mdp.reward, kernels, mdp.grid)
    report = validate(bad)
    assert len(report) == 1
    assert (report[0].psi, report[0].state, report[0].action) == (3, 1, 0)
    with pytest.raises(ModelValidationError):
        kernel_eval(bad, 1, 0, 3)


def test_validate_reports_reward_out_of_range():
    mdp = linear_chain()
    reward = mdp.reward.copy()
    reward[0, 0] = 1.5
    assert [v.kind for v in validate(ParametricMDP(mdp.gamma, reward, mdp.kernels, mdp.grid))] == ["reward"]


def test_gamma_one_rejected():
    mdp = linear_chain()
    with pytest.raises(ConfigError):
        ParametricMDP(1.0, mdp.reward, mdp.kernels, mdp.grid)


def test_json_dump_roundtrip(tmp_path):
    mdp = linear_chain(n=3, segments=3)
    d = json.loads(json.dumps(to_json_dict(mdp)))
    assert d["n_states"] == 3 and len(d["kernels"]) == 3
    np.testing.assert_array_equal(np.array(d["kernels"][1]["table"]), mdp.kernels[1])


@settings(max_examples=60, deadline=None)
@given(
    dims=st.integers(1, 3),
    seg=st.integers(2, 6),
    k=st.integers(0, 3),
    data=st.data(),
)
def test_apply_step_stays_on_grid(dims, seg, k, data):
    g, ball = ParameterGrid(dims, seg), StepBall(k)
    psi = tuple(data.draw(st.integers(0, seg - 1)) for _ in range(dims))
    b = tuple(data.draw(st.integers(-k, k)) for _ in range(dims))
    out = apply_step(psi, b, ball, g)
    assert all(0 <= i < seg for i in out)
    assert apply_step(psi, (0,) * dims, ball, g) == psi
    assert apply_step(out, (0,) * dims, ball, g) == out
    nb = ball_neighbors(psi, ball, g)
    assert psi in nb and len(nb) <= (2 * k + 1) ** dims
    assert ball_neighbors(psi, StepBall(0), g) == {psi}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6), a=st.integers(1, 4), det=st.booleans())
def test_random_instances_are_simplex_valued(seed, n, a, det):
    mdp = random_instance(np.random.default_rng(seed), RandomInstanceConfig(n, a, 1, 3, 0.9, det))
    assert validate(mdp) == []
    for p, s, act in itertools.product(range(3), range(n), range(a)):
        row = kernel_eval(mdp, s, act, p)
        assert abs(row.sum() - 1.0) <= 1e-12 and row.min() >= 0
