"""Environment dynamics and goal-task reward oracles."""

import numpy as np
import pytest

from ibol_lab.envs import (
    DistortedPointEnv,
    PointEnv,
    goal_task_reward,
    make_env,
    make_goal_task,
)


class TestPointEnv:
    def test_reset_deterministic_given_seed(self):
        env = PointEnv()
        a = env.reset(np.random.default_rng(5))
        b = env.reset(np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_reset_inside_box_and_centered(self):
        env = PointEnv()
        rng = np.random.default_rng(42)
        starts = env.reset_batch(rng, 10_000)
        assert np.all(np.abs(starts) <= 0.05)
        np.testing.assert_allclose(starts.mean(axis=0), 0.0, atol=0.005)

    def test_additive_step(self):
        env = PointEnv()
        np.testing.assert_allclose(env.step(np.zeros(2), np.array([0.1, -0.1])),
                                   [0.1, -0.1])

    def test_action_clamped(self):
        env = PointEnv()
        np.testing.assert_allclose(env.step(np.array([1.0, 1.0]), np.array([0.5, 0.0])),
                                   [1.1, 1.0])

    def test_fifty_steps_straight(self):
        env = PointEnv()
        s = np.zeros(2)
        for _ in range(50):
            s = env.step(s, np.array([0.1, 0.0]))
        np.testing.assert_allclose(s, [5.0, 0.0], atol=1e-12)

    def test_deterministic_transition(self):
        env = PointEnv()
        s, a = np.array([0.3, -0.7]), np.array([0.05, 0.02])
        np.testing.assert_array_equal(env.step(s, a), env.step(s, a))

    def test_non_finite_rejected(self):
        env = PointEnv()
        with pytest.raises(FloatingPointError):
            env.step(np.array([np.nan, 0.0]), np.zeros(2))


class TestDistortedPointEnv:
    def test_horizontal_unaffected(self):
        env = DistortedPointEnv()
        np.testing.assert_allclose(env.step(np.zeros(2), np.array([0.1, 0.0])),
                                   [0.1, 0.0], atol=1e-15)

    def test_vertical_attenuated(self):
        env = DistortedPointEnv()
        s = env.step(np.zeros(2), np.array([0.0, 0.1]))
        np.testing.assert_allclose(s, [0.0, 0.03], atol=1e-15)

    def test_sub_linearity(self):
        env = DistortedPointEnv()
        s = env.step(np.zeros(2), np.array([0.0, 0.05]))
        np.testing.assert_allclose(s, [0.0, 0.0075], atol=1e-15)
        # Less than half of the full-action step scaled by the action ratio.
        assert s[1] < 0.5 * 0.03

    def test_agrees_with_point_env_on_x(self):
        rng = np.random.default_rng(42)
        flat, dist = PointEnv(), DistortedPointEnv()
        for _ in range(100):
            s = rng.normal(size=2)
            a = rng.uniform(-0.2, 0.2, size=2)
            assert dist.step(s, a)[0] == flat.step(s, a)[0]

    def test_max_vertical_displacement(self):
        env = DistortedPointEnv()
        rng = np.random.default_rng(43)
        deltas = [env.step(np.zeros(2), a)[1]
                  for a in rng.uniform(-1, 1, size=(200, 2))]
        assert max(np.abs(deltas)) <= 0.03 + 1e-12


class TestGoalTasks:
    def test_zero_at_reached_goal(self):
        task = make_goal_task("pointgoal")
        w = np.array([1.0, 2.0])
        assert goal_task_reward(task, w, w, task.horizon) == 0.0

    def test_euclidean_value(self):
        task = make_goal_task("pointgoal")
        assert goal_task_reward(task, np.array([3.0, 4.0]), np.zeros(2),
                                task.horizon) == pytest.approx(-5.0)

    def test_non_terminal_is_zero(self):
        task = make_goal_task("pointgoal")
        assert goal_task_reward(task, np.ones(2), np.zeros(2), 10) == 0.0

    def test_chunk_mode_timing(self):
        task = make_goal_task("pointmultigoals", horizon=50, eta=25)
        w, s = np.array([1.0, 0.0]), np.zeros(2)
        hits = [t for t in range(0, 51) if goal_task_reward(task, w, s, t) != 0.0]
        assert hits == [25, 50]

    def test_out_of_range_step(self):
        task = make_goal_task("pointgoal")
        with pytest.raises(ValueError):
            goal_task_reward(task, np.zeros(2), np.zeros(2), task.horizon + 1)

    def test_eta_must_divide_horizon(self):
        with pytest.raises(ValueError):
            make_goal_task("pointmultigoals", horizon=50, eta=7)

    def test_make_env_names(self):
        assert make_env("point").spec.name == "point"
        assert make_env("distorted-point").spec.name == "distorted-point"
        with pytest.raises(ValueError):
            make_env("ant")
