import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tihdp.world import (
    InfeasibleLayout,
    ScenarioConfig,
    WeightClass,
    object_reward,
    object_rewards,
    reset,
    robot_low_reward,
    step,
    team_reward,
    wrap_angle,
)

STILL = ScenarioConfig(robot_jitter=0.0, object_jitter=0.0)


def scenario(n=1, light=1, medium=0, heavy=0, **kw):
    return ScenarioConfig(n_robots=n, n_light=light, n_medium=medium, n_heavy=heavy, **kw)


def isolated(n=1, light=1, medium=0, heavy=0):
    """A state whose bodies are far apart, ready to be placed by hand."""
    s = reset(scenario(n, light, medium, heavy), 0)
    for i in range(n):
        s.robot_pos[i] = (-20.0 - 2.0 * i, 0.0)
    for l in range(s.n_objects):
        s.obj_pos[l] = (20.0 + 2.0 * l, 0.0)
        s.obj_goal[l] = (20.0 + 2.0 * l, 5.0)
    return s


class TestReset:
    def test_reference_angles_without_jitter(self):
        s = reset(STILL, 0)
        ang = np.arctan2(s.robot_pos[:, 1], s.robot_pos[:, 0]) % (2 * np.pi)
        np.testing.assert_allclose(ang, [0, 2 * np.pi / 3, 4 * np.pi / 3], atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(s.robot_pos, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(s.obj_pos, axis=1), 2.0, atol=1e-12)

    def test_goals_on_outer_ring_at_reference_angle(self):
        s = reset(ScenarioConfig(), 7)
        np.testing.assert_allclose(np.linalg.norm(s.obj_goal, axis=1), 3.0, atol=1e-12)
        ang = np.arctan2(s.obj_goal[:, 1], s.obj_goal[:, 0]) % (2 * np.pi)
        np.testing.assert_allclose(ang, 2 * np.pi * np.arange(4) / 4, atol=1e-12)

    def test_same_seed_is_bit_identical(self):
        assert reset(ScenarioConfig(), 3).same_as(reset(ScenarioConfig(), 3))
        assert not reset(ScenarioConfig(), 3).same_as(reset(ScenarioConfig(), 4))

    @given(st.integers(0, 2**31 - 1))
    def test_initial_state_invariants(self, seed):
        cfg = ScenarioConfig()
        s = reset(cfg, seed)
        robots_ref = cfg.robot_ring * np.stack([np.cos(2 * np.pi * np.arange(3) / 3), np.sin(2 * np.pi * np.arange(3) / 3)], 1)
        assert np.all(np.linalg.norm(s.robot_pos - robots_ref, axis=1) <= cfg.robot_jitter + 1e-12)
        assert np.all((s.robot_heading >= -np.pi) & (s.robot_heading < np.pi))
        assert sorted(s.obj_class.tolist()) == [0, 0, 1, 2]
        np.testing.assert_array_equal(s.obj_mass, np.array(cfg.masses)[s.obj_class])
        assert not s.completed.any()
        assert not s.robot_vel.any() and not s.obj_vel.any()

    def test_infeasible_geometry_is_rejected(self):
        crowded = ScenarioConfig(n_light=5, object_ring=0.05, object_jitter=0.0)
        with pytest.raises(InfeasibleLayout):
            reset(crowded, 0)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ScenarioConfig(n_robots=0)
        with pytest.raises(ValueError):
            ScenarioConfig(goal_radius=0.0)


class TestStep:
    def test_forward_one_control_step(self):
        s = isolated()
        s.robot_pos[0] = (0.0, 0.0)
        s.robot_heading[0] = 0.0
        out = step(s, [(1, 0)])
        np.testing.assert_allclose(out.robot_pos[0], [0.026, 0.0], atol=1e-12)
        assert out.step_index == 1

    def test_null_action_changes_only_step_index(self):
        s = isolated(n=2, light=2)
        out = step(s, [(0, 0), (0, 0)])
        after = dataclasses.replace(out, step_index=s.step_index)
        assert after.same_as(s)

    def test_rejects_bad_commands(self):
        s = isolated()
        with pytest.raises(ValueError):
            step(s, [(2, 0)])
        with pytest.raises(ValueError):
            step(s, [(1, 0), (1, 0)])

    @given(st.lists(st.tuples(st.integers(-1, 1), st.integers(-1, 1)), min_size=30, max_size=30), st.integers(0, 100))
    def test_speed_limits_and_heading_range(self, commands, seed):
        cfg = scenario(n=3, light=2, medium=1, heavy=1)
        s = reset(cfg, seed)
        for k in range(0, 30, 3):
            s = step(s, commands[k:k + 3])
            assert np.all(np.linalg.norm(s.robot_vel, axis=1) <= cfg.max_speed + 1e-12)
            assert np.all(np.abs(s.robot_omega) <= cfg.max_turn_rate + 1e-12)
            assert np.all((s.robot_heading >= -np.pi) & (s.robot_heading < np.pi))

    @given(st.integers(0, 1000), st.lists(st.integers(0, 8), min_size=20, max_size=20))
    def test_deterministic_sequences(self, seed, codes):
        cmds = [[(c // 3 - 1, c % 3 - 1)] * 3 for c in codes]
        a, b = reset(ScenarioConfig(), seed), reset(ScenarioConfig(), seed)
        for c in cmds:
            a, b = step(a, c), step(b, c)
            assert a.same_as(b)

    def test_medium_not_moved_by_one_robot(self):
        s = isolated(medium=1, light=0)
        s.obj_pos[0] = (0.0, 0.0)
        s.robot_pos[0] = (-0.3, 0.0)
        s.robot_heading[0] = 0.0
        for _ in range(50):
            s = step(s, [(1, 0)])
        assert np.linalg.norm(s.obj_pos[0]) == 0.0

    def test_force_is_capped_for_deep_overlap(self):
        cfg = scenario()
        s = isolated()
        s.obj_pos[0] = (0.0, 0.0)
        s.robot_pos[0] = (-0.15, 0.0)  # 0.15 m overlap: 75 N uncapped
        out = step(s, [(0, 0)])
        accel_cap = cfg.max_push_force / 1.0 - cfg.kinetic_friction * cfg.gravity
        assert np.linalg.norm(out.obj_vel[0]) <= accel_cap * cfg.ctrl_dt + 1e-9

    def test_free_object_decelerates_monotonically_to_rest(self):
        s = isolated()
        s.obj_vel[0] = (0.5, 0.2)
        speeds = [np.linalg.norm(s.obj_vel[0])]
        for _ in range(40):
            s = step(s, [(0, 0)])
            speeds.append(np.linalg.norm(s.obj_vel[0]))
        assert all(b <= a for a, b in zip(speeds, speeds[1:]))
        assert speeds[-1] == 0.0

    def test_completion_is_recomputed_every_step(self):
        s = isolated()
        s.obj_pos[0] = s.obj_goal[0]
        s = step(s, [(0, 0)])
        assert s.completed[0]
        s.obj_vel[0] = (1.5, 0.0)
        s = step(s, [(0, 0)])
        assert not s.completed[0]

    def test_robots_do_not_overlap_after_step(self):
        s = isolated(n=2)
        s.robot_pos[0] = (0.0, 0.0)
        s.robot_pos[1] = (0.1, 0.0)
        out = step(s, [(0, 0), (0, 0)])
        assert np.linalg.norm(out.robot_pos[1] - out.robot_pos[0]) >= 0.3 - 1e-12


class TestRewards:
    @pytest.mark.parametrize("w,diff,expected", [
        ((0.1, 0.0), (1.0, 0.0), 0.1),
        ((0.0, 0.2), (1.0, 0.0), 0.0),
        ((-0.1, 0.0), (2.0, 0.0), -0.1),
    ])
    def test_object_reward_examples(self, w, diff, expected):
        s = isolated()
        s.obj_vel[0] = w
        s.obj_goal[0] = s.obj_pos[0] + np.array(diff)
        assert object_reward(s, 0) == pytest.approx(expected, abs=1e-12)

    def test_completed_object_gives_no_reward(self):
        s = isolated()
        s.obj_goal[0] = s.obj_pos[0] + (0.05, 0.0)
        s.obj_vel[0] = (0.1, 0.0)
        assert object_reward(s, 0) == 0.0
        s.obj_goal[0] = s.obj_pos[0]
        assert object_reward(s, 0) == 0.0

    def test_team_reward_sums(self):
        s = isolated(light=4)
        for l, r in enumerate([0.1, -0.05, 0.0, 0.0]):
            s.obj_vel[l] = (0.0, r)
        assert team_reward(s) == pytest.approx(0.05, abs=1e-12)
        assert team_reward(isolated(light=4)) == 0.0

    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-5, 5), st.floats(-5, 5))
    def test_reward_bounded_by_speed(self, wx, wy, gx, gy):
        s = isolated()
        s.obj_vel[0] = (wx, wy)
        s.obj_goal[0] = s.obj_pos[0] + (gx, gy)
        assert abs(object_reward(s, 0)) <= math.hypot(wx, wy) + 1e-12
        np.testing.assert_allclose(object_rewards(s)[0], object_reward(s, 0), atol=1e-15)

    def _low_setup(self):
        s = isolated(light=2)
        s.robot_pos[0] = (0.0, 0.0)
        s.obj_pos[0] = (1.0, 0.0)
        s.obj_goal[0] = (3.0, 0.0)
        s.obj_pos[1] = (0.0, 1.0)
        s.obj_goal[1] = (0.0, 4.0)
        return s

    def test_low_reward_approaching(self):
        s = self._low_setup()
        s.obj_vel[0] = (0.1, 0.0)
        s.obj_vel[1] = (0.0, 0.05)
        s.robot_vel[0] = (0.2, 0.0)
        assert robot_low_reward(s, 0, 0) == pytest.approx(1.1, abs=1e-12)

    def test_low_reward_close_and_still(self):
        s = self._low_setup()
        s.obj_pos[0] = (0.2, 0.0)
        assert robot_low_reward(s, 0, 0) == pytest.approx(1.0, abs=1e-12)

    def test_low_reward_receding_far_with_collision_term(self):
        s = self._low_setup()
        s.obj_vel[1] = (0.0, -0.2)
        s.robot_vel[0] = (-0.2, 0.0)
        assert robot_low_reward(s, 0, 0) == pytest.approx(-0.2, abs=1e-12)

    def test_low_reward_without_task(self):
        s = self._low_setup()
        s.obj_pos[0] = (2.0, 0.0)
        s.obj_vel[1] = (0.0, -0.2)
        assert robot_low_reward(s, 0, None) == pytest.approx(-0.2 + 1.0, abs=1e-12)


def test_wrap_angle_range():
    for a in np.linspace(-20, 20, 401):
        w = wrap_angle(a)
        assert -math.pi <= w < math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert wrap_angle(math.pi) == -math.pi


def test_record_views():
    s = reset(ScenarioConfig(), 0)
    assert [r.id for r in s.robots] == [0, 1, 2]
    assert {o.weight_class for o in s.objects} == set(WeightClass)
