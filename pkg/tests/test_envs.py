"""Environment contracts: dynamics, rewards, determinism."""

import numpy as np
import pytest

from esil.envs import (
    EmptyRoom,
    PointPush,
    PointReach,
    compute_reward,
    compute_reward_batch,
    env_spec,
    is_success,
    make_env,
)


class TestEmptyRoom:
    def test_reset_at_upper_left(self):
        env = EmptyRoom()
        for seed in (0, 1, 99):
            obs = env.reset(np.random.default_rng(seed))
            np.testing.assert_array_equal(obs.observation, [0.0, 0.0])
            np.testing.assert_array_equal(obs.achieved_goal, [0.0, 0.0])

    def test_goal_uniform_over_grid(self):
        env = EmptyRoom()
        rng = np.random.default_rng(3)
        goals = {tuple(env.reset(rng).desired_goal) for _ in range(3000)}
        assert len(goals) == 121  # every cell shows up

    def test_reset_deterministic(self):
        env = EmptyRoom()
        a = env.reset(np.random.default_rng(7))
        b = EmptyRoom().reset(np.random.default_rng(7))
        np.testing.assert_array_equal(a.desired_goal, b.desired_goal)

    def test_wall_blocks_moves(self):
        env = EmptyRoom(random_action_prob=0.0)
        rng = np.random.default_rng(0)
        env.reset(rng)
        obs, reward, idx = env.step(0, rng)  # left from (0,0): wall
        np.testing.assert_array_equal(obs.achieved_goal, [0.0, 0.0])
        assert idx == 0
        expected = 1.0 if np.array_equal(obs.desired_goal, [0.0, 0.0]) else 0.0
        assert reward == expected

    def test_position_stays_in_bounds(self):
        env = EmptyRoom()  # noise on
        rng = np.random.default_rng(11)
        for _ in range(20):
            obs = env.reset(rng)
            for _ in range(env.spec.episode_length):
                obs, _, _ = env.step(int(rng.integers(5)), rng)
                assert np.all(obs.achieved_goal >= 0) and np.all(obs.achieved_goal <= 10)

    def test_noise_free_dynamics_deterministic(self):
        actions = [1, 1, 3, 3, 4, 0, 2]
        positions = []
        for _ in range(2):
            env = EmptyRoom(random_action_prob=0.0)
            rng = np.random.default_rng(5)
            env.reset(rng)
            trace = []
            for a in actions:
                obs, _, _ = env.step(a, rng)
                trace.append(tuple(obs.achieved_goal))
            positions.append(trace)
        assert positions[0] == positions[1]
        assert positions[0][:4] == [(1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (2.0, 2.0)]

    def test_step_beyond_horizon_raises(self):
        env = EmptyRoom(random_action_prob=0.0)
        rng = np.random.default_rng(0)
        env.reset(rng)
        for _ in range(32):
            env.step(4, rng)
        with pytest.raises(RuntimeError, match="exhausted"):
            env.step(4, rng)

    def test_reward_on_goal_every_step(self):
        env = EmptyRoom(random_action_prob=0.0)
        rng = np.random.default_rng(0)
        while True:  # draw until the goal is the start cell
            obs = env.reset(rng)
            if tuple(obs.desired_goal) == (0.0, 0.0):
                break
        rewards = [env.step(4, rng)[1] for _ in range(5)]
        assert rewards == [1.0] * 5

    def test_random_action_replacement_rate(self):
        env = EmptyRoom(random_action_prob=0.2)
        rng = np.random.default_rng(42)
        moved = 0
        n = 4000
        for _ in range(n):
            env.reset(rng)
            env._goal = (5, 5)  # keep rewards out of the way
            obs, _, _ = env.step(4, rng)  # "stay" only moves if replaced
            if tuple(obs.achieved_goal) != (0.0, 0.0):
                moved += 1
        # replacement prob 0.2, and 2 of 5 random actions move off (0,0)
        assert abs(moved / n - 0.2 * 0.4) < 0.02


class TestPointReach:
    def test_reset_fixed_start_goal_in_box(self):
        env = PointReach()
        obs = env.reset(np.random.default_rng(2))
        np.testing.assert_array_equal(obs.observation, [0.5, 0.5])
        assert np.all(obs.desired_goal >= 0) and np.all(obs.desired_goal <= 1)

    def test_displacement_clipped(self):
        env = PointReach()
        rng = np.random.default_rng(0)
        env.reset(rng)
        obs, _, _ = env.step(np.array([10.0, -10.0]), rng)
        np.testing.assert_allclose(obs.achieved_goal, [0.55, 0.45], atol=1e-12)

    def test_workspace_clipping(self):
        env = PointReach()
        rng = np.random.default_rng(0)
        env.reset(rng)
        for _ in range(30):
            obs, _, _ = env.step(np.array([1.0, 1.0]), rng)
        np.testing.assert_allclose(obs.achieved_goal, [1.0, 1.0], atol=1e-12)

    def test_reward_indicator(self):
        env = PointReach()
        rng = np.random.default_rng(4)
        env.reset(rng)
        env._goal = np.array([0.5, 0.5])  # on the start: distance 0 -> reward 0
        _, reward, _ = env.step(np.zeros(2), rng)
        assert reward == 0.0
        env2 = PointReach()
        env2.reset(rng)
        env2._goal = np.array([0.0, 0.0])  # far -> reward -1
        _, reward2, _ = env2.step(np.zeros(2), rng)
        assert reward2 == -1.0


class TestPointPush:
    def test_object_immobile_without_contact(self):
        env = PointPush()
        rng = np.random.default_rng(1)
        env.reset(rng)
        env._agent = np.array([0.1, 0.1])  # well outside the 0.08 radius
        for _ in range(3):
            obs, _, _ = env.step(np.array([-1.0, 0.0]), rng)
            np.testing.assert_array_equal(obs.achieved_goal, [0.5, 0.5])

    def test_contact_carries_object(self):
        env = PointPush()
        rng = np.random.default_rng(1)
        env.reset(rng)
        env._agent = np.array([0.45, 0.5])  # inside contact radius
        obs, _, _ = env.step(np.array([1.0, 0.0]), rng)
        np.testing.assert_allclose(obs.achieved_goal, [0.55, 0.5], atol=1e-12)
        np.testing.assert_allclose(obs.observation[:2], [0.5, 0.5], atol=1e-12)

    def test_carry_follows_any_direction(self):
        env = PointPush()
        rng = np.random.default_rng(1)
        env.reset(rng)
        env._agent = np.array([0.45, 0.5])
        obs, _, _ = env.step(np.array([-1.0, -0.5]), rng)
        np.testing.assert_allclose(obs.achieved_goal, [0.45, 0.475], atol=1e-12)

    def test_random_rollouts_never_move_distant_object(self):
        env = PointPush()
        rng = np.random.default_rng(9)
        for _ in range(5):
            env.reset(rng)
            env._agent = rng.uniform(0, 0.3, 2)  # break the initial contact
            for _ in range(env.spec.episode_length):
                before = env._object.copy()
                gap = float(np.linalg.norm(env._object - env._agent))
                obs, _, _ = env.step(rng.uniform(-1, 1, 2), rng)
                if gap > env.CONTACT_RADIUS:
                    np.testing.assert_array_equal(obs.achieved_goal, before)

    def test_goal_offset_from_object_start(self):
        env = PointPush()
        rng = np.random.default_rng(31)
        for _ in range(200):
            obs = env.reset(rng)
            assert np.linalg.norm(obs.desired_goal - np.array([0.5, 0.5])) >= 0.2

    def test_observation_carries_agent_and_object(self):
        env = PointPush()
        obs = env.reset(np.random.default_rng(0))
        np.testing.assert_array_equal(obs.observation, [0.45, 0.45, 0.5, 0.5])
        # the fixed start sits inside the contact radius
        assert np.linalg.norm(obs.observation[:2] - obs.observation[2:]) <= env.CONTACT_RADIUS


class TestRewardFunctions:
    def test_grid_equality(self):
        spec = EmptyRoom.spec
        assert compute_reward(spec, np.array([3.0, 4.0]), np.array([3.0, 4.0])) == 1.0
        assert compute_reward(spec, np.array([3.0, 4.0]), np.array([3.0, 5.0])) == 0.0

    def test_point_threshold_inclusive(self):
        spec = PointReach.spec
        g = np.array([0.0, 0.0])
        assert compute_reward(spec, np.array([0.05, 0.0]), g) == 0.0  # exactly 0.05
        assert compute_reward(spec, np.array([0.051, 0.0]), g) == -1.0  # just outside
        assert compute_reward(spec, np.array([0.5, 0.5]), g) == -1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            compute_reward(EmptyRoom.spec, np.zeros(3), np.zeros(2))

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        for spec in (EmptyRoom.spec, PointReach.spec):
            goals = rng.uniform(0, 1, size=(40, 2))
            target = goals[0]
            batch = compute_reward_batch(spec, goals, target)
            scalar = [compute_reward(spec, row, target) for row in goals]
            np.testing.assert_array_equal(batch, scalar)

    def test_is_success(self):
        grid = EmptyRoom.spec
        assert is_success(grid, np.array([2.0, 2.0]), np.array([2.0, 2.0]))
        assert not is_success(grid, np.array([2.0, 3.0]), np.array([2.0, 2.0]))
        point = PointReach.spec
        assert is_success(point, np.array([0.5, 0.5]), np.array([0.53, 0.5]))  # 0.03 < 0.05
        assert not is_success(point, np.array([0.5, 0.5]), np.array([0.56, 0.5]))

    def test_step_reward_consistent_with_compute_reward(self):
        # replay audit: every emitted reward recomputes from the transition
        for name in ("empty-room", "point-reach", "point-push"):
            env = make_env(name)
            rng = np.random.default_rng(77)
            obs = env.reset(rng)
            for _ in range(env.spec.episode_length):
                if env.spec.action_kind == "discrete":
                    action = int(rng.integers(env.spec.action_dim))
                else:
                    action = rng.uniform(-1, 1, env.spec.action_dim)
                obs, reward, _ = env.step(action, rng)
                assert reward == compute_reward(env.spec, obs.achieved_goal, obs.desired_goal)


class TestRegistry:
    def test_known_names(self):
        for name in ("empty-room", "point-reach", "point-push"):
            env = make_env(name)
            assert env.spec.name == name
            assert env_spec(name) == env.spec

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown environment"):
            make_env("maze-room")

    def test_episode_lengths(self):
        assert env_spec("empty-room").episode_length == 32
        assert env_spec("point-reach").episode_length == 50
        assert env_spec("point-push").episode_length == 50

    def test_evaluation_disables_grid_noise(self):
        assert make_env("empty-room").random_action_prob == 0.2
        assert make_env("empty-room", evaluation=True).random_action_prob == 0.0
