"""Environment dynamics, reference policies, rollouts, normalization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from prefopt.envs import (env_reset, env_step, make_env, mean_return,
                          normalized_return, reference_policy, rollout)


class TestReset:
    def test_pointmass_starts_at_rest(self, pm_spec):
        for seed in range(20):
            state = env_reset(pm_spec, seed)
            assert state[2] == 0.0 and state[3] == 0.0

    def test_deterministic_per_seed(self, pm_spec, pend_spec):
        for spec in (pm_spec, pend_spec):
            a = env_reset(spec, 123)
            b = env_reset(spec, 123)
            assert a.tobytes() == b.tobytes()

    def test_start_positions_uniform(self, pm_spec):
        """Empirical CDF of each coordinate vs uniform on the start box."""
        xs = np.array([env_reset(pm_spec, seed)[:2] for seed in range(1000)])
        for dim in range(2):
            p = stats.kstest(xs[:, dim], stats.uniform(loc=-2, scale=4).cdf).pvalue
            assert p > 1e-3

    def test_pendulum_starts_near_down(self, pend_spec):
        for seed in range(50):
            theta, theta_dot = env_reset(pend_spec, seed)
            assert abs(abs(theta) - np.pi) <= 0.3 + 1e-12
            assert theta_dot == 0.0


class TestStep:
    def test_pointmass_reward_zero_at_goal(self, pm_spec):
        state = np.zeros(4)
        _, reward = env_step(pm_spec, state, np.zeros(2))
        assert reward == 0.0

    def test_pointmass_reward_is_distance(self, pm_spec):
        _, reward = env_step(pm_spec, np.array([3.0, 4.0, 0.0, 0.0]), np.zeros(2))
        assert reward == -5.0

    def test_pointmass_euler_update(self, pm_spec):
        state = np.array([1.0, -1.0, 0.5, 0.25])
        nxt, _ = env_step(pm_spec, state, np.array([1.0, -0.5]))
        dt = pm_spec.params["dt"]
        np.testing.assert_allclose(nxt[:2], state[:2] + state[2:] * dt)
        np.testing.assert_allclose(nxt[2:], state[2:] + np.array([1.0, -0.5]) * dt)

    def test_pendulum_upright_fixed_point(self, pend_spec):
        nxt, reward = env_step(pend_spec, np.zeros(2), np.zeros(1))
        assert reward == 0.0
        np.testing.assert_array_equal(nxt, np.zeros(2))

    def test_action_clipped_before_dynamics(self, pm_spec):
        state = np.zeros(4)
        a_big, _ = env_step(pm_spec, state, np.array([10.0, -10.0]))
        a_box, _ = env_step(pm_spec, state, np.array([1.0, -1.0]))
        np.testing.assert_array_equal(a_big, a_box)

    def test_rejects_nonfinite(self, pm_spec):
        with pytest.raises(ValueError):
            env_step(pm_spec, np.array([np.nan, 0, 0, 0]), np.zeros(2))
        with pytest.raises(ValueError):
            env_step(pm_spec, np.zeros(4), np.array([np.inf, 0]))

    def test_pure_function(self, pm_spec, pend_spec, rng):
        for spec in (pm_spec, pend_spec):
            for _ in range(50):
                state = rng.normal(size=spec.state_dim)
                action = rng.normal(size=spec.action_dim)
                s1, r1 = env_step(spec, state, action)
                s2, r2 = env_step(spec, state, action)
                assert s1.tobytes() == s2.tobytes() and r1 == r2

    def test_rewards_nonpositive(self, pm_spec, pend_spec, rng):
        for spec in (pm_spec, pend_spec):
            for _ in range(200):
                state = rng.normal(size=spec.state_dim) * 3
                action = rng.normal(size=spec.action_dim) * 3
                _, reward = env_step(spec, state, action)
                assert reward <= 0.0


class TestRollout:
    def test_zero_policy_upright_pendulum_returns_zero(self):
        spec = make_env("pendulum", start_angle_center=0.0, start_angle_range=0.0)
        trajs = rollout(spec, lambda s, rng: np.zeros(1), seed=0, episodes=3)
        assert all(t.ret() == 0.0 for t in trajs)

    def test_deterministic(self, pm_spec):
        pol = reference_policy(pm_spec, "random")
        a = rollout(pm_spec, pol, seed=5, episodes=3)
        b = rollout(pm_spec, pol, seed=5, episodes=3)
        for ta, tb in zip(a, b):
            assert ta.states.tobytes() == tb.states.tobytes()
            assert ta.actions.tobytes() == tb.actions.tobytes()
            assert ta.rewards.tobytes() == tb.rewards.tobytes()

    def test_shapes_and_action_box(self, pm_spec):
        trajs = rollout(pm_spec, reference_policy(pm_spec, "random"), 0, 2)
        for t in trajs:
            assert t.states.shape == (pm_spec.horizon + 1, 4)
            assert t.actions.shape == (pm_spec.horizon, 2)
            assert t.rewards.shape == (pm_spec.horizon,)
            assert np.all(t.actions >= pm_spec.action_low)
            assert np.all(t.actions <= pm_spec.action_high)

    def test_wrong_action_dim_raises(self, pm_spec):
        with pytest.raises(ValueError, match="shape"):
            rollout(pm_spec, lambda s, rng: np.zeros(3), 0, 1)

    def test_unique_ids(self, pm_spec):
        trajs = rollout(pm_spec, reference_policy(pm_spec, "random"), 0, 5)
        assert len({t.id for t in trajs}) == 5


class TestReferencePolicies:
    def test_random_inside_box(self, pm_spec, pend_spec, rng):
        for spec in (pm_spec, pend_spec):
            pol = reference_policy(spec, "random")
            for _ in range(100):
                a = pol(rng.normal(size=spec.state_dim), rng)
                assert np.all(a >= spec.action_low) and np.all(a <= spec.action_high)

    def test_expert_reaches_goal(self, pm_spec):
        """>=95% of 100 seeds end within 0.1 of the goal."""
        trajs = rollout(pm_spec, reference_policy(pm_spec, "expert"), 0, 100)
        hits = sum(np.linalg.norm(t.states[-1][:2]) <= 0.1 for t in trajs)
        assert hits >= 95

    def test_quality_ordering(self, pm_spec, pend_spec):
        for spec in (pm_spec, pend_spec):
            returns = {}
            for q in ("random", "medium", "expert"):
                returns[q] = mean_return(rollout(spec, reference_policy(spec, q),
                                                 1000, 50))
            assert returns["random"] < returns["medium"] < returns["expert"]

    def test_unknown_quality(self, pm_spec):
        with pytest.raises(ValueError):
            reference_policy(pm_spec, "superb")


class TestNormalizedReturn:
    def test_anchors(self):
        assert normalized_return(-10.0, -10.0, 5.0) == 0.0
        assert normalized_return(5.0, -10.0, 5.0) == 100.0
        assert normalized_return(-2.5, -10.0, 5.0) == pytest.approx(50.0)

    def test_requires_expert_above_random(self):
        with pytest.raises(ValueError):
            normalized_return(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            normalized_return(0.0, 2.0, 1.0)

    @settings(deadline=None, max_examples=60)
    @given(r1=st.floats(-100, 100), r2=st.floats(-100, 100))
    def test_strictly_monotone(self, r1, r2):
        lo, hi = -50.0, 25.0
        if abs(r1 - r2) < 1e-9:  # below the affine map's float resolution
            return
        a, b = sorted((r1, r2))
        assert normalized_return(a, lo, hi) < normalized_return(b, lo, hi)


class TestEnvSpecValidation:
    def test_unknown_env(self):
        with pytest.raises(ValueError):
            make_env("cartpole")

    def test_horizon_bound(self):
        with pytest.raises(ValueError):
            make_env("pointmass2d", horizon=1)
