"""Deterministic toy continuous-control environments with exact rewards.

Two fixtures: a 2-D point mass driven toward a goal, and a torque-limited
frictionless pendulum. Both expose reset/step as pure functions, reference
policies of three quality tiers, and a rollout engine with per-episode seed
streams (seed + episode_index).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ENV_NAMES = ("pointmass2d", "pendulum")

Policy = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    horizon: int
    params: dict[str, float]

    def __post_init__(self) -> None:
        self.action_low = np.asarray(self.action_low, dtype=np.float64)
        self.action_high = np.asarray(self.action_high, dtype=np.float64)
        if not np.all(self.action_low < self.action_high):
            raise ValueError("action_low must be < action_high elementwise")
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")
        if self.params.get("dt", 1.0) <= 0:
            raise ValueError("dt must be positive")


@dataclass
class Trajectory:
    """One episode: H+1 states, H actions (always inside the action box), H rewards."""

    id: str
    env: str
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior: str

    def ret(self) -> float:
        return float(self.rewards.sum())


def make_env(name: str, horizon: int = 100, **param_overrides: float) -> EnvSpec:
    """Build one of the fixture environments with its documented defaults."""
    if name == "pointmass2d":
        params = {
            "dt": 0.05,
            "goal_x": 0.0,
            "goal_y": 0.0,
            "action_cost": 0.05,
            "start_range": 2.0,
        }
        params.update(param_overrides)
        return EnvSpec(name, 4, 2, np.array([-1.0, -1.0]), np.array([1.0, 1.0]),
                       horizon, params)
    if name == "pendulum":
        params = {
            "dt": 0.05,
            "gravity": 10.0,
            "mass": 1.0,
            "length": 1.0,
            "max_speed": 8.0,
            "start_angle_center": np.pi,
            "start_angle_range": 0.3,
        }
        params.update(param_overrides)
        return EnvSpec(name, 2, 1, np.array([-2.0]), np.array([2.0]), horizon, params)
    raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")


def _wrap_angle(theta: float) -> float:
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


def env_reset(spec: EnvSpec, seed: int) -> np.ndarray:
    """Initial state, deterministic per seed.

    pointmass2d starts at rest with position uniform in the start box;
    pendulum starts at rest with angle uniform around start_angle_center.
    """
    rng = np.random.default_rng(seed)
    if spec.name == "pointmass2d":
        r = spec.params["start_range"]
        pos = rng.uniform(-r, r, size=2)
        return np.array([pos[0], pos[1], 0.0, 0.0])
    if spec.name == "pendulum":
        half = spec.params["start_angle_range"]
        theta = _wrap_angle(spec.params["start_angle_center"] + rng.uniform(-half, half))
        return np.array([theta, 0.0])
    raise ValueError(f"unknown environment {spec.name!r}")


def env_step(spec: EnvSpec, state: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, float]:
    """One deterministic transition; the action is clipped to the box first.

    Rewards are <= 0 everywhere: the point mass pays Euclidean distance to
    goal plus a quadratic action cost, the pendulum pays the usual
    angle/speed/torque penalty with angle 0 at the upright equilibrium.
    """
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))):
        raise ValueError("env_step requires finite state and action")
    a = np.clip(action, spec.action_low, spec.action_high)
    p = spec.params
    dt = p["dt"]
    if spec.name == "pointmass2d":
        goal = np.array([p["goal_x"], p["goal_y"]])
        pos, vel = state[:2], state[2:]
        reward = -float(np.linalg.norm(pos - goal)) - p["action_cost"] * float(a @ a)
        next_state = np.concatenate([pos + vel * dt, vel + a * dt])
        return next_state, reward
    if spec.name == "pendulum":
        theta, theta_dot = float(state[0]), float(state[1])
        u = float(a[0])
        theta_w = _wrap_angle(theta)
        reward = -(theta_w ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u * u)
        g, m, length = p["gravity"], p["mass"], p["length"]
        theta_acc = 3.0 * g / (2.0 * length) * np.sin(theta) + 3.0 / (m * length ** 2) * u
        new_dot = np.clip(theta_dot + theta_acc * dt, -p["max_speed"], p["max_speed"])
        new_theta = _wrap_angle(theta + float(new_dot) * dt)
        return np.array([new_theta, float(new_dot)]), float(reward)
    raise ValueError(f"unknown environment {spec.name!r}")


# Hand-tuned controller gains, frozen; the measured expert returns are what
# dataset manifests store as the normalization anchor.
_PM_KP = 4.0
_PM_KD = 3.5
_PEND_SWING_GAIN = 1.2
_PEND_KP = 12.0
_PEND_KD = 2.5
_PEND_CATCH_ANGLE = 0.6


def _expert_pointmass(spec: EnvSpec) -> Policy:
    goal = np.array([spec.params["goal_x"], spec.params["goal_y"]])

    def act(state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        a = -_PM_KP * (state[:2] - goal) - _PM_KD * state[2:]
        return np.clip(a, spec.action_low, spec.action_high)

    return act


def _expert_pendulum(spec: EnvSpec) -> Policy:
    p = spec.params
    g, m, length = p["gravity"], p["mass"], p["length"]
    inertia = m * length ** 2 / 3.0
    e_top = m * g * length / 2.0

    def act(state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        theta = _wrap_angle(float(state[0]))
        theta_dot = float(state[1])
        if abs(theta) < _PEND_CATCH_ANGLE:
            u = -_PEND_KP * theta - _PEND_KD * theta_dot
        else:
            energy = 0.5 * inertia * theta_dot ** 2 + e_top * np.cos(theta)
            direction = np.sign(theta_dot) if abs(theta_dot) > 1e-3 else np.sign(theta) or 1.0
            u = _PEND_SWING_GAIN * (e_top - energy) * direction
        return np.clip(np.array([u]), spec.action_low, spec.action_high)

    return act


def reference_policy(spec: EnvSpec, quality: str) -> Policy:
    """expert: scripted controller; medium: expert + 30%-of-range Gaussian
    noise; random: uniform in the action box."""
    if quality == "random":
        def act(state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
            return rng.uniform(spec.action_low, spec.action_high)
        return act
    if quality == "expert":
        return _expert_pointmass(spec) if spec.name == "pointmass2d" else _expert_pendulum(spec)
    if quality == "medium":
        expert = reference_policy(spec, "expert")
        sigma = 0.3 * (spec.action_high - spec.action_low)

        def act(state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
            noisy = expert(state, rng) + rng.normal(0.0, sigma)
            return np.clip(noisy, spec.action_low, spec.action_high)
        return act
    raise ValueError(f"unknown policy quality {quality!r}")


def rollout(
    spec: EnvSpec,
    policy: Policy,
    seed: int,
    episodes: int,
    behavior: str = "policy",
) -> list[Trajectory]:
    """Run full-horizon episodes; episode i uses seed + i for its streams.

    Recorded actions are the clipped ones actually applied to the dynamics.
    """
    trajectories = []
    for i in range(episodes):
        ep_seed = seed + i
        state = env_reset(spec, ep_seed)
        policy_rng = np.random.default_rng((ep_seed, 1))
        states = np.empty((spec.horizon + 1, spec.state_dim))
        actions = np.empty((spec.horizon, spec.action_dim))
        rewards = np.empty(spec.horizon)
        states[0] = state
        for t in range(spec.horizon):
            a = np.asarray(policy(state, policy_rng), dtype=np.float64).reshape(-1)
            if a.shape != (spec.action_dim,):
                raise ValueError(f"policy returned action of shape {a.shape}, "
                                 f"expected ({spec.action_dim},)")
            a = np.clip(a, spec.action_low, spec.action_high)
            state, r = env_step(spec, state, a)
            states[t + 1] = state
            actions[t] = a
            rewards[t] = r
        trajectories.append(Trajectory(
            id=f"{spec.name}-{behavior}-{ep_seed}",
            env=spec.name, states=states, actions=actions, rewards=rewards,
            behavior=behavior,
        ))
    return trajectories


def mean_return(trajectories: list[Trajectory]) -> float:
    return float(np.mean([t.ret() for t in trajectories]))


def normalized_return(ret: float, ret_random: float, ret_expert: float) -> float:
    """Affine rescale: 0 at the random policy's return, 100 at the expert's."""
    if ret_expert <= ret_random:
        raise ValueError(f"expert return {ret_expert} must exceed random return {ret_random}")
    return 100.0 * (ret - ret_random) / (ret_expert - ret_random)
