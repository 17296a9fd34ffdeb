"""Tour of the two control environments and their reference policies.

Rolls out the random / medium / expert controllers in both environments,
prints the return ordering that anchors every normalized score in the
package, and writes a small SVG of expert point-mass paths.
"""

import pathlib

import numpy as np

from prefopt.envs import (env_reset, env_step, make_env, mean_return,
                          normalized_return, reference_policy, rollout)
from prefopt.plots import line_chart

OUT = pathlib.Path(__file__).with_name("01_environment_paths.svg")


def main():
    print("== environment fixtures ==")
    for name in ("pointmass2d", "pendulum"):
        spec = make_env(name)
        print(f"{name}: state_dim={spec.state_dim} action_dim={spec.action_dim} "
              f"horizon={spec.horizon} action box {spec.action_low}..{spec.action_high}")

    pm = make_env("pointmass2d")
    state = env_reset(pm, seed=0)
    nxt, reward = env_step(pm, state, np.array([1.0, 0.0]))
    print(f"\none step from {np.round(state, 3)} with a=(1,0): "
          f"next={np.round(nxt, 3)} reward={reward:.3f}")

    print("\n== reference policy ordering (50 episodes each) ==")
    anchors = {}
    for name in ("pointmass2d", "pendulum"):
        spec = make_env(name)
        returns = {q: mean_return(rollout(spec, reference_policy(spec, q), 1000, 50))
                   for q in ("random", "medium", "expert")}
        anchors[name] = returns
        print(f"{name}: " + "  ".join(f"{q}={r:8.2f}" for q, r in returns.items()))
        mid = normalized_return(returns["medium"], returns["random"], returns["expert"])
        print(f"  medium sits at {mid:.1f} on the 0 (random) .. 100 (expert) scale")

    print("\n== expert point-mass paths from four corners ==")
    spec = make_env("pointmass2d")
    expert = reference_policy(spec, "expert")
    series = []
    for i, start in enumerate([(1.8, 1.8), (-1.8, 1.2), (1.2, -1.8), (-1.5, -1.5)]):
        state = np.array([start[0], start[1], 0.0, 0.0])
        xs, ys = [state[0]], [state[1]]
        for _ in range(spec.horizon):
            state, _ = env_step(spec, state, expert(state, np.random.default_rng(i)))
            xs.append(state[0])
            ys.append(state[1])
        series.append((f"start {start}", xs, ys))
        print(f"  from {start}: final distance to goal "
              f"{np.hypot(state[0], state[1]):.4f}")
    svg = line_chart(series, "Expert point-mass paths", "x", "y")
    OUT.write_text(svg)
    print(f"\nwrote {OUT}")


if __name__ == "__main__":
    main()
