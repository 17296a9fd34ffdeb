"""Training the preference predictor, with and without the smoothness term.

The predictor pools per-transition embeddings into a scalar segment score;
a sigmoid of the score difference predicts which segment a teacher prefers.
The smoothness term drags predictions for two barely-shifted windows of one
trajectory toward 0.5. This demo trains a short run of each variant and
compares their behavior on consecutive overlapping windows.
"""

import numpy as np

from prefopt.data import generate_offline_dataset, generate_pref_dataset
from prefopt.envs import make_env, reference_policy, rollout
from prefopt.predictor import (PredictorTrainConfig, smoothness_profile,
                               train_predictor)

MIX = {"expert": 0.2, "medium": 0.4, "random": 0.4}
STEPS = 4000  # demo scale; the acceptance suite trains longer


def main():
    spec = make_env("pointmass2d")
    dataset, _ = generate_offline_dataset(spec, MIX, n_traj=150, seed=7)
    prefs = generate_pref_dataset(dataset, 300, k=25, seed=11)
    print(f"{len(prefs)} scripted triples over {len(dataset)} trajectories")

    models = {}
    for nu in (1.0, 0.0):
        cfg = PredictorTrainConfig(nu=nu, steps=STEPS, lr=3e-4, seed=0,
                                   log_every=1000)
        model, metrics = train_predictor(dataset, prefs, cfg)
        models[nu] = model
        tail = ", ".join(f"step {m['step']}: acc {m['holdout_acc']:.2f}"
                         for m in metrics)
        print(f"nu={nu}: {tail}")

    print("\n== predictions between consecutive one-step-shifted windows ==")
    held = rollout(spec, reference_policy(spec, "medium"), 900_000, 5,
                   behavior="medium")
    for nu, model in models.items():
        devs = np.concatenate(
            [np.abs(smoothness_profile(model, t, 25) - 0.5) for t in held])
        print(f"nu={nu}: mean |p - 0.5| = {devs.mean():.4f}  max = {devs.max():.4f}")
    print("the regularized predictor treats near-identical windows as ties, "
          "the unregularized one grows increasingly opinionated about them")


if __name__ == "__main__":
    main()
