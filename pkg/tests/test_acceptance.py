"""Acceptance gates for the core library.

Each criterion prints one `ACCEPTANCE <n> <PASS|FAIL>` line (run with `-s`
to stream them) and asserts both its substance and its wall-clock budget.
Criterion 10 (the labeling round trip through the browser client) ships
with the frontend and runs as frontend/test/integration.test.ts.

The heavy criteria (4-8) retrain on the canonical pointmass dataset: 300
mixed trajectories, 500 scripted k=25 preference triples. Reference numbers
from the recorded oracle runs live in README.md.
"""

import math
import time

import numpy as np
import pytest

from prefopt import nn
from prefopt.baselines import (BcConfig, RewardModel, RewardTrainConfig,
                               bc_loss, bc_train, bt_reward_loss, bt_train,
                               reward_fidelity_report)
from prefopt.cli import main as cli_main
from prefopt.data import (_largest_remainder_counts, generate_offline_dataset,
                          generate_pref_dataset, sample_overlapping_pair,
                          sample_segment_pair)
from prefopt.envs import mean_return, normalized_return, rollout
from prefopt.policy_opt import (PolicyTrainConfig, as_rollout_policy,
                                pair_score_from_distances, policy_init,
                                pseudo_label, score_oracle_check,
                                segment_distance, train_policy, batch_score)
from prefopt.predictor import (PredictorTrainConfig, predictor_init,
                               predictor_loss, smoothness_profile,
                               train_predictor)

MIX = {"expert": 0.2, "medium": 0.4, "random": 0.4}
SEEDS = (0, 1, 2)


def record(criterion: int, ok: bool, detail: str, elapsed: float, budget: float):
    in_budget = elapsed < budget
    verdict = "PASS" if (ok and in_budget) else "FAIL"
    print(f"\nACCEPTANCE {criterion} {verdict}: {detail} "
          f"[{elapsed:.1f}s / budget {budget:.0f}s]", flush=True)
    assert ok, f"criterion {criterion}: {detail}"
    assert in_budget, f"criterion {criterion} exceeded budget: {elapsed:.1f}s >= {budget:.0f}s"


@pytest.fixture(scope="module")
def canonical(pm_spec):
    dataset, manifest = generate_offline_dataset(pm_spec, MIX, 300, seed=7)
    prefs = generate_pref_dataset(dataset, 500, k=25, seed=11)
    return dataset, manifest, prefs


def test_criterion_1_gradient_certification(canonical, pm_spec):
    """check_gradient < 1e-4 (h=1e-5) for all four losses, 20 instances each."""
    dataset, _, _ = canonical
    t0 = time.time()
    worst = {"predictor": 0.0, "score": 0.0, "bc": 0.0, "bt": 0.0}
    tiny = PredictorTrainConfig(embed_dim=6, encoder_hidden=(8,), head_hidden=(4,))
    for trial in range(20):
        rng = np.random.default_rng(5000 + trial)

        model = predictor_init(4, 2, rng, tiny)
        labeled = []
        for _ in range(4):
            a, b = sample_segment_pair(dataset, 6, rng)
            labeled.append((a, b, float(rng.choice([0.0, 0.5, 1.0]))))
        smooth = [sample_overlapping_pair(dataset, 6, 2, rng) for _ in range(3)]
        rep = nn.check_gradient(
            lambda: (lambda r: (r[0], list(r[1])))(
                predictor_loss(model, labeled, smooth, nu=1.0)),
            [model.encoder, model.head], tolerance=1e-4, h=1e-5)
        assert rep["pass"], f"predictor_loss trial {trial}: {rep}"
        worst["predictor"] = max(worst["predictor"], rep["max_rel_error"])

        policy = policy_init(pm_spec, rng, hidden=(8,), dropout=0.0)
        lam = float(rng.uniform(0.1, 1.0))
        rep = nn.check_gradient(lambda: batch_score(policy, labeled[:3], lam),
                                policy.net, tolerance=1e-4, h=1e-5)
        assert rep["pass"], f"batch_score trial {trial}: {rep}"
        worst["score"] = max(worst["score"], rep["max_rel_error"])

        states = rng.normal(size=(16, 4))
        actions = rng.normal(size=(16, 2))
        rep = nn.check_gradient(lambda: bc_loss(policy.net, states, actions),
                                policy.net, tolerance=1e-4, h=1e-5)
        assert rep["pass"], f"bc_loss trial {trial}: {rep}"
        worst["bc"] = max(worst["bc"], rep["max_rel_error"])

        reward = RewardModel(nn.mlp_init([6, 8, 1], rng))
        rep = nn.check_gradient(lambda: bt_reward_loss(reward, labeled[:3]),
                                reward.net, tolerance=1e-4, h=1e-5)
        assert rep["pass"], f"bt_reward_loss trial {trial}: {rep}"
        worst["bt"] = max(worst["bt"], rep["max_rel_error"])
    detail = "worst rel errors " + ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    record(1, True, detail, time.time() - t0, 60.0)


def test_criterion_2_score_algebra(pm_spec):
    """Negativity, shift laws, normalization, monotonicity: 1000 cases each."""
    t0 = time.time()
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        d0, d1 = rng.uniform(0, 50, size=2)
        lam = float(rng.uniform(0.01, 1.0))
        assert pair_score_from_distances(d0, d1, lam) < 0.0
    for _ in range(1000):
        d0, d1 = rng.uniform(0, 50, size=2)
        alpha = float(rng.uniform(0, 100))
        gap = abs(pair_score_from_distances(d0, d1, 1.0)
                  - pair_score_from_distances(d0 + alpha, d1 + alpha, 1.0))
        assert gap <= 1e-12
    for _ in range(1000):
        d0, d1 = rng.uniform(0, 20, size=2)
        lam = float(rng.uniform(0.05, 0.95))
        scores = [pair_score_from_distances(d0 + a, d1 + a, lam)
                  for a in (0.0, 0.7, 1.9)]
        assert scores[0] > scores[1] > scores[2]
    for _ in range(1000):
        d0, d1 = rng.uniform(0, 30, size=2)
        total = math.exp(pair_score_from_distances(d0, d1, 1.0)) \
            + math.exp(pair_score_from_distances(d1, d0, 1.0))
        assert abs(total - 1.0) <= 1e-12
    for _ in range(1000):
        d0, d1 = rng.uniform(0, 20, size=2)
        lam = float(rng.uniform(0.05, 1.0))
        base = pair_score_from_distances(d0, d1, lam)
        assert pair_score_from_distances(d0 + 0.3, d1, lam) < base
        assert pair_score_from_distances(d0, d1 + 0.3, lam) > base
    record(2, True, "5 properties x 1000 random cases", time.time() - t0, 10.0)


def test_criterion_3_oracle_equivalence(canonical, pm_spec):
    """Naive 40-digit decimal evaluation agrees with batch_score to 1e-9."""
    dataset, _, _ = canonical
    t0 = time.time()
    rng = np.random.default_rng(31415)
    for trial in range(100):
        policy = policy_init(pm_spec, np.random.default_rng(trial), hidden=(8,),
                             dropout=0.0)
        k = int(rng.integers(0, 5))
        triples = []
        for _ in range(int(rng.integers(1, 9))):
            a, b = sample_segment_pair(dataset, k, rng)
            triples.append((a, b, float(rng.choice([0.0, 0.5, 1.0]))))
        lam = float(rng.uniform(0.05, 1.0))
        assert score_oracle_check(policy, triples, lam, tol=1e-9), \
            f"oracle disagreement at trial {trial}"
    record(3, True, "100 tiny instances within 1e-9", time.time() - t0, 10.0)


def test_criterion_4_predictor_learnability(canonical):
    """Holdout accuracy >= 0.9 for M=5000, nu=1, m=5 on all three seeds."""
    dataset, _, prefs = canonical
    t0 = time.time()
    accs = []
    for seed in SEEDS:
        cfg = PredictorTrainConfig(nu=1.0, shift_std=5.0, steps=5000, seed=seed)
        _, metrics = train_predictor(dataset, prefs, cfg)
        accs.append(metrics[-1]["holdout_acc"])
    ok = all(a >= 0.9 for a in accs)
    record(4, ok, "holdout accuracies " + ", ".join(f"{a:.3f}" for a in accs),
           time.time() - t0, 300.0)


def _fresh_mixed_trajectories(spec, manifest, n, seed):
    counts = _largest_remainder_counts(manifest.mixture, n)
    out = []
    offset = 0
    for tag in sorted(counts):
        from prefopt.envs import reference_policy
        out.extend(rollout(spec, reference_policy(spec, tag),
                           seed + offset, counts[tag], behavior=tag))
        offset += counts[tag]
    return out


def test_criterion_5_smoothness_regularizer(canonical, pm_spec):
    """Mean |p-0.5| between one-step-shifted windows: nu=1 run is at most
    half of the identically-seeded nu=0 run, on 20 held-out trajectories."""
    dataset, manifest, prefs = canonical
    t0 = time.time()
    held = _fresh_mixed_trajectories(pm_spec, manifest, 20, 7_000_001)
    deviation = {}
    for nu in (1.0, 0.0):
        cfg = PredictorTrainConfig(nu=nu, shift_std=5.0, steps=20_000, lr=3e-4,
                                   seed=0, log_every=20_000)
        model, _ = train_predictor(dataset, prefs, cfg)
        devs = np.concatenate(
            [np.abs(smoothness_profile(model, t, 25) - 0.5) for t in held])
        deviation[nu] = float(devs.mean())
    ratio = deviation[1.0] / deviation[0.0]
    record(5, ratio <= 0.5,
           f"mean |p-0.5|: nu=1 {deviation[1.0]:.4f}, nu=0 {deviation[0.0]:.4f}, "
           f"ratio {ratio:.3f} (gate <= 0.5)",
           time.time() - t0, 600.0)


def test_criterion_6_reward_fidelity(canonical):
    """Pairwise reward model: ranking accuracy >= 0.85; Pearson r reported."""
    dataset, _, prefs = canonical
    t0 = time.time()
    model, _ = bt_train(dataset, prefs, RewardTrainConfig(seed=0))
    report = reward_fidelity_report(model, dataset, k=25, seed=1234)
    ok = report["ranking_accuracy"] >= 0.85 and not report["degenerate"]
    record(6, ok,
           f"ranking accuracy {report['ranking_accuracy']:.3f} (gate >= 0.85), "
           f"per-step pearson r {report['pearson_r']:.3f} (reported, no gate)",
           time.time() - t0, 300.0)


def test_criterion_7_end_to_end(canonical, pm_spec):
    """Contrastive policy training (lam=0.5, N=2e5) beats cloning by >= 10
    normalized points (mean over 3 seeds) and orders distances correctly on
    >= 80% of 200 held-out pseudo-labeled pairs, per seed; < 15 min/seed."""
    dataset, manifest, prefs = canonical
    t0 = time.time()
    pref_scores, bc_scores, fractions, seed_times = [], [], [], []
    for seed in SEEDS:
        predictor, pmetrics = train_predictor(
            dataset, prefs, PredictorTrainConfig(seed=seed))
        assert pmetrics[-1]["holdout_acc"] >= 0.9
        t_seed = time.time()
        cfg = PolicyTrainConfig(lam=0.5, steps=200_000, seed=seed)
        policy, _ = train_policy(dataset, predictor, cfg, pm_spec,
                                 manifest.R_random, manifest.R_expert)
        seed_times.append(time.time() - t_seed)
        bc, _ = bc_train(dataset, BcConfig(seed=seed), pm_spec)
        eval_seed = 9_000_000 + seed
        pref_scores.append(normalized_return(
            mean_return(rollout(pm_spec, as_rollout_policy(policy), eval_seed, 10)),
            manifest.R_random, manifest.R_expert))
        bc_scores.append(normalized_return(
            mean_return(rollout(pm_spec, as_rollout_policy(bc), eval_seed, 10)),
            manifest.R_random, manifest.R_expert))
        rng = np.random.default_rng((777, seed))
        wins = 0
        for _ in range(200):
            a, b = sample_segment_pair(dataset, cfg.k, rng)
            if pseudo_label(predictor, a, b) == 0:
                wins += segment_distance(policy, a) < segment_distance(policy, b)
            else:
                wins += segment_distance(policy, b) < segment_distance(policy, a)
        fractions.append(wins / 200.0)
    mean_pref = float(np.mean(pref_scores))
    mean_bc = float(np.mean(bc_scores))
    ok = (mean_pref >= mean_bc + 10.0) and all(f >= 0.8 for f in fractions) \
        and all(t < 900.0 for t in seed_times)
    detail = (f"normalized return {mean_pref:.1f} vs cloning {mean_bc:.1f} "
              f"(gate: +10); distance-order fractions "
              + ", ".join(f"{f:.3f}" for f in fractions)
              + " (gate >= 0.8); per-seed train "
              + ", ".join(f"{t:.0f}s" for t in seed_times) + " (gate < 900s)")
    record(7, ok, detail, time.time() - t0, 3 * 900.0 + 600.0)


def test_criterion_8_lambda_ablation(canonical, pm_spec):
    """Sweep lam in {0.1, 0.5, 1.0} x 3 seeds: lam=1.0 strictly worse than
    the best lam < 1 (60k-step runs; full budget < 45 min)."""
    dataset, manifest, prefs = canonical
    t0 = time.time()
    finals: dict[float, list[float]] = {0.1: [], 0.5: [], 1.0: []}
    for seed in SEEDS:
        predictor, _ = train_predictor(dataset, prefs,
                                       PredictorTrainConfig(seed=seed))
        for lam in finals:
            cfg = PolicyTrainConfig(lam=lam, steps=60_000, seed=seed,
                                    eval_every=20_000, log_every=2_000)
            _, metrics = train_policy(dataset, predictor, cfg, pm_spec,
                                      manifest.R_random, manifest.R_expert)
            evals = [m["eval_return_normalized"] for m in metrics
                     if m["eval_return_normalized"] is not None]
            finals[lam].append(evals[-1])
    means = {lam: float(np.mean(v)) for lam, v in finals.items()}
    best_below_one = max(means[0.1], means[0.5])
    ok = means[1.0] < best_below_one
    record(8, ok,
           "mean final normalized returns "
           + ", ".join(f"lam={lam}: {m:.1f}" for lam, m in sorted(means.items()))
           + f" (gate: lam=1.0 strictly below best lam<1 = {best_below_one:.1f})",
           time.time() - t0, 2700.0)


def test_criterion_9_determinism(tmp_path):
    """Repeating any pipeline stage with one seed gives byte-identical files."""
    t0 = time.time()

    def run(argv):
        assert cli_main([str(a) for a in argv]) == 0

    outputs = {}
    for rep in ("a", "b"):
        base = tmp_path / rep
        run(["gen-data", "--env", "pointmass2d", "--n-traj", 8,
             "--mix", "expert:0.5,random:0.5", "--seed", 5, "--out", base / "d"])
        run(["gen-prefs", "--data", base / "d", "--n-pairs", 40, "--k", 10,
             "--seed", 3])
        run(["train-pref", "--data", base / "d", "--out", base / "r",
             "--pred-steps", 150, "--seed", 2, "--smooth-trajs", 2,
             "--log-every", 50])
        run(["train-policy", "--data", base / "d",
             "--predictor", base / "r" / "predictor.json", "--out", base / "r",
             "--policy-steps", 150, "--policy-k", 10, "--eval-every", 150,
             "--eval-episodes", 2, "--seed", 2, "--log-every", 50])
        run(["train-baseline", "--algo", "bt-reward", "--data", base / "d",
             "--out", base / "r", "--rm-steps", 100, "--seed", 2,
             "--log-every", 50])
        outputs[rep] = base
    compared = []
    for rel in ("d/trajectories.jsonl", "d/manifest.json", "d/prefs.jsonl",
                "r/predictor_metrics.csv", "r/smoothness.csv",
                "r/policy_metrics.csv", "r/bt_metrics.csv",
                "r/reward_scatter.csv", "r/predictor.json", "r/policy.json"):
        a = (outputs["a"] / rel).read_bytes()
        b = (outputs["b"] / rel).read_bytes()
        assert a == b, f"{rel} differs between identically-seeded runs"
        compared.append(rel)
    record(9, True, f"{len(compared)} artifacts byte-identical across reruns",
           time.time() - t0, 300.0)
