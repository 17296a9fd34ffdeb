"""Subcommand CLI for the full pipeline.

Configuration precedence is defaults < --config JSON file < flags; every
random choice flows from --seed (falling back to the PREFOPT_SEED
environment variable, then 0). Exit codes: 0 success, 1 operational failure
with a one-line diagnostic, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, nn
from .data import (DataError, _largest_remainder_counts, generate_offline_dataset,
                   generate_pref_dataset, load_manifest, load_prefs,
                   load_trajectories)
from .envs import make_env, mean_return, normalized_return, reference_policy, rollout
from .policy_opt import (PolicyTrainConfig, as_rollout_policy, load_policy,
                         save_policy, train_policy)
from .predictor import (PredictorTrainConfig, load_predictor, save_predictor,
                        smoothness_profile, train_predictor)
from .report import ReportError, emit_report, write_csv
from .server import LabelServer, LabelSession

# keys a --config file may set; "lam" appears in files and sweeps as "lambda"
DEFAULTS: dict = {
    "env": "pointmass2d",
    "seed": None,
    "k": 25,
    "policy_k": 50,
    "n_traj": 300,
    "mix": "expert:0.2,medium:0.4,random:0.4",
    "n_pairs": 500,
    "nu": 1.0,
    "shift_std": 5.0,
    "pred_steps": 5000,
    "pred_lr": 1e-4,
    "labeled_batch": 16,
    "smooth_batch": 16,
    "smooth_trajs": 20,
    "lam": 0.5,
    "policy_steps": 200_000,
    "policy_lr": 3e-4,
    "pairs_per_batch": 16,
    "dropout": 0.25,
    "eval_every": 5000,
    "eval_episodes": 10,
    "log_every": 100,
    "fraction": 0.1,
    "bc_steps": 20_000,
    "bc_batch": 256,
    "bc_lr": 3e-4,
    "rm_steps": 3000,
    "rm_batch": 32,
    "rm_lr": 1e-4,
    "episodes": 10,
    "port": 8710,
}

_INT_KEYS = {"k", "policy_k", "n_traj", "n_pairs", "pred_steps", "labeled_batch", "smooth_batch",
             "smooth_trajs", "policy_steps", "pairs_per_batch", "eval_every",
             "eval_episodes", "log_every", "bc_steps", "bc_batch", "rm_steps",
             "rm_batch", "episodes", "port", "seed"}

SMOOTH_EVAL_SEED_OFFSET = 7_000_001


class CliError(RuntimeError):
    pass


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < flags; seed additionally falls back to
    PREFOPT_SEED, then 0."""
    cfg = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        try:
            file_cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise CliError(f"config file {path} must hold a flat JSON object")
        for key, value in file_cfg.items():
            norm = "lam" if key == "lambda" else key
            if norm not in DEFAULTS:
                raise CliError(f"unknown config key {key!r} in {path}")
            cfg[norm] = value
    for key in DEFAULTS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            cfg[key] = flag_value
    if cfg["seed"] is None:
        cfg["seed"] = os.environ.get("PREFOPT_SEED", 0)
    for key in _INT_KEYS:
        cfg[key] = int(cfg[key])
    return cfg


def parse_mixture(text: str) -> dict[str, float]:
    mixture = {}
    for part in text.split(","):
        if ":" not in part:
            raise CliError(f"bad mixture entry {part!r}; expected tag:fraction")
        tag, frac = part.split(":", 1)
        mixture[tag.strip()] = float(frac)
    return mixture


def _load_dataset(data_dir: str):
    path = Path(data_dir)
    dataset = load_trajectories(path / "trajectories.jsonl")
    manifest = load_manifest(path / "manifest.json")
    return dataset, manifest


def _write_metrics(path: Path, header: list[str], rows: list[dict]) -> None:
    write_csv(path, header, [[row.get(h) for h in header] for row in rows])


POLICY_METRICS_HEADER = ["step", "score", "d_pref", "d_unpref",
                         "eval_return_raw", "eval_return_normalized"]


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    spec = make_env(cfg["env"])
    mixture = parse_mixture(cfg["mix"])
    out = Path(args.out)
    dataset, manifest = generate_offline_dataset(spec, mixture, cfg["n_traj"],
                                                 cfg["seed"], out_dir=out)
    print(f"wrote {len(dataset)} trajectories to {out} "
          f"(R_random={manifest.R_random:.3f}, R_expert={manifest.R_expert:.3f})")
    return 0


def cmd_gen_prefs(args) -> int:
    cfg = resolve_config(args)
    dataset, _ = _load_dataset(args.data)
    out = Path(args.out) if args.out else Path(args.data) / "prefs.jsonl"
    triples = generate_pref_dataset(dataset, cfg["n_pairs"], cfg["k"], cfg["seed"],
                                    out_path=out)
    labels = [t.y for t in triples]
    print(f"wrote {len(triples)} scripted preference triples to {out} "
          f"(y=0: {labels.count(0.0)}, y=0.5: {labels.count(0.5)}, "
          f"y=1: {labels.count(1.0)})")
    return 0


def _predictor_config(cfg: dict) -> PredictorTrainConfig:
    return PredictorTrainConfig(
        nu=float(cfg["nu"]), shift_std=float(cfg["shift_std"]),
        steps=cfg["pred_steps"], labeled_batch=cfg["labeled_batch"],
        smooth_batch=cfg["smooth_batch"], lr=float(cfg["pred_lr"]),
        seed=cfg["seed"], log_every=cfg["log_every"])


def _smoothness_rows(model, dataset, manifest, k: int, n_trajs: int, seed: int):
    """Profile over freshly rolled-out trajectories (same mixture, new seeds)."""
    spec = make_env(manifest.env, horizon=dataset.horizon)
    counts = _largest_remainder_counts(manifest.mixture, n_trajs)
    rows = []
    offset = 0
    for tag in sorted(counts):
        if counts[tag] == 0:
            continue
        for traj in rollout(spec, reference_policy(spec, tag),
                            seed + SMOOTH_EVAL_SEED_OFFSET + offset, counts[tag],
                            behavior=tag):
            profile = smoothness_profile(model, traj, k)
            rows.extend([traj.id, i, float(p)] for i, p in enumerate(profile))
        offset += counts[tag]
    return rows


def cmd_train_pref(args) -> int:
    cfg = resolve_config(args)
    dataset, manifest = _load_dataset(args.data)
    prefs_path = Path(args.prefs) if args.prefs else Path(args.data) / "prefs.jsonl"
    prefs, _ = load_prefs(prefs_path)
    pconfig = _predictor_config(cfg)
    model, metrics = train_predictor(dataset, prefs, pconfig)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_predictor(out / "predictor.json", model, pconfig)
    _write_metrics(out / "predictor_metrics.csv",
                   ["step", "ce", "smooth", "holdout_acc"], metrics)
    k = prefs[0].k if prefs else cfg["k"]
    write_csv(out / "smoothness.csv", ["traj_id", "offset", "p"],
              _smoothness_rows(model, dataset, manifest, k, cfg["smooth_trajs"],
                               cfg["seed"]))
    final_acc = metrics[-1]["holdout_acc"] if metrics else math.nan
    print(f"trained predictor for {pconfig.steps} steps "
          f"(holdout accuracy {final_acc:.3f}); artifacts in {out}")
    return 0


def cmd_train_policy(args) -> int:
    cfg = resolve_config(args)
    dataset, manifest = _load_dataset(args.data)
    predictor = load_predictor(args.predictor)
    spec = make_env(manifest.env, horizon=dataset.horizon)
    pconfig = PolicyTrainConfig(
        lam=float(cfg["lam"]), steps=cfg["policy_steps"], lr=float(cfg["policy_lr"]),
        pairs_per_batch=cfg["pairs_per_batch"], k=cfg["policy_k"], seed=cfg["seed"],
        dropout=float(cfg["dropout"]), eval_every=cfg["eval_every"],
        eval_episodes=cfg["eval_episodes"], log_every=cfg["log_every"])
    model, metrics = train_policy(dataset, predictor, pconfig, spec,
                                  manifest.R_random, manifest.R_expert)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_policy(out / "policy.json", model)
    _write_metrics(out / "policy_metrics.csv", POLICY_METRICS_HEADER, metrics)
    evals = [m for m in metrics if m["eval_return_normalized"] is not None]
    final = evals[-1]["eval_return_normalized"] if evals else math.nan
    print(f"trained policy for {pconfig.steps} steps (lambda={pconfig.lam}, "
          f"final normalized return {final:.1f}); artifacts in {out}")
    return 0


def cmd_train_baseline(args) -> int:
    cfg = resolve_config(args)
    dataset, manifest = _load_dataset(args.data)
    spec = make_env(manifest.env, horizon=dataset.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.algo in ("bc", "pct-bc"):
        bconfig = baselines.BcConfig(
            steps=cfg["bc_steps"], batch=cfg["bc_batch"], lr=float(cfg["bc_lr"]),
            dropout=float(cfg["dropout"]), seed=cfg["seed"],
            log_every=cfg["log_every"])
        if args.algo == "bc":
            model, metrics = baselines.bc_train(dataset, bconfig, spec)
            stem = "bc"
        else:
            predictor = load_predictor(args.predictor) if args.predictor else None
            model, metrics = baselines.pct_bc_train(
                dataset, float(cfg["fraction"]), bconfig, spec,
                key=args.filter_key, predictor=predictor)
            stem = "pctbc"
        save_policy(out / f"{stem}_policy.json", model)
        _write_metrics(out / f"{stem}_metrics.csv", ["step", "mse"], metrics)
        trajs = rollout(spec, as_rollout_policy(model),
                        cfg["seed"] + 3_000_017, cfg["eval_episodes"])
        raw = mean_return(trajs)
        norm = normalized_return(raw, manifest.R_random, manifest.R_expert)
        (out / f"{stem}_eval.json").write_text(json.dumps(
            {"return_raw": raw, "return_normalized": norm}) + "\n")
        print(f"{args.algo}: normalized return {norm:.1f}; artifacts in {out}")
        return 0
    if args.algo == "bt-reward":
        prefs_path = Path(args.prefs) if args.prefs else Path(args.data) / "prefs.jsonl"
        prefs, _ = load_prefs(prefs_path)
        rconfig = baselines.RewardTrainConfig(
            steps=cfg["rm_steps"], batch=cfg["rm_batch"], lr=float(cfg["rm_lr"]),
            seed=cfg["seed"], log_every=cfg["log_every"])
        model, metrics = baselines.bt_train(dataset, prefs, rconfig)
        baselines.save_reward_model(out / "reward_model.json", model)
        _write_metrics(out / "bt_metrics.csv", ["step", "loss"], metrics)
        k = prefs[0].k if prefs else cfg["k"]
        report = baselines.reward_fidelity_report(model, dataset, k,
                                                  cfg["seed"] + 4_000_037)
        write_csv(out / "reward_scatter.csv", ["pred_reward", "true_reward"],
                  [[float(p), float(t)] for p, t in zip(report["pred"], report["true"])])
        (out / "reward_summary.json").write_text(json.dumps({
            "pearson_r": report["pearson_r"],
            "ranking_accuracy": report["ranking_accuracy"],
            "degenerate": report["degenerate"],
        }) + "\n")
        print(f"bt-reward: ranking accuracy {report['ranking_accuracy']:.3f}, "
              f"pearson r {report['pearson_r']:.3f}; artifacts in {out}")
        return 0
    raise CliError(f"unknown baseline algorithm {args.algo!r}")


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    policy = load_policy(args.policy)
    env_name = args.env or policy.env
    spec = make_env(env_name)
    trajs = rollout(spec, as_rollout_policy(policy), cfg["seed"], cfg["episodes"])
    raw = mean_return(trajs)
    if args.data:
        manifest = load_manifest(Path(args.data) / "manifest.json")
        r_random, r_expert = manifest.R_random, manifest.R_expert
    else:
        # no manifest given: measure the normalization anchors directly
        r_random = mean_return(rollout(spec, reference_policy(spec, "random"),
                                       cfg["seed"] + 1_000_003, 50))
        r_expert = mean_return(rollout(spec, reference_policy(spec, "expert"),
                                       cfg["seed"] + 2_000_003, 50))
    print(f"raw mean return: {raw:.4f}")
    print(f"normalized return: {normalized_return(raw, r_random, r_expert):.2f}")
    return 0


def cmd_report(args) -> int:
    written = emit_report(args.run)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_serve_label(args) -> int:
    cfg = resolve_config(args)
    dataset, _ = _load_dataset(args.data)
    out = Path(args.out) if args.out else Path(args.data) / "prefs_human.jsonl"
    session = LabelSession(dataset, cfg["k"], cfg["n_pairs"], cfg["seed"], out)
    ui_dir = args.ui_dir
    if ui_dir is None and Path("frontend/dist/index.html").exists():
        ui_dir = "frontend/dist"
    try:
        server = LabelServer(session, port=cfg["port"], ui_dir=ui_dir)
    except OSError as exc:
        raise CliError(f"cannot bind port {cfg['port']}: {exc}") from exc
    print(json.dumps({"url": server.url, "port": server.port,
                      "target": session.target, "out": str(out)}), flush=True)
    server.serve_until_done()
    done = session.progress()["done"]
    print(f"labeling session finished with {done}/{session.target} labels in {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    if args.param not in ("lambda", "nu"):
        raise CliError(f"--param must be lambda or nu, got {args.param!r}")
    values = [float(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    dataset, manifest = _load_dataset(args.data)
    spec = make_env(manifest.env, horizon=dataset.horizon)
    prefs_path = Path(args.prefs) if args.prefs else Path(args.data) / "prefs.jsonl"
    prefs, _ = load_prefs(prefs_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for seed in seeds:
        run_cfg = dict(cfg, seed=seed)
        shared_predictor = None
        if args.param == "lambda":
            if args.predictor:
                shared_predictor = load_predictor(args.predictor)
            else:
                shared_predictor, _ = train_predictor(dataset, prefs,
                                                      _predictor_config(run_cfg))
        for value in values:
            if args.param == "lambda":
                predictor = shared_predictor
                lam = value
            else:
                predictor, _ = train_predictor(
                    dataset, prefs, _predictor_config(dict(run_cfg, nu=value)))
                lam = float(cfg["lam"])
            pconfig = PolicyTrainConfig(
                lam=lam, steps=cfg["policy_steps"], lr=float(cfg["policy_lr"]),
                pairs_per_batch=cfg["pairs_per_batch"], k=cfg["policy_k"], seed=seed,
                dropout=float(cfg["dropout"]), eval_every=cfg["eval_every"],
                eval_episodes=cfg["eval_episodes"], log_every=cfg["log_every"])
            model, metrics = train_policy(dataset, predictor, pconfig, spec,
                                          manifest.R_random, manifest.R_expert)
            run_dir = out / f"{args.param}-{value:g}" / f"seed-{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            save_policy(run_dir / "policy.json", model)
            _write_metrics(run_dir / "policy_metrics.csv", POLICY_METRICS_HEADER, metrics)
            evals = [m for m in metrics if m["eval_return_normalized"] is not None]
            final = evals[-1]["eval_return_normalized"] if evals else math.nan
            summary.append([args.param, value, seed, final])
            print(f"{args.param}={value:g} seed={seed}: final normalized return {final:.1f}")
    write_csv(out / "summary.csv", ["param", "value", "seed", "final_eval_normalized"],
              summary)
    print(f"sweep summary in {out / 'summary.csv'}")
    return 0


def _add_common(p: argparse.ArgumentParser, *keys: str) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--seed", type=int, default=None)
    typed = {k: (int if k in _INT_KEYS else float) for k in DEFAULTS}
    for key in keys:
        flag = "--" + key.replace("_", "-")
        if key == "lam":
            p.add_argument("--lambda", dest="lam", type=float, default=None)
        elif key in ("env", "mix"):
            p.add_argument(flag, default=None)
        else:
            p.add_argument(flag, type=typed[key], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prefopt",
        description="offline preference-based policy optimization pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate an offline trajectory dataset")
    p.add_argument("--out", required=True)
    _add_common(p, "env", "n_traj", "mix")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-prefs", help="generate scripted preference labels")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    _add_common(p, "n_pairs", "k")
    p.set_defaults(func=cmd_gen_prefs)

    p = sub.add_parser("serve-label", help="serve the human labeling UI and API")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--ui-dir", default=None)
    _add_common(p, "n_pairs", "k", "port")
    p.set_defaults(func=cmd_serve_label)

    p = sub.add_parser("train-pref", help="train the preference predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--prefs", default=None)
    p.add_argument("--out", required=True)
    _add_common(p, "nu", "shift_std", "pred_steps", "pred_lr", "labeled_batch",
                "smooth_batch", "smooth_trajs", "log_every", "k")
    p.set_defaults(func=cmd_train_pref)

    p = sub.add_parser("train-policy", help="optimize a policy against the predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--predictor", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, "lam", "policy_steps", "policy_lr", "pairs_per_batch",
                "policy_k", "dropout", "eval_every", "eval_episodes", "log_every")
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("train-baseline", help="train a comparison method")
    p.add_argument("--algo", required=True, choices=["bc", "pct-bc", "bt-reward"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prefs", default=None)
    p.add_argument("--predictor", default=None)
    p.add_argument("--filter-key", default="return", choices=["return", "score"])
    _add_common(p, "bc_steps", "bc_batch", "bc_lr", "fraction", "dropout",
                "rm_steps", "rm_batch", "rm_lr", "k", "eval_episodes", "log_every")
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("eval", help="roll out a saved policy and report returns")
    p.add_argument("--policy", required=True)
    p.add_argument("--env", default=None)
    p.add_argument("--data", default=None)
    _add_common(p, "episodes")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render the report bundle for a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="ablation sweep over lambda or nu")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--data", required=True)
    p.add_argument("--prefs", default=None)
    p.add_argument("--predictor", default=None)
    p.add_argument("--out", required=True)
    _add_common(p, "lam", "nu", "policy_steps", "policy_lr", "pairs_per_batch",
                "policy_k", "dropout", "pred_steps", "pred_lr", "eval_every",
                "eval_episodes", "log_every", "shift_std", "labeled_batch",
                "smooth_batch")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    from .runtime import limit_blas_threads

    limit_blas_threads(1)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CliError, DataError, nn.ShapeError, nn.NonFiniteError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
