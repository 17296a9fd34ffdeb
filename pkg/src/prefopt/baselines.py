"""Comparison methods and reward-fidelity diagnostics.

Behavior cloning (optionally restricted to the top-return trajectories) and
a pairwise reward model that scores segment pairs by softmax over summed
per-step predicted rewards. The fidelity report contrasts that model's
per-step predictions against the ground-truth rewards and measures how often
its segment ordering matches the scripted teacher.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .data import (DataError, Segment, TrajectoryDataset, _sample_pair_indices,
                   scripted_label, top_fraction_filter)
from .envs import EnvSpec
from .policy_opt import PolicyModel, policy_init
from .predictor import (PredictorModel, pair_cross_entropy, segment_scores,
                        sigmoid)


@dataclass
class RewardModel:
    """Per-step reward network r(state || action) -> scalar."""

    net: nn.MlpModel

    def __post_init__(self) -> None:
        if self.net.out_dim != 1:
            raise nn.ShapeError("reward net must output a single scalar")


@dataclass
class BcConfig:
    steps: int = 20_000
    batch: int = 256
    lr: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    dropout: float = 0.25
    seed: int = 0
    log_every: int = 500


@dataclass
class RewardTrainConfig:
    steps: int = 3000
    batch: int = 32
    lr: float = 1e-4
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    log_every: int = 100


def _flat_transitions(dataset: TrajectoryDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, horizon = dataset.actions.shape[:2]
    states = dataset.states[:, :horizon].reshape(n * horizon, -1)
    actions = dataset.actions.reshape(n * horizon, -1)
    rewards = dataset.rewards.reshape(n * horizon)
    return states, actions, rewards


def bc_loss(net: nn.MlpModel, states: np.ndarray, actions: np.ndarray,
            dropout: float = 0.0, rng: np.random.Generator | None = None,
            ) -> tuple[float, nn.GradBuffer]:
    """Mean squared action gap ||pi(s) - a||^2 over the batch, with gradients."""
    pi, cache = nn.mlp_forward_cached(net, states, dropout, rng)
    delta = pi - actions
    loss = float(np.mean(np.einsum("ij,ij->i", delta, delta)))
    grads, _ = nn.mlp_backward(net, cache, 2.0 * delta / states.shape[0])
    return loss, grads


def bc_train(dataset: TrajectoryDataset, config: BcConfig, spec: EnvSpec,
             ) -> tuple[PolicyModel, list[dict]]:
    """Behavior cloning: Adam on the action MSE over all stored transitions."""
    model = policy_init(spec, np.random.default_rng((config.seed, 0)),
                        config.hidden, config.dropout)
    if config.steps == 0:
        return model, []
    states, actions, _ = _flat_transitions(dataset)
    rng = np.random.default_rng((config.seed, 1))
    drop_rng = np.random.default_rng((config.seed, 2))
    opt = nn.adam_init(model.net, config.lr)
    metrics = []
    for step in range(1, config.steps + 1):
        pick = rng.integers(0, states.shape[0], size=config.batch)
        loss, grads = bc_loss(model.net, states[pick], actions[pick],
                              config.dropout, drop_rng)
        nn.adam_step(model.net, grads, opt)
        if step % config.log_every == 0 or step == config.steps:
            metrics.append({"step": step, "mse": loss})
    return model, metrics


def _filter_by_scores(dataset: TrajectoryDataset, fraction: float,
                      scores: np.ndarray) -> TrajectoryDataset:
    order = sorted(range(len(dataset)),
                   key=lambda i: (-scores[i], dataset.trajectories[i].id))
    keep = sorted(order[:math.ceil(fraction * len(dataset))])
    return TrajectoryDataset([dataset.trajectories[i] for i in keep])


def pct_bc_train(
    dataset: TrajectoryDataset,
    fraction: float,
    config: BcConfig,
    spec: EnvSpec,
    key: str = "return",
    predictor: PredictorModel | None = None,
) -> tuple[PolicyModel, list[dict]]:
    """Behavior cloning on the top trajectories only.

    key="return" ranks by ground-truth return; key="score" ranks by the
    predictor's score of each whole trajectory taken as one window. Only the
    trajectory subset changes; training is bc_train either way.
    """
    if key == "return":
        subset = top_fraction_filter(dataset, fraction)
    elif key == "score":
        if predictor is None:
            raise DataError('key="score" requires a trained predictor')
        if not 0.0 < fraction <= 1.0:
            raise DataError(f"fraction must be in (0, 1], got {fraction}")
        horizon = dataset.horizon
        whole = [dataset.segment(i, 0, horizon - 1) for i in range(len(dataset))]
        subset = _filter_by_scores(dataset, fraction, segment_scores(predictor, whole))
    else:
        raise DataError(f"unknown filter key {key!r}")
    return bc_train(subset, config, spec)


def reward_init(state_dim: int, action_dim: int, rng: np.random.Generator,
                hidden: tuple[int, ...] = (64, 64)) -> RewardModel:
    return RewardModel(nn.mlp_init([state_dim + action_dim, *hidden, 1], rng))


def predict_rewards(model: RewardModel, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    rows = np.concatenate([states, actions], axis=-1)
    return nn.mlp_forward(model.net, rows.reshape(-1, rows.shape[-1]))[:, 0]


def bt_reward_loss(model: RewardModel, triples: list[tuple[Segment, Segment, float]],
                   ) -> tuple[float, nn.GradBuffer]:
    """Cross-entropy of softmax over summed predicted segment rewards against
    the labels; computed stably via a sigmoid of the return difference."""
    if not triples:
        raise DataError("bt_reward_loss requires a non-empty batch")
    segments = []
    for s0, s1, _ in triples:
        segments.extend((s0, s1))
    rows = np.concatenate(
        [np.concatenate([s.states, s.actions], axis=1) for s in segments], axis=0)
    counts = np.array([s.k + 1 for s in segments])
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    r_hat, cache = nn.mlp_forward_cached(model.net, rows)
    sums = np.add.reduceat(r_hat[:, 0], offsets)
    b = len(triples)
    y = np.array([t[2] for t in triples], dtype=np.float64)
    z = sums[0::2] - sums[1::2]
    p = sigmoid(z)
    loss = float(np.mean(pair_cross_entropy(z, y)))
    dz = (p - (1.0 - y)) / b
    coef = np.stack([dz, -dz], axis=1).reshape(2 * b)
    grads, _ = nn.mlp_backward(model.net, cache, np.repeat(coef, counts)[:, None])
    return loss, grads


def bt_train(dataset: TrajectoryDataset, prefs, config: RewardTrainConfig,
             ) -> tuple[RewardModel, list[dict]]:
    """Adam on bt_reward_loss over minibatches of the preference triples."""
    if not prefs:
        raise DataError("preference dataset must be non-empty")
    ks = {t.k for t in prefs}
    if len(ks) != 1:
        raise DataError(f"preference triples must share one k, got {sorted(ks)}")
    k = ks.pop()
    sd = dataset.states.shape[2]
    ad = dataset.actions.shape[2]
    model = RewardModel(nn.mlp_init([sd + ad, *config.hidden, 1],
                                    np.random.default_rng((config.seed, 0))))
    if config.steps == 0:
        return model, []
    idx0 = np.array([dataset.index_of(t.traj0) for t in prefs])
    st0 = np.array([t.start0 for t in prefs])
    idx1 = np.array([dataset.index_of(t.traj1) for t in prefs])
    st1 = np.array([t.start1 for t in prefs])
    y_all = np.array([t.y for t in prefs])
    rng = np.random.default_rng((config.seed, 1))
    opt = nn.adam_init(model.net, config.lr)
    metrics = []
    kp1 = k + 1
    for step in range(1, config.steps + 1):
        pick = rng.integers(0, len(prefs), size=config.batch)
        s0, a0 = dataset.gather(idx0[pick], st0[pick], k)
        s1, a1 = dataset.gather(idx1[pick], st1[pick], k)
        y = y_all[pick]
        b = len(pick)
        rows = np.stack([np.concatenate([s0, a0], axis=2),
                         np.concatenate([s1, a1], axis=2)],
                        axis=1).reshape(2 * b * kp1, sd + ad)
        r_hat, cache = nn.mlp_forward_cached(model.net, rows)
        sums = r_hat[:, 0].reshape(2 * b, kp1).sum(axis=1)
        z = sums[0::2] - sums[1::2]
        p = sigmoid(z)
        loss = float(np.mean(pair_cross_entropy(z, y)))
        dz = (p - (1.0 - y)) / b
        coef = np.stack([dz, -dz], axis=1).reshape(2 * b)
        grads, _ = nn.mlp_backward(model.net, cache, np.repeat(coef, kp1)[:, None])
        nn.adam_step(model.net, grads, opt)
        if step % config.log_every == 0 or step == config.steps:
            metrics.append({"step": step, "loss": loss})
    return model, metrics


def reward_regression_train(dataset: TrajectoryDataset, config: RewardTrainConfig,
                            ) -> tuple[RewardModel, list[dict]]:
    """Supervised sanity branch: regress per-step rewards directly (MSE)."""
    states, actions, rewards = _flat_transitions(dataset)
    rows = np.concatenate([states, actions], axis=1)
    model = RewardModel(nn.mlp_init([rows.shape[1], *config.hidden, 1],
                                    np.random.default_rng((config.seed, 0))))
    rng = np.random.default_rng((config.seed, 1))
    opt = nn.adam_init(model.net, config.lr)
    metrics = []
    for step in range(1, config.steps + 1):
        pick = rng.integers(0, rows.shape[0], size=config.batch)
        pred, cache = nn.mlp_forward_cached(model.net, rows[pick])
        delta = pred[:, 0] - rewards[pick]
        loss = float(np.mean(delta ** 2))
        grads, _ = nn.mlp_backward(model.net, cache, (2.0 * delta / len(pick))[:, None])
        nn.adam_step(model.net, grads, opt)
        if step % config.log_every == 0 or step == config.steps:
            metrics.append({"step": step, "loss": loss})
    return model, metrics


def reward_fidelity_report(
    model: RewardModel,
    dataset: TrajectoryDataset,
    k: int,
    seed: int,
    n_transitions: int = 5000,
    n_pairs: int = 500,
) -> dict:
    """Predicted-vs-true reward scatter plus segment-ranking accuracy.

    Pearson r is computed over uniformly sampled transitions; constant
    predictions are reported as r = 0 with degenerate = True instead of NaN.
    Ranking accuracy counts fresh scripted pairs whose predicted
    segment-return ordering matches the ground-truth ordering (exact ties in
    true returns are skipped).
    """
    n, horizon = dataset.actions.shape[:2]
    rng = np.random.default_rng((seed, 0))
    ti = rng.integers(0, n, size=n_transitions)
    tt = rng.integers(0, horizon, size=n_transitions)
    pred = predict_rewards(model, dataset.states[ti, tt], dataset.actions[ti, tt])
    true = dataset.rewards[ti, tt]
    degenerate = bool(np.std(pred) < 1e-12 or np.std(true) < 1e-12)
    pearson = 0.0 if degenerate else float(np.corrcoef(pred, true)[0, 1])

    pair_rng = np.random.default_rng((seed, 1))
    matched = 0
    ranked = 0
    for _ in range(n_pairs):
        i0, s0, i1, s1 = _sample_pair_indices(dataset, k, pair_rng)
        seg0 = dataset.segment(i0, s0, k)
        seg1 = dataset.segment(i1, s1, k)
        y = scripted_label(seg0, seg1)
        if y == 0.5:
            continue
        g0 = float(predict_rewards(model, seg0.states, seg0.actions).sum())
        g1 = float(predict_rewards(model, seg1.states, seg1.actions).sum())
        pred_y = 0.0 if g0 > g1 else 1.0
        ranked += 1
        matched += int(pred_y == y)
    accuracy = matched / ranked if ranked else math.nan
    return {
        "pred": pred,
        "true": true,
        "pearson_r": pearson,
        "ranking_accuracy": accuracy,
        "degenerate": degenerate,
        "n_ranked": ranked,
    }


def save_reward_model(path: str | Path, model: RewardModel) -> None:
    Path(path).write_text(json.dumps({"net": nn.model_to_dict(model.net)}) + "\n")


def load_reward_model(path: str | Path) -> RewardModel:
    return RewardModel(nn.model_from_dict(json.loads(Path(path).read_text())["net"]))
