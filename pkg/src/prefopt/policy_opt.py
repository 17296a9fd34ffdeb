"""Reward-model-free policy optimization from preference labels.

The policy is scored against a labeled (or pseudo-labeled) segment pair by
contrasting its distance to each segment: s = -softplus(d_pref - lam *
d_unpref). With lam = 1 the score only sees the distance difference; lam < 1
additionally penalizes drifting away from the data as a whole. Training
performs gradient ascent on the batch-mean score, with pair labels supplied
by a frozen preference predictor.
"""

from __future__ import annotations

import decimal
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .data import DataError, Segment, TrajectoryDataset
from .envs import EnvSpec, mean_return, normalized_return, rollout
from .predictor import PredictorModel, pref_prob, sigmoid

DIST_EPS = 1e-12  # inside the norm's sqrt so the gradient exists at zero


@dataclass
class PolicyModel:
    """Deterministic state->action network, tanh-bounded to the action box."""

    net: nn.MlpModel
    dropout: float
    env: str
    action_low: np.ndarray
    action_high: np.ndarray


@dataclass
class PolicyTrainConfig:
    # Policy-stage windows are longer than the k=25 preference windows: with
    # distance-shaped rewards, short windows rank mostly by state (being near
    # the goal), and the score's push away from low-ranked windows then points
    # away from good actions in poorly covered regions. At k=50 the window
    # return reflects behavior and lam=0.5 trains stably.
    lam: float = 0.5           # conservativeness weight in (0, 1]
    steps: int = 200_000
    lr: float = 3e-4
    pairs_per_batch: int = 16
    k: int = 50
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    dropout: float = 0.25
    eval_every: int = 5000
    eval_episodes: int = 10
    log_every: int = 100

    def __post_init__(self) -> None:
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must be in (0, 1], got {self.lam}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def policy_init(spec: EnvSpec, rng: np.random.Generator,
                hidden: tuple[int, ...] = (64, 64), dropout: float = 0.25) -> PolicyModel:
    if not np.allclose(spec.action_low, -spec.action_high):
        raise ValueError("tanh-bounded policies require a symmetric action box")
    net = nn.mlp_init([spec.state_dim, *hidden, spec.action_dim], rng,
                      hidden_activation="tanh", output_activation="tanh_scaled",
                      output_scale=spec.action_high)
    return PolicyModel(net, dropout, spec.name, spec.action_low.copy(), spec.action_high.copy())


def policy_action(policy: PolicyModel, state: np.ndarray) -> np.ndarray:
    """Deterministic action (dropout disabled); always inside the action box."""
    return nn.mlp_forward(policy.net, state)


def as_rollout_policy(policy: PolicyModel):
    return lambda state, rng: policy_action(policy, state)


def _distances(net: nn.MlpModel, states: np.ndarray, actions: np.ndarray,
               dropout: float = 0.0, rng: np.random.Generator | None = None):
    """Mean eps-smoothed action gap per segment.

    states/actions: (B, k+1, dim). Returns (d (B,), cache, delta, norms) with
    rows flattened segment-major for the backward pass.
    """
    b, kp1, sd = states.shape
    rows = states.reshape(b * kp1, sd)
    pi, cache = nn.mlp_forward_cached(net, rows, dropout, rng)
    delta = pi - actions.reshape(b * kp1, -1)
    norms = np.sqrt(np.einsum("ij,ij->i", delta, delta) + DIST_EPS)
    d = norms.reshape(b, kp1).mean(axis=1)
    return d, cache, delta, norms


def transition_distance(policy: PolicyModel, state: np.ndarray, action: np.ndarray) -> float:
    """sqrt(||pi(state) - action||^2 + eps); eps keeps it differentiable at 0."""
    a = policy_action(policy, np.asarray(state, dtype=np.float64))
    delta = a - np.asarray(action, dtype=np.float64)
    return float(np.sqrt(delta @ delta + DIST_EPS))


def segment_distance(policy: PolicyModel, seg: Segment) -> float:
    """Arithmetic mean of the k+1 transition distances."""
    d, _, _, _ = _distances(policy.net, seg.states[None], seg.actions[None])
    return float(d[0])


def pair_score_from_distances(d_i: float, d_j: float, lam: float) -> float:
    """log of exp(-d_i) / (exp(-d_i) + exp(-lam*d_j)), always negative.

    Evaluated in the equivalent stable form -softplus(d_i - lam*d_j).
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must be in (0, 1], got {lam}")
    return float(-np.logaddexp(0.0, d_i - lam * d_j))


def pair_score(policy: PolicyModel, seg_i: Segment, seg_j: Segment, lam: float) -> float:
    return pair_score_from_distances(
        segment_distance(policy, seg_i), segment_distance(policy, seg_j), lam)


def pseudo_label(predictor: PredictorModel, seg0: Segment, seg1: Segment) -> int:
    """Hard label from the predictor: 0 when seg0 is strictly preferred
    (p > 0.5), else 1 (exact 0.5 resolves to 1)."""
    return 0 if pref_prob(predictor, seg0, seg1) > 0.5 else 1


def _batch_score_arrays(
    net: nn.MlpModel,
    s0: np.ndarray, a0: np.ndarray,
    s1: np.ndarray, a1: np.ndarray,
    y: np.ndarray, lam: float,
    dropout: float = 0.0, rng: np.random.Generator | None = None,
) -> tuple[float, nn.GradBuffer, np.ndarray, np.ndarray]:
    """Batched score and its gradient w.r.t. policy parameters.

    Returns (score, dScore/dparams, d0, d1); callers doing ascent negate the
    gradient before the Adam (descent) step.
    """
    b, kp1 = s0.shape[0], s0.shape[1]
    states = np.concatenate([s0, s1], axis=0)
    actions = np.concatenate([a0, a1], axis=0)
    d_all, cache, delta, norms = _distances(net, states, actions, dropout, rng)
    d0, d1 = d_all[:b], d_all[b:]
    u0 = d0 - lam * d1
    u1 = d1 - lam * d0
    score = float(np.mean((1.0 - y) * (-np.logaddexp(0.0, u0))
                          + y * (-np.logaddexp(0.0, u1))))
    sig0, sig1 = sigmoid(u0), sigmoid(u1)
    c0 = ((1.0 - y) * (-sig0) + y * lam * sig1) / b
    c1 = ((1.0 - y) * lam * sig0 + y * (-sig1)) / b
    coef = np.concatenate([c0, c1])
    upstream = (np.repeat(coef / kp1, kp1) / norms)[:, None] * delta
    grads, _ = nn.mlp_backward(net, cache, upstream)
    return score, grads, d0, d1


def batch_score(
    policy: PolicyModel,
    triples: list[tuple[Segment, Segment, float]],
    lam: float,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, nn.GradBuffer]:
    """Mean contrastive score over (seg0, seg1, y) triples, y in {0, 0.5, 1};
    y = 0.5 averages both orderings."""
    if not triples:
        raise DataError("batch_score requires a non-empty batch")
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must be in (0, 1], got {lam}")
    y = np.array([t[2] for t in triples], dtype=np.float64)
    if not np.all(np.isin(y, (0.0, 0.5, 1.0))):
        raise DataError(f"labels must be 0, 0.5 or 1, got {sorted(set(y.tolist()))}")
    ks = {s.k for t in triples for s in t[:2]}
    if len(ks) != 1:
        raise DataError(f"batch_score requires one shared k, got {sorted(ks)}")
    s0 = np.stack([t[0].states for t in triples])
    a0 = np.stack([t[0].actions for t in triples])
    s1 = np.stack([t[1].states for t in triples])
    a1 = np.stack([t[1].actions for t in triples])
    score, grads, _, _ = _batch_score_arrays(policy.net, s0, a0, s1, a1, y, lam, dropout, rng)
    return score, grads


def transition_embeddings(predictor: PredictorModel, dataset: TrajectoryDataset) -> np.ndarray:
    """Encoder output for every stored transition: (n_traj, H, embed_dim)."""
    n, horizon = dataset.actions.shape[:2]
    rows = np.concatenate(
        [dataset.states[:, :horizon].reshape(n * horizon, -1),
         dataset.actions.reshape(n * horizon, -1)], axis=1)
    emb = nn.mlp_forward(predictor.encoder, rows)
    return emb.reshape(n, horizon, -1)


def train_policy(
    dataset: TrajectoryDataset,
    predictor: PredictorModel,
    config: PolicyTrainConfig,
    spec: EnvSpec,
    ret_random: float,
    ret_expert: float,
) -> tuple[PolicyModel, list[dict]]:
    """Ascend the batch score for config.steps Adam steps.

    Every step samples fresh uniform segment pairs, labels them with the
    frozen predictor, and steps the policy. Per-transition predictor
    embeddings are precomputed once, so labeling costs one small head pass.
    """
    model = policy_init(spec, np.random.default_rng((config.seed, 0)),
                        config.hidden, config.dropout)
    if config.steps == 0:
        return model, []
    if config.k + 1 > dataset.horizon:
        raise DataError(f"k+1 must be <= horizon ({dataset.horizon}), got k={config.k}")

    n = len(dataset)
    k = config.k
    hi = dataset.horizon - k  # exclusive bound for starts
    b = config.pairs_per_batch

    # The predictor is frozen, so every window's score can be computed once:
    # prefix sums give all pooled embeddings, one head pass scores them.
    emb = transition_embeddings(predictor, dataset)
    prefix = np.concatenate(
        [np.zeros((n, 1, emb.shape[2])), np.cumsum(emb, axis=1)], axis=1)
    pooled_all = (prefix[:, k + 1:] - prefix[:, :hi]) / (k + 1.0)
    g_table = nn.mlp_forward(
        predictor.head, pooled_all.reshape(n * hi, -1))[:, 0].reshape(n, hi)

    rng = np.random.default_rng((config.seed, 1))
    drop_rng = np.random.default_rng((config.seed, 2))
    opt = nn.adam_init(model.net, config.lr)
    metrics: list[dict] = []

    for step in range(1, config.steps + 1):
        idx = rng.integers(0, n, size=(2, b))
        starts = rng.integers(0, hi, size=(2, b))
        g = g_table[idx, starts]
        yhat = (g[0] <= g[1]).astype(np.float64)

        s0, a0 = dataset.gather(idx[0], starts[0], k)
        s1, a1 = dataset.gather(idx[1], starts[1], k)
        score, grads, d0, d1 = _batch_score_arrays(
            model.net, s0, a0, s1, a1, yhat, config.lam,
            config.dropout, drop_rng)
        nn.adam_step(model.net, grads.scaled(-1.0), opt)

        is_eval = config.eval_every > 0 and (step % config.eval_every == 0
                                             or step == config.steps)
        if step % config.log_every == 0 or step == config.steps or is_eval:
            d_pref = float(np.mean(np.where(yhat == 0.0, d0, d1)))
            d_unpref = float(np.mean(np.where(yhat == 0.0, d1, d0)))
            row: dict = {"step": step, "score": score,
                         "d_pref": d_pref, "d_unpref": d_unpref,
                         "eval_return_raw": None, "eval_return_normalized": None}
            if is_eval:
                eval_seed = (config.seed + 1) * 10_000_000 + step
                trajs = rollout(spec, as_rollout_policy(model), eval_seed,
                                config.eval_episodes)
                raw = mean_return(trajs)
                row["eval_return_raw"] = raw
                row["eval_return_normalized"] = normalized_return(raw, ret_random, ret_expert)
            metrics.append(row)
    return model, metrics


def score_oracle_check(
    policy: PolicyModel,
    triples: list[tuple[Segment, Segment, float]],
    lam: float,
    tol: float = 1e-9,
) -> bool:
    """Recompute the batch score by direct per-transition evaluation of the
    naive exp/log formulas in 40-digit decimal arithmetic and compare."""
    if len(triples) > 8 or any(t[0].k > 4 or t[1].k > 4 for t in triples):
        raise DataError("oracle check is restricted to <= 8 triples with k <= 4")
    batch, _ = batch_score(policy, triples, lam)
    with decimal.localcontext() as ctx:
        ctx.prec = 40
        dec = decimal.Decimal

        def seg_dist(seg: Segment) -> decimal.Decimal:
            total = dec(0)
            for t in range(seg.k + 1):
                act = policy_action(policy, seg.states[t])
                acc = dec(DIST_EPS)
                for j in range(act.shape[0]):
                    diff = dec(float(act[j])) - dec(float(seg.actions[t, j]))
                    acc += diff * diff
                total += acc.sqrt()
            return total / dec(seg.k + 1)

        def naive_score(di: decimal.Decimal, dj: decimal.Decimal) -> decimal.Decimal:
            num = (-di).exp()
            return (num / (num + (-dec(lam) * dj).exp())).ln()

        total = dec(0)
        for seg0, seg1, y in triples:
            d0, d1 = seg_dist(seg0), seg_dist(seg1)
            total += (dec(1) - dec(y)) * naive_score(d0, d1) + dec(y) * naive_score(d1, d0)
        oracle = float(total / dec(len(triples)))
    return abs(oracle - batch) <= tol


def save_policy(path: str | Path, policy: PolicyModel) -> None:
    Path(path).write_text(json.dumps({
        "net": nn.model_to_dict(policy.net),
        "dropout": policy.dropout,
        "env": policy.env,
        "action_low": policy.action_low.tolist(),
        "action_high": policy.action_high.tolist(),
    }) + "\n")


def load_policy(path: str | Path) -> PolicyModel:
    payload = json.loads(Path(path).read_text())
    return PolicyModel(
        net=nn.model_from_dict(payload["net"]),
        dropout=float(payload["dropout"]),
        env=payload["env"],
        action_low=np.asarray(payload["action_low"], dtype=np.float64),
        action_high=np.asarray(payload["action_high"], dtype=np.float64),
    )
