"""Preference predictor: per-transition encoder, mean pooling, scalar score.

A segment's score is head(mean_t encoder(state_t || action_t)); the
probability that one segment is preferred over another is a sigmoid of the
score difference, which keeps the pair of orderings summing to one by
construction. Training minimizes cross-entropy on labeled pairs plus a
smoothness penalty (p - 0.5)^2 on pairs of largely overlapping windows
drawn from the unlabeled trajectories.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import nn
from .data import DataError, Segment, TrajectoryDataset, _sample_overlap_indices
from .envs import Trajectory

HOLDOUT_MOD = 10  # pair_id hash % 10 == 0 is held out (10%)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pair_cross_entropy(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """-( (1-y) log sigmoid(z) + y log sigmoid(-z) ), elementwise.

    Evaluated as (1-y) softplus(-z) + y softplus(z): exact, finite for all z,
    and free of the 1-p cancellation that poisons finite-difference checks.
    """
    return (1.0 - y) * np.logaddexp(0.0, -z) + y * np.logaddexp(0.0, z)


@dataclass
class PredictorModel:
    encoder: nn.MlpModel   # (state_dim + action_dim) -> embedding
    head: nn.MlpModel      # embedding -> scalar score

    def __post_init__(self) -> None:
        if self.encoder.out_dim != self.head.in_dim:
            raise nn.ShapeError("encoder output dim must match head input dim")
        if self.head.out_dim != 1:
            raise nn.ShapeError("head must output a single score")


@dataclass
class PredictorTrainConfig:
    nu: float = 1.0            # smoothness weight
    shift_std: float = 5.0     # std of the overlap shift, in steps
    steps: int = 5000
    labeled_batch: int = 16
    smooth_batch: int = 16
    lr: float = 1e-4
    seed: int = 0
    embed_dim: int = 64
    encoder_hidden: tuple[int, ...] = (64,)
    head_hidden: tuple[int, ...] = (64,)
    log_every: int = 100


def predictor_init(state_dim: int, action_dim: int, rng: np.random.Generator,
                   config: PredictorTrainConfig | None = None) -> PredictorModel:
    cfg = config or PredictorTrainConfig()
    enc_dims = [state_dim + action_dim, *cfg.encoder_hidden, cfg.embed_dim]
    head_dims = [cfg.embed_dim, *cfg.head_hidden, 1]
    return PredictorModel(
        encoder=nn.mlp_init(enc_dims, rng),
        head=nn.mlp_init(head_dims, rng),
    )


def _segment_rows(segments: list[Segment]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack all transitions; return (rows, pool offsets, pool counts)."""
    rows = np.concatenate(
        [np.concatenate([s.states, s.actions], axis=1) for s in segments], axis=0)
    counts = np.array([s.k + 1 for s in segments])
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return rows, offsets, counts


def _pooled_forward(model: PredictorModel, rows: np.ndarray, offsets: np.ndarray,
                    counts: np.ndarray, cached: bool = False):
    """Scores g per segment; optionally keep caches for the backward pass."""
    if cached:
        emb, enc_cache = nn.mlp_forward_cached(model.encoder, rows)
        pooled = np.add.reduceat(emb, offsets, axis=0) / counts[:, None]
        g, head_cache = nn.mlp_forward_cached(model.head, pooled)
        return g[:, 0], enc_cache, head_cache
    emb = nn.mlp_forward(model.encoder, rows)
    pooled = np.add.reduceat(emb, offsets, axis=0) / counts[:, None]
    return nn.mlp_forward(model.head, pooled)[:, 0]


def _pooled_backward(model: PredictorModel, enc_cache, head_cache,
                     dg: np.ndarray, counts: np.ndarray) -> tuple[nn.GradBuffer, nn.GradBuffer]:
    head_grads, dpooled = nn.mlp_backward(model.head, head_cache, dg[:, None])
    drows = np.repeat(dpooled / counts[:, None], counts, axis=0)
    enc_grads, _ = nn.mlp_backward(model.encoder, enc_cache, drows)
    return enc_grads, head_grads


def segment_score(model: PredictorModel, seg: Segment) -> float:
    """g(segment) = head(mean over transitions of encoder(state || action))."""
    rows, offsets, counts = _segment_rows([seg])
    return float(_pooled_forward(model, rows, offsets, counts)[0])


def segment_scores(model: PredictorModel, segments: list[Segment]) -> np.ndarray:
    rows, offsets, counts = _segment_rows(segments)
    return _pooled_forward(model, rows, offsets, counts)


def pref_prob(model: PredictorModel, seg0: Segment, seg1: Segment) -> float:
    """Probability that seg0 is preferred: sigmoid(g(seg0) - g(seg1))."""
    g = segment_scores(model, [seg0, seg1])
    return float(sigmoid(np.array([g[0] - g[1]]))[0])


def predictor_loss(
    model: PredictorModel,
    labeled_batch: list[tuple[Segment, Segment, float]],
    smooth_batch: list[tuple[Segment, Segment]],
    nu: float,
) -> tuple[float, tuple[nn.GradBuffer, nn.GradBuffer], dict]:
    """Cross-entropy on labeled pairs plus nu * mean((p - 0.5)^2) on
    overlapping pairs. Returns (loss, (encoder grads, head grads), terms)."""
    if not labeled_batch:
        raise DataError("labeled batch must be non-empty")
    if nu > 0 and not smooth_batch:
        raise DataError("smoothness weight > 0 requires a non-empty smooth batch")
    if nu == 0:
        smooth_batch = []
    segments: list[Segment] = []
    for s0, s1, _ in labeled_batch:
        segments.extend((s0, s1))
    for s0, s1 in smooth_batch:
        segments.extend((s0, s1))
    rows, offsets, counts = _segment_rows(segments)
    g, enc_cache, head_cache = _pooled_forward(model, rows, offsets, counts, cached=True)

    n_lab = len(labeled_batch)
    n_sm = len(smooth_batch)
    y = np.array([t[2] for t in labeled_batch])
    g_lab = g[:2 * n_lab].reshape(n_lab, 2)
    z = g_lab[:, 0] - g_lab[:, 1]
    p = sigmoid(z)
    ce = float(np.mean(pair_cross_entropy(z, y)))
    dz = (p - (1.0 - y)) / n_lab

    dg = np.zeros_like(g)
    dg[0:2 * n_lab:2] = dz
    dg[1:2 * n_lab:2] = -dz

    smooth = 0.0
    if n_sm:
        g_sm = g[2 * n_lab:].reshape(n_sm, 2)
        z_sm = g_sm[:, 0] - g_sm[:, 1]
        p_sm = sigmoid(z_sm)
        smooth = float(np.mean((p_sm - 0.5) ** 2))
        dz_sm = nu * 2.0 * (p_sm - 0.5) * p_sm * (1.0 - p_sm) / n_sm
        dg[2 * n_lab::2] = dz_sm
        dg[2 * n_lab + 1::2] = -dz_sm

    loss = ce + nu * smooth
    enc_grads, head_grads = _pooled_backward(model, enc_cache, head_cache, dg, counts)
    return loss, (enc_grads, head_grads), {"ce": ce, "smooth": smooth}


def _is_holdout(pair_id: str) -> bool:
    digest = hashlib.sha1(pair_id.encode()).hexdigest()
    return int(digest, 16) % HOLDOUT_MOD == 0


def split_prefs(prefs) -> tuple[list, list]:
    """Deterministic 10% holdout by pair_id hash."""
    train = [t for t in prefs if not _is_holdout(t.pair_id)]
    held = [t for t in prefs if _is_holdout(t.pair_id)]
    return train, held


def holdout_accuracy(model: PredictorModel, dataset: TrajectoryDataset, triples) -> float:
    """Fraction of non-tie triples whose thresholded prediction matches the
    label; nan when there is nothing to grade."""
    graded = [t for t in triples if t.y in (0.0, 1.0)]
    if not graded:
        return math.nan
    segments = []
    for t in graded:
        s0, s1 = dataset.resolve(t)
        segments.extend((s0, s1))
    g = segment_scores(model, segments).reshape(len(graded), 2)
    pred = np.where(g[:, 0] > g[:, 1], 0.0, 1.0)
    labels = np.array([t.y for t in graded])
    return float(np.mean(pred == labels))


def train_predictor(
    dataset: TrajectoryDataset,
    prefs,
    config: PredictorTrainConfig,
) -> tuple[PredictorModel, list[dict]]:
    """Adam on the predictor loss for config.steps steps.

    Labeled batches are drawn with replacement from the 90% train split;
    smoothness pairs are resampled fresh from the trajectory store every
    step (and never sampled at all when nu == 0).
    """
    if not prefs:
        raise DataError("preference dataset must be non-empty")
    ks = {t.k for t in prefs}
    if len(ks) != 1:
        raise DataError(f"preference triples must share one k, got {sorted(ks)}")
    k = ks.pop()
    train, held = split_prefs(prefs)
    if not train:
        raise DataError("all preference triples fell into the holdout split")

    sd = dataset.states.shape[2]
    ad = dataset.actions.shape[2]
    model = predictor_init(sd, ad, np.random.default_rng((config.seed, 0)), config)
    if config.steps == 0:
        return model, []

    idx0 = np.array([dataset.index_of(t.traj0) for t in train])
    st0 = np.array([t.start0 for t in train])
    idx1 = np.array([dataset.index_of(t.traj1) for t in train])
    st1 = np.array([t.start1 for t in train])
    y_all = np.array([t.y for t in train])

    rng = np.random.default_rng((config.seed, 1))
    opt_enc = nn.adam_init(model.encoder, config.lr)
    opt_head = nn.adam_init(model.head, config.lr)
    metrics: list[dict] = []
    kp1 = k + 1

    for step in range(1, config.steps + 1):
        pick = rng.integers(0, len(train), size=config.labeled_batch)
        s_lab0, a_lab0 = dataset.gather(idx0[pick], st0[pick], k)
        s_lab1, a_lab1 = dataset.gather(idx1[pick], st1[pick], k)
        y = y_all[pick]

        blocks = [np.concatenate([s_lab0, a_lab0], axis=2),
                  np.concatenate([s_lab1, a_lab1], axis=2)]
        n_sm = 0
        if config.nu > 0:
            si = np.empty(config.smooth_batch, dtype=np.int64)
            sa = np.empty(config.smooth_batch, dtype=np.int64)
            sb = np.empty(config.smooth_batch, dtype=np.int64)
            for j in range(config.smooth_batch):
                si[j], sa[j], sb[j] = _sample_overlap_indices(dataset, k, config.shift_std, rng)
            s_sm0, a_sm0 = dataset.gather(si, sa, k)
            s_sm1, a_sm1 = dataset.gather(si, sb, k)
            blocks.extend([np.concatenate([s_sm0, a_sm0], axis=2),
                           np.concatenate([s_sm1, a_sm1], axis=2)])
            n_sm = config.smooth_batch

        n_lab = config.labeled_batch
        # interleave: rows grouped per segment in (seg0, seg1) pair order
        lab = np.stack([blocks[0], blocks[1]], axis=1).reshape(2 * n_lab * kp1, sd + ad)
        parts = [lab]
        if n_sm:
            parts.append(np.stack([blocks[2], blocks[3]], axis=1).reshape(2 * n_sm * kp1, sd + ad))
        rows = np.concatenate(parts, axis=0)
        n_seg = 2 * (n_lab + n_sm)
        counts = np.full(n_seg, kp1)
        offsets = np.arange(n_seg) * kp1

        g, enc_cache, head_cache = _pooled_forward(model, rows, offsets, counts, cached=True)
        g_lab = g[:2 * n_lab].reshape(n_lab, 2)
        z = g_lab[:, 0] - g_lab[:, 1]
        p = sigmoid(z)
        ce = float(np.mean(pair_cross_entropy(z, y)))
        dz = (p - (1.0 - y)) / n_lab
        dg = np.zeros_like(g)
        dg[0:2 * n_lab:2] = dz
        dg[1:2 * n_lab:2] = -dz
        smooth = 0.0
        if n_sm:
            g_sm = g[2 * n_lab:].reshape(n_sm, 2)
            z_sm = g_sm[:, 0] - g_sm[:, 1]
            p_sm = sigmoid(z_sm)
            smooth = float(np.mean((p_sm - 0.5) ** 2))
            dz_sm = config.nu * 2.0 * (p_sm - 0.5) * p_sm * (1.0 - p_sm) / n_sm
            dg[2 * n_lab::2] = dz_sm
            dg[2 * n_lab + 1::2] = -dz_sm

        enc_grads, head_grads = _pooled_backward(model, enc_cache, head_cache, dg, counts)
        nn.adam_step(model.encoder, enc_grads, opt_enc)
        nn.adam_step(model.head, head_grads, opt_head)

        if step % config.log_every == 0 or step == config.steps:
            metrics.append({
                "step": step,
                "ce": ce,
                "smooth": smooth,
                "holdout_acc": holdout_accuracy(model, dataset, held),
            })
    return model, metrics


def smoothness_profile(model: PredictorModel, trajectory: Trajectory, k: int) -> np.ndarray:
    """Preference probabilities between consecutive one-step-shifted windows.

    Entry i is P[window_i preferred over window_{i+1}] for i = 0 .. H-2-k.
    """
    horizon = trajectory.actions.shape[0]
    n_windows = horizon - k
    if n_windows < 2:
        raise DataError(f"trajectory too short: need at least 2 windows of k+1={k + 1} steps")
    rows = np.concatenate([trajectory.states[:horizon], trajectory.actions], axis=1)
    windows = np.stack([rows[i:i + k + 1] for i in range(n_windows)])
    flat = windows.reshape(n_windows * (k + 1), rows.shape[1])
    offsets = np.arange(n_windows) * (k + 1)
    counts = np.full(n_windows, k + 1)
    g = _pooled_forward(model, flat, offsets, counts)
    return sigmoid(g[:-1] - g[1:])


def save_predictor(path: str | Path, model: PredictorModel,
                   config: PredictorTrainConfig | None = None) -> None:
    payload = {
        "encoder": nn.model_to_dict(model.encoder),
        "head": nn.model_to_dict(model.head),
        "config": None if config is None else _config_dict(config),
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def _config_dict(config: PredictorTrainConfig) -> dict:
    d = asdict(config)
    d["encoder_hidden"] = list(config.encoder_hidden)
    d["head_hidden"] = list(config.head_hidden)
    return d


def load_predictor(path: str | Path) -> PredictorModel:
    payload = json.loads(Path(path).read_text())
    return PredictorModel(
        encoder=nn.model_from_dict(payload["encoder"]),
        head=nn.model_from_dict(payload["head"]),
    )
