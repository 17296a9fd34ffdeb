"""Trajectory and preference persistence, segment extraction, and samplers.

File formats are JSON Lines (one trajectory or one preference record per
line) plus a small JSON manifest per dataset. Doubles are serialized with
shortest-round-trip decimal representation, so write->read is exact and
same-seed generation is byte-identical.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envs import EnvSpec, Trajectory, mean_return, reference_policy, rollout

TEACHERS = ("scripted", "human")
PREF_HEADER_KIND = "prefs"

_NORM_EPISODES = 50
_NORM_SEED_RANDOM = 1_000_003
_NORM_SEED_EXPERT = 2_000_003


class DataError(ValueError):
    """Raised for malformed datasets, invalid sampling bounds, or bad labels."""


@dataclass
class Segment:
    """A window of k+1 consecutive transitions cut from one trajectory."""

    traj_id: str
    start: int
    k: int
    states: np.ndarray     # (k+1, state_dim)
    actions: np.ndarray    # (k+1, action_dim)
    rewards: np.ndarray    # (k+1,)

    def ret(self) -> float:
        return float(self.rewards.sum())


@dataclass
class PreferenceTriple:
    """Two segment references plus a label y: 0 first preferred, 1 second, 0.5 tie."""

    pair_id: str
    traj0: str
    start0: int
    traj1: str
    start1: int
    k: int
    y: float
    teacher: str

    def __post_init__(self) -> None:
        if self.y not in (0.0, 0.5, 1.0):
            raise DataError(f"label y must be 0, 0.5 or 1, got {self.y}")
        if self.teacher not in TEACHERS:
            raise DataError(f"unknown teacher {self.teacher!r}")


@dataclass
class DatasetManifest:
    env: str
    n_trajectories: int
    mixture: dict[str, float]
    R_random: float
    R_expert: float
    seed: int

    def __post_init__(self) -> None:
        total = sum(self.mixture.values())
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"mixture fractions sum to {total}, expected 1")


class TrajectoryDataset:
    """In-memory trajectory store with stacked arrays for batched gathers.

    overlap_draws counts overlapping-pair samples, letting tests assert that
    smoothness-free training never touches the unlabeled pool.
    """

    def __init__(self, trajectories: list[Trajectory]):
        if not trajectories:
            raise DataError("dataset must contain at least one trajectory")
        envs = {t.env for t in trajectories}
        if len(envs) != 1:
            raise DataError(f"mixed environments in one dataset: {sorted(envs)}")
        horizons = {t.actions.shape[0] for t in trajectories}
        if len(horizons) != 1:
            raise DataError(f"mixed horizons in one dataset: {sorted(horizons)}")
        self.trajectories = list(trajectories)
        self.env = trajectories[0].env
        self.horizon = trajectories[0].actions.shape[0]
        self._index = {t.id: i for i, t in enumerate(self.trajectories)}
        if len(self._index) != len(self.trajectories):
            raise DataError("duplicate trajectory ids")
        self.states = np.stack([t.states for t in self.trajectories])
        self.actions = np.stack([t.actions for t in self.trajectories])
        self.rewards = np.stack([t.rewards for t in self.trajectories])
        self.overlap_draws = 0

    def __len__(self) -> int:
        return len(self.trajectories)

    def index_of(self, traj_id: str) -> int:
        if traj_id not in self._index:
            raise DataError(f"unknown trajectory id {traj_id!r}")
        return self._index[traj_id]

    def by_id(self, traj_id: str) -> Trajectory:
        return self.trajectories[self.index_of(traj_id)]

    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=1)

    def _check_window(self, start: int, k: int) -> None:
        if k < 0 or k + 1 > self.horizon:
            raise DataError(f"segment needs k+1 <= horizon ({self.horizon}), got k={k}")
        if start < 0 or start + k > self.horizon - 1:
            raise DataError(f"segment window [{start}, {start + k}] outside [0, {self.horizon - 1}]")

    def segment(self, traj: str | int, start: int, k: int) -> Segment:
        i = traj if isinstance(traj, int) else self.index_of(traj)
        self._check_window(start, k)
        t = self.trajectories[i]
        sl = slice(start, start + k + 1)
        return Segment(t.id, start, k, t.states[sl], t.actions[sl], t.rewards[sl])

    def gather(self, idx: np.ndarray, starts: np.ndarray, k: int,
               with_rewards: bool = False):
        """Stack k+1-step windows: states/actions (B, k+1, dim), rewards (B, k+1)."""
        idx = np.asarray(idx)
        starts = np.asarray(starts)
        window = starts[:, None] + np.arange(k + 1)[None, :]
        states = self.states[idx[:, None], window]
        actions = self.actions[idx[:, None], window]
        if with_rewards:
            return states, actions, self.rewards[idx[:, None], window]
        return states, actions

    def resolve(self, triple: PreferenceTriple) -> tuple[Segment, Segment]:
        return (self.segment(triple.traj0, triple.start0, triple.k),
                self.segment(triple.traj1, triple.start1, triple.k))


def _largest_remainder_counts(mixture: dict[str, float], n: int) -> dict[str, int]:
    tags = sorted(mixture)
    exact = {t: mixture[t] * n for t in tags}
    counts = {t: math.floor(exact[t]) for t in tags}
    short = n - sum(counts.values())
    by_remainder = sorted(tags, key=lambda t: (-(exact[t] - counts[t]), t))
    for t in by_remainder[:short]:
        counts[t] += 1
    return counts


def generate_offline_dataset(
    spec: EnvSpec,
    mixture: dict[str, float],
    n_traj: int,
    seed: int,
    out_dir: str | Path | None = None,
) -> tuple[TrajectoryDataset, DatasetManifest]:
    """Roll out the reference policies per the mixture and measure the
    random/expert returns that anchor normalization. Counts per tag use
    round(fraction * n) with largest-remainder correction."""
    total = sum(mixture.values())
    if abs(total - 1.0) > 1e-9 or any(f < 0 for f in mixture.values()):
        raise DataError(f"invalid mixture {mixture}")
    counts = _largest_remainder_counts(mixture, n_traj)
    trajectories: list[Trajectory] = []
    offset = 0
    for tag in sorted(counts):
        if counts[tag] == 0:
            continue
        if tag not in ("expert", "medium", "random"):
            raise DataError(f"unknown behavior tag {tag!r}")
        policy = reference_policy(spec, tag)
        trajectories.extend(rollout(spec, policy, seed + offset, counts[tag], behavior=tag))
        offset += counts[tag]
    r_random = mean_return(rollout(spec, reference_policy(spec, "random"),
                                   seed + _NORM_SEED_RANDOM, _NORM_EPISODES, "random"))
    r_expert = mean_return(rollout(spec, reference_policy(spec, "expert"),
                                   seed + _NORM_SEED_EXPERT, _NORM_EPISODES, "expert"))
    dataset = TrajectoryDataset(trajectories)
    manifest = DatasetManifest(spec.name, n_traj, dict(mixture), r_random, r_expert, seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_trajectories(out / "trajectories.jsonl", dataset)
        save_manifest(out / "manifest.json", manifest)
    return dataset, manifest


def save_trajectories(path: str | Path, dataset: TrajectoryDataset) -> None:
    with open(path, "w") as fh:
        for t in dataset.trajectories:
            fh.write(json.dumps({
                "id": t.id,
                "env": t.env,
                "behavior": t.behavior,
                "states": t.states.tolist(),
                "actions": t.actions.tolist(),
                "rewards": t.rewards.tolist(),
            }) + "\n")


def load_trajectories(path: str | Path) -> TrajectoryDataset:
    trajectories = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            trajectories.append(Trajectory(
                id=rec["id"], env=rec["env"], behavior=rec["behavior"],
                states=np.asarray(rec["states"], dtype=np.float64),
                actions=np.asarray(rec["actions"], dtype=np.float64),
                rewards=np.asarray(rec["rewards"], dtype=np.float64),
            ))
    return TrajectoryDataset(trajectories)


def save_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    Path(path).write_text(json.dumps({
        "env": manifest.env,
        "n_trajectories": manifest.n_trajectories,
        "mixture": manifest.mixture,
        "R_random": manifest.R_random,
        "R_expert": manifest.R_expert,
        "seed": manifest.seed,
    }, indent=2) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    rec = json.loads(Path(path).read_text())
    return DatasetManifest(rec["env"], rec["n_trajectories"], rec["mixture"],
                           rec["R_random"], rec["R_expert"], rec["seed"])


def _sample_pair_indices(dataset: TrajectoryDataset, k: int,
                         rng: np.random.Generator) -> tuple[int, int, int, int]:
    # trajectories uniform with replacement, then starts uniform in [0, H-1-k]
    if k + 1 > dataset.horizon:
        raise DataError(f"k+1 must be <= horizon ({dataset.horizon}), got k={k}")
    idx = rng.integers(0, len(dataset), size=2)
    starts = rng.integers(0, dataset.horizon - k, size=2)
    return int(idx[0]), int(starts[0]), int(idx[1]), int(starts[1])


def sample_segment_pair(dataset: TrajectoryDataset, k: int,
                        rng: np.random.Generator) -> tuple[Segment, Segment]:
    i0, s0, i1, s1 = _sample_pair_indices(dataset, k, rng)
    return dataset.segment(i0, s0, k), dataset.segment(i1, s1, k)


def _sample_overlap_indices(dataset: TrajectoryDataset, k: int, shift_std: float,
                            rng: np.random.Generator) -> tuple[int, int, int]:
    """One segment plus a same-trajectory copy shifted by round(N(0, shift_std^2)).

    A zero shift after clamping is redrawn (10 attempts), then forced to a
    one-step shift toward the in-range side, so the pair is never identical.
    """
    if shift_std < 1:
        raise DataError(f"shift_std must be >= 1, got {shift_std}")
    if k + 1 > dataset.horizon:
        raise DataError(f"k+1 must be <= horizon ({dataset.horizon}), got k={k}")
    hi = dataset.horizon - 1 - k
    if hi < 1:
        raise DataError("overlapping pairs need at least two possible starts (k <= horizon-2)")
    i = int(rng.integers(0, len(dataset)))
    s = int(rng.integers(0, hi + 1))
    alpha = 0.0
    for _ in range(10):
        alpha = float(rng.normal(0.0, shift_std))
        s2 = min(max(s + round(alpha), 0), hi)
        if s2 != s:
            dataset.overlap_draws += 1
            return i, s, s2
    step = 1 if alpha >= 0 else -1
    s2 = s + step if 0 <= s + step <= hi else s - step
    dataset.overlap_draws += 1
    return i, s, int(s2)


def sample_overlapping_pair(dataset: TrajectoryDataset, k: int, shift_std: float,
                            rng: np.random.Generator) -> tuple[Segment, Segment]:
    i, s, s2 = _sample_overlap_indices(dataset, k, shift_std, rng)
    return dataset.segment(i, s, k), dataset.segment(i, s2, k)


def scripted_label(seg0: Segment, seg1: Segment) -> float:
    """Synthetic teacher: prefer the segment with the larger summed reward."""
    for seg in (seg0, seg1):
        if seg.rewards is None or seg.rewards.shape != (seg.k + 1,) \
                or not np.all(np.isfinite(seg.rewards)):
            raise DataError(f"segment {seg.traj_id}@{seg.start} lacks usable rewards")
    r0, r1 = seg0.ret(), seg1.ret()
    if r0 > r1:
        return 0.0
    if r0 < r1:
        return 1.0
    return 0.5


def generate_pref_dataset(
    dataset: TrajectoryDataset,
    n_pairs: int,
    k: int,
    seed: int,
    out_path: str | Path | None = None,
) -> list[PreferenceTriple]:
    """Scripted-teacher preference triples over freshly sampled segment pairs."""
    rng = np.random.default_rng(seed)
    triples = []
    for i in range(n_pairs):
        i0, s0, i1, s1 = _sample_pair_indices(dataset, k, rng)
        y = scripted_label(dataset.segment(i0, s0, k), dataset.segment(i1, s1, k))
        triples.append(PreferenceTriple(
            pair_id=f"pair-{i:05d}",
            traj0=dataset.trajectories[i0].id, start0=s0,
            traj1=dataset.trajectories[i1].id, start1=s1,
            k=k, y=y, teacher="scripted",
        ))
    if out_path is not None:
        header = pref_header(dataset.env, k, n_pairs, seed, "scripted")
        save_prefs(out_path, triples, header)
    return triples


def pref_header(env: str, k: int, target: int, seed: int, teacher: str) -> dict:
    return {"kind": PREF_HEADER_KIND, "env": env, "k": k, "target": target,
            "seed": seed, "teacher": teacher}


def _triple_record(t: PreferenceTriple) -> dict:
    return {"pair_id": t.pair_id, "traj0": t.traj0, "start0": t.start0,
            "traj1": t.traj1, "start1": t.start1, "k": t.k, "y": t.y,
            "teacher": t.teacher}


def save_prefs(path: str | Path, triples: list[PreferenceTriple],
               header: dict | None = None) -> None:
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps(header) + "\n")
        for t in triples:
            fh.write(json.dumps(_triple_record(t)) + "\n")


def append_pref(path: str | Path, triple: PreferenceTriple) -> None:
    """Single-record durable append used by the labeling server."""
    with open(path, "a") as fh:
        fh.write(json.dumps(_triple_record(triple)) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def load_prefs(path: str | Path) -> tuple[list[PreferenceTriple], dict | None]:
    triples = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("kind") == PREF_HEADER_KIND:
                header = rec
                continue
            triples.append(PreferenceTriple(
                pair_id=rec["pair_id"], traj0=rec["traj0"], start0=int(rec["start0"]),
                traj1=rec["traj1"], start1=int(rec["start1"]), k=int(rec["k"]),
                y=float(rec["y"]), teacher=rec["teacher"],
            ))
    return triples, header


def top_fraction_filter(dataset: TrajectoryDataset, fraction: float) -> TrajectoryDataset:
    """Keep the ceil(fraction*n) trajectories with the largest ground-truth
    returns; ties broken by trajectory id."""
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    n = len(dataset)
    rets = dataset.returns()
    order = sorted(range(n), key=lambda i: (-rets[i], dataset.trajectories[i].id))
    keep = order[:math.ceil(fraction * n)]
    return TrajectoryDataset([dataset.trajectories[i] for i in sorted(keep)])
