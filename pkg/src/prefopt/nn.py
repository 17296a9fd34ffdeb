"""Minimal dense-network engine used by every learned component.

Plain numpy MLPs with hand-derived backward passes, Adam, inverted dropout,
and a central-difference gradient checker that certifies each loss in the
package. Everything is float64 and deterministic given explicit RNGs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh_scaled")


class ShapeError(ValueError):
    """Raised when an array does not match the shape a model expects."""


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient contains NaN or infinity."""


@dataclass
class MlpModel:
    """Dense network: layer_dims[0] inputs through len(layer_dims)-2 hidden layers.

    weights[i] has shape (layer_dims[i+1], layer_dims[i]); biases[i] has
    length layer_dims[i+1]. output_scale is only used by "tanh_scaled" and
    bounds the output to (-scale, scale) elementwise.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    output_scale: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2 or any(d <= 0 for d in self.layer_dims):
            raise ShapeError(f"layer_dims must be >=2 positive ints, got {self.layer_dims}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != want:
                raise ShapeError(f"weights[{i}] has shape {w.shape}, expected {want}")
            if b.shape != (self.layer_dims[i + 1],):
                raise ShapeError(f"biases[{i}] has shape {b.shape}, expected ({self.layer_dims[i + 1]},)")
        if self.output_activation == "tanh_scaled":
            if self.output_scale is None:
                raise ValueError("tanh_scaled output requires output_scale")
            self.output_scale = np.asarray(self.output_scale, dtype=np.float64)
            if self.output_scale.shape != (self.layer_dims[-1],):
                raise ShapeError(f"output_scale has shape {self.output_scale.shape}, "
                                 f"expected ({self.layer_dims[-1]},)")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
            output_scale=None if self.output_scale is None else self.output_scale.copy(),
        )


@dataclass
class GradBuffer:
    """Per-parameter gradient accumulators mirroring an MlpModel's shapes."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def scaled(self, factor: float) -> "GradBuffer":
        return GradBuffer([w * factor for w in self.weights], [b * factor for b in self.biases])

    def add_(self, other: "GradBuffer") -> "GradBuffer":
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b
        return self


def grad_zeros(model: MlpModel) -> GradBuffer:
    return GradBuffer(
        weights=[np.zeros_like(w) for w in model.weights],
        biases=[np.zeros_like(b) for b in model.biases],
    )


@dataclass
class MlpCache:
    """Activations saved by a cached forward pass, consumed by mlp_backward."""

    layer_dims: list[int]
    x: np.ndarray                      # (B, in_dim) layer-0 input
    layer_inputs: list[np.ndarray]     # input to each layer, post-dropout
    hidden_post: list[np.ndarray]      # post-activation (pre-dropout) per hidden layer
    masks: list[np.ndarray | None]     # inverted-dropout mask per hidden layer
    out_tanh: np.ndarray | None        # tanh(z) of the output layer if tanh_scaled
    was_1d: bool


def mlp_init(
    layer_dims: Sequence[int],
    rng: np.random.Generator,
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    output_scale: np.ndarray | None = None,
) -> MlpModel:
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)); zero biases."""
    dims = list(int(d) for d in layer_dims)
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, hidden_activation, output_activation, output_scale)


def _as_2d(x: np.ndarray, model: MlpModel) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
        was_1d = True
    elif arr.ndim == 2:
        was_1d = False
    else:
        raise ShapeError(f"input must be a vector or a matrix, got ndim={arr.ndim}")
    if arr.shape[1] != model.in_dim:
        raise ShapeError(f"layer 0 expects inputs of length {model.in_dim}, got {arr.shape[1]}")
    return arr, was_1d


def mlp_forward_cached(
    model: MlpModel,
    x: np.ndarray,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, MlpCache]:
    """Forward pass keeping the activations needed for mlp_backward.

    Dropout (inverted: mask/(1-rate)) is applied to hidden activations only,
    so rate 0 is exactly the identity and the mask expectation is 1.
    """
    if not 0.0 <= dropout < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {dropout}")
    if dropout > 0.0 and rng is None:
        raise ValueError("dropout > 0 requires an explicit rng")
    a, was_1d = _as_2d(x, model)
    layer_inputs: list[np.ndarray] = []
    hidden_post: list[np.ndarray] = []
    masks: list[np.ndarray | None] = []
    n_layers = model.n_layers
    for i in range(n_layers - 1):
        layer_inputs.append(a)
        z = a @ model.weights[i].T
        z += model.biases[i]
        # activation applied in place: the pre-activation is never needed again
        h = np.tanh(z, out=z) if model.hidden_activation == "tanh" else np.maximum(z, 0.0, out=z)
        hidden_post.append(h)
        if dropout > 0.0:
            # floor(u + keep) is 1 exactly when u >= dropout; scaled to mean 1
            mask = rng.random(h.shape)
            mask += 1.0 - dropout
            np.floor(mask, out=mask)
            mask *= 1.0 / (1.0 - dropout)
            masks.append(mask)
            a = h * mask
        else:
            masks.append(None)
            a = h
    layer_inputs.append(a)
    z = a @ model.weights[-1].T
    z += model.biases[-1]
    out_tanh = None
    if model.output_activation == "identity":
        y = z
    else:
        out_tanh = np.tanh(z, out=z)
        y = model.output_scale * out_tanh
    cache = MlpCache(list(model.layer_dims), layer_inputs[0], layer_inputs,
                     hidden_post, masks, out_tanh, was_1d)
    return (y[0] if was_1d else y), cache


def mlp_forward(
    model: MlpModel,
    x: np.ndarray,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    y, _ = mlp_forward_cached(model, x, dropout, rng)
    return y


def mlp_backward(
    model: MlpModel,
    cache: MlpCache,
    upstream: np.ndarray,
) -> tuple[GradBuffer, np.ndarray]:
    """Backpropagate upstream = dL/d(output) through the cached forward pass.

    Returns (parameter gradients summed over the batch, dL/d(input)).
    """
    if cache is None:
        raise ValueError("mlp_backward requires the cache from a paired forward pass")
    if not isinstance(cache, MlpCache) or cache.layer_dims != model.layer_dims:
        raise ShapeError("cache does not match this model's layer_dims")
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (cache.x.shape[0], model.out_dim):
        raise ShapeError(f"upstream has shape {np.asarray(upstream).shape}, "
                         f"expected ({cache.x.shape[0]}, {model.out_dim})")
    n = model.n_layers
    grads = GradBuffer(weights=[None] * n, biases=[None] * n)  # type: ignore[list-item]
    if model.output_activation == "tanh_scaled":
        t = np.square(cache.out_tanh)
        np.subtract(1.0, t, out=t)
        t *= model.output_scale
        dz = np.multiply(g, t, out=t)
    else:
        dz = g
    for i in range(n - 1, -1, -1):
        a_in = cache.layer_inputs[i]
        grads.weights[i] = dz.T @ a_in
        grads.biases[i] = dz.sum(axis=0)
        da = dz @ model.weights[i]
        if i == 0:
            dx = da
            break
        mask = cache.masks[i - 1]
        if mask is not None:
            da *= mask
        h = cache.hidden_post[i - 1]
        if model.hidden_activation == "tanh":
            t = np.square(h)
            np.subtract(1.0, t, out=t)
            dz = np.multiply(da, t, out=t)
        else:
            dz = np.multiply(da, h > 0.0, out=da)
    return grads, (dx[0] if cache.was_1d else dx)


@dataclass
class AdamState:
    """Adam moment buffers for one MlpModel; step counter strictly increases."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_weights: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)


def adam_init(model: MlpModel, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
        m_weights=[np.zeros_like(w) for w in model.weights],
        v_weights=[np.zeros_like(w) for w in model.weights],
        m_biases=[np.zeros_like(b) for b in model.biases],
        v_biases=[np.zeros_like(b) for b in model.biases],
    )


def adam_step(model: MlpModel, grads: GradBuffer, state: AdamState) -> tuple[MlpModel, AdamState]:
    """One bias-corrected Adam descent step; mutates model and state in place."""
    for i, g in enumerate(grads.weights):
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in weights[{i}]")
    for i, g in enumerate(grads.biases):
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in biases[{i}]")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - state.beta2 ** t)
    for params, gs, ms, vs in (
        (model.weights, grads.weights, state.m_weights, state.v_weights),
        (model.biases, grads.biases, state.m_biases, state.v_biases),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * (g * g)
            # p -= lr * (m/c1) / (sqrt(v/c2) + eps), fused into one temporary
            denom = np.sqrt(v)
            denom *= inv_sqrt_c2
            denom += state.eps
            np.divide(m, denom, out=denom)
            denom *= state.lr / c1
            p -= denom
    return model, state


LossAndGrad = Callable[[], tuple[float, "GradBuffer | Sequence[GradBuffer]"]]


def check_gradient(
    loss_fn: LossAndGrad,
    models: "MlpModel | Sequence[MlpModel]",
    tolerance: float = 1e-4,
    h: float = 1e-5,
) -> dict:
    """Compare loss_fn's analytic gradients with central finite differences.

    loss_fn() must return (scalar loss, gradients matching `models`), reading
    the current parameters of `models` each call. Relative error per
    coordinate uses max(|analytic|, |numeric|, 1e-8) as denominator.

    Coordinates where both magnitudes fall below the double-precision FD
    resolution eps*max(1,|loss|)/h are counted as exact agreement: central
    differences carry no signal there (e.g. parameters whose contributions
    cancel structurally, like a score-difference model's output bias).
    """
    model_list = [models] if isinstance(models, MlpModel) else list(models)
    loss0, grads0 = loss_fn()
    if not np.isfinite(loss0):
        raise NonFiniteError(f"loss_fn returned non-finite loss {loss0}")
    grad_list = [grads0] if isinstance(grads0, GradBuffer) else list(grads0)
    if len(grad_list) != len(model_list):
        raise ShapeError("loss_fn returned a gradient count that does not match models")

    noise_floor = np.finfo(np.float64).eps * max(1.0, abs(loss0)) / h
    max_rel = 0.0
    n_params = 0
    for model, grads in zip(model_list, grad_list):
        for params, analytic in ((model.weights, grads.weights), (model.biases, grads.biases)):
            for p, g in zip(params, analytic):
                flat_p = p.reshape(-1)
                flat_g = g.reshape(-1)
                for j in range(flat_p.size):
                    orig = flat_p[j]
                    flat_p[j] = orig + h
                    lp = loss_fn()[0]
                    flat_p[j] = orig - h
                    lm = loss_fn()[0]
                    flat_p[j] = orig
                    if not (np.isfinite(lp) and np.isfinite(lm)):
                        raise NonFiniteError("loss became non-finite during perturbation")
                    num = (lp - lm) / (2.0 * h)
                    if abs(flat_g[j]) <= noise_floor and abs(num) <= noise_floor:
                        rel = 0.0
                    else:
                        rel = abs(flat_g[j] - num) / max(abs(flat_g[j]), abs(num), 1e-8)
                    max_rel = max(max_rel, rel)
                    n_params += 1
    return {"max_rel_error": float(max_rel), "pass": bool(max_rel <= tolerance),
            "n_params": n_params}


def model_to_dict(model: MlpModel) -> dict:
    return {
        "layer_dims": list(model.layer_dims),
        "activations": {
            "hidden": model.hidden_activation,
            "output": model.output_activation,
            "scale": None if model.output_scale is None else model.output_scale.tolist(),
        },
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(data: dict) -> MlpModel:
    acts = data["activations"]
    scale = acts.get("scale")
    return MlpModel(
        layer_dims=[int(d) for d in data["layer_dims"]],
        weights=[np.asarray(w, dtype=np.float64) for w in data["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in data["biases"]],
        hidden_activation=acts["hidden"],
        output_activation=acts["output"],
        output_scale=None if scale is None else np.asarray(scale, dtype=np.float64),
    )


def save_model(model: MlpModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path: str | Path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text()))
