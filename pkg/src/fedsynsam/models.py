"""Small MLP family with flat-vector weight views.

The flat float64 vector is the unit of communication, compression, and
trajectory storage; per-layer matrices are only materialized inside the
loss computation.  Loss is mean softmax cross-entropy over the batch,
layers are ReLU except the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .rng import Rng

__all__ = [
    "MlpSpec",
    "init_weights",
    "unflatten",
    "flatten",
    "mlp_logits",
    "mean_cross_entropy",
    "batch_loss",
    "loss_and_grad",
    "dataset_hvp",
    "evaluate",
    "sgd_step",
]

# A WeightVector is a flat, contiguous float64 ndarray whose length equals
# MlpSpec.param_count; unflatten/flatten convert to and from per-layer views.
WeightVector = np.ndarray


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes (input, hidden..., output)."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("MlpSpec needs at least input and output sizes")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_sizes, self.layer_sizes[1:]))

    def param_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        for i, o in zip(self.layer_sizes, self.layer_sizes[1:]):
            shapes.append((i, o))
            shapes.append((o,))
        return shapes


def init_weights(spec: MlpSpec, rng: Rng) -> WeightVector:
    """He-uniform weights, zero biases; deterministic under the stream."""
    parts = []
    for fan_in, fan_out in zip(spec.layer_sizes, spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        parts.append(rng.uniform(-limit, limit, (fan_in, fan_out)).ravel())
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def unflatten(spec: MlpSpec, w: WeightVector) -> list[np.ndarray]:
    if w.shape != (spec.param_count,):
        raise ValueError(f"expected weight vector of length {spec.param_count}, got {w.shape}")
    parts = []
    offset = 0
    for shape in spec.param_shapes():
        size = int(np.prod(shape))
        parts.append(w[offset : offset + size].reshape(shape))
        offset += size
    return parts


def flatten(parts: list[np.ndarray]) -> WeightVector:
    return np.concatenate([np.ravel(p) for p in parts])


def _onehot(labels: np.ndarray, classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty batch")
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"label out of range [0, {classes})")
    eye = np.zeros((labels.size, classes))
    eye[np.arange(labels.size), labels] = 1.0
    return eye


def mlp_logits(params, features):
    """Forward pass; works on raw arrays or traced nodes alike."""
    h = features
    n_layers = len(params) // 2
    for layer in range(n_layers):
        W, b = params[2 * layer], params[2 * layer + 1]
        h = ad.add(ad.matmul(h, W), b)
        if layer < n_layers - 1:
            h = ad.relu(h)
    return h


def mean_cross_entropy(logits, onehot):
    """Mean softmax cross-entropy; log-sum-exp stabilized."""
    n = onehot.shape[0]
    m = np.max(ad._raw(logits), axis=1, keepdims=True)
    lse = ad.log(ad.tsum(ad.exp(ad.sub(logits, m)), axis=1, keepdims=True))
    picked = ad.tsum(ad.mul(logits, onehot), axis=1, keepdims=True)
    per_sample = ad.sub(ad.add(lse, m), picked)
    return ad.mul(ad.tsum(per_sample), 1.0 / n)


def mlp_loss(params, features, onehot):
    return mean_cross_entropy(mlp_logits(params, features), onehot)


def batch_loss(spec: MlpSpec, w: WeightVector, features, labels) -> float:
    """Forward-only mean loss on a batch (no tape)."""
    onehot = _onehot(labels, spec.output_size)
    return float(mlp_loss(unflatten(spec, w), features, onehot))


def loss_and_grad(spec: MlpSpec, w: WeightVector, features, labels):
    """Mean cross-entropy and its gradient as a flat vector."""
    onehot = _onehot(labels, spec.output_size)
    loss, grads = ad.value_and_grad(
        lambda ps: mlp_loss(ps, features, onehot), unflatten(spec, w)
    )
    g = flatten(grads)
    if not np.all(np.isfinite(g)):
        raise ad.GradientError("non-finite gradient")
    return float(loss), g


def dataset_hvp(spec: MlpSpec, w: WeightVector, features, labels, v: np.ndarray) -> np.ndarray:
    """Hessian-vector product of the mean loss at w, flat in and out."""
    onehot = _onehot(labels, spec.output_size)
    parts = ad.hvp(
        lambda ps: mlp_loss(ps, features, onehot),
        unflatten(spec, w),
        unflatten(spec, v),
    )
    return flatten(parts)


def evaluate(spec: MlpSpec, w: WeightVector, features, labels):
    """(accuracy, mean loss) on a dataset; argmax ties go to the lowest class."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty dataset")
    logits = mlp_logits(unflatten(spec, w), features)
    predictions = np.argmax(logits, axis=1)  # first occurrence wins ties
    accuracy = float(np.mean(predictions == labels))
    loss = batch_loss(spec, w, features, labels)
    return accuracy, loss


def sgd_step(w: WeightVector, g: np.ndarray, eta: float) -> WeightVector:
    return w - eta * g
