"""Trajectory-matching data condensation on the server.

Learns a small synthetic dataset (features X, fixed balanced labels, and
an inner step size alpha) such that s full-batch SGD steps on it, started
from a recorded global snapshot w^r, land close to the later snapshot
w^{r+s}.  The outer objective is the squared distance between the reached
and the recorded weights; its gradients with respect to X and alpha flow
through the unrolled inner loop and are second-order quantities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import models
from .models import MlpSpec
from .rng import Rng

__all__ = [
    "TrajectoryBuffer",
    "SyntheticDataset",
    "DistillConfig",
    "inner_train",
    "meta_gradient",
    "condense",
    "save_synthetic",
    "load_synthetic",
    "save_trajectory",
    "load_trajectory",
]

ALPHA_FLOOR = 1e-8
FORMAT_VERSION = 1


@dataclass
class TrajectoryBuffer:
    """Ordered global weight snapshots with their round indices."""

    rounds: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def append(self, round_index: int, w: np.ndarray) -> None:
        if self.rounds and round_index <= self.rounds[-1]:
            raise ValueError("round indices must be strictly increasing")
        if self.snapshots and w.shape != self.snapshots[0].shape:
            raise ValueError("all snapshots must have the same length")
        self.rounds.append(int(round_index))
        self.snapshots.append(np.array(w, dtype=np.float64, copy=True))

    def __len__(self) -> int:
        return len(self.snapshots)

    def segment(self, start: int, span: int):
        return self.snapshots[start], self.snapshots[start + span]


@dataclass
class SyntheticDataset:
    """Learnable features, fixed balanced labels, learnable step size."""

    features: np.ndarray
    labels: np.ndarray
    alpha: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels must have matching row counts")
        classes, counts = np.unique(self.labels, return_counts=True)
        if len(set(counts.tolist())) > 1:
            raise ValueError("labels must be exactly balanced")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class DistillConfig:
    outer_iters: int = 200
    inner_steps: int = 3
    eta_x: float = 0.05
    eta_alpha: float = 1e-5
    ipc: int = 10
    optimizer: str = "sgd"  # "sgd" or "adam"
    alpha_init: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.outer_iters < 0:
            raise ValueError("outer_iters must be >= 0")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if self.eta_x <= 0 or self.eta_alpha <= 0 or self.ipc <= 0 or self.alpha_init <= 0:
            raise ValueError("eta_x, eta_alpha, ipc, and alpha_init must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")


def inner_train(spec: MlpSpec, X, labels, w_start: np.ndarray, alpha, steps: int):
    """Run `steps` full-batch SGD steps on the synthetic data.

    X and alpha may be traced nodes, in which case the returned per-layer
    weights are differentiable with respect to them.  Returns the
    per-layer parameter list.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    onehot = models._onehot(labels, spec.output_size)
    w = models.unflatten(spec, w_start)
    for step in range(steps):
        try:
            grads = ad.grad(lambda ps: models.mlp_loss(ps, X, onehot), w)
        except ad.GradientError as exc:
            raise OverflowError(f"non-finite gradient at inner step {step}") from exc
        w = [ad.sub(wi, ad.mul(alpha, gi)) for wi, gi in zip(w, grads)]
        for wi in w:
            if not np.all(np.isfinite(ad._raw(wi))):
                raise OverflowError(f"non-finite weights after inner step {step}")
    return w


def _segment_loss(spec, X, labels, w_start, alpha, steps, w_target_parts):
    w_hat = inner_train(spec, X, labels, w_start, alpha, steps)
    acc = None
    for wh, wt in zip(w_hat, w_target_parts):
        term = ad.sqnorm(ad.sub(wh, wt))
        acc = term if acc is None else ad.add(acc, term)
    return acc


def meta_gradient(spec: MlpSpec, segment, syn: SyntheticDataset, steps: int):
    """Gradients of ||w_hat - w_target||^2 with respect to (X, alpha).

    `segment` is the (w_start, w_target) flat-vector pair.  Returns
    (grad_X, grad_alpha, loss).
    """
    w_start, w_target = segment
    if w_start.shape != w_target.shape:
        raise ValueError("segment endpoints must have the same length")
    target_parts = models.unflatten(spec, w_target)

    def outer(ps):
        X_node, alpha_node = ps
        return _segment_loss(spec, X_node, syn.labels, w_start, alpha_node, steps, target_parts)

    loss, (g_x, g_alpha) = ad.value_and_grad(
        outer, [syn.features, np.asarray(syn.alpha, dtype=np.float64)]
    )
    return g_x, float(g_alpha), float(loss)


def _init_features(ipc: int, classes: int, dims: int, rng: Rng) -> np.ndarray:
    # Noise matched to the [0,1] feature range: mean 0.5, std 0.25, clipped.
    return np.clip(0.5 + 0.25 * rng.normal(size=(ipc * classes, dims)), 0.0, 1.0)


def condense(
    trajectory: TrajectoryBuffer,
    spec: MlpSpec,
    cfg: DistillConfig,
    rng: Rng,
):
    """Optimize (X, alpha) over randomly sampled trajectory segments.

    Returns the synthetic dataset and the per-iteration segment losses.
    """
    horizon = len(trajectory) - 1
    if horizon < cfg.inner_steps:
        raise ValueError(
            f"trajectory spans {horizon} rounds, need at least {cfg.inner_steps}"
        )
    classes = spec.output_size
    dims = spec.input_size
    X = _init_features(cfg.ipc, classes, dims, rng)
    labels = np.repeat(np.arange(classes), cfg.ipc)
    alpha = cfg.alpha_init
    syn = SyntheticDataset(X, labels, alpha)

    m_x = np.zeros_like(X)
    v_x = np.zeros_like(X)
    m_a = 0.0
    v_a = 0.0
    losses = []
    for it in range(cfg.outer_iters):
        start = int(rng.integers(0, horizon - cfg.inner_steps + 1))
        segment = trajectory.segment(start, cfg.inner_steps)
        g_x, g_a, loss = meta_gradient(spec, segment, syn, cfg.inner_steps)
        if cfg.optimizer == "adam":
            t = it + 1
            m_x = cfg.adam_beta1 * m_x + (1 - cfg.adam_beta1) * g_x
            v_x = cfg.adam_beta2 * v_x + (1 - cfg.adam_beta2) * g_x * g_x
            mx_hat = m_x / (1 - cfg.adam_beta1**t)
            vx_hat = v_x / (1 - cfg.adam_beta2**t)
            X = X - cfg.eta_x * mx_hat / (np.sqrt(vx_hat) + cfg.adam_eps)
            m_a = cfg.adam_beta1 * m_a + (1 - cfg.adam_beta1) * g_a
            v_a = cfg.adam_beta2 * v_a + (1 - cfg.adam_beta2) * g_a * g_a
            ma_hat = m_a / (1 - cfg.adam_beta1**t)
            va_hat = v_a / (1 - cfg.adam_beta2**t)
            alpha = alpha - cfg.eta_alpha * ma_hat / (np.sqrt(va_hat) + cfg.adam_eps)
        else:
            X = X - cfg.eta_x * g_x
            alpha = alpha - cfg.eta_alpha * g_a
        alpha = max(alpha, ALPHA_FLOOR)
        syn = SyntheticDataset(X, labels, alpha, meta=syn.meta)
        losses.append(loss)
    return syn, losses


# --- artifacts ----------------------------------------------------------


def save_synthetic(path, syn: SyntheticDataset) -> None:
    meta = dict(syn.meta)
    meta["format_version"] = FORMAT_VERSION
    np.savez(
        path,
        features=syn.features,
        labels=syn.labels,
        alpha=np.float64(syn.alpha),
        meta=json.dumps(meta, sort_keys=True),
    )


def load_synthetic(path) -> SyntheticDataset:
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(str(blob["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported synthetic dataset format: {meta.get('format_version')}")
        return SyntheticDataset(
            blob["features"], blob["labels"], float(blob["alpha"]), meta=meta
        )


def save_trajectory(path, trajectory: TrajectoryBuffer, layer_sizes) -> None:
    meta = {"format_version": FORMAT_VERSION, "layer_sizes": list(layer_sizes)}
    np.savez(
        path,
        rounds=np.asarray(trajectory.rounds, dtype=np.int64),
        snapshots=np.stack(trajectory.snapshots),
        meta=json.dumps(meta, sort_keys=True),
    )


def load_trajectory(path):
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(str(blob["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported trajectory format: {meta.get('format_version')}")
        buf = TrajectoryBuffer()
        for r, w in zip(blob["rounds"], blob["snapshots"]):
            buf.append(int(r), w)
        return buf, tuple(meta["layer_sizes"])
