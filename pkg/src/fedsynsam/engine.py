"""Round loop: sampling, local training, compression, aggregation.

Per round: sample S of N clients, run K local steps on each (plain SGD
for fedavg/dynafed, the two-step sharpness-aware update otherwise),
compress each client's model update, aggregate with the global step size,
and log.  For fedsynsam and dynafed the server records the global
trajectory for the first R rounds, condenses a synthetic dataset at round
R, and distributes it; dynafed additionally fine-tunes the global model
on the synthetic data after each aggregation once it exists.

Every random draw comes from a named stream keyed by (seed, round,
client), so runs are bitwise reproducible and algorithm variants that
share a phase (fedsynsam before round R vs fedsam) consume identical
draws.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import compressors, distill, sam
from .compressors import CompressorSpec
from .data import Dataset, Partition
from .distill import DistillConfig, SyntheticDataset, TrajectoryBuffer
from .models import MlpSpec, batch_loss, evaluate, init_weights, loss_and_grad, sgd_step
from .rng import Rng
from .sam import DiagnosticsToken, PerturbEstimator

__all__ = [
    "ALGORITHMS",
    "FedConfig",
    "RoundRecord",
    "RunResult",
    "sample_clients",
    "local_round",
    "aggregate",
    "run",
]

ALGORITHMS = ("fedavg", "fedsam", "fedlesam", "fedsynsam", "dynafed")
SAM_ALGORITHMS = ("fedsam", "fedlesam", "fedsynsam")
CONDENSING_ALGORITHMS = ("fedsynsam", "dynafed")

DYNAFED_SERVER_STEPS = 10


@dataclass(frozen=True)
class FedConfig:
    algorithm: str
    num_clients: int
    rounds: int
    sample_size: int | None = None  # defaults to full participation
    local_steps: int = 10
    batch_size: int = 128
    eta_l: float = 0.05
    eta_g: float = 1.0
    rho: float = 0.05
    beta: float = 0.9
    warmup_rounds: int = 30
    compressor: CompressorSpec = field(default_factory=CompressorSpec.none)
    distill: DistillConfig = field(default_factory=DistillConfig)
    seed: int = 0
    eval_every: int = 5
    record_trajectory: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.sample_size is None:
            object.__setattr__(self, "sample_size", self.num_clients)
        if not 1 <= self.sample_size <= self.num_clients:
            raise ValueError("need 1 <= sample_size <= num_clients")
        if self.local_steps < 1:
            raise ValueError("local_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eta_g <= 0:
            raise ValueError("eta_g must be positive")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.algorithm in CONDENSING_ALGORITHMS and self.rounds > 0:
            if self.warmup_rounds >= self.rounds:
                raise ValueError(
                    f"{self.algorithm} needs warmup_rounds < rounds to ever condense"
                )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    test_accuracy: float | None
    mean_train_loss: float
    mean_compression_error: float
    cos_theta: float | None
    wall_time: float

    def to_json_dict(self) -> dict:
        # wall_time is volatile and lives in the manifest, not the log.
        return {
            "round": self.round,
            "test_accuracy": self.test_accuracy,
            "mean_train_loss": self.mean_train_loss,
            "mean_compression_error": self.mean_compression_error,
            "cos_theta": self.cos_theta,
        }


@dataclass
class RunResult:
    records: list
    initial_weights: np.ndarray
    final_weights: np.ndarray
    synthetic: SyntheticDataset | None = None
    trajectory: TrajectoryBuffer | None = None
    distill_losses: list = field(default_factory=list)


def sample_clients(num_clients: int, sample_size: int, rng: Rng) -> np.ndarray:
    """Uniform subset without replacement, returned in ascending order."""
    if sample_size > num_clients:
        raise ValueError("cannot sample more clients than exist")
    picked = rng.choice(num_clients, size=sample_size, replace=False)
    return np.sort(np.asarray(picked, dtype=np.int64))


def _draw_batch(features, labels, batch_size: int, rng: Rng):
    n = features.shape[0]
    if batch_size >= n:
        return features, labels
    idx = np.sort(rng.integers(0, n, batch_size))
    return features[idx], labels[idx]


def local_round(
    spec: MlpSpec,
    client_data,
    w_start: np.ndarray,
    cfg: FedConfig,
    estimator: PerturbEstimator | None,
    syn: SyntheticDataset | None,
    round_index: int,
    rng_batch: Rng,
    rng_syn: Rng,
):
    """K local steps from the received global weights; returns (delta, mean loss).

    Reads only this client's data and the server-distributed synthetic
    dataset.  Minibatches are drawn uniformly with replacement (indices
    sorted so the mean reduction is order-independent); a batch size at
    or above the client's sample count uses the full dataset.
    """
    features, labels = client_data
    w = w_start
    losses = []
    needs_syn = (
        estimator is not None
        and estimator.kind == sam.KIND_SYNSAM
        and syn is not None
        and round_index > estimator.warmup_rounds
    )
    for _ in range(cfg.local_steps):
        batch = _draw_batch(features, labels, cfg.batch_size, rng_batch)
        if estimator is None:
            loss, g = loss_and_grad(spec, w, *batch)
            w = sgd_step(w, g, cfg.eta_l)
        else:
            syn_batch = None
            if needs_syn:
                syn_batch = _draw_batch(syn.features, syn.labels, cfg.batch_size, rng_syn)
            loss = batch_loss(spec, w, *batch)
            w = sam.sam_two_step(spec, w, estimator, batch, syn_batch, cfg.eta_l, round_index)
        losses.append(loss)
    return w - w_start, float(np.mean(losses))


def aggregate(w: np.ndarray, updates: list, eta_g: float) -> np.ndarray:
    """w + (eta_g / S) * sum of updates, accumulated in client-index order."""
    if not updates:
        raise ValueError("no updates to aggregate")
    total = np.zeros_like(w)
    for u in updates:
        if u.shape != w.shape:
            raise ValueError("update length mismatch")
        total = total + u
    return w + (eta_g / len(updates)) * total


def _build_estimator(cfg: FedConfig, syn, prev_update) -> PerturbEstimator | None:
    if cfg.algorithm == "fedsam":
        return PerturbEstimator(sam.KIND_LOCAL_GRAD, cfg.rho)
    if cfg.algorithm == "fedlesam":
        return PerturbEstimator(sam.KIND_LESAM, cfg.rho, prev_update=prev_update)
    if cfg.algorithm == "fedsynsam":
        return PerturbEstimator(
            sam.KIND_SYNSAM, cfg.rho, beta=cfg.beta, syn=syn, warmup_rounds=cfg.warmup_rounds
        )
    return None


def _mean_cos_theta(cfg, spec, w, all_data, syn, prev_update, round_index):
    """Mean over clients of the estimated-vs-true perturbation cosine.

    Uses the estimator configuration clients ran with during this round,
    so the synthetic dataset only enters after the warmup phase.
    """
    token = DiagnosticsToken()
    syn_used = syn if round_index > cfg.warmup_rounds else None
    values = []
    for i in range(cfg.num_clients):
        est = _build_estimator(cfg, syn_used, prev_update)
        diag = sam.perturbation_cosine(token, est, spec, w, all_data[i], all_data)
        if diag.cos_theta is not None:
            values.append(diag.cos_theta)
    return float(np.mean(values)) if values else None


def run(cfg: FedConfig, spec: MlpSpec, train: Dataset, partition: Partition, test: Dataset) -> RunResult:
    """Execute the full round loop; deterministic under (config, seed)."""
    if partition.num_clients != cfg.num_clients:
        raise ValueError("partition does not match num_clients")
    root = Rng(cfg.seed, "fed")
    w = init_weights(spec, root.child("init"))
    initial = w.copy()

    track_trajectory = cfg.algorithm in CONDENSING_ALGORITHMS or cfg.record_trajectory
    trajectory = None
    if track_trajectory:
        trajectory = TrajectoryBuffer()
        trajectory.append(0, w)
    syn: SyntheticDataset | None = None
    distill_losses: list = []
    prev_update = None

    client_data = [
        (train.features[partition.client(i)], train.labels[partition.client(i)])
        for i in range(cfg.num_clients)
    ]

    records = []
    for t in range(cfg.rounds):
        start_time = time.perf_counter()
        sampled = sample_clients(cfg.num_clients, cfg.sample_size, root.child(f"sampling/t{t}"))
        updates = []
        error_norms = []
        train_losses = []
        for i in sampled:
            estimator = _build_estimator(cfg, syn, prev_update)
            delta, mean_loss = local_round(
                spec,
                client_data[i],
                w,
                cfg,
                estimator,
                syn,
                t,
                root.child(f"batch/t{t}/c{i}"),
                root.child(f"syn/t{t}/c{i}"),
            )
            compressed, report = compressors.apply(
                cfg.compressor, delta, root.child(f"comp/t{t}/c{i}")
            )
            updates.append(compressed)
            error_norms.append(report.error_norm)
            train_losses.append(mean_loss)

        w_next = aggregate(w, updates, cfg.eta_g)
        prev_update = w - w_next
        if track_trajectory and t + 1 <= cfg.warmup_rounds:
            trajectory.append(t + 1, w_next)
        if cfg.algorithm in CONDENSING_ALGORITHMS and t == cfg.warmup_rounds:
            syn, distill_losses = distill.condense(
                trajectory, spec, cfg.distill, root.child("distill")
            )
        if cfg.algorithm == "dynafed" and syn is not None:
            for _ in range(DYNAFED_SERVER_STEPS):
                _, g = loss_and_grad(spec, w_next, syn.features, syn.labels)
                w_next = sgd_step(w_next, g, cfg.eta_l)
        w = w_next

        accuracy = None
        cos_theta = None
        if (t + 1) % cfg.eval_every == 0 or t == cfg.rounds - 1:
            accuracy, _ = evaluate(spec, w, test.features, test.labels)
            if cfg.algorithm in SAM_ALGORITHMS:
                cos_theta = _mean_cos_theta(cfg, spec, w, client_data, syn, prev_update, t)
        records.append(
            RoundRecord(
                round=t,
                test_accuracy=accuracy,
                mean_train_loss=float(np.mean(train_losses)),
                mean_compression_error=float(np.mean(error_norms)),
                cos_theta=cos_theta,
                wall_time=time.perf_counter() - start_time,
            )
        )

    return RunResult(
        records=records,
        initial_weights=initial,
        final_weights=w,
        synthetic=syn,
        trajectory=trajectory,
        distill_losses=distill_losses,
    )
