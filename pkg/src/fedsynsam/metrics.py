"""Sharpness and loss-landscape diagnostics.

Top Hessian eigenvalue via two-phase power iteration (a spectral-radius
probe followed by iteration on the shifted positive operator, so the
algebraically largest eigenvalue is reported even when the dominant one
is negative), and 2-D loss surface slices along per-layer normalized
random directions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import models
from .models import MlpSpec
from .rng import Rng

__all__ = [
    "EigEstimate",
    "LandscapeGrid",
    "SharpnessRow",
    "power_iteration",
    "top_eigenvalue",
    "landscape_grid",
    "landscape_slice",
    "write_landscape_csv",
    "read_landscape_csv",
    "sharpness_delta",
]


@dataclass(frozen=True)
class EigEstimate:
    value: float
    iterations: int
    residual: float
    converged: bool
    history: tuple = ()


@dataclass(frozen=True)
class LandscapeGrid:
    xs: np.ndarray
    ys: np.ndarray
    losses: np.ndarray  # [i, j] = loss at (xs[i], ys[j])
    direction_a: np.ndarray
    direction_b: np.ndarray


def power_iteration(matvec, dim: int, rng: Rng, tol: float = 1e-9, max_iters: int = 200) -> EigEstimate:
    """Algebraically largest eigenvalue of a symmetric operator.

    Phase 1 estimates the spectral radius; phase 2 iterates on the
    shifted operator A + cI (positive semidefinite by construction), on
    which the Rayleigh quotient increases monotonically.
    """
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)

    radius = 0.0
    prev = None
    iterations = 0
    for _ in range(max_iters):
        av = matvec(v)
        iterations += 1
        lam = float(np.dot(v, av))
        nrm = np.linalg.norm(av)
        if nrm == 0.0:
            break
        v = av / nrm
        if prev is not None and abs(lam - prev) < tol * max(1.0, abs(lam)):
            radius = abs(lam)
            break
        prev = lam
        radius = abs(lam)

    # Fresh start for the shifted phase: the probe vector may have
    # converged onto an eigenvector orthogonal to the algebraic maximum.
    shift = radius * 1.05 + tol
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)
    history = []
    prev = None
    converged = False
    for _ in range(max_iters):
        bv = matvec(v) + shift * v
        iterations += 1
        rayleigh = float(np.dot(v, bv))
        history.append(rayleigh - shift)
        nrm = np.linalg.norm(bv)
        if nrm == 0.0:
            converged = True
            break
        v = bv / nrm
        if prev is not None and abs(rayleigh - prev) < tol * max(1.0, abs(rayleigh)):
            converged = True
            break
        prev = rayleigh
    value = history[-1] if history else 0.0
    av = matvec(v)
    residual = float(np.linalg.norm(av - value * v))
    if residual < tol * max(1.0, abs(value)):
        converged = True
    return EigEstimate(value, iterations, residual, converged, tuple(history))


def top_eigenvalue(
    spec: MlpSpec,
    w: np.ndarray,
    features,
    labels,
    rng: Rng,
    tol: float = 1e-9,
    max_iters: int = 200,
) -> EigEstimate:
    """Top eigenvalue of the full-batch loss Hessian at w."""
    if np.asarray(labels).size == 0:
        raise ValueError("empty dataset")

    def matvec(v):
        return models.dataset_hvp(spec, w, features, labels, v)

    return power_iteration(matvec, w.shape[0], rng, tol=tol, max_iters=max_iters)


def _layer_normalized_direction(spec: MlpSpec, w: np.ndarray, rng: Rng) -> np.ndarray:
    """Gaussian direction rescaled per parameter block to the block's norm."""
    direction = rng.normal(size=w.shape[0])
    w_parts = models.unflatten(spec, w)
    d_parts = models.unflatten(spec, direction)
    scaled = []
    for wp, dp in zip(w_parts, d_parts):
        d_norm = np.linalg.norm(dp)
        w_norm = np.linalg.norm(wp)
        scaled.append(dp * (w_norm / d_norm) if d_norm > 0 else dp * 0.0)
    return models.flatten(scaled)


def landscape_grid(loss_fn, w: np.ndarray, d1: np.ndarray, d2: np.ndarray, resolution: int, extent: float) -> LandscapeGrid:
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError("resolution must be odd and >= 3")
    xs = np.linspace(-extent, extent, resolution)
    ys = np.linspace(-extent, extent, resolution)
    losses = np.empty((resolution, resolution))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            losses[i, j] = loss_fn(w + x * d1 + y * d2)
    return LandscapeGrid(xs, ys, losses, d1, d2)


def landscape_slice(
    spec: MlpSpec,
    w: np.ndarray,
    features,
    labels,
    rng: Rng,
    resolution: int = 25,
    extent: float = 1.0,
) -> LandscapeGrid:
    """Loss surface over a plane spanned by two normalized random directions."""
    d1 = _layer_normalized_direction(spec, w, rng)
    d2 = _layer_normalized_direction(spec, w, rng)
    return landscape_grid(
        lambda wp: models.batch_loss(spec, wp, features, labels), w, d1, d2, resolution, extent
    )


def write_landscape_csv(path, grid: LandscapeGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "loss"])
        for i, x in enumerate(grid.xs):
            for j, y in enumerate(grid.ys):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(grid.losses[i, j]))])


def read_landscape_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x", "y", "loss"]:
            raise ValueError(f"unexpected landscape CSV header: {header}")
        rows = [(float(x), float(y), float(loss)) for x, y, loss in reader]
    return rows


@dataclass(frozen=True)
class SharpnessRow:
    partition: str
    compressor: str
    lambda_max: float
    delta_vs_uncompressed: float | None


def sharpness_delta(cells: dict) -> list:
    """Pair final-model top eigenvalues across (partition, compressor) cells.

    ``cells`` maps (partition label, compressor label) to lambda_max; the
    delta column compares each cell against the 'none' compressor of the
    same partition when that run exists.
    """
    if not cells:
        raise ValueError("no runs to compare")
    rows = []
    for partition, compressor in sorted(cells):
        lam = float(cells[(partition, compressor)])
        base = cells.get((partition, "none"))
        delta = None if base is None else lam - float(base)
        rows.append(SharpnessRow(partition, compressor, lam, delta))
    return rows
