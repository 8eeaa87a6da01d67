"""Model-update compression operators with error diagnostics.

Two compressors plus identity: unbiased stochastic quantization onto
a = 2^bits + 1 magnitude levels scaled by the vector's l2 norm, and
(biased) top-k sparsification keeping the ceil(k*d) largest-magnitude
coordinates.  Reported payload bits are nominal (no entropy coding):
quantization sends a 32-bit norm plus sign and level bits per coordinate;
top-k sends a d-bit presence bitmap plus 64 bits per kept value, capped
at the uncompressed size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rng import Rng

__all__ = [
    "CompressorSpec",
    "CompressionReport",
    "quantize_stochastic",
    "quantize_moments",
    "topk_sparsify",
    "apply",
]

KIND_NONE = "none"
KIND_QUANT = "stochastic-quantization"
KIND_TOPK = "top-k"


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    bits: int | None = None
    sparsity: float | None = None

    def __post_init__(self):
        if self.kind == KIND_NONE:
            if self.bits is not None or self.sparsity is not None:
                raise ValueError("kind 'none' takes no parameters")
        elif self.kind == KIND_QUANT:
            if self.bits is None or self.sparsity is not None:
                raise ValueError("stochastic quantization takes only 'bits'")
            if not 1 <= self.bits <= 16:
                raise ValueError("bits must lie in [1, 16]")
        elif self.kind == KIND_TOPK:
            if self.sparsity is None or self.bits is not None:
                raise ValueError("top-k takes only 'sparsity'")
            if not 0.0 < self.sparsity <= 1.0:
                raise ValueError("sparsity must lie in (0, 1]")
        else:
            raise ValueError(f"unknown compressor kind {self.kind!r}")

    @classmethod
    def none(cls) -> "CompressorSpec":
        return cls(KIND_NONE)

    @classmethod
    def quantization(cls, bits: int) -> "CompressorSpec":
        return cls(KIND_QUANT, bits=bits)

    @classmethod
    def topk(cls, sparsity: float) -> "CompressorSpec":
        return cls(KIND_TOPK, sparsity=sparsity)


@dataclass(frozen=True)
class CompressionReport:
    input_norm: float
    error_norm: float
    payload_bits: int


def _quant_payload_bits(d: int, bits: int) -> int:
    levels = (1 << bits) + 1
    return 32 + d * (1 + math.ceil(math.log2(levels)))


def quantize_stochastic(v: np.ndarray, bits: int, rng: Rng):
    """Unbiased randomized rounding onto a = 2^bits + 1 norm-scaled levels."""
    d = v.shape[0]
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v.copy(), CompressionReport(0.0, 0.0, _quant_payload_bits(d, bits))
    levels = (1 << bits) + 1
    uniforms = rng.uniform(size=d)
    out = _kernels.quantize_values(v, norm, float(levels), uniforms)
    error = float(np.linalg.norm(out - v))
    return out, CompressionReport(norm, error, _quant_payload_bits(d, bits))


def quantize_moments(v: np.ndarray, bits: int, rng: Rng, draws: int, chunk: int = 10000):
    """Per-coordinate mean and variance of the quantizer over many draws.

    Streams uniforms in chunks through the same level-rounding kernel as
    ``quantize_stochastic``; row t of a chunk consumes the same draws the
    t-th single call on this stream would.
    """
    d = v.shape[0]
    norm = float(np.linalg.norm(v))
    levels = float((1 << bits) + 1)
    total = np.zeros(d)
    total_sq = np.zeros(d)
    done = 0
    while done < draws:
        step = min(chunk, draws - done)
        uniforms = rng.uniform(size=(step, d))
        s, sq = _kernels.quantize_moments(v, norm, levels, uniforms)
        total += s
        total_sq += sq
        done += step
    mean = total / draws
    variance = total_sq / draws - mean * mean
    return mean, variance


def quantizer_variance_analytic(v: np.ndarray, bits: int) -> np.ndarray:
    """Exact per-coordinate Bernoulli variance: norm^2 * p(1-p) / a^2."""
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(v)
    a = float((1 << bits) + 1)
    scaled = np.abs(v) / norm * a
    low = np.minimum(np.floor(scaled), a - 1.0)
    p = scaled - low
    return norm * norm * p * (1.0 - p) / (a * a)


def topk_sparsify(v: np.ndarray, sparsity: float):
    """Keep the ceil(k*d) largest-magnitude entries; ties to the lowest index."""
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    d = v.shape[0]
    keep = min(d, int(math.ceil(sparsity * d)))
    order = np.argsort(-np.abs(v), kind="stable")
    out = np.zeros_like(v)
    kept = order[:keep]
    out[kept] = v[kept]
    error = float(np.linalg.norm(out - v))
    payload = min(d + 64 * keep, 64 * d)
    return out, CompressionReport(float(np.linalg.norm(v)), error, payload)


def apply(spec: CompressorSpec, v: np.ndarray, rng: Rng):
    """Dispatch on the configured kind; 'none' is the identity."""
    if spec.kind == KIND_NONE:
        return v.copy(), CompressionReport(float(np.linalg.norm(v)), 0.0, 64 * v.shape[0])
    if spec.kind == KIND_QUANT:
        return quantize_stochastic(v, spec.bits, rng)
    return topk_sparsify(v, spec.sparsity)
