"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The value kernels compute bitwise-identical outputs on either path; the
moment accumulators agree up to float summation order.  Set
FEDSYNSAM_NUMBA=0 to force the numpy path (or run without numba
installed).  ``benchmarks/bench_quantize.py`` compares the two.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "quantize_values",
    "quantize_values_numpy",
    "quantize_moments",
    "quantize_moments_numpy",
]


def _numba_enabled() -> bool:
    flag = os.environ.get("FEDSYNSAM_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_enabled()


def quantize_values_numpy(v: np.ndarray, norm: float, levels: int, uniforms: np.ndarray) -> np.ndarray:
    """Randomized rounding of each coordinate onto the level grid.

    out_i = norm * sign(v_i) * xi_i with xi_i in {l/levels, (l+1)/levels},
    picking the upper level with probability r_i*levels - l where
    r_i = |v_i| / norm.
    """
    r = np.abs(v) / norm
    scaled = r * levels
    low = np.minimum(np.floor(scaled), levels - 1.0)
    p = scaled - low
    xi = np.where(uniforms < p, (low + 1.0) / levels, low / levels)
    return norm * np.sign(v) * xi


def quantize_moments_numpy(v, norm, levels, uniforms):
    """Per-coordinate (sum, sum of squares) over a (draws, d) uniform block."""
    out = quantize_values_numpy(v[None, :], norm, levels, uniforms)
    return out.sum(axis=0), (out * out).sum(axis=0)


if USING_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _quantize_values_nb(v, norm, levels, uniforms):  # pragma: no cover - jit
        d = v.shape[0]
        out = np.empty(d)
        for i in range(d):
            r = abs(v[i]) / norm
            scaled = r * levels
            low = min(math.floor(scaled), levels - 1.0)
            p = scaled - low
            xi = (low + 1.0) / levels if uniforms[i] < p else low / levels
            sign = 1.0 if v[i] > 0 else (-1.0 if v[i] < 0 else 0.0)
            out[i] = norm * sign * xi
        return out

    @njit(cache=True)
    def _quantize_moments_nb(v, norm, levels, uniforms):  # pragma: no cover - jit
        draws, d = uniforms.shape
        total = np.zeros(d)
        total_sq = np.zeros(d)
        for t in range(draws):
            for i in range(d):
                r = abs(v[i]) / norm
                scaled = r * levels
                low = min(math.floor(scaled), levels - 1.0)
                p = scaled - low
                xi = (low + 1.0) / levels if uniforms[t, i] < p else low / levels
                sign = 1.0 if v[i] > 0 else (-1.0 if v[i] < 0 else 0.0)
                q = norm * sign * xi
                total[i] += q
                total_sq[i] += q * q
        return total, total_sq

    def quantize_values(v, norm, levels, uniforms):
        return _quantize_values_nb(v, float(norm), float(levels), uniforms)

    def quantize_moments(v, norm, levels, uniforms):
        return _quantize_moments_nb(v, float(norm), float(levels), uniforms)

else:
    quantize_values = quantize_values_numpy
    quantize_moments = quantize_moments_numpy
