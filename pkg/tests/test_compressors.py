import numpy as np
import pytest

from fedsynsam import _kernels, compressors as comp
from fedsynsam.compressors import CompressorSpec
from fedsynsam.rng import Rng


def test_spec_validation():
    CompressorSpec.none()
    CompressorSpec.quantization(4)
    CompressorSpec.topk(0.25)
    with pytest.raises(ValueError):
        CompressorSpec("stochastic-quantization", bits=17)
    with pytest.raises(ValueError):
        CompressorSpec("top-k", sparsity=0.0)
    with pytest.raises(ValueError):
        CompressorSpec("none", bits=4)
    with pytest.raises(ValueError):
        CompressorSpec("bogus")


def test_quantize_zero_vector():
    out, report = comp.quantize_stochastic(np.zeros(8), 4, Rng(0, "q"))
    assert np.array_equal(out, np.zeros(8))
    assert report.error_norm == 0.0


def test_quantize_on_grid_deterministic():
    # A single nonzero coordinate sits exactly on the top level (r = 1),
    # and zeros on the bottom; both round deterministically.
    v = np.array([-7.0, 0.0, 0.0])
    for bits in (1, 2, 4, 8):
        for seed in (0, 1, 2):
            out, report = comp.quantize_stochastic(v, bits, Rng(seed, "q"))
            assert np.array_equal(out, v)
            assert report.error_norm == 0.0


def test_quantize_unbiased_small_sweep():
    rng_data = np.random.default_rng(5)
    v = rng_data.normal(size=64)
    mean, var = comp.quantize_moments(v, 4, Rng(3, "mc"), draws=100_000)
    se = np.sqrt(var / 100_000)
    z = np.abs(mean - v) / np.where(se > 0, se, 1.0)
    assert z.max() < 4.0


def test_quantize_variance_matches_bernoulli():
    rng_data = np.random.default_rng(6)
    v = rng_data.normal(size=64)
    _, var = comp.quantize_moments(v, 4, Rng(4, "mc"), draws=100_000)
    ana = comp.quantizer_variance_analytic(v, 4)
    p_pos = ana > 0
    rel = np.abs(var[p_pos] - ana[p_pos]) / ana[p_pos]
    assert rel.max() < 0.05
    # Aggregate bound: E||Q(v)-v||^2 equals the Bernoulli sum.
    assert abs(var.sum() - ana.sum()) / ana.sum() < 0.02


def test_quantize_moments_match_single_calls():
    rng_data = np.random.default_rng(7)
    v = rng_data.normal(size=16)
    mean, _ = comp.quantize_moments(v, 2, Rng(9, "m"), draws=5)
    stream = Rng(9, "m")
    outs = np.array([comp.quantize_stochastic(v, 2, stream)[0] for _ in range(5)])
    assert np.array_equal(mean * 5, outs.sum(axis=0))


def test_scale_equivariance_power_of_two():
    rng_data = np.random.default_rng(8)
    v = rng_data.normal(size=100)
    q1, _ = comp.quantize_stochastic(v, 4, Rng(11, "s"))
    q2, _ = comp.quantize_stochastic(2.0 * v, 4, Rng(11, "s"))
    assert (2.0 * q1).tobytes() == q2.tobytes()


def test_kernel_paths_bitwise_equal():
    rng_data = np.random.default_rng(9)
    v = rng_data.normal(size=257)
    norm = float(np.linalg.norm(v))
    uniforms = rng_data.uniform(size=257)
    a = _kernels.quantize_values(v, norm, 17.0, uniforms)
    b = _kernels.quantize_values_numpy(v, norm, 17.0, uniforms)
    assert a.tobytes() == b.tobytes()


def test_topk_identity_at_full_sparsity():
    v = np.array([1.0, -2.0, 0.5])
    out, report = comp.topk_sparsify(v, 1.0)
    assert np.array_equal(out, v)
    assert report.error_norm == 0.0


def test_topk_definition_example():
    out, report = comp.topk_sparsify(np.array([3.0, -5.0, 1.0, 2.0]), 0.5)
    assert np.array_equal(out, np.array([3.0, -5.0, 0.0, 0.0]))
    assert abs(report.error_norm**2 - 5.0) < 1e-12


def test_topk_tie_break_lowest_index():
    out, _ = comp.topk_sparsify(np.array([2.0, -2.0, 2.0, 1.0]), 0.5)
    assert np.array_equal(out, np.array([2.0, -2.0, 0.0, 0.0]))


def test_topk_sort_oracle_sweep():
    rng_data = np.random.default_rng(10)
    for _ in range(200):
        d = int(rng_data.integers(2, 64))
        v = rng_data.normal(size=d)
        k = float(rng_data.uniform(0.05, 1.0))
        out, report = comp.topk_sparsify(v, k)
        m = int(np.ceil(k * d))
        assert np.count_nonzero(out) == min(m, np.count_nonzero(v))
        dropped = np.sort(np.abs(v))[: d - m]
        assert abs(report.error_norm**2 - np.sum(dropped**2)) < 1e-12


def test_apply_dispatch_matches_direct():
    rng_data = np.random.default_rng(11)
    v = rng_data.normal(size=40)
    direct, _ = comp.quantize_stochastic(v, 4, Rng(0, "c"))
    via, _ = comp.apply(CompressorSpec.quantization(4), v, Rng(0, "c"))
    assert direct.tobytes() == via.tobytes()
    direct_t, _ = comp.topk_sparsify(v, 0.25)
    via_t, _ = comp.apply(CompressorSpec.topk(0.25), v, Rng(0, "c"))
    assert direct_t.tobytes() == via_t.tobytes()


def test_apply_none_identity():
    v = np.array([1.0, -1.0, 2.0])
    out, report = comp.apply(CompressorSpec.none(), v, Rng(0, "c"))
    assert np.array_equal(out, v)
    assert report.error_norm == 0.0
    assert report.payload_bits == 64 * 3


def test_quant_payload_accounting():
    # 32 bits for the norm plus sign + level bits per coordinate.
    _, report = comp.quantize_stochastic(np.ones(1000), 4, Rng(0, "p"))
    assert report.payload_bits == 32 + 1000 * (1 + 5)


def test_payload_never_exceeds_uncompressed():
    rng_data = np.random.default_rng(12)
    for d in (1, 10, 1000):
        v = rng_data.normal(size=d)
        for spec in (
            CompressorSpec.none(),
            CompressorSpec.quantization(16),
            CompressorSpec.topk(1.0),
            CompressorSpec.topk(0.999),
        ):
            _, report = comp.apply(spec, v, Rng(0, "p"))
            assert report.payload_bits <= 64 * d


def test_unbiasedness_all_bit_widths():
    rng_data = np.random.default_rng(13)
    v = rng_data.normal(size=32)
    for bits in (2, 4, 8):
        mean, var = comp.quantize_moments(v, bits, Rng(bits, "mc"), draws=50_000)
        se = np.sqrt(var / 50_000)
        z = np.abs(mean - v) / np.where(se > 0, se, 1.0)
        assert z.max() < 4.5
