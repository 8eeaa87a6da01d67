import numpy as np
import pytest

from fedsynsam import autodiff as ad, distill, models
from fedsynsam.distill import DistillConfig, SyntheticDataset, TrajectoryBuffer
from fedsynsam.models import MlpSpec
from fedsynsam.rng import Rng

SPEC = MlpSpec((4, 4, 2))


def make_syn(seed, ipc=2, alpha=0.05):
    rng = np.random.default_rng(seed)
    X = np.clip(0.5 + 0.25 * rng.normal(size=(ipc * 2, 4)), 0, 1)
    return SyntheticDataset(X, np.repeat(np.arange(2), ipc), alpha)


def inner_flat(spec, X, labels, w_start, alpha, steps):
    parts = distill.inner_train(spec, X, labels, w_start, alpha, steps)
    return models.flatten([np.asarray(ad._raw(p)) for p in parts])


def test_inner_train_zero_alpha_identity():
    syn = make_syn(0)
    w = np.random.default_rng(1).normal(size=SPEC.param_count)
    out = inner_flat(SPEC, syn.features, syn.labels, w, 0.0, 3)
    assert np.array_equal(out, w)


def test_inner_train_single_step_composition():
    syn = make_syn(2)
    w = np.random.default_rng(3).normal(size=SPEC.param_count)
    out = inner_flat(SPEC, syn.features, syn.labels, w, 0.05, 1)
    _, g = models.loss_and_grad(SPEC, w, syn.features, syn.labels)
    assert out.tobytes() == (w - 0.05 * g).tobytes()


def test_inner_train_matches_hand_unrolled_loop():
    syn = make_syn(4)
    w = 0.5 * np.random.default_rng(5).normal(size=SPEC.param_count)
    out = inner_flat(SPEC, syn.features, syn.labels, w, 0.05, 3)
    manual = w
    for _ in range(3):
        _, g = models.loss_and_grad(SPEC, manual, syn.features, syn.labels)
        manual = manual - 0.05 * g
    assert out.tobytes() == manual.tobytes()


def test_inner_train_traced_equals_untraced():
    syn = make_syn(6)
    w = 0.5 * np.random.default_rng(7).normal(size=SPEC.param_count)
    plain = inner_flat(SPEC, syn.features, syn.labels, w, 0.05, 2)

    captured = []

    def traced(ps):
        parts = distill.inner_train(SPEC, ps[0], syn.labels, w, ps[1], 2)
        captured.append(models.flatten([np.asarray(ad._raw(p)) for p in parts]))
        acc = None
        for p in parts:
            term = ad.sqnorm(p)
            acc = term if acc is None else ad.add(acc, term)
        return acc

    # Recording on a tape must not change any numeric weight value.
    ad.value_and_grad(traced, [syn.features, np.float64(0.05)])
    assert captured[0].tobytes() == plain.tobytes()


def test_meta_gradient_vanishes_at_exact_match():
    # With alpha = 0 the inner loop is the identity, so equal segment
    # endpoints mean a perfect match: L = 0 and zero gradients.
    syn = make_syn(8)
    w = np.random.default_rng(9).normal(size=SPEC.param_count)
    out = inner_flat(SPEC, syn.features, syn.labels, w, 0.0, 2)
    assert np.array_equal(out, w)
    # The dataclass floor keeps alpha strictly positive; at the floor the
    # residual mismatch and gradients are bounded by s * alpha * ||g||.
    syn_tiny = SyntheticDataset(syn.features, syn.labels, distill.ALPHA_FLOOR)
    _, g = models.loss_and_grad(SPEC, w, syn.features, syn.labels)
    bound = 2 * distill.ALPHA_FLOOR * np.linalg.norm(g)
    g_x, g_a, loss = distill.meta_gradient(SPEC, (w, w.copy()), syn_tiny, 2)
    assert loss <= 4 * bound**2
    assert np.abs(g_x).max() <= 1e4 * bound
    assert abs(g_a) <= 1e4 * bound


def test_meta_gradient_alpha_finite_difference():
    syn = make_syn(10)
    rng = np.random.default_rng(11)
    w_r = 0.5 * rng.normal(size=SPEC.param_count)
    w_t = w_r + 0.01 * rng.normal(size=SPEC.param_count)
    _, g_a, _ = distill.meta_gradient(SPEC, (w_r, w_t), syn, 3)
    h = 1e-6

    def loss_at(alpha):
        out = inner_flat(SPEC, syn.features, syn.labels, w_r, alpha, 3)
        return float(np.sum((out - w_t) ** 2))

    fd = (loss_at(syn.alpha + h) - loss_at(syn.alpha - h)) / (2 * h)
    assert abs(g_a - fd) / max(abs(fd), 1e-12) <= 1e-4


def test_meta_gradient_features_finite_difference():
    syn = make_syn(12)
    rng = np.random.default_rng(13)
    w_r = 0.5 * rng.normal(size=SPEC.param_count)
    w_t = w_r + 0.01 * rng.normal(size=SPEC.param_count)
    g_x, _, _ = distill.meta_gradient(SPEC, (w_r, w_t), syn, 3)
    h = 1e-6
    coords = [(int(a), int(b)) for a, b in zip(rng.integers(0, 4, 20), rng.integers(0, 4, 20))]
    for i, j in coords:
        Xp = syn.features.copy()
        Xp[i, j] += h
        Xm = syn.features.copy()
        Xm[i, j] -= h
        lp = float(np.sum((inner_flat(SPEC, Xp, syn.labels, w_r, syn.alpha, 3) - w_t) ** 2))
        lm = float(np.sum((inner_flat(SPEC, Xm, syn.labels, w_r, syn.alpha, 3) - w_t) ** 2))
        fd = (lp - lm) / (2 * h)
        assert abs(g_x[i, j] - fd) / max(abs(fd), abs(g_x[i, j]), 1e-10) <= 1e-4


def test_inner_train_overflow_reports_step():
    syn = make_syn(14)
    w = np.random.default_rng(15).normal(size=SPEC.param_count)
    with pytest.raises(OverflowError, match="step"), np.errstate(all="ignore"):
        distill.inner_train(SPEC, syn.features, syn.labels, w, 1e300, 6)


def make_trajectory(seed, rounds=12):
    rng = np.random.default_rng(seed)
    buf = TrajectoryBuffer()
    w = 0.5 * rng.normal(size=SPEC.param_count)
    buf.append(0, w)
    for t in range(rounds):
        w = w - 0.05 * rng.normal(size=SPEC.param_count) * 0.1
        buf.append(t + 1, w)
    return buf


def test_trajectory_buffer_invariants():
    buf = make_trajectory(0)
    with pytest.raises(ValueError, match="increasing"):
        buf.append(3, buf.snapshots[0])
    with pytest.raises(ValueError, match="length"):
        buf.append(99, np.zeros(3))


def test_condense_zero_iterations_returns_init():
    buf = make_trajectory(1)
    cfg = DistillConfig(outer_iters=0, inner_steps=2, eta_x=0.1, eta_alpha=1e-4, ipc=2, alpha_init=0.05)
    syn, losses = distill.condense(buf, SPEC, cfg, Rng(0, "d"))
    expected = distill._init_features(2, 2, 4, Rng(0, "d"))
    assert syn.features.tobytes() == expected.tobytes()
    assert syn.alpha == 0.05
    assert losses == []


def test_condense_requires_long_enough_trajectory():
    buf = TrajectoryBuffer()
    buf.append(0, np.zeros(SPEC.param_count))
    buf.append(1, np.zeros(SPEC.param_count))
    cfg = DistillConfig(outer_iters=1, inner_steps=3, eta_x=0.1, eta_alpha=1e-4, ipc=2)
    with pytest.raises(ValueError, match="trajectory"):
        distill.condense(buf, SPEC, cfg, Rng(0, "d"))


def test_condense_keeps_labels_balanced_and_alpha_positive():
    buf = make_trajectory(2)
    cfg = DistillConfig(
        outer_iters=25, inner_steps=2, eta_x=0.5, eta_alpha=1.0, ipc=3, alpha_init=1e-7
    )
    syn, losses = distill.condense(buf, SPEC, cfg, Rng(1, "d"))
    counts = np.bincount(syn.labels)
    assert counts.tolist() == [3, 3]
    assert syn.alpha >= distill.ALPHA_FLOOR
    assert len(losses) == 25


def test_condense_adam_variant_runs():
    buf = make_trajectory(3)
    cfg = DistillConfig(
        outer_iters=10, inner_steps=2, eta_x=0.01, eta_alpha=1e-4, ipc=2, optimizer="adam"
    )
    syn, losses = distill.condense(buf, SPEC, cfg, Rng(2, "d"))
    assert len(losses) == 10
    assert np.all(np.isfinite(syn.features))


def test_synthetic_dataset_validation():
    with pytest.raises(ValueError, match="balanced"):
        SyntheticDataset(np.zeros((3, 2)), np.array([0, 0, 1]), 0.1)
    with pytest.raises(ValueError, match="alpha"):
        SyntheticDataset(np.zeros((2, 2)), np.array([0, 1]), 0.0)


def test_synthetic_serialization_roundtrip(tmp_path):
    syn = make_syn(16)
    syn.meta.update({"seed": 3, "outer_iters": 7})
    path = tmp_path / "syn.npz"
    distill.save_synthetic(path, syn)
    loaded = distill.load_synthetic(path)
    assert loaded.features.tobytes() == syn.features.tobytes()
    assert loaded.labels.tolist() == syn.labels.tolist()
    assert loaded.alpha == syn.alpha
    assert loaded.meta["seed"] == 3


def test_trajectory_serialization_roundtrip(tmp_path):
    buf = make_trajectory(17)
    path = tmp_path / "traj.npz"
    distill.save_trajectory(path, buf, SPEC.layer_sizes)
    loaded, layers = distill.load_trajectory(path)
    assert layers == SPEC.layer_sizes
    assert len(loaded) == len(buf)
    assert loaded.snapshots[3].tobytes() == buf.snapshots[3].tobytes()
