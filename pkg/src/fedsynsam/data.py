"""Dataset loading, toy data generation, and client partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

__all__ = [
    "Dataset",
    "Partition",
    "load_idx",
    "make_blobs",
    "make_blobs_split",
    "partition_iid",
    "partition_dirichlet",
    "partition_pathological",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Features in [0,1], integer labels in [0, classes)."""

    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        if feats.ndim != 2 or feats.shape[1] == 0:
            raise ValueError("features must be a nonempty (n, d) matrix")
        if labs.shape != (feats.shape[0],):
            raise ValueError("labels length must match feature rows")
        if labs.size and (labs.min() < 0 or labs.max() >= self.classes):
            raise ValueError(f"labels must lie in [0, {self.classes})")
        if feats.size and (feats.min() < 0.0 or feats.max() > 1.0):
            raise ValueError("features must be scaled to [0, 1]")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.classes)


@dataclass(frozen=True)
class Partition:
    """Disjoint per-client index lists into a parent dataset."""

    indices: tuple

    def __post_init__(self):
        clean = tuple(np.sort(np.asarray(ix, dtype=np.int64)) for ix in self.indices)
        object.__setattr__(self, "indices", clean)
        if any(len(ix) == 0 for ix in clean):
            raise ValueError("every client must receive at least one sample")
        flat = np.concatenate(clean)
        if len(np.unique(flat)) != len(flat):
            raise ValueError("client index lists must be disjoint")

    @property
    def num_clients(self) -> int:
        return len(self.indices)

    def client(self, i: int) -> np.ndarray:
        return self.indices[i]


def _read_exact(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Load an IDX (ubyte) image/label pair; pixel bytes scaled by 1/255."""
    raw = _read_exact(images_path)
    if len(raw) < 16:
        raise ValueError(f"truncated IDX image file: {images_path}")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"bad IDX image magic 0x{magic:08x} in {images_path}")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise ValueError(f"truncated IDX image file: expected {expected} bytes, got {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).astype(np.float64) / 255.0
    features = pixels.reshape(count, rows * cols)

    raw_l = _read_exact(labels_path)
    if len(raw_l) < 8:
        raise ValueError(f"truncated IDX label file: {labels_path}")
    magic_l, count_l = struct.unpack(">II", raw_l[:8])
    if magic_l != IDX_LABELS_MAGIC:
        raise ValueError(f"bad IDX label magic 0x{magic_l:08x} in {labels_path}")
    if len(raw_l) != 8 + count_l:
        raise ValueError("truncated IDX label file")
    if count_l != count:
        raise ValueError(f"image/label count mismatch: {count} images vs {count_l} labels")
    labels = np.frombuffer(raw_l, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(features, labels, int(labels.max()) + 1 if count else 0)


def make_blobs(classes: int, per_class: int, dims: int, separation: float, rng: Rng) -> Dataset:
    """Gaussian class blobs, min-max scaled into [0,1]."""
    if classes <= 0 or per_class <= 0 or dims <= 0:
        raise ValueError("classes, per_class, and dims must be positive")
    means = []
    for _ in range(classes):
        direction = rng.normal(size=dims)
        norm = np.linalg.norm(direction)
        means.append(separation * direction / norm if norm > 0 else direction)
    feats = np.concatenate(
        [means[k] + rng.normal(size=(per_class, dims)) for k in range(classes)]
    )
    labels = np.repeat(np.arange(classes), per_class)
    low, high = feats.min(), feats.max()
    span = high - low
    feats = (feats - low) / span if span > 0 else np.zeros_like(feats)
    return Dataset(feats, labels, classes)


def make_blobs_split(
    classes: int, train_per_class: int, test_per_class: int, dims: int, separation: float, rng: Rng
):
    """(train, test) blob datasets drawn from the same class means and scale."""
    combined = make_blobs(classes, train_per_class + test_per_class, dims, separation, rng)
    per = train_per_class + test_per_class
    train_idx = []
    test_idx = []
    for k in range(classes):
        block = np.arange(k * per, (k + 1) * per)
        train_idx.append(block[:train_per_class])
        test_idx.append(block[train_per_class:])
    return combined.subset(np.concatenate(train_idx)), combined.subset(np.concatenate(test_idx))


def partition_iid(ds: Dataset, clients: int, rng: Rng) -> Partition:
    """Random shuffle split into near-equal shards (sizes differ by <= 1)."""
    n = len(ds)
    if n < clients:
        raise ValueError(f"cannot split {n} samples across {clients} clients")
    order = rng.permutation(n)
    base, rem = divmod(n, clients)
    sizes = [base + (1 if i < rem else 0) for i in range(clients)]
    cuts = np.cumsum(sizes)[:-1]
    return Partition(tuple(np.split(order, cuts)))


def partition_dirichlet(ds: Dataset, clients: int, concentration: float, rng: Rng) -> Partition:
    """Per class, draw client proportions ~ Dir(a) and assign multinomially.

    Clients left empty under extreme skew are re-seeded with one sample
    stolen from the currently largest client.
    """
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    buckets: list[list[np.ndarray]] = [[] for _ in range(clients)]
    for k in range(ds.classes):
        class_idx = np.flatnonzero(ds.labels == k)
        if len(class_idx) == 0:
            raise ValueError(f"class {k} has no samples")
        props = rng.dirichlet(np.full(clients, concentration))
        counts = rng.multinomial(len(class_idx), props)
        shuffled = rng.permutation(class_idx)
        cuts = np.cumsum(counts)[:-1]
        for i, chunk in enumerate(np.split(shuffled, cuts)):
            if len(chunk):
                buckets[i].append(chunk)
    assigned = [np.concatenate(b) if b else np.empty(0, dtype=np.int64) for b in buckets]
    while any(len(a) == 0 for a in assigned):
        empty = min(i for i, a in enumerate(assigned) if len(a) == 0)
        donor = int(np.argmax([len(a) for a in assigned]))
        assigned[empty] = assigned[donor][-1:]
        assigned[donor] = assigned[donor][:-1]
    return Partition(tuple(assigned))


def partition_pathological(ds: Dataset, clients: int, shards_per_client: int, rng: Rng) -> Partition:
    """Label-sorted sharding: each client receives s shards without replacement."""
    n = len(ds)
    total_shards = clients * shards_per_client
    if total_shards > n:
        raise ValueError(f"cannot build {total_shards} shards from {n} samples")
    order = np.lexsort((np.arange(n), ds.labels))
    base, rem = divmod(n, total_shards)
    # Remainder goes to the last shards.
    sizes = [base + (1 if i >= total_shards - rem else 0) for i in range(total_shards)]
    cuts = np.cumsum(sizes)[:-1]
    shards = np.split(order, cuts)
    deal = rng.permutation(total_shards)
    assigned = []
    for i in range(clients):
        own = deal[i * shards_per_client : (i + 1) * shards_per_client]
        assigned.append(np.concatenate([shards[j] for j in own]))
    return Partition(tuple(assigned))
