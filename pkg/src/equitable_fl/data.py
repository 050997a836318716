"""Datasets, the IDX loader, and the planted-cluster partitioner.

The partitioner hands each group of clients a disjoint set of labels, so the
groups form ground-truth clusters that the server is supposed to recover.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityError, ContractViolation, FormatError
from .model import Batch

__all__ = [
    "Dataset",
    "ClusterSpec",
    "PartitionSpec",
    "ClientDataset",
    "IDX_IMAGES_MAGIC",
    "IDX_LABELS_MAGIC",
    "class_directions",
    "generate_synthetic",
    "load_idx",
    "write_idx",
    "partition_planted",
    "mnist_partition_spec",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Class directions are shared by every dataset of a given shape, so train and
# held-out pools drawn with different seeds have the same class means.
_DIRECTION_SEED = 20240917


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.size:
            raise ContractViolation(
                f"features {x.shape} and labels {y.shape} do not match"
            )
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ContractViolation(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def as_batch(self) -> Batch:
        return Batch(self.features, self.labels)


@dataclass(frozen=True)
class ClusterSpec:
    client_count: int
    label_set: tuple[int, ...]
    samples_per_label_per_client: int


@dataclass(frozen=True)
class PartitionSpec:
    clusters: tuple[ClusterSpec, ...]

    def __post_init__(self):
        clusters = tuple(
            c if isinstance(c, ClusterSpec)
            else ClusterSpec(int(c[0]), tuple(int(v) for v in c[1]), int(c[2]))
            for c in self.clusters
        )
        seen: set[int] = set()
        for q, c in enumerate(clusters):
            if c.client_count < 1:
                raise ContractViolation(f"cluster {q} has no clients")
            if c.samples_per_label_per_client < 1:
                raise ContractViolation(f"cluster {q} needs a positive per-label count")
            if not c.label_set:
                raise ContractViolation(f"cluster {q} has an empty label set")
            overlap = seen.intersection(c.label_set)
            if overlap or len(set(c.label_set)) != len(c.label_set):
                raise ContractViolation(
                    f"label sets overlap at {sorted(overlap) or c.label_set}"
                )
            seen.update(c.label_set)
        object.__setattr__(self, "clusters", clusters)

    @property
    def num_clients(self) -> int:
        return sum(c.client_count for c in self.clusters)

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    def true_clusters(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.clusters)),
                         [c.client_count for c in self.clusters])

    def with_per_label(self, count: int) -> "PartitionSpec":
        return PartitionSpec(tuple(
            ClusterSpec(c.client_count, c.label_set, count) for c in self.clusters
        ))


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    shard: Dataset
    true_cluster: int
    indices: np.ndarray  # positions in the source pool

    @property
    def sample_count(self) -> int:
        return len(self.shard)


def mnist_partition_spec(per_label: int = 800) -> PartitionSpec:
    """Two planted clusters: 4 clients on labels 0-3, 6 clients on labels 4-9."""
    return PartitionSpec((
        ClusterSpec(4, (0, 1, 2, 3), per_label),
        ClusterSpec(6, (4, 5, 6, 7, 8, 9), per_label),
    ))


def class_directions(num_classes: int, dim: int) -> np.ndarray:
    """Unit-norm class directions, orthonormal when ``num_classes <= dim``."""
    rng = np.random.default_rng([_DIRECTION_SEED, num_classes, dim])
    g = rng.standard_normal((dim, max(num_classes, dim)))
    q, r = np.linalg.qr(g[:, :dim])
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    dirs = q.T[:min(num_classes, dim)]
    if num_classes > dim:
        extra = g[:, dim:num_classes].T
        extra = extra / np.linalg.norm(extra, axis=1, keepdims=True)
        dirs = np.vstack([dirs, extra])
    return dirs


def generate_synthetic(num_classes: int, dim: int, per_class: int, separation: float,
                       noise: float, rng: np.random.Generator) -> Dataset:
    """Isotropic Gaussian blobs, ``per_class`` samples per class, label-sorted."""
    if min(num_classes, dim, per_class) < 1:
        raise ContractViolation("num_classes, dim and per_class must be >= 1")
    if noise <= 0:
        raise ContractViolation(f"noise must be > 0, got {noise}")
    means = separation * class_directions(num_classes, dim)
    labels = np.repeat(np.arange(num_classes), per_class)
    features = means[labels] + noise * rng.standard_normal((labels.size, dim))
    return Dataset(features, labels, num_classes)


def _read_header(raw: bytes, path, expected_magic: int, ndim: int):
    if len(raw) < 4 + 4 * ndim:
        raise OSError(f"{path}: truncated header ({len(raw)} bytes)")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    return dims, 4 + 4 * ndim


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Read an IDX image/label file pair; pixels are scaled to ``[0, 1]``."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    img_raw = images_path.read_bytes()
    lab_raw = labels_path.read_bytes()
    (count, rows, cols), off = _read_header(img_raw, images_path, IDX_IMAGES_MAGIC, 3)
    (lcount,), loff = _read_header(lab_raw, labels_path, IDX_LABELS_MAGIC, 1)
    if count != lcount:
        raise FormatError(
            f"{images_path} holds {count} images but {labels_path} holds {lcount} labels"
        )
    need = count * rows * cols
    if len(img_raw) - off < need:
        raise OSError(f"{images_path}: truncated, expected {need} pixel bytes")
    if len(lab_raw) - loff < lcount:
        raise OSError(f"{labels_path}: truncated, expected {lcount} label bytes")
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=need, offset=off)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=lcount, offset=loff)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), num_classes)


def write_idx(images_path, labels_path, images, labels) -> None:
    """Write uint8 images ``(count, rows, cols)`` and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


def partition_planted(ds: Dataset, spec: PartitionSpec,
                      rng: np.random.Generator) -> list[ClientDataset]:
    """Deal each cluster's label pools out to its clients without replacement.

    Clients are numbered cluster by cluster, so the first ``client_count`` ids
    belong to cluster 0 and so on.
    """
    pools = {}
    for q, c in enumerate(spec.clusters):
        for lab in c.label_set:
            pool = np.flatnonzero(ds.labels == lab)
            need = c.client_count * c.samples_per_label_per_client
            if pool.size < need:
                raise CapacityError(lab, need - pool.size)
            pools[lab] = rng.permutation(pool)[:need]

    clients = []
    cid = 0
    for q, c in enumerate(spec.clusters):
        per = c.samples_per_label_per_client
        for j in range(c.client_count):
            idx = np.concatenate([pools[lab][j * per:(j + 1) * per]
                                  for lab in c.label_set])
            clients.append(ClientDataset(cid, ds.subset(idx), q, idx))
            cid += 1
    return clients
