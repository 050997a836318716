"""Activation-based client clustering and equitable aggregation weights.

The server stacks the cohort's activation vectors into a matrix ``A``,
forms ``S = A A^T``, embeds each participant as its row of the top-C
eigenvectors of ``S`` and runs K-means on those rows. Each participant in
cluster q then gets weight ``1 / (C * |q|)``, so every cluster carries total
mass ``1 / C`` regardless of how many of its members showed up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateRowError
from .numkernel import as_matrix, jacobi_eigh, kmeans, matmul

__all__ = [
    "ClusterAssignment",
    "similarity",
    "spectral_embedding",
    "spectral_cluster",
    "equitable_weights",
    "cluster_cohort",
]


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    cluster_sizes: np.ndarray
    weights: np.ndarray | None = None


def similarity(a, normalize: bool = False) -> np.ndarray:
    """Gram matrix of the activation rows; cosine similarity if ``normalize``."""
    a = as_matrix(a, "activation matrix")
    if a.shape[0] == 0:
        raise ContractViolation("activation matrix has no rows")
    if normalize:
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            bad = int(np.flatnonzero(norms[:, 0] == 0.0)[0])
            raise DegenerateRowError(f"row {bad} is zero and cannot be normalized")
        a = a / norms
    s = matmul(a, a.T)
    s = 0.5 * (s + s.T)
    if normalize:
        np.fill_diagonal(s, 1.0)
    return s


def spectral_embedding(s, c: int) -> np.ndarray:
    """Rows of the top-``c`` eigenvectors, each column signed so its
    largest-magnitude entry is positive."""
    res = jacobi_eigh(s)
    vecs = res.eigenvectors[:, :c].copy()
    for j in range(c):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def spectral_cluster(s, c: int, rng: np.random.Generator,
                     restarts: int = 20) -> ClusterAssignment:
    s = as_matrix(s, "similarity")
    r = s.shape[0]
    if s.shape != (r, r):
        raise ContractViolation(f"similarity must be square, got {s.shape}")
    if not 1 <= c <= r:
        raise ContractViolation(f"need 1 <= c <= {r}, got c={c}")
    emb = spectral_embedding(s, c)
    km = kmeans(emb, c, restarts=restarts, rng=rng)
    return ClusterAssignment(km.assignments, np.bincount(km.assignments, minlength=c))


def equitable_weights(labels, c: int) -> ClusterAssignment:
    labels = np.asarray(labels, dtype=np.int64)
    if c < 1:
        raise ContractViolation(f"c must be >= 1, got {c}")
    if labels.size == 0 or labels.min() < 0 or labels.max() >= c:
        raise ContractViolation(f"labels must be non-empty and lie in [0, {c})")
    sizes = np.bincount(labels, minlength=c)
    if np.any(sizes == 0):
        raise ContractViolation(
            f"clusters {np.flatnonzero(sizes == 0).tolist()} are empty"
        )
    weights = 1.0 / (c * sizes[labels].astype(np.float64))
    return ClusterAssignment(labels, sizes, weights)


def cluster_cohort(activations, c: int, rng: np.random.Generator,
                   normalize: bool = False, restarts: int = 20) -> ClusterAssignment:
    """Similarity, spectral clustering and equitable weights in one call."""
    s = similarity(activations, normalize=normalize)
    assignment = spectral_cluster(s, c, rng, restarts=restarts)
    return equitable_weights(assignment.labels, c)
