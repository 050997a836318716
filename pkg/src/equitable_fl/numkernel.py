"""Dense linear algebra and clustering primitives.

Matrices are plain 2-D ``float64`` numpy arrays. The eigensolver (cyclic
Jacobi) and K-means (k-means++ seeding, Lloyd iterations) are written out
here rather than delegated, because their tie-breaking and repair rules are
part of the clustering contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ConvergenceError

__all__ = [
    "EigenResult",
    "KMeansResult",
    "as_matrix",
    "matmul",
    "jacobi_eigh",
    "kmeans",
]


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else a.reshape(0, 0)
    if a.ndim != 2:
        raise ContractViolation(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise ContractViolation("product overflowed to non-finite values")
    return out


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # column j pairs with eigenvalues[j]
    sweeps: int = 0


def _off_norm(a: np.ndarray) -> float:
    iu = np.triu_indices(a.shape[0], k=1)
    return float(np.sqrt(2.0) * np.linalg.norm(a[iu]))


def jacobi_eigh(s, tol: float = 1e-10, max_sweeps: int = 100) -> EigenResult:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps visit every (p, q) pair with p < q in row order. Iteration stops
    once the off-diagonal Frobenius norm falls to ``tol * ||S||_F``.
    Eigenvalues come back in descending order; equal eigenvalues keep their
    diagonal order.
    """
    a = as_matrix(s, "s").copy()
    n, m = a.shape
    if n != m:
        raise ContractViolation(f"matrix must be square, got {n}x{m}")
    scale = float(np.linalg.norm(a))
    if n and np.max(np.abs(a - a.T)) > 1e-10 * max(scale, 1e-300):
        raise ContractViolation("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    threshold = tol * scale
    sweeps = 0
    while _off_norm(a) > threshold:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps", _off_norm(a)
            )
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.hypot(theta, 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.hypot(t, 1.0)
                sn = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return EigenResult(vals[order], v[:, order], sweeps)


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plusplus_init(points: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    idx = [int(rng.integers(n))]
    closest = _sq_dists(points, points[idx]).min(axis=1)
    for _ in range(1, c):
        total = closest.sum()
        if total > 0.0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        closest = np.minimum(closest, _sq_dists(points, points[[nxt]])[:, 0])
    return points[idx].copy()


def _repair_empty(labels: np.ndarray, points: np.ndarray, centers: np.ndarray,
                  d2: np.ndarray, c: int) -> None:
    # Move the point farthest from its centroid (among clusters with >1 member)
    # into each empty cluster as a singleton.
    counts = np.bincount(labels, minlength=c)
    for j in np.flatnonzero(counts == 0):
        own = d2[np.arange(len(labels)), labels].copy()
        own[counts[labels] <= 1] = -np.inf
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        centers[j] = points[far]
        d2[far, :] = _sq_dists(points[[far]], centers)[0]


def _lloyd(points: np.ndarray, centers: np.ndarray, c: int, max_iter: int):
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(points, centers)
        new = np.argmin(d2, axis=1)  # argmin keeps the lowest index on ties
        _repair_empty(new, points, centers, d2, c)
        centers = np.stack([points[new == j].mean(axis=0) for j in range(c)])
        if labels is not None and np.array_equal(new, labels):
            labels = new
            break
        labels = new
    diff = points - centers[labels]
    return labels, centers, float(np.sum(diff * diff))


def kmeans(points, c: int, restarts: int = 20, rng: np.random.Generator | None = None,
           max_iter: int = 100) -> KMeansResult:
    """Best-inertia K-means over ``restarts`` k-means++ initializations.

    Every cluster id in ``[0, c)`` is guaranteed non-empty. Cluster ids are
    arbitrary labels.
    """
    pts = as_matrix(points, "points")
    n = pts.shape[0]
    if c < 1:
        raise ContractViolation(f"c must be >= 1, got {c}")
    if c > n:
        raise ContractViolation(f"c={c} exceeds number of points {n}")
    if restarts < 1:
        raise ContractViolation(f"restarts must be >= 1, got {restarts}")
    if rng is None:
        rng = np.random.default_rng(0)
    best = None
    for _ in range(restarts):
        init = _plusplus_init(pts, c, rng)
        labels, centers, inertia = _lloyd(pts, init, c, max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels.astype(np.int64), centers, inertia)
    return best
