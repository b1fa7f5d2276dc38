"""Shared numerical kernels: truncated SVD/PCA and K-means.

K-means is written here rather than taken from a library because the rest of
the package depends on its exact, documented behaviour: k-means++ seeding from
the package `Rng`, first-index tie-breaking, farthest-point repair of empty
clusters, and bit-identical results for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .rng import Rng


def _check_matrix(x: np.ndarray, name: str = "matrix") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite entries")
    return x


def svd_topk(x: np.ndarray, d: int):
    """Top-d right singular directions of the mean-centered matrix.

    Returns ``(components, singular_values, mean)`` where `components` is
    (d, p) with orthonormal rows in descending singular-value order.  Sign
    convention: the largest-magnitude entry of each component is positive.
    """
    x = _check_matrix(x, "svd input")
    n, p = x.shape
    if n < 2:
        raise ValidationError(f"need at least 2 rows, got {n}")
    if not 1 <= d <= min(n, p):
        raise DimensionError(f"d={d} out of range for a {n}x{p} matrix")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:d].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return components, s[:d].copy(), mean


@dataclass
class KMeansModel:
    centers: np.ndarray  # (C, d)
    inertia: float

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]


def _pairwise_sq_dists(x: np.ndarray, centers: np.ndarray, block: int = 1024) -> np.ndarray:
    """Exact squared distances computed by direct differencing, blocked over rows."""
    n = x.shape[0]
    out = np.empty((n, centers.shape[0]), dtype=np.float64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = x[start:stop, None, :] - centers[None, :, :]
        out[start:stop] = np.einsum("ncd,ncd->nc", diff, diff)
    return out


def _kmeanspp_seed(x: np.ndarray, n_clusters: int, rng: Rng) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((n_clusters, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(n)]
    d2 = np.einsum("nd,nd->n", x - centers[0], x - centers[0])
    for c in range(1, n_clusters):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            idx = min(idx, n - 1)
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.einsum("nd,nd->n", x - centers[c], x - centers[c]))
    return centers


def kmeans_fit(x: np.ndarray, n_clusters: int, rng: Rng, max_iter: int = 300) -> KMeansModel:
    """Lloyd iterations from a k-means++ seeding, run to an assignment fixpoint.

    Empty clusters are repaired by reseeding the cluster at the point farthest
    from its current center.  Ties in assignment go to the lowest cluster index.
    """
    x = _check_matrix(x, "kmeans input")
    n = x.shape[0]
    if n_clusters < 1:
        raise ValidationError("need at least one cluster")
    if n < n_clusters:
        raise ValidationError(f"{n} points cannot form {n_clusters} clusters")

    centers = _kmeanspp_seed(x, n_clusters, rng)
    assign = None
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(x, centers)
        new_assign = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), new_assign]
        for c in range(n_clusters):
            mask = new_assign == c
            if mask.any():
                centers[c] = x[mask].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                centers[c] = x[far]
                new_assign[far] = c
                point_d2[far] = 0.0
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
    d2 = _pairwise_sq_dists(x, centers)
    inertia = float(d2.min(axis=1).sum())
    return KMeansModel(centers=centers, inertia=inertia)


def kmeans_fit_best(
    x: np.ndarray, n_clusters: int, rng: Rng, n_restarts: int = 10, max_iter: int = 300
) -> KMeansModel:
    """Best-of-n restarts by inertia; ties keep the earliest restart."""
    best = None
    for r in range(n_restarts):
        model = kmeans_fit(x, n_clusters, rng.derive("kmeans-restart", r), max_iter=max_iter)
        if best is None or model.inertia < best.inertia:
            best = model
    return best


def kmeans_assign(model: KMeansModel, x: np.ndarray):
    """Nearest center for one point: ``(index, euclidean_distance)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.centers.shape[1],):
        raise DimensionError(
            f"point has dimension {x.shape}, centers have dimension {model.centers.shape[1]}"
        )
    diff = model.centers - x
    d2 = np.einsum("cd,cd->c", diff, diff)
    idx = int(np.argmin(d2))
    return idx, float(np.sqrt(d2[idx]))


def assign_batch(model: KMeansModel, x: np.ndarray):
    """Vectorised nearest-center assignment: ``(indices, euclidean_distances)``."""
    x = _check_matrix(x, "assignment input")
    if x.shape[1] != model.centers.shape[1]:
        raise DimensionError(
            f"points have dimension {x.shape[1]}, centers have dimension {model.centers.shape[1]}"
        )
    d2 = _pairwise_sq_dists(x, model.centers)
    idx = np.argmin(d2, axis=1)
    return idx, np.sqrt(d2[np.arange(x.shape[0]), idx])
