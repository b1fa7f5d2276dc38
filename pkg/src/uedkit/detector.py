"""Decision Making Module: cluster-distance quantile scoring.

Fit: K-means over training features (10 restarts by default), then record,
per cluster, the sorted distances from that cluster's own training samples to
its center.  Score: a test feature is assigned to its nearest center and

    s = #{train distances in that cluster strictly below d} / N_tr(cluster)

so s is the right-tail rank of the sample inside its cluster's training
distance distribution.  The sample is flagged unknown when s > alpha.

The published rule sets a 5% tail but writes the comparison against the tail
mass itself; flagging `s > 0.05` would mark ~95% of in-distribution samples
unknown, so the evident intent is implemented: alpha = 1 - tail_mass = 0.95
by default, and the tail mass is the configuration knob.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DimensionError, ScoringError, ValidationError
from .numerics import KMeansModel, assign_batch, kmeans_assign, kmeans_fit_best
from .rng import Rng

DEFAULT_TAIL_MASS = 0.05


@dataclass
class Decision:
    score: float
    cluster: int
    label: int  # 1 = unknown, 0 = known


@dataclass
class ClusterDetector:
    kmeans: KMeansModel
    tables: list  # per-cluster sorted ascending train distances
    alpha: float = 1.0 - DEFAULT_TAIL_MASS

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie strictly between 0 and 1")

    @property
    def tail_mass(self) -> float:
        return 1.0 - self.alpha


def fit_detector(
    features: np.ndarray,
    n_clusters: int,
    rng: Rng,
    tail_mass: float = DEFAULT_TAIL_MASS,
    n_restarts: int = 10,
    max_iter: int = 300,
) -> ClusterDetector:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionError("features must be (n, d)")
    if features.shape[0] < n_clusters:
        raise ValidationError(
            f"{features.shape[0]} samples cannot form {n_clusters} clusters"
        )
    model = kmeans_fit_best(features, n_clusters, rng, n_restarts=n_restarts, max_iter=max_iter)
    assign, dist = assign_batch(model, features)
    tables = [np.sort(dist[assign == c]) for c in range(n_clusters)]
    return ClusterDetector(kmeans=model, tables=tables, alpha=1.0 - tail_mass)


def _score_one(det: ClusterDetector, cluster: int, distance: float) -> Decision:
    table = det.tables[cluster]
    if table.size == 0:
        raise ScoringError(f"cluster {cluster} has an empty train-distance table")
    below = int(np.searchsorted(table, distance, side="left"))  # strictly smaller entries
    s = below / table.size
    return Decision(score=s, cluster=cluster, label=int(s > det.alpha))


def score_sample(det: ClusterDetector, h: np.ndarray) -> Decision:
    cluster, distance = kmeans_assign(det.kmeans, np.asarray(h, dtype=np.float64))
    return _score_one(det, cluster, distance)


def classify_batch(det: ClusterDetector, features: np.ndarray):
    """Element-wise scoring in input order; returns (decisions, score vector)."""
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        return [], np.zeros(0)
    assign, dist = assign_batch(det.kmeans, features)
    decisions = [_score_one(det, int(c), float(d)) for c, d in zip(assign, dist)]
    return decisions, np.array([d.score for d in decisions])


def save_detector(path, det: ClusterDetector) -> None:
    """Container: magic UEDD, u16 version, u32 C, u32 d, f64 alpha, f64 inertia,
    centers (C*d f64), then per cluster u32 count + count f64 distances."""
    c, d = det.kmeans.centers.shape
    with open(path, "wb") as fh:
        fh.write(b"UEDD")
        fh.write(struct.pack("<HIIdd", 1, c, d, det.alpha, det.kmeans.inertia))
        fh.write(np.ascontiguousarray(det.kmeans.centers, dtype="<f8").tobytes())
        for table in det.tables:
            fh.write(struct.pack("<I", table.size))
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())


def load_detector(path) -> ClusterDetector:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"UEDD":
        raise DataFormatError(f"bad detector magic {blob[:4]!r}")
    version, c, d, alpha, inertia = struct.unpack_from("<HIIdd", blob, 4)
    if version != 1:
        raise DataFormatError(f"unsupported detector version {version}")
    offset = 4 + struct.calcsize("<HIIdd")
    centers = np.frombuffer(blob, dtype="<f8", count=c * d, offset=offset).reshape(c, d).copy()
    offset += 8 * c * d
    tables = []
    for _ in range(c):
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        tables.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy())
        offset += 8 * count
    return ClusterDetector(
        kmeans=KMeansModel(centers=centers, inertia=inertia), tables=tables, alpha=alpha
    )
