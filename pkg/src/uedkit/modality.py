"""Data modalities: scaled raw I/Q and the 2D-constellation occupancy grid.

The constellation transform is a time-permutation-invariant histogram: after
per-trace scaling to [-1, 1], each complex sample lands in exactly one cell of
a K x K grid over the unit square (half-open cells, top edge clamped so that a
value of exactly 1.0 maps to the last cell) and contributes 1/N of occupancy
mass.  Permuting samples in time therefore cannot change the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, ValidationError

DEFAULT_GRID_SIZE = 60


@dataclass
class IQTrace:
    """One complex baseband recording with emitter identity and day tag."""

    i: np.ndarray
    q: np.ndarray
    emitter_id: int = -1
    day: int = 0

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.i.shape != self.q.shape or self.i.ndim != 1:
            raise DimensionError("i and q must be 1-D arrays of equal length")
        if self.i.size < 1:
            raise ValidationError("trace must contain at least one sample")
        if not (np.all(np.isfinite(self.i)) and np.all(np.isfinite(self.q))):
            raise ValidationError("trace contains non-finite samples")

    def __len__(self):
        return self.i.size

    def as_array(self) -> np.ndarray:
        """(2, N) array with channel 0 = I, channel 1 = Q."""
        return np.stack([self.i, self.q])


@dataclass
class ConstellationGrid:
    k: int
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        if self.cells.shape != (self.k, self.k):
            raise DimensionError(f"cells must be ({self.k}, {self.k})")


def normalize_iq_array(iq: np.ndarray) -> np.ndarray:
    """Scale a (..., 2, N) stack of traces into [-1, 1].

    Each trace is divided by the single scalar max of the absolute values over
    both of its channels, so at least one sample touches +/-1 afterwards.
    """
    iq = np.asarray(iq)
    peak = np.max(np.abs(iq), axis=(-2, -1), keepdims=True)
    if np.any(peak == 0):
        raise DegenerateInputError("all-zero trace cannot be scaled to [-1, 1]")
    return iq / peak


def normalize_iq(trace: IQTrace) -> IQTrace:
    scaled = normalize_iq_array(trace.as_array())
    return IQTrace(scaled[0], scaled[1], trace.emitter_id, trace.day)


def constellation_cells_batch(iq: np.ndarray, k: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Occupancy grids for a (B, 2, N) stack of traces already scaled to [-1, 1].

    Returns (B, K, K) grids; axis 0 of each grid indexes the I channel, axis 1
    the Q channel.
    """
    iq = np.asarray(iq, dtype=np.float64)
    if k < 1:
        raise ValidationError("grid size must be at least 1")
    if iq.ndim != 3 or iq.shape[1] != 2:
        raise DimensionError(f"expected (B, 2, N) traces, got {iq.shape}")
    if np.max(np.abs(iq)) > 1.0:
        raise ValidationError("traces must be scaled to [-1, 1] before binning")
    n_traces, _, n = iq.shape
    # cell index floor(((v + 1) / 2) / eps), eps = 1/K; the boundary v = 1 clamps to K-1
    idx = np.floor((iq + 1.0) * (0.5 * k)).astype(np.int64)
    np.clip(idx, 0, k - 1, out=idx)
    flat = idx[:, 0, :] * k + idx[:, 1, :]  # (B, N)
    flat += np.arange(n_traces, dtype=np.int64)[:, None] * (k * k)
    counts = np.bincount(flat.ravel(), minlength=n_traces * k * k)
    return counts.reshape(n_traces, k, k).astype(np.float64) / n


def constellation_transform(trace: IQTrace, k: int = DEFAULT_GRID_SIZE) -> ConstellationGrid:
    cells = constellation_cells_batch(trace.as_array()[None], k)[0]
    return ConstellationGrid(k=k, cells=cells)


def kan_input_scale_grid(cells: np.ndarray, k: int) -> np.ndarray:
    """Map occupancy values onto the spline domain: 2*K^2*v - 1 clamped to [-1, 1].

    Raw occupancies are at most 1/N, far too small to exercise the spline grid;
    this affine stretch puts a uniform grid's cell value (1/K^2) at 1.0.
    """
    return np.clip(2.0 * (k * k) * cells - 1.0, -1.0, 1.0)


class RawIQModality:
    """Raw two-channel input: per-trace scaling to [-1, 1], shape (2, N)."""

    name = "raw_iq"

    def __init__(self, trace_len: int = 256):
        self.trace_len = trace_len

    @property
    def input_shape(self):
        return (2, self.trace_len)

    @property
    def flat_dim(self) -> int:
        return 2 * self.trace_len

    def transform_batch(self, iq: np.ndarray) -> np.ndarray:
        return normalize_iq_array(iq)


class ConstellationModality:
    """2D-constellation grids, shape (1, K, K)."""

    name = "constellation"

    def __init__(self, k: int = DEFAULT_GRID_SIZE):
        self.k = k

    @property
    def input_shape(self):
        return (1, self.k, self.k)

    @property
    def flat_dim(self) -> int:
        return self.k * self.k

    def transform_batch(self, iq: np.ndarray) -> np.ndarray:
        grids = constellation_cells_batch(normalize_iq_array(iq), self.k)
        return grids[:, None, :, :]


def build_modality(name: str, trace_len: int = 256, k: int = DEFAULT_GRID_SIZE):
    if name in ("raw", "raw_iq"):
        return RawIQModality(trace_len)
    if name in ("const", "constellation"):
        return ConstellationModality(k)
    raise ValidationError(f"unknown modality {name!r}")
