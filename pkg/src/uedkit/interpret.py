"""Interpretability exports: LIME local-linear fits, KAN edge/node importance,
spline curve sampling.

LIME here is a plain least-squares fit of F(x + dx) - F(x) against Gaussian
perturbations dx (no locality kernel: the perturbations are already local,
sized to `scale` of the anchor's norm).  The intercept is pinned to F(x).

KAN importance statistics: the importance of edge (i, j) is the mean of
|psi_ij(x_i)| over the reference data; node importance sums that over output
features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .modality import kan_input_scale_grid
from .nn.kan import KanLayer
from .nn.models import FeatureExtractor, KanEncoder
from .rng import Rng


@dataclass
class LocalLinearModel:
    w: np.ndarray  # (d, n_in)
    intercept: np.ndarray  # (d,) == F(anchor)
    anchor: np.ndarray
    scale: float


def lime_fit(extractor, x: np.ndarray, n_perturbations: int = 2048,
             scale: float = 0.01, rng: Rng | None = None) -> LocalLinearModel:
    """Local linear surrogate of any extractor around anchor `x`."""
    if scale <= 0:
        raise ValidationError("perturbation scale must be positive")
    x = np.asarray(x, dtype=np.float64)
    n_in = x.size
    if n_perturbations < n_in:
        raise ValidationError(
            f"{n_perturbations} perturbations underdetermine a {n_in}-input fit"
        )
    rng = rng or Rng(0)
    anchor_norm = float(np.linalg.norm(x))
    sigma = scale * (anchor_norm / np.sqrt(n_in)) if anchor_norm > 0 else scale
    deltas = rng.normal(size=(n_perturbations, n_in), std=sigma)
    batch = np.concatenate([x.reshape(1, -1), x.reshape(1, -1) + deltas]).reshape(
        (n_perturbations + 1,) + x.shape
    )
    feats = extractor.extract(batch).astype(np.float64)
    intercept = feats[0]
    responses = feats[1:] - intercept
    solution, *_ = np.linalg.lstsq(deltas, responses, rcond=None)
    return LocalLinearModel(w=solution.T, intercept=intercept, anchor=x.copy(), scale=scale)


def find_kan_layer(model) -> KanLayer:
    if isinstance(model, KanLayer):
        return model
    if isinstance(model, KanEncoder):
        return model.layer
    if isinstance(model, FeatureExtractor) and isinstance(model.base, KanEncoder):
        return model.base.layer
    raise ValidationError(f"{type(model).__name__} has no KAN layer")


def kan_layer_inputs(model, inputs: np.ndarray) -> np.ndarray:
    """Map modality tensors to the KAN layer's domain (flatten + occupancy stretch)."""
    flat = np.asarray(inputs, dtype=np.float64).reshape(inputs.shape[0], -1)
    enc = model if isinstance(model, KanEncoder) else None
    if isinstance(model, FeatureExtractor) and isinstance(model.base, KanEncoder):
        enc = model.base
    if enc is not None and enc.constellation:
        flat = kan_input_scale_grid(flat, int(np.sqrt(flat.shape[1])))
    return flat


def kan_edge_importance(model, reference_inputs: np.ndarray, chunk: int = 128) -> np.ndarray:
    """Mean |psi_ij| over the reference data: (n_out, n_in)."""
    layer = find_kan_layer(model)
    data = kan_layer_inputs(model, reference_inputs)
    if data.shape[0] == 0:
        raise ValidationError("reference data must be non-empty")
    acc = np.zeros((layer.cfg.n_out, layer.cfg.n_in))
    for start in range(0, data.shape[0], chunk):
        acc += np.abs(layer.edge_values(data[start : start + chunk])).sum(axis=0)
    return acc / data.shape[0]


def kan_node_importance(model, reference_inputs: np.ndarray) -> np.ndarray:
    """importance(i) = sum_j mean |psi_ij(x_i)| over the reference data."""
    return kan_edge_importance(model, reference_inputs).sum(axis=0)


def important_edges(edge_importance: np.ndarray, prune_threshold: float):
    """Split edges at the prune threshold: (kept (j,i) pairs, pruned pairs)."""
    keep = np.argwhere(edge_importance >= prune_threshold)
    drop = np.argwhere(edge_importance < prune_threshold)
    return [tuple(e) for e in keep], [tuple(e) for e in drop]


def kan_spline_export(model, edge: tuple, n_points: int = 256):
    """Sample psi_ij over the domain for plotting: returns (x, psi(x))."""
    layer = find_kan_layer(model)
    i, j = edge
    if not (0 <= i < layer.cfg.n_in and 0 <= j < layer.cfg.n_out):
        raise ValidationError(f"edge {edge} out of range")
    if n_points < 2:
        raise ValidationError("need at least 2 sample points")
    x = np.linspace(layer.cfg.domain[0], layer.cfg.domain[1], n_points)
    grid = np.zeros((n_points, layer.cfg.n_in))
    grid[:, i] = x
    psi = layer.edge_values(grid)[:, j, i]
    return x, psi


def write_matrix_csv(path, matrix: np.ndarray, header: str) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_spline_csv(path, x: np.ndarray, psi: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,psi\n")
        for xv, pv in zip(x, psi):
            fh.write(f"{xv!r},{pv!r}\n")
