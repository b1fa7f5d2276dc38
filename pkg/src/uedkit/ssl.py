"""Self-supervised trainers: Deep Clustering, Auto-Encoder, Contrastive.

All three iterate minibatch Adam over a feature extractor:

* Deep Clustering alternates, once per epoch: extract all train features in
  eval mode, K-means them into `dc_clusters` pseudo-labels (one restart),
  reinitialise the linear classification head, then run one pass of
  cross-entropy updates over extractor + head.
* Auto-Encoder minimises mean-squared reconstruction error through a mirrored
  decoder.
* Contrastive builds two augmented views per sample (Gaussian noise always;
  an I/Q-plane rotation drawn from `rotation_set` when it has more than one
  element, applied to the raw points before the modality transform) and
  minimises NT-Xent over cosine similarities at temperature `cl_temperature`.

Checkpoints (parameter vector + batch-norm stats) are captured at every
multiple of `eval_every` and at the final epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import TrainingError, ValidationError
from .modality import ConstellationModality
from .nn import engine
from .nn.engine import Tensor
from .nn.losses import cross_entropy, mse
from .nn.optim import Adam
from .numerics import assign_batch, kmeans_fit
from .rng import Rng

ROTATION_SET_QUARTER = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)
ROTATION_SET_PAPER = (0.0, math.pi, 2.0 * math.pi, 3.0 * math.pi)


@dataclass
class TrainConfig:
    approach: str  # "dc" | "ae" | "cl"
    epochs: int = 100
    eval_every: int = 15
    batch_size: int = 64
    lr: float = 1e-3
    dc_clusters: int = 80
    cl_temperature: float = 0.5
    noise_std: float = 0.05
    rotation_set: tuple = (0.0,)

    def __post_init__(self):
        if not self.epochs >= self.eval_every >= 1:
            raise ValidationError("need epochs >= eval_every >= 1")
        if self.cl_temperature <= 0:
            raise ValidationError("temperature must be positive")

    def eval_epochs(self) -> list:
        epochs = set(range(self.eval_every, self.epochs + 1, self.eval_every))
        epochs.add(self.epochs)
        return sorted(epochs)


@dataclass
class TrainResult:
    extractor: object
    checkpoints: dict  # epoch -> (param vector, bn stats vector)
    curve: list  # (epoch, mean loss)
    pseudo_labels: dict = field(default_factory=dict)  # DC only: epoch -> labels


def augment_noise(x: np.ndarray, std: float, rng: Rng, kind: str = "raw_iq") -> np.ndarray:
    """i.i.d. Gaussian noise per scalar; constellation grids are clipped at 0."""
    if std < 0:
        raise ValidationError("noise std must be non-negative")
    if std == 0:
        return x
    noisy = x + rng.normal(size=x.shape, std=std).astype(x.dtype)
    if kind == "constellation":
        np.maximum(noisy, 0.0, out=noisy)
    return noisy


def augment_rotate(iq: np.ndarray, angle: float) -> np.ndarray:
    """Rotate I/Q points by `angle` radians: (I + jQ) * exp(j*angle)."""
    iq = np.asarray(iq)
    c, s = math.cos(angle), math.sin(angle)
    out = np.empty_like(iq)
    out[..., 0, :] = c * iq[..., 0, :] - s * iq[..., 1, :]
    out[..., 1, :] = s * iq[..., 0, :] + c * iq[..., 1, :]
    return out


def contrastive_loss(h1, h2, temperature: float = 0.5) -> Tensor:
    """NT-Xent over the 2n views; positives are sibling views.

    For each anchor the denominator runs over the other 2n - 1 views.
    Accepts arrays or engine tensors; returns a scalar tensor.
    """
    h1, h2 = engine.as_tensor(h1), engine.as_tensor(h2)
    n = h1.shape[0]
    if n < 2 or h2.shape[0] != n:
        raise ValidationError("need matching view batches with at least 2 rows")
    for h in (h1, h2):
        norms = np.sqrt((h.data.astype(np.float64) ** 2).sum(axis=1))
        if np.any(norms == 0.0):
            raise ValidationError("zero-norm feature row in contrastive loss")
    z = engine.concat([h1, h2], axis=0)
    inv_norm = engine.pow_const(engine.tsum(engine.mul(z, z), axis=1, keepdims=True), -0.5)
    z = engine.mul(z, inv_norm)
    sim = engine.matmul(z, engine.transpose(z)) * (1.0 / temperature)
    mask = (-1e9 * np.eye(2 * n)).astype(sim.dtype)
    sim = sim + mask
    pos = np.concatenate([np.arange(n) + n, np.arange(n)])
    return engine.tmean(engine.logsumexp(sim, axis=1) - engine.pick(sim, pos))


def _batches(n: int, batch_size: int, rng: Rng, min_size: int = 1):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        if idx.size >= min_size:
            yield idx


def _capture(model) -> tuple:
    return model.param_vector().copy(), model.stats_vector().copy()


def _check_loss(value: float, batch_index: int):
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value}", batch_index=batch_index)


def train_deep_clustering(extractor, inputs: np.ndarray, cfg: TrainConfig, rng: Rng) -> TrainResult:
    n = inputs.shape[0]
    if n == 0:
        raise ValidationError("empty training set")
    if cfg.dc_clusters > n:
        raise ValidationError("more pseudo-clusters than training samples")
    dtype = extractor.param_vector().dtype
    inputs = inputs.astype(dtype, copy=False)
    opt_model = Adam(extractor.params(), lr=cfg.lr)
    result = TrainResult(extractor, {}, [], {})
    for epoch in range(1, cfg.epochs + 1):
        feats = extractor.extract(inputs).astype(np.float64)
        km = kmeans_fit(feats, cfg.dc_clusters, rng.derive("pseudo", epoch))
        labels, _ = assign_batch(km, feats)
        result.pseudo_labels[epoch] = labels.copy()
        head = nn.Linear(extractor.feature_size, cfg.dc_clusters, rng.derive("head", epoch), dtype)
        opt_head = Adam(head.params(), lr=cfg.lr)
        losses = []
        for b, idx in enumerate(_batches(n, cfg.batch_size, rng.derive("shuffle", epoch))):
            logits = head(extractor(Tensor(inputs[idx]), train=True))
            loss = cross_entropy(logits, labels[idx])
            _check_loss(loss.item(), b)
            loss.backward()
            opt_model.step(b)
            opt_head.step(b)
            losses.append(loss.item())
        result.curve.append((epoch, float(np.mean(losses))))
        if epoch in cfg.eval_epochs():
            result.checkpoints[epoch] = _capture(extractor)
    return result


def train_autoencoder(extractor, decoder, inputs: np.ndarray, cfg: TrainConfig, rng: Rng) -> TrainResult:
    n = inputs.shape[0]
    if n == 0:
        raise ValidationError("empty training set")
    dtype = extractor.param_vector().dtype
    inputs = inputs.astype(dtype, copy=False)
    opt = Adam(extractor.params() + decoder.params(), lr=cfg.lr)
    result = TrainResult(extractor, {}, [])
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for b, idx in enumerate(_batches(n, cfg.batch_size, rng.derive("shuffle", epoch))):
            batch = Tensor(inputs[idx])
            recon = decoder(extractor(batch, train=True), train=True)
            loss = mse(recon, inputs[idx])
            _check_loss(loss.item(), b)
            loss.backward()
            opt.step(b)
            losses.append(loss.item())
        result.curve.append((epoch, float(np.mean(losses))))
        if epoch in cfg.eval_epochs():
            result.checkpoints[epoch] = _capture(extractor)
    return result


def _make_view(raw_batch: np.ndarray, modality, cfg: TrainConfig, rng: Rng) -> np.ndarray:
    rotated = raw_batch
    if len(cfg.rotation_set) > 1:
        angles = np.asarray(cfg.rotation_set)[rng.integers(len(cfg.rotation_set), size=raw_batch.shape[0])]
        rotated = np.empty_like(raw_batch)
        for a in np.unique(angles):
            sel = angles == a
            rotated[sel] = augment_rotate(raw_batch[sel], float(a))
    elif cfg.rotation_set and cfg.rotation_set[0] != 0.0:
        rotated = augment_rotate(raw_batch, cfg.rotation_set[0])
    tensors = modality.transform_batch(rotated)
    kind = "constellation" if isinstance(modality, ConstellationModality) else "raw_iq"
    return augment_noise(tensors, cfg.noise_std, rng.derive("noise"), kind)


def train_contrastive(extractor, raw_iq: np.ndarray, modality, cfg: TrainConfig, rng: Rng) -> TrainResult:
    """`raw_iq` is the (n, 2, L) unnormalised trace stack; views are built by
    rotating raw points, applying the modality transform, then adding noise."""
    n = raw_iq.shape[0]
    if cfg.batch_size < 2:
        raise ValidationError("contrastive training needs batch_size >= 2")
    if n < 2:
        raise ValidationError("contrastive training needs at least 2 samples")
    dtype = extractor.param_vector().dtype
    raw_iq = np.asarray(raw_iq, dtype=np.float64)
    opt = Adam(extractor.params(), lr=cfg.lr)
    result = TrainResult(extractor, {}, [])
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        batch_rng = rng.derive("views", epoch)
        for b, idx in enumerate(_batches(n, cfg.batch_size, rng.derive("shuffle", epoch), min_size=2)):
            v1 = _make_view(raw_iq[idx], modality, cfg, batch_rng.derive(b, 0)).astype(dtype)
            v2 = _make_view(raw_iq[idx], modality, cfg, batch_rng.derive(b, 1)).astype(dtype)
            h1 = extractor(Tensor(v1), train=True)
            h2 = extractor(Tensor(v2), train=True)
            loss = contrastive_loss(h1, h2, cfg.cl_temperature)
            _check_loss(loss.item(), b)
            loss.backward()
            opt.step(b)
            losses.append(loss.item())
        result.curve.append((epoch, float(np.mean(losses))))
        if epoch in cfg.eval_epochs():
            result.checkpoints[epoch] = _capture(extractor)
    return result
