"""Training losses on engine tensors."""

from __future__ import annotations

import numpy as np

from . import engine
from .engine import Tensor


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy; labels are integer class ids."""
    lse = engine.logsumexp(logits, axis=1)
    picked = engine.pick(logits, np.asarray(labels, dtype=np.int64))
    return engine.tmean(lse - picked)


def mse(pred: Tensor, target) -> Tensor:
    diff = pred - engine.as_tensor(target)
    return engine.tmean(engine.mul(diff, diff))
