"""Evaluation metrics and the per-run report record.

Conventions: ROC-AUC is the Mann-Whitney statistic (ties get half credit);
NMI uses natural logs and normalises mutual information by the arithmetic
mean of the two entropies, with 0/0 defined as 0; F1 scores the unknown
class (label 1) and is 0 when precision + recall is 0.  The metric functions
return fractions in [0, 1]; `EvalReport` stores percentages to match the
published tables.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError, ValidationError


def roc_auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be 1-D arrays of equal length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty_like(scores)
    ranks[order] = np.arange(1, scores.size + 1, dtype=np.float64)
    # average ranks over tied groups
    sorted_scores = scores[order]
    boundaries = np.flatnonzero(np.diff(sorted_scores) != 0) + 1
    starts = np.concatenate([[0], boundaries])
    stops = np.concatenate([boundaries, [scores.size]])
    for a, b in zip(starts, stops):
        if b - a > 1:
            ranks[order[a:b]] = 0.5 * (a + 1 + b)
    rank_sum = ranks[labels == 1].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(assignments, truth) -> float:
    """Mutual information normalised by the arithmetic mean of entropies."""
    assignments = np.asarray(assignments)
    truth = np.asarray(truth)
    if assignments.shape != truth.shape or assignments.ndim != 1 or assignments.size < 1:
        raise ValidationError("assignments and truth must be 1-D arrays of equal length")
    _, ai = np.unique(assignments, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    n = assignments.size
    table = np.zeros((ai.max() + 1, ti.max() + 1))
    np.add.at(table, (ai, ti), 1.0)
    ha = _entropy(table.sum(axis=1))
    ht = _entropy(table.sum(axis=0))
    if ha == 0.0 and ht == 0.0:
        return 0.0
    pij = table / n
    pa = table.sum(axis=1, keepdims=True) / n
    pt = table.sum(axis=0, keepdims=True) / n
    mask = pij > 0
    mi = float((pij[mask] * np.log(pij[mask] / (pa @ pt)[mask])).sum())
    return mi / (0.5 * (ha + ht))


def f1_binary(pred, labels) -> float:
    """F1 of the unknown class (1)."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValidationError("pred and labels must have equal shape")
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def config_digest(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


REPORT_COLUMNS = (
    "fold",
    "epoch",
    "approach",
    "extractor",
    "modality",
    "roc_auc",
    "nmi",
    "f1",
    "params",
    "flops",
)


@dataclass
class EvalReport:
    """Metrics (percentages) for one fold at one eval epoch."""

    fold: int
    epoch: int
    approach: str
    extractor: str
    modality: str
    roc_auc: float
    nmi: float
    f1: float
    params: int
    flops: int
    seed: int = 0
    digest: str = ""

    def csv_row(self) -> str:
        vals = [getattr(self, c) for c in REPORT_COLUMNS]
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in vals)

    def to_dict(self) -> dict:
        d = {c: getattr(self, c) for c in REPORT_COLUMNS}
        d["seed"] = self.seed
        d["digest"] = self.digest
        return d


def reports_to_csv(reports) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"
