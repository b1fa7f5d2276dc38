"""Cross-validation harness: fold construction, pipeline runs, aggregation.

A protocol fixes the fold layout (leave-one-emitter-out for the same-message
scenario; five leave-two-out folds over a seed-shuffled emitter order for the
different-message scenario), the epoch budget, the eval-epoch grid (every
`eval_every` epochs plus the final one), and the detector's cluster count.

Per fold: split the dataset 80/20 per (emitter, day) in stored order, build
the modality tensors for the training half, optionally run the truncated SVD
on the flattened train tensors for SVD-initialised extractors and the PCA
baseline, train with the configured approach, then at every eval epoch fit
the cluster detector on train features and score the held-out set.  Nothing
derived from the test half is touched until training has finished, which
keeps the folds leakage-free by construction.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import Dataset, SplitSpec, make_split
from .detector import classify_batch, fit_detector
from .errors import ValidationError
from .metrics import EvalReport, config_digest, f1_binary, nmi, reports_to_csv, roc_auc
from .modality import build_modality
from .nn import build_extractor, count_flops, count_params, extractor_config
from .numerics import svd_topk
from .rng import Rng
from .ssl import (
    ROTATION_SET_QUARTER,
    TrainConfig,
    train_autoencoder,
    train_contrastive,
    train_deep_clustering,
)
from .nn.models import CnnDecoder, KanDecoder, cnn1d_config, cnn2d_config

SM_CLUSTERS = 80
DM_CLUSTERS = 200


@dataclass
class FoldSpec:
    fold_id: int
    unknown_emitters: tuple


@dataclass
class Protocol:
    scenario: str  # "sm" | "dm"
    folds: list
    epochs: int = 100
    eval_every: int = 15
    dmm_clusters: int = SM_CLUSTERS
    feature_size: int = 20
    train_fraction: float = 0.8
    detector_restarts: int = 10
    tail_mass: float = 0.05

    def eval_epochs(self) -> list:
        epochs = set(range(self.eval_every, self.epochs + 1, self.eval_every))
        epochs.add(self.epochs)
        return sorted(epochs)

    def describe(self) -> dict:
        d = asdict(self)
        d["folds"] = [
            {"fold_id": f.fold_id, "unknown_emitters": list(f.unknown_emitters)}
            for f in self.folds
        ]
        return d


def sm_protocol(emitter_ids, **overrides) -> Protocol:
    """One leave-one-out fold per emitter."""
    emitters = sorted(int(e) for e in np.unique(emitter_ids))
    if len(emitters) < 2:
        raise ValidationError("same-message protocol needs at least 2 emitters")
    folds = [FoldSpec(i, (e,)) for i, e in enumerate(emitters)]
    overrides.setdefault("dmm_clusters", SM_CLUSTERS)
    return Protocol(scenario="sm", folds=folds, **overrides)


def dm_protocol(emitter_ids, seed: int, n_folds: int = 5, **overrides) -> Protocol:
    """Shuffle emitters once, then hold out consecutive pairs: positions
    (0,1), (2,3), ... of the shuffled order."""
    emitters = np.array(sorted(int(e) for e in np.unique(emitter_ids)))
    if len(emitters) < 2 * n_folds:
        raise ValidationError(
            f"different-message protocol needs >= {2 * n_folds} emitters, got {len(emitters)}"
        )
    order = Rng(seed).derive("dm-fold-shuffle").shuffle(emitters)
    folds = [
        FoldSpec(i, (int(order[2 * i]), int(order[2 * i + 1]))) for i in range(n_folds)
    ]
    overrides.setdefault("dmm_clusters", DM_CLUSTERS)
    return Protocol(scenario="dm", folds=folds, **overrides)


@dataclass
class PipelineConfig:
    extractor: str  # "cnn" | "kan" | "pca"
    modality: str  # "raw_iq" | "constellation"
    approach: str  # "dc" | "ae" | "cl" | "pca"
    svd_init: bool = False
    feature_size: int = 20
    grid_k: int = 60
    kan_grid: int = None
    batch_size: int = 64
    lr: float = 1e-3
    noise_std: float = 0.05
    cl_temperature: float = 0.5
    rotation_set: tuple = None  # default: quarter turns on constellation, none on raw
    dtype: str = "float32"

    def __post_init__(self):
        if self.approach == "pca" and self.extractor != "pca":
            raise ValidationError("the pca approach uses the pca extractor")
        if self.extractor == "pca" and self.approach != "pca":
            raise ValidationError("the pca extractor is training-free")
        if self.rotation_set is None:
            self.rotation_set = (
                ROTATION_SET_QUARTER if self.modality == "constellation" else (0.0,)
            )
        else:
            self.rotation_set = tuple(self.rotation_set)

    @property
    def kind(self) -> str:
        if self.extractor == "cnn":
            return "cnn1d" if self.modality == "raw_iq" else "cnn2d"
        return self.extractor

    def label(self) -> str:
        name = self.kind
        if self.svd_init:
            name += "+svd"
        return name

    def describe(self) -> dict:
        d = asdict(self)
        d["rotation_set"] = list(self.rotation_set)
        return d


def _build_decoder(pipeline: PipelineConfig, trace_len: int, rng: Rng, dtype):
    if pipeline.kind == "cnn1d":
        return CnnDecoder(cnn1d_config(trace_len, pipeline.feature_size), rng, dtype)
    if pipeline.kind == "cnn2d":
        return CnnDecoder(cnn2d_config(pipeline.grid_k, pipeline.feature_size), rng, dtype)
    # KAN decoder: single layer back to the flattened input
    from .nn.checkpoint import KAN_GRID_CONSTELLATION, KAN_GRID_RAW

    if pipeline.modality == "raw_iq":
        shape, grid = (2, trace_len), KAN_GRID_RAW
    else:
        shape, grid = (1, pipeline.grid_k, pipeline.grid_k), KAN_GRID_CONSTELLATION
    return KanDecoder(shape, grid, rng, pipeline.feature_size, dtype)


def run_fold(
    protocol: Protocol,
    dataset: Dataset,
    pipeline: PipelineConfig,
    fold: FoldSpec,
    seed: int,
    collect_artifacts: bool = False,
):
    """Reports for one fold; optionally also the train-side artifacts
    (checkpoints and detector tables) for audit tests."""
    modality = build_modality(
        pipeline.modality, trace_len=dataset.trace_len, k=pipeline.grid_k
    )
    split = make_split(
        dataset,
        SplitSpec(
            unknown_emitters=frozenset(fold.unknown_emitters),
            train_fraction_per_day=protocol.train_fraction,
            fold_id=fold.fold_id,
        ),
    )
    frng = Rng(seed).derive("fold", fold.fold_id)
    train_tensors = modality.transform_batch(dataset.iq[split.train_indices].astype(np.float64))
    n_train = train_tensors.shape[0]

    svd = None
    if pipeline.svd_init or pipeline.extractor == "pca":
        comps, _, mean = svd_topk(
            train_tensors.reshape(n_train, -1), protocol.feature_size
        )
        svd = (comps, mean)

    config = extractor_config(
        pipeline.kind,
        pipeline.modality,
        feature_size=protocol.feature_size,
        trace_len=dataset.trace_len,
        grid_k=pipeline.grid_k,
        kan_grid=pipeline.kan_grid,
        svd_init=pipeline.svd_init,
        dtype=pipeline.dtype,
    )
    model = build_extractor(config, frng.derive("init"), svd=svd)
    dtype = np.dtype(pipeline.dtype).type

    checkpoints = None
    if pipeline.approach != "pca":
        cfg = TrainConfig(
            approach=pipeline.approach,
            epochs=protocol.epochs,
            eval_every=protocol.eval_every,
            batch_size=pipeline.batch_size,
            lr=pipeline.lr,
            dc_clusters=protocol.dmm_clusters,
            cl_temperature=pipeline.cl_temperature,
            noise_std=pipeline.noise_std,
            rotation_set=pipeline.rotation_set,
        )
        trng = frng.derive("train")
        if pipeline.approach == "dc":
            result = train_deep_clustering(model, train_tensors, cfg, trng)
        elif pipeline.approach == "ae":
            decoder = _build_decoder(pipeline, dataset.trace_len, frng.derive("decoder"), dtype)
            result = train_autoencoder(model, decoder, train_tensors, cfg, trng)
        elif pipeline.approach == "cl":
            raw_train = dataset.iq[split.train_indices].astype(np.float64)
            result = train_contrastive(model, raw_train, modality, cfg, trng)
        else:
            raise ValidationError(f"unknown approach {pipeline.approach!r}")
        checkpoints = result.checkpoints

    # test tensors are only built now, after training
    test_tensors = modality.transform_batch(dataset.iq[split.test_indices].astype(np.float64))
    test_emitters = dataset.emitter_ids[split.test_indices]
    counts = count_params(model)
    flops = count_flops(model)
    digest = config_digest({"pipeline": pipeline.describe(), "protocol": protocol.describe()})

    reports = []
    artifacts = {"checkpoints": checkpoints, "detectors": []} if collect_artifacts else None
    pca_cached = None
    for epoch in protocol.eval_epochs():
        if checkpoints is not None:
            params, stats = checkpoints[epoch]
            model.set_param_vector(params)
            model.set_stats_vector(stats)
        elif pca_cached is not None:
            reports.append(
                EvalReport(**{**pca_cached, "epoch": epoch})
            )
            continue
        train_feats = model.extract(train_tensors).astype(np.float64)
        det = fit_detector(
            train_feats,
            protocol.dmm_clusters,
            frng.derive("detector", epoch),
            tail_mass=protocol.tail_mass,
            n_restarts=protocol.detector_restarts,
        )
        if collect_artifacts:
            artifacts["detectors"].append((epoch, det))
        test_feats = model.extract(test_tensors).astype(np.float64)
        decisions, scores = classify_batch(det, test_feats)
        clusters = np.array([d.cluster for d in decisions])
        pred = np.array([d.label for d in decisions], dtype=np.uint8)
        row = dict(
            fold=fold.fold_id,
            epoch=epoch,
            approach=pipeline.approach,
            extractor=pipeline.label(),
            modality=pipeline.modality,
            roc_auc=100.0 * roc_auc(scores, split.test_labels),
            nmi=100.0 * nmi(clusters, test_emitters),
            f1=100.0 * f1_binary(pred, split.test_labels),
            params=counts.total,
            flops=flops,
            seed=seed,
            digest=digest,
        )
        reports.append(EvalReport(**row))
        if checkpoints is None and pca_cached is None:
            pca_cached = dict(row)
    if collect_artifacts:
        return reports, artifacts
    return reports


def run_protocol(protocol: Protocol, dataset: Dataset, pipeline: PipelineConfig, seed: int):
    emitters = set(int(e) for e in np.unique(dataset.emitter_ids))
    for fold in protocol.folds:
        if not set(fold.unknown_emitters) <= emitters:
            raise ValidationError(
                f"fold {fold.fold_id} holds out emitters missing from the dataset"
            )
    reports = []
    for fold in protocol.folds:
        reports.extend(run_fold(protocol, dataset, pipeline, fold, seed))
    return reports


@dataclass
class EpochSummary:
    epoch: int
    mean: dict
    std: dict  # sample standard deviation across folds
    n_folds: int


def select_best_epoch(reports) -> EpochSummary:
    """Argmax over eval epochs of mean ROC-AUC across folds (ties: earliest
    epoch); means and sample standard deviations for all three metrics."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    by_epoch = {}
    for r in reports:
        by_epoch.setdefault(r.epoch, []).append(r)
    fold_sets = {e: {r.fold for r in rs} for e, rs in by_epoch.items()}
    all_folds = set.union(*fold_sets.values())
    for epoch, folds in sorted(fold_sets.items()):
        if folds != all_folds:
            raise ValidationError(f"epoch {epoch} is missing folds {sorted(all_folds - folds)}")
    best = None
    for epoch in sorted(by_epoch):
        mean_auc = float(np.mean([r.roc_auc for r in by_epoch[epoch]]))
        if best is None or mean_auc > best[1]:
            best = (epoch, mean_auc)
    epoch = best[0]
    rows = by_epoch[epoch]
    mean, std = {}, {}
    for key in ("roc_auc", "nmi", "f1"):
        vals = np.array([getattr(r, key) for r in rows])
        mean[key] = float(vals.mean())
        std[key] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return EpochSummary(epoch=epoch, mean=mean, std=std, n_folds=len(rows))


def run_cluster_sweep(
    protocol: Protocol, dataset: Dataset, pipeline: PipelineConfig, cluster_counts, seed: int
):
    """PCA features held fixed per fold; only the detector is refit per count."""
    if pipeline.approach != "pca":
        raise ValidationError("the cluster sweep runs on the training-free PCA pipeline")
    modality = build_modality(pipeline.modality, trace_len=dataset.trace_len, k=pipeline.grid_k)
    out = {int(c): [] for c in cluster_counts}
    digest = config_digest({"pipeline": pipeline.describe(), "protocol": protocol.describe()})
    for fold in protocol.folds:
        split = make_split(
            dataset,
            SplitSpec(
                frozenset(fold.unknown_emitters), protocol.train_fraction, fold.fold_id
            ),
        )
        frng = Rng(seed).derive("fold", fold.fold_id)
        train_tensors = modality.transform_batch(
            dataset.iq[split.train_indices].astype(np.float64)
        )
        n_train = train_tensors.shape[0]
        comps, _, mean_vec = svd_topk(train_tensors.reshape(n_train, -1), protocol.feature_size)
        config = extractor_config(
            "pca",
            pipeline.modality,
            feature_size=protocol.feature_size,
            trace_len=dataset.trace_len,
            grid_k=pipeline.grid_k,
        )
        model = build_extractor(config, frng.derive("init"), svd=(comps, mean_vec))
        train_feats = model.extract(train_tensors)
        test_tensors = modality.transform_batch(
            dataset.iq[split.test_indices].astype(np.float64)
        )
        test_feats = model.extract(test_tensors)
        test_emitters = dataset.emitter_ids[split.test_indices]
        counts = count_params(model)
        flops = count_flops(model)
        for c in cluster_counts:
            if c > n_train:
                raise ValidationError(f"{c} clusters exceed the {n_train} train samples")
            det = fit_detector(
                train_feats,
                int(c),
                frng.derive("detector", int(c)),
                tail_mass=protocol.tail_mass,
                n_restarts=protocol.detector_restarts,
            )
            decisions, scores = classify_batch(det, test_feats)
            clusters = np.array([d.cluster for d in decisions])
            pred = np.array([d.label for d in decisions], dtype=np.uint8)
            out[int(c)].append(
                EvalReport(
                    fold=fold.fold_id,
                    epoch=protocol.epochs,
                    approach="pca",
                    extractor=f"pca@{int(c)}",
                    modality=pipeline.modality,
                    roc_auc=100.0 * roc_auc(scores, split.test_labels),
                    nmi=100.0 * nmi(clusters, test_emitters),
                    f1=100.0 * f1_binary(pred, split.test_labels),
                    params=counts.total,
                    flops=flops,
                    seed=seed,
                    digest=digest,
                )
            )
    return out


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_reports(out_dir, reports, protocol: Protocol, pipeline: PipelineConfig, seed: int):
    """reports.csv with every row plus summary.json with the best-epoch
    aggregate; files are written atomically and byte-stable for a fixed
    (dataset, config, seed)."""
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(os.path.join(out_dir, "reports.csv"), reports_to_csv(reports))
    summary = select_best_epoch(reports)
    payload = {
        "best_epoch": summary.epoch,
        "mean": summary.mean,
        "std": summary.std,
        "n_folds": summary.n_folds,
        "seed": seed,
        "digest": config_digest(
            {"pipeline": pipeline.describe(), "protocol": protocol.describe()}
        ),
        "pipeline": pipeline.describe(),
        "protocol": protocol.describe(),
    }
    _atomic_write(
        os.path.join(out_dir, "summary.json"),
        json.dumps(payload, indent=2, sort_keys=True) + "\n",
    )
    return summary
