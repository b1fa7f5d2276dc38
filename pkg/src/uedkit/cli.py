"""Command-line interface.

Subcommands: synth, train, crossval, sweep, interpret, report.  A JSON config
document (--config) supplies defaults for any option; explicit flags override
config keys, which override built-in defaults.  The default seed comes from
the UEDKIT_SEED environment variable when set.

Exit codes: 0 success, 2 validation error, 3 I/O or format error,
4 training error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness, interpret as interp, nn, ssl
from .dataio import read_dataset, write_dataset
from .errors import DataFormatError, TrainingError, ValidationError
from .metrics import reports_to_csv
from .modality import build_modality
from .rng import Rng
from .synth import ScenarioConfig, synth_dataset

SEED_ENV = "UEDKIT_SEED"


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _merged(args: argparse.Namespace, config_path: str | None) -> dict:
    """flag > config-file key > parser default."""
    merged = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                file_conf = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"bad config JSON: {exc}") from exc
        for key, value in file_conf.items():
            key = key.replace("-", "_")
            if key in merged and merged[key] is None:
                merged[key] = value
    return merged


def _opt(value, fallback):
    return fallback if value is None else value


def _build_protocol(opts, dataset, seed):
    kwargs = dict(
        epochs=int(_opt(opts.get("epochs"), 100)),
        eval_every=int(_opt(opts.get("eval_every"), 15)),
        feature_size=int(_opt(opts.get("feature_size"), 20)),
        detector_restarts=int(_opt(opts.get("detector_restarts"), 10)),
        tail_mass=float(_opt(opts.get("tail_mass"), 0.05)),
    )
    clusters = opts.get("clusters")
    if clusters is not None:
        kwargs["dmm_clusters"] = int(clusters)
    if opts["protocol"] == "sm":
        return harness.sm_protocol(dataset.emitter_ids, **kwargs)
    return harness.dm_protocol(dataset.emitter_ids, seed, **kwargs)


def _build_pipeline(opts):
    rotation = opts.get("rotation_set")
    if isinstance(rotation, str):
        rotation = tuple(float(v) for v in rotation.split(",")) if rotation else None
    return harness.PipelineConfig(
        extractor=_opt(opts.get("extractor"), "pca"),
        modality="raw_iq" if _opt(opts.get("modality"), "raw") in ("raw", "raw_iq") else "constellation",
        approach=_opt(opts.get("approach"), "pca"),
        svd_init=bool(_opt(opts.get("svd_init"), False)),
        feature_size=int(_opt(opts.get("feature_size"), 20)),
        grid_k=int(_opt(opts.get("grid_k"), 60)),
        kan_grid=opts.get("kan_grid"),
        batch_size=int(_opt(opts.get("batch_size"), 64)),
        lr=float(_opt(opts.get("lr"), 1e-3)),
        noise_std=float(_opt(opts.get("noise_std"), 0.05)),
        cl_temperature=float(_opt(opts.get("cl_temperature"), 0.5)),
        rotation_set=rotation,
    )


def cmd_synth(opts) -> int:
    cfg = ScenarioConfig(
        mode=opts["mode"],
        n_emitters=int(_opt(opts.get("emitters"), 6)),
        traces_per_emitter=int(_opt(opts.get("traces"), 200)),
        n_days=int(_opt(opts.get("days"), 1)),
        snr_db=float(_opt(opts.get("snr_db"), 25.0)),
        modulation=_opt(opts.get("modulation"), "qpsk"),
        trace_len=int(_opt(opts.get("trace_len"), 256)),
    )
    seed = int(_opt(opts.get("seed"), _default_seed()))
    dataset = synth_dataset(cfg, seed)
    write_dataset(opts["out"], dataset)
    print(f"wrote {len(dataset)} traces ({cfg.mode}) to {opts['out']}")
    return 0


def cmd_train(opts) -> int:
    dataset = read_dataset(opts["data"])
    seed = int(_opt(opts.get("seed"), _default_seed()))
    pipeline = _build_pipeline(opts)
    if pipeline.approach == "pca":
        raise ValidationError("the pca pipeline is training-free; use crossval to evaluate it")
    epochs = int(_opt(opts.get("epochs"), 100))
    eval_every = int(_opt(opts.get("eval_every"), 15))
    clusters = int(_opt(opts.get("clusters"), 80))
    unknown = opts.get("unknown")
    if unknown:
        from .dataio import SplitSpec, make_split

        split = make_split(dataset, SplitSpec(frozenset(int(e) for e in unknown.split(","))))
        train_set = dataset.subset(split.train_indices)
    else:
        train_set = dataset
    modality = build_modality(pipeline.modality, trace_len=dataset.trace_len, k=pipeline.grid_k)
    raw = train_set.iq.astype(np.float64)
    tensors = modality.transform_batch(raw)
    rng = Rng(seed)
    svd = None
    if pipeline.svd_init:
        from .numerics import svd_topk

        comps, _, mean = svd_topk(tensors.reshape(len(train_set), -1), pipeline.feature_size)
        svd = (comps, mean)
    config = nn.extractor_config(
        pipeline.kind,
        pipeline.modality,
        feature_size=pipeline.feature_size,
        trace_len=dataset.trace_len,
        grid_k=pipeline.grid_k,
        kan_grid=pipeline.kan_grid,
        svd_init=pipeline.svd_init,
    )
    model = nn.build_extractor(config, rng.derive("init"), svd=svd)
    cfg = ssl.TrainConfig(
        approach=pipeline.approach,
        epochs=epochs,
        eval_every=eval_every,
        batch_size=pipeline.batch_size,
        lr=pipeline.lr,
        dc_clusters=clusters,
        cl_temperature=pipeline.cl_temperature,
        noise_std=pipeline.noise_std,
        rotation_set=pipeline.rotation_set,
    )
    trng = rng.derive("train")
    if pipeline.approach == "dc":
        result = ssl.train_deep_clustering(model, tensors, cfg, trng)
    elif pipeline.approach == "ae":
        decoder = harness._build_decoder(pipeline, dataset.trace_len, rng.derive("decoder"), np.float32)
        result = ssl.train_autoencoder(model, decoder, tensors, cfg, trng)
    else:
        result = ssl.train_contrastive(model, raw, modality, cfg, trng)
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)
    for epoch, (params, stats) in result.checkpoints.items():
        nn.save_checkpoint(os.path.join(out_dir, f"epoch{epoch:04d}.uedm"), config, params, stats)
    with open(os.path.join(out_dir, "curve.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in result.curve:
            fh.write(f"{epoch},{loss!r}\n")
    print(f"trained {pipeline.label()} ({pipeline.approach}) for {epochs} epochs -> {out_dir}")
    return 0


def cmd_crossval(opts) -> int:
    dataset = read_dataset(opts["data"])
    seed = int(_opt(opts.get("seed"), _default_seed()))
    protocol = _build_protocol(opts, dataset, seed)
    pipeline = _build_pipeline(opts)
    reports = harness.run_protocol(protocol, dataset, pipeline, seed)
    summary = harness.write_reports(opts["out"], reports, protocol, pipeline, seed)
    print(
        f"best epoch {summary.epoch}: "
        f"ROC-AUC {summary.mean['roc_auc']:.1f}+/-{summary.std['roc_auc']:.1f}  "
        f"NMI {summary.mean['nmi']:.1f}+/-{summary.std['nmi']:.1f}  "
        f"F1 {summary.mean['f1']:.1f}+/-{summary.std['f1']:.1f}"
    )
    return 0


def cmd_sweep(opts) -> int:
    dataset = read_dataset(opts["data"])
    seed = int(_opt(opts.get("seed"), _default_seed()))
    counts = [int(v) for v in _opt(opts.get("counts"), "10,40,80,120,160,200,240").split(",")]
    protocol = _build_protocol(opts, dataset, seed)
    pipeline = _build_pipeline(dict(opts, extractor="pca", approach="pca"))
    sweep = harness.run_cluster_sweep(protocol, dataset, pipeline, counts, seed)
    os.makedirs(opts["out"], exist_ok=True)
    all_rows = [r for c in counts for r in sweep[c]]
    harness._atomic_write(os.path.join(opts["out"], "sweep.csv"), reports_to_csv(all_rows))
    for c in counts:
        mean_auc = float(np.mean([r.roc_auc for r in sweep[c]]))
        mean_nmi = float(np.mean([r.nmi for r in sweep[c]]))
        print(f"clusters {c:4d}: ROC-AUC {mean_auc:.1f}  NMI {mean_nmi:.1f}")
    return 0


def cmd_interpret(opts) -> int:
    model = nn.load_model(opts["checkpoint"])
    dataset = read_dataset(opts["data"])
    config = getattr(model, "config", {}) or {}
    modality_name = config.get("modality", _opt(opts.get("modality"), "raw_iq"))
    grid_k = int(config.get("grid_k", _opt(opts.get("grid_k"), 60)))
    modality = build_modality(modality_name, trace_len=dataset.trace_len, k=grid_k)
    tensors = modality.transform_batch(dataset.iq.astype(np.float64))
    what = opts["what"]
    out = opts["out"]
    if what == "lime":
        index = int(_opt(opts.get("index"), 0))
        seed = int(_opt(opts.get("seed"), _default_seed()))
        n_pert = int(_opt(opts.get("perturbations"), 4 * tensors[index].size))
        model_fit = interp.lime_fit(model, tensors[index], n_pert, rng=Rng(seed))
        interp.write_matrix_csv(out, model_fit.w, header=f"lime W ({model_fit.w.shape[0]}x{model_fit.w.shape[1]})")
    elif what == "nodes":
        importance = interp.kan_node_importance(model, tensors)
        interp.write_matrix_csv(out, importance.reshape(1, -1), header="node importance")
    elif what == "spline":
        i, j = (int(v) for v in _opt(opts.get("edge"), "0,0").split(","))
        x, psi = interp.kan_spline_export(model, (i, j), int(_opt(opts.get("points"), 256)))
        interp.write_spline_csv(out, x, psi)
    else:
        raise ValidationError(f"unknown interpret mode {what!r}")
    print(f"wrote {what} export to {out}")
    return 0


def cmd_report(opts) -> int:
    import csv as csv_mod

    rows = []
    for path in opts["reports"]:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows.extend(list(csv_mod.DictReader(fh)))
    if not rows:
        raise ValidationError("no report rows found")
    os.makedirs(opts["out"], exist_ok=True)
    groups = {}
    for row in rows:
        key = (row["approach"], row["extractor"], row["modality"], int(row["epoch"]))
        groups.setdefault(key, []).append(row)
    lines = ["approach,extractor,modality,epoch,n_folds,roc_auc_mean,roc_auc_std,nmi_mean,nmi_std,f1_mean,f1_std"]
    for key in sorted(groups):
        g = groups[key]
        stats = []
        for metric in ("roc_auc", "nmi", "f1"):
            vals = np.array([float(r[metric]) for r in g])
            stats += [vals.mean(), vals.std(ddof=1) if vals.size > 1 else 0.0]
        lines.append(",".join([key[0], key[1], key[2], str(key[3]), str(len(g))] + [repr(float(s)) for s in stats]))
    harness._atomic_write(os.path.join(opts["out"], "aggregate.csv"), "\n".join(lines) + "\n")
    # plot-data: mean metric per epoch per pipeline
    plot = ["pipeline,epoch,roc_auc,nmi,f1"]
    for key in sorted(groups):
        g = groups[key]
        plot.append(
            ",".join(
                [
                    f"{key[0]}-{key[1]}-{key[2]}",
                    str(key[3]),
                    repr(float(np.mean([float(r["roc_auc"]) for r in g]))),
                    repr(float(np.mean([float(r["nmi"]) for r in g]))),
                    repr(float(np.mean([float(r["f1"]) for r in g]))),
                ]
            )
        )
    harness._atomic_write(os.path.join(opts["out"], "plotdata.csv"), "\n".join(plot) + "\n")
    print(f"aggregated {len(rows)} rows from {len(opts['reports'])} file(s) -> {opts['out']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uedkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or 0)")

    p = sub.add_parser("synth", help="generate a synthetic dataset file")
    common(p)
    p.add_argument("--mode", choices=["sm", "dm"], required=True)
    p.add_argument("--emitters", type=int, default=None)
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--traces", type=int, default=None, help="traces per emitter per day")
    p.add_argument("--snr-db", type=float, default=None, dest="snr_db")
    p.add_argument("--modulation", choices=["qpsk", "qam16"], default=None)
    p.add_argument("--trace-len", type=int, default=None, dest="trace_len")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    def pipeline_flags(p):
        p.add_argument("--extractor", choices=["cnn", "kan", "pca"], default=None)
        p.add_argument("--modality", choices=["raw", "const"], default=None)
        p.add_argument("--approach", choices=["dc", "ae", "cl", "pca"], default=None)
        p.add_argument("--svd-init", action="store_const", const=True, default=None, dest="svd_init")
        p.add_argument("--feature-size", type=int, default=None, dest="feature_size")
        p.add_argument("--grid-k", type=int, default=None, dest="grid_k")
        p.add_argument("--kan-grid", type=int, default=None, dest="kan_grid")
        p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--noise-std", type=float, default=None, dest="noise_std")
        p.add_argument("--cl-temperature", type=float, default=None, dest="cl_temperature")
        p.add_argument("--rotation-set", default=None, dest="rotation_set",
                       help="comma-separated angles in radians")
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--eval-every", type=int, default=None, dest="eval_every")
        p.add_argument("--clusters", type=int, default=None)
        p.add_argument("--detector-restarts", type=int, default=None, dest="detector_restarts")
        p.add_argument("--tail-mass", type=float, default=None, dest="tail_mass")

    p = sub.add_parser("train", help="train one pipeline and save checkpoints")
    common(p)
    pipeline_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--unknown", default=None, help="comma-separated emitter ids to hold out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="run a full cross-validation protocol")
    common(p)
    pipeline_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", choices=["sm", "dm"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("sweep", help="PCA cluster-count sweep")
    common(p)
    pipeline_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", choices=["sm", "dm"], required=True)
    p.add_argument("--counts", default=None, help="comma-separated cluster counts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("interpret", help="LIME / KAN interpretability exports")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--what", choices=["lime", "nodes", "spline"], required=True)
    p.add_argument("--index", type=int, default=None, help="anchor trace index for lime")
    p.add_argument("--perturbations", type=int, default=None)
    p.add_argument("--edge", default=None, help="i,j edge for spline export")
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--modality", choices=["raw_iq", "constellation"], default=None)
    p.add_argument("--grid-k", type=int, default=None, dest="grid_k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("report", help="aggregate report CSVs")
    common(p)
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merged(args, args.config)
        return args.func(opts)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
