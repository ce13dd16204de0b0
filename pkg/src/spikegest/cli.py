"""Command-line entry point: ``spikegest <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import report_from_confusion
from .config import ConfigError, load_config
from .pipeline import (
    PipelineError,
    cluster_layout,
    dataset_features,
    encode_dataset,
    load_dataset,
    synth_extras,
    report_confusion,
    run_pipeline,
    sweep_clusters,
    train_eval_from_features,
    write_assignment,
    write_confusion,
    write_curve,
    write_features,
    write_sweep,
)
from .signal_io import synthetic_trials, write_recording
from .spike_encoding import write_raster

log = logging.getLogger("spikegest")


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_seeds(
        seed_data=args.seed_data,
        seed_cluster=args.seed_cluster,
        seed_kernel=args.seed_kernel,
        seed_split=args.seed_split,
    )


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = _config(args)
    if cfg.synth_classes is None:
        raise ConfigError("synth requires the synth_* keys")
    counts = cfg.synth_trials_per_class
    trials, layout = synthetic_trials(
        cfg.synth_classes,
        cfg.synth_channels,
        counts[0] if len(counts) == 1 else counts,
        cfg.window_len,
        cfg.seed_data,
        noise=cfg.synth_noise,
        n_blobs=cfg.synth_blobs,
        **synth_extras(cfg),
        sample_rate=cfg.sample_rate,
    )
    paths = write_recording(trials, layout, _out(args), gap=args.gap)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_encode(args) -> int:
    cfg = _config(args)
    ds = load_dataset(cfg)
    if not 0 <= args.sample < len(ds):
        raise ValueError(f"sample index {args.sample} outside 0..{len(ds) - 1}")
    ds.samples = [ds.samples[args.sample]]
    raster = encode_dataset(ds, cfg.theta_th)[0]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_raster(raster, out, ds.layout.channel_ids)
    print(f"sample {ds.samples[0].id}: {int(np.abs(raster).sum())} spikes -> {out}")
    return 0


def cmd_cluster(args) -> int:
    cfg = _config(args)
    ds = load_dataset(cfg)
    clusters, curve = cluster_layout(cfg, ds)
    out = _out(args)
    write_assignment(out / "assignment.csv", ds.layout.channel_ids, clusters)
    if curve is not None:
        write_curve(out / "wcss.csv", curve)
    print(f"n_clusters={clusters.n_clusters} sizes={clusters.sizes()} wcss={clusters.wcss:.6g}")
    if min(clusters.sizes()) < 3:
        print("warning: some clusters have fewer than 3 channels; feature extraction will fail")
    return 0


def cmd_features(args) -> int:
    cfg = _config(args)
    ds = load_dataset(cfg)
    rasters = encode_dataset(ds, cfg.theta_th)
    clusters, _ = cluster_layout(cfg, ds)
    features = dataset_features(cfg, ds, rasters, clusters, workers=args.workers)
    out = _out(args)
    write_assignment(out / "assignment.csv", ds.layout.channel_ids, clusters)
    write_features(out / "features.csv", [s.id for s in ds.samples], ds.labels, features)
    print(f"{features.shape[0]} samples x {features.shape[1]} features -> {out / 'features.csv'}")
    return 0


def cmd_train_eval(args) -> int:
    cfg = _config(args)
    report = train_eval_from_features(cfg, args.features)
    out = _out(args)
    (out / "report.json").write_text(report.to_json())
    write_confusion(out, report.combined, report.classes)
    print(f"accuracy {report.mean_accuracy:.4f} +/- {report.std_accuracy:.4f} "
          f"over {len(report.splits)} splits")
    return 0


def _k_range(text: str) -> list[int]:
    if "-" in text:
        lo, hi = (int(v) for v in text.split("-", 1))
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",")]


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = sweep_clusters(cfg, _k_range(args.k_range))
    out = _out(args)
    write_sweep(out / "sweep.csv", rows)
    for r in rows:
        if r.feasible:
            print(f"n_c={r.n_clusters:3d}  accuracy {r.accuracy_mean:.4f} +/- {r.accuracy_std:.4f}")
        else:
            print(f"n_c={r.n_clusters:3d}  infeasible ({r.reason})")
    return 0


def cmd_confusion(args) -> int:
    data = json.loads(Path(args.report).read_text())
    report = report_from_confusion(np.array(data["confusion"]))
    names = args.classes.split(",") if args.classes else data["classes"]
    rows, text = report_confusion(report, names)
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    result = run_pipeline(cfg, args.out)
    r = result.report
    print(f"n_clusters={result.clusters.n_clusters} features={r.n_features} samples={r.n_samples}")
    print(f"accuracy {r.mean_accuracy:.4f} +/- {r.std_accuracy:.4f} over {len(r.splits)} splits")
    print(report_confusion(r.combined, r.classes)[1])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikegest", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="key = value config file")
        for name in ("data", "cluster", "kernel", "split"):
            p.add_argument(f"--seed-{name}", type=int, default=None, dest=f"seed_{name}")
        return p

    p = with_config(sub.add_parser("synth", help="write a synthetic recording as CSVs"))
    p.add_argument("--out", required=True)
    p.add_argument("--gap", type=int, default=0, help="unlabeled rest timesteps between trials")
    p.set_defaults(func=cmd_synth)

    p = with_config(sub.add_parser("encode", help="dump the spike raster of one sample"))
    p.add_argument("--out", required=True, help="raster CSV path")
    p.add_argument("--sample", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = with_config(sub.add_parser("cluster", help="cluster electrodes"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = with_config(sub.add_parser("features", help="extract the feature matrix"))
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_features)

    p = with_config(sub.add_parser("train-eval", help="KNN evaluation from a feature CSV"))
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_eval)

    p = with_config(sub.add_parser("sweep-clusters", help="accuracy versus cluster count"))
    p.add_argument("--k-range", required=True, help="e.g. 2-8 or 3,5,7")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("confusion", help="render the confusion matrix of a report")
    p.add_argument("--report", required=True)
    p.add_argument("--classes", default=None, help="comma-separated class names")
    p.add_argument("--out", default=None, help="optional CSV path")
    p.set_defaults(func=cmd_confusion)

    p = with_config(sub.add_parser("run", help="end-to-end pipeline"))
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
