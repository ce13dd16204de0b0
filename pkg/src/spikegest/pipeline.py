"""End-to-end runs: load -> encode -> cluster -> features -> classify."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .classifier import (
    EvalReport,
    confusion_rows,
    format_confusion,
    report_from_confusion,
    repeated_evaluation,
)
from .config import PipelineConfig
from .conv_snn import PlasticityParams, extract_dataset_features
from .signal_io import (
    LabeledDataset,
    dataset_from_trials,
    generate_synthetic,
    synthetic_class_names,
    load_trials,
    normalize_signal,
)
from .spatial_clustering import (
    ClusterAssignment,
    derive_seed,
    elbow_select,
    feasible,
    fixed_assignment,
    kmeans,
)
from .spike_encoding import encode_raster


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


class OutputLockedError(RuntimeError):
    pass


# -- stages ---------------------------------------------------------------

def default_class_names(cfg: PipelineConfig, n_classes: int) -> list[str]:
    if cfg.class_names is not None:
        return list(cfg.class_names)
    if cfg.source == "synthetic":
        return synthetic_class_names(n_classes)
    return [str(c) for c in range(n_classes)]


def synth_extras(cfg: PipelineConfig) -> dict:
    if cfg.synth_phase_jitter is None:
        return {}
    return {"phase_jitter": cfg.synth_phase_jitter}


def load_dataset(cfg: PipelineConfig) -> LabeledDataset:
    if cfg.source == "synthetic":
        counts = cfg.synth_trials_per_class
        ds = generate_synthetic(
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
        if cfg.class_names is not None:
            if len(cfg.class_names) != len(ds.classes):
                raise ValueError("class_names length differs from synth_classes")
            ds.classes = list(cfg.class_names)
        return ds
    trials, layout = load_trials(cfg.signals, cfg.labels, cfg.layout, cfg.sample_rate)
    return dataset_from_trials(trials, layout, cfg.window_len, cfg.class_names)


def encode_dataset(ds: LabeledDataset, theta_th: float) -> list[np.ndarray]:
    """Normalize every sample and encode it into a spike raster."""
    return [encode_raster(normalize_signal(s.signal), theta_th) for s in ds.samples]


def cluster_layout(
    cfg: PipelineConfig, ds: LabeledDataset, n_clusters: int | str | None = None
) -> tuple[ClusterAssignment, list[float] | None]:
    """Clustering per ``n_clusters`` (defaults to the config's), plus the WCSS
    curve when the count is chosen automatically."""
    n = cfg.n_clusters if n_clusters is None else n_clusters
    positions = ds.layout.positions
    if n == "fixed":
        return fixed_assignment(ds.layout), None
    curve = None
    if n == "auto":
        n, curve = elbow_select(positions, cfg.k_max, cfg.seed_cluster)
    return kmeans(positions, n, derive_seed(cfg.seed_cluster, n)), curve


def plasticity(cfg: PipelineConfig) -> PlasticityParams:
    return PlasticityParams(cfg.tau_r, cfg.temporal_stride, cfg.channel_stride)


def dataset_features(
    cfg: PipelineConfig,
    ds: LabeledDataset,
    rasters: Sequence[np.ndarray],
    clusters: ClusterAssignment,
    workers: int | None = None,
) -> np.ndarray:
    clusters.check_topology()
    return extract_dataset_features(
        rasters,
        clusters,
        cfg.seed_kernel,
        plasticity(cfg),
        cfg.theta_conv,
        sample_ids=[s.id for s in ds.samples],
        workers=cfg.workers if workers is None else workers,
    )


@dataclass
class RunReport:
    """Classification outcome over all repeated splits."""

    splits: list[EvalReport]
    classes: list[str]
    n_samples: int
    n_features: int
    protocol: dict = field(default_factory=dict)

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.splits]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def combined(self) -> EvalReport:
        return report_from_confusion(sum(r.confusion for r in self.splits))

    def to_dict(self) -> dict:
        combined = self.combined
        return {
            "accuracy_mean": self.mean_accuracy,
            "accuracy_std": self.std_accuracy,
            "classes": self.classes,
            "confusion": combined.confusion.tolist(),
            "precision": combined.precision,
            "recall": combined.recall,
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "protocol": self.protocol,
            "splits": [r.to_dict() for r in self.splits],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def classify(
    cfg: PipelineConfig, features: np.ndarray, labels, classes: Sequence[str]
) -> RunReport:
    labels = np.asarray(labels, dtype=np.int64)
    splits = repeated_evaluation(
        features, labels, cfg.knn_k, cfg.train_fraction, cfg.seed_split, cfg.n_splits,
        n_classes=len(classes),
    )
    protocol = {
        "knn_k": cfg.knn_k,
        "train_fraction": cfg.train_fraction,
        "n_splits": cfg.n_splits,
        "seed_split": cfg.seed_split,
        "stratified": True,
    }
    return RunReport(splits, list(classes), int(features.shape[0]), int(features.shape[1]), protocol)


# -- file outputs ---------------------------------------------------------

def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_features(path, sample_ids, labels, features: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["sample_id", "label"] + [f"w{i}" for i in range(features.shape[1])])
        for sid, lab, row in zip(sample_ids, labels, features):
            w.writerow([sid, int(lab)] + [repr(float(v)) for v in row])


def read_features(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids, labels, rows = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["sample_id", "label"]:
            raise ValueError(f"{path}: not a feature CSV")
        for row in reader:
            ids.append(row[0])
            labels.append(int(row[1]))
            rows.append([float(v) for v in row[2:]])
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 2)
    return ids, np.array(labels, dtype=np.int64), features


def write_assignment(path, channel_ids, clusters: ClusterAssignment) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["channel_id", "cluster"])
        for cid, c in zip(channel_ids, clusters.assignment):
            w.writerow([cid, int(c)])


def write_curve(path, curve: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["k", "wcss"])
        for k, v in enumerate(curve, 1):
            w.writerow([k, repr(float(v))])


def write_confusion(out_dir, report: EvalReport, class_names: Sequence[str]) -> dict[str, Path]:
    out_dir = Path(out_dir)
    rows = confusion_rows(report.confusion, class_names)
    text = format_confusion(report.confusion, class_names)
    paths = {"confusion_csv": out_dir / "confusion.csv", "confusion_txt": out_dir / "confusion.txt"}
    with open(paths["confusion_csv"], "w", newline="") as fh:
        _writer(fh).writerows(rows)
    paths["confusion_txt"].write_text(text + "\n")
    return paths


def report_confusion(report: EvalReport, class_names: Sequence[str]) -> tuple[list[list], str]:
    """Named confusion matrix as CSV rows and as a text table."""
    return confusion_rows(report.confusion, class_names), format_confusion(
        report.confusion, class_names
    )


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def output_lock(out_dir: Path):
    """Exclusive lock on an output directory for the duration of a run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLockedError(f"{out_dir} is in use by another run ({lock} exists)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


@dataclass
class RunManifest:
    config: list[tuple[str, str]]
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "complete"
    failed_stage: str | None = None
    version: str = __version__

    def render(self) -> str:
        lines = [f"version: {self.version}", f"status: {self.status}"]
        if self.failed_stage:
            lines.append(f"failed_stage: {self.failed_stage}")
        lines.append("[config]")
        lines += [f"{k} = {v}" for k, v in self.config]
        lines.append("[timings_s]")
        lines += [f"{k} = {v:.3f}" for k, v in self.timings.items()]
        lines.append("[sha256]")
        lines += [f"{name} = {digest}" for name, digest in sorted(self.outputs.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RunManifest":
        section, m = None, cls(config=[])
        for line in text.splitlines():
            if line.startswith("["):
                section = line.strip("[]")
            elif section is None:
                key, _, value = line.partition(": ")
                if key == "status":
                    m.status = value
                elif key == "failed_stage":
                    m.failed_stage = value
                elif key == "version":
                    m.version = value
            else:
                key, _, value = line.partition(" = ")
                if section == "config":
                    m.config.append((key, value))
                elif section == "timings_s":
                    m.timings[key] = float(value)
                elif section == "sha256":
                    m.outputs[key] = value
        return m


def verify_manifest(out_dir) -> dict[str, bool]:
    """Check every hash recorded in ``out_dir/manifest.txt`` against the files."""
    out_dir = Path(out_dir)
    manifest = RunManifest.parse((out_dir / "manifest.txt").read_text())
    return {
        name: (out_dir / name).exists() and sha256(out_dir / name) == digest
        for name, digest in manifest.outputs.items()
    }


@dataclass
class PipelineResult:
    report: RunReport
    manifest: RunManifest
    clusters: ClusterAssignment
    features: np.ndarray
    wcss_curve: list[float] | None = None


def run_pipeline(cfg: PipelineConfig, out_dir) -> PipelineResult:
    """Run every stage in order and write all artifacts to ``out_dir``.

    Writes ``features.csv``, ``assignment.csv``, ``report.json``,
    ``confusion.csv``/``.txt``, ``wcss.csv`` when the cluster count is
    chosen automatically, and ``manifest.txt`` last. A failing stage still
    leaves a manifest flagged ``partial``.
    """
    out_dir = Path(out_dir)
    manifest = RunManifest(cfg.snapshot())
    written: list[Path] = []

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except Exception as exc:
            manifest.status, manifest.failed_stage = "partial", name
            raise PipelineError(name, exc) from exc
        finally:
            manifest.timings[name] = time.perf_counter() - t0

    with output_lock(out_dir):
        try:
            ds = stage("load", lambda: load_dataset(cfg))
            rasters = stage("encode", lambda: encode_dataset(ds, cfg.theta_th))
            clusters, curve = stage("cluster", lambda: cluster_layout(cfg, ds))

            def cluster_out():
                write_assignment(out_dir / "assignment.csv", ds.layout.channel_ids, clusters)
                written.append(out_dir / "assignment.csv")
                if curve is not None:
                    write_curve(out_dir / "wcss.csv", curve)
                    written.append(out_dir / "wcss.csv")

            stage("write_assignment", cluster_out)
            features = stage("features", lambda: dataset_features(cfg, ds, rasters, clusters))

            def features_out():
                write_features(
                    out_dir / "features.csv", [s.id for s in ds.samples], ds.labels, features
                )
                written.append(out_dir / "features.csv")

            stage("write_features", features_out)
            report = stage("classify", lambda: classify(cfg, features, ds.labels, ds.classes))

            def report_out():
                (out_dir / "report.json").write_text(report.to_json())
                written.append(out_dir / "report.json")
                written.extend(write_confusion(out_dir, report.combined, ds.classes).values())

            stage("report", report_out)
        finally:
            manifest.outputs = {p.name: sha256(p) for p in written if p.exists()}
            (out_dir / "manifest.txt").write_text(manifest.render())
    return PipelineResult(report, manifest, clusters, features, curve)


def train_eval_from_features(cfg: PipelineConfig, features_path, classes=None) -> RunReport:
    """Classification stage alone, from a cached feature CSV."""
    _, labels, features = read_features(features_path)
    if classes is None:
        classes = default_class_names(cfg, int(labels.max()) + 1)
    return classify(cfg, features, labels, classes)


@dataclass
class SweepRow:
    n_clusters: int
    feasible: bool
    accuracy_mean: float | None = None
    accuracy_std: float | None = None
    n_features: int | None = None
    reason: str = ""


def sweep_clusters(
    cfg: PipelineConfig, k_range: Sequence[int], ds: LabeledDataset | None = None
) -> list[SweepRow]:
    """Accuracy against cluster count with data, W0 and split seeds held fixed.

    Counts that exceed the channel count or leave a cluster with fewer than
    three channels are reported as infeasible.
    """
    if ds is None:
        ds = load_dataset(cfg)
    rasters = encode_dataset(ds, cfg.theta_th)
    n_ch = ds.layout.n_channels
    rows = []
    for k in k_range:
        if not 1 <= k <= n_ch:
            rows.append(SweepRow(k, False, reason=f"k outside 1..{n_ch}"))
            continue
        clusters, _ = cluster_layout(cfg, ds, k)
        if not feasible(clusters):
            rows.append(SweepRow(k, False, reason=f"cluster sizes {clusters.sizes()}"))
            continue
        features = dataset_features(cfg, ds, rasters, clusters)
        report = classify(cfg, features, ds.labels, ds.classes)
        rows.append(
            SweepRow(k, True, report.mean_accuracy, report.std_accuracy, features.shape[1])
        )
    return rows


def write_sweep(path, rows: Sequence[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["n_clusters", "feasible", "accuracy_mean", "accuracy_std", "n_features", "reason"])
        for r in rows:
            w.writerow([
                r.n_clusters,
                int(r.feasible),
                "" if r.accuracy_mean is None else repr(r.accuracy_mean),
                "" if r.accuracy_std is None else repr(r.accuracy_std),
                "" if r.n_features is None else r.n_features,
                r.reason,
            ])
