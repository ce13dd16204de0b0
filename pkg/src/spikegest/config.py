"""Flat ``key = value`` pipeline configuration.

Blank lines and lines starting with ``#`` are ignored. Unknown keys are
errors and model hyperparameters have no defaults: a config file must state
every one of them.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


REQUIRED = (
    "source",
    "theta_th",
    "n_clusters",
    "kernel",
    "temporal_stride",
    "channel_stride",
    "tau_r",
    "theta_conv",
    "knn_k",
    "window_len",
    "train_fraction",
    "n_splits",
    "seed_data",
    "seed_cluster",
    "seed_kernel",
    "seed_split",
)
FILE_KEYS = ("signals", "labels", "layout")
SYNTH_KEYS = ("synth_classes", "synth_channels", "synth_trials_per_class", "synth_noise")
OPTIONAL = ("k_max", "sample_rate", "class_names", "synth_blobs", "synth_phase_jitter", "workers")
KNOWN = set(REQUIRED) | set(FILE_KEYS) | set(SYNTH_KEYS) | set(OPTIONAL)


@dataclass(frozen=True)
class PipelineConfig:
    source: str
    theta_th: float
    n_clusters: int | str
    temporal_stride: int
    channel_stride: int
    tau_r: float
    theta_conv: float
    knn_k: int
    window_len: int
    train_fraction: float
    n_splits: int
    seed_data: int
    seed_cluster: int
    seed_kernel: int
    seed_split: int
    kernel: str = "3x3"
    signals: Path | None = None
    labels: Path | None = None
    layout: Path | None = None
    sample_rate: float = 1000.0
    k_max: int | None = None
    class_names: tuple[str, ...] | None = None
    synth_classes: int | None = None
    synth_channels: int | None = None
    synth_trials_per_class: tuple[int, ...] | None = None
    synth_noise: float | None = None
    synth_blobs: int | None = None
    synth_phase_jitter: float | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.source not in ("files", "synthetic"):
            raise ConfigError("source must be 'files' or 'synthetic'")
        if self.kernel != "3x3":
            raise ConfigError("only a 3x3 kernel is supported")
        for name in ("theta_th", "theta_conv", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("temporal_stride", "channel_stride", "knn_k", "n_splits"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.window_len < 3:
            raise ConfigError("window_len must be >= 3")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if isinstance(self.n_clusters, str):
            if self.n_clusters not in ("auto", "fixed"):
                raise ConfigError("n_clusters must be an integer, 'auto' or 'fixed'")
            if self.n_clusters == "auto" and self.k_max is None:
                raise ConfigError("n_clusters = auto requires k_max")
        elif self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        needed = FILE_KEYS if self.source == "files" else SYNTH_KEYS
        missing = [k for k in needed if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"source = {self.source} requires {', '.join(missing)}")

    def snapshot(self) -> list[tuple[str, str]]:
        """(key, value) pairs in declaration order, skipping unset optionals."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            out.append((f.name, str(value)))
        return out

    def with_seeds(self, **seeds: int | None) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in seeds.items() if v is not None})


def _int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


INT_KEYS = {
    "temporal_stride", "channel_stride", "knn_k", "window_len", "n_splits",
    "seed_data", "seed_cluster", "seed_kernel", "seed_split", "k_max",
    "synth_classes", "synth_channels", "synth_blobs", "workers",
}
FLOAT_KEYS = {
    "theta_th", "tau_r", "theta_conv", "train_fraction", "sample_rate", "synth_noise",
    "synth_phase_jitter",
}


def parse_config(text: str, base_dir: Path | str = ".") -> PipelineConfig:
    base_dir = Path(base_dir)
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KNOWN:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    values: dict = {}
    for key, text in raw.items():
        if key in INT_KEYS:
            values[key] = _int(key, text)
        elif key in FLOAT_KEYS:
            values[key] = _float(key, text)
        elif key in FILE_KEYS:
            values[key] = base_dir / text
        elif key == "n_clusters":
            values[key] = text if text in ("auto", "fixed") else _int(key, text)
        elif key == "class_names":
            values[key] = tuple(n.strip() for n in text.split(","))
        elif key == "synth_trials_per_class":
            values[key] = tuple(_int(key, n) for n in text.split(","))
        else:
            values[key] = text
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)
