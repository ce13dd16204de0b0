"""Recording ingestion, trial segmentation, normalization and synthetic data.

File formats (all CSV, ``.`` as decimal separator):

* signals: header row of channel ids, then one row per timestep.
* labels: ``trial_id,start_timestep,end_timestep,label`` with ``end`` exclusive.
* layout: ``channel_id,x,y,z`` plus an optional ``cluster`` column.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

log = logging.getLogger(__name__)

LABEL_COLUMNS = ("trial_id", "start_timestep", "end_timestep", "label")
LAYOUT_COLUMNS = ("channel_id", "x", "y", "z")


class DataFormatError(ValueError):
    """Raised when an input file does not conform to its CSV format."""

    def __init__(self, path, line: int | None, field_name: str | None, message: str):
        self.path = str(path)
        self.line = line
        self.field = field_name
        where = self.path
        if line is not None:
            where += f", line {line}"
        if field_name is not None:
            where += f", field {field_name!r}"
        super().__init__(f"{where}: {message}")


class ValidationError(ValueError):
    """Raised when a domain object violates one of its invariants."""


@dataclass
class Trial:
    """One labeled movement window of a continuous recording.

    Attributes:
        id: Trial identifier, unique within a recording.
        signal: Amplitudes with shape (n_channels, n_timesteps).
        sample_rate: Sampling frequency in Hz.
        label: Gesture class id.
        subject: Subject identifier, may be empty.
    """

    id: str
    signal: np.ndarray
    sample_rate: float
    label: int
    subject: str = ""

    def __post_init__(self) -> None:
        self.signal = np.asarray(self.signal, dtype=np.float64)
        if self.signal.ndim != 2:
            raise ValidationError(
                f"trial {self.id}: signal must be 2-D (channels, timesteps), "
                f"got shape {self.signal.shape}"
            )
        if self.signal.shape[1] < 1:
            raise ValidationError(f"trial {self.id}: signal has no timesteps")
        if not self.sample_rate > 0:
            raise ValidationError(f"trial {self.id}: sample_rate must be > 0")

    @property
    def n_timesteps(self) -> int:
        return self.signal.shape[1]


@dataclass
class Sample:
    """A fixed-length window cut from a trial."""

    signal: np.ndarray
    label: int
    trial_id: str
    window_index: int

    @property
    def id(self) -> str:
        return f"{self.trial_id}:{self.window_index}"

    @property
    def n_channels(self) -> int:
        return self.signal.shape[0]


@dataclass
class ElectrodeLayout:
    """Electrode ids with 3-D positions and an optional fixed cluster map."""

    channel_ids: list[str]
    positions: np.ndarray
    clusters: dict[str, int] | None = None

    def __post_init__(self) -> None:
        self.channel_ids = [str(c) for c in self.channel_ids]
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if len(self.channel_ids) != self.positions.shape[0]:
            raise ValidationError(
                f"{len(self.channel_ids)} channel ids but "
                f"{self.positions.shape[0]} positions"
            )
        seen = set()
        for cid in self.channel_ids:
            if cid in seen:
                raise ValidationError(f"duplicate channel id {cid!r} in layout")
            seen.add(cid)
        if self.clusters is not None:
            missing = [c for c in self.channel_ids if c not in self.clusters]
            extra = [c for c in self.clusters if c not in seen]
            if missing or extra:
                raise ValidationError(
                    f"fixed cluster map must cover every channel exactly once "
                    f"(missing={missing}, unknown={extra})"
                )

    @property
    def n_channels(self) -> int:
        return len(self.channel_ids)

    def reordered(self, channel_ids: Sequence[str]) -> "ElectrodeLayout":
        """Return the layout with channels in the given order."""
        index = {c: i for i, c in enumerate(self.channel_ids)}
        order = [index[c] for c in channel_ids]
        return ElectrodeLayout(list(channel_ids), self.positions[order], self.clusters)


@dataclass
class LabeledDataset:
    samples: list[Sample]
    classes: list[str]
    layout: ElectrodeLayout
    skipped: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for s in self.samples:
            if s.n_channels != self.layout.n_channels:
                raise ValidationError(
                    f"sample {s.id} has {s.n_channels} channels, "
                    f"layout has {self.layout.n_channels}"
                )
            if not 0 <= s.label < len(self.classes):
                raise ValidationError(
                    f"sample {s.id} label {s.label} outside {len(self.classes)} classes"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


# -- parsing ------------------------------------------------------------------

def _parse_float(text: str, path, line: int, name: str) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise DataFormatError(path, line, name, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise DataFormatError(path, line, name, f"non-finite value {text!r}")
    return value


def _parse_int(text: str, path, line: int, name: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DataFormatError(path, line, name, f"not an integer: {text!r}") from None


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(path, 1, None, "empty file") from None
        rows = [(reader.line_num, row) for row in reader if row]
    return header, rows


def _require_columns(path, header: list[str], required: Sequence[str]) -> dict[str, int]:
    index = {name: i for i, name in enumerate(header)}
    for name in required:
        if name not in index:
            raise DataFormatError(path, 1, name, "missing column")
    return index


def read_signals(path) -> tuple[list[str], np.ndarray]:
    """Read a signals CSV into (channel ids, array of shape (channels, timesteps))."""
    header, rows = _read_rows(path)
    if len(set(header)) != len(header):
        raise DataFormatError(path, 1, None, "duplicate channel id in header")
    data = np.empty((len(rows), len(header)), dtype=np.float64)
    for r, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise DataFormatError(
                path, line, None, f"expected {len(header)} fields, got {len(row)}"
            )
        for c, text in enumerate(row):
            data[r, c] = _parse_float(text, path, line, header[c])
    return header, data.T.copy()


def read_layout(path) -> ElectrodeLayout:
    header, rows = _read_rows(path)
    index = _require_columns(path, header, LAYOUT_COLUMNS)
    has_cluster = "cluster" in index
    ids, positions, clusters = [], [], {}
    for line, row in rows:
        if len(row) != len(header):
            raise DataFormatError(
                path, line, None, f"expected {len(header)} fields, got {len(row)}"
            )
        cid = row[index["channel_id"]].strip()
        if cid in clusters or cid in ids:
            raise DataFormatError(path, line, "channel_id", f"duplicate channel id {cid!r}")
        ids.append(cid)
        positions.append(
            [_parse_float(row[index[a]], path, line, a) for a in ("x", "y", "z")]
        )
        if has_cluster:
            clusters[cid] = _parse_int(row[index["cluster"]], path, line, "cluster")
    return ElectrodeLayout(ids, np.array(positions).reshape(-1, 3), clusters if has_cluster else None)


def read_labels(path, n_timesteps: int) -> list[tuple[str, int, int, int]]:
    header, rows = _read_rows(path)
    index = _require_columns(path, header, LABEL_COLUMNS)
    out, seen = [], set()
    for line, row in rows:
        if len(row) != len(header):
            raise DataFormatError(
                path, line, None, f"expected {len(header)} fields, got {len(row)}"
            )
        tid = row[index["trial_id"]].strip()
        if tid in seen:
            raise DataFormatError(path, line, "trial_id", f"duplicate trial id {tid!r}")
        seen.add(tid)
        start = _parse_int(row[index["start_timestep"]], path, line, "start_timestep")
        end = _parse_int(row[index["end_timestep"]], path, line, "end_timestep")
        label = _parse_int(row[index["label"]], path, line, "label")
        if not 0 <= start < end:
            raise DataFormatError(
                path, line, "end_timestep", f"empty or negative range [{start}, {end})"
            )
        if end > n_timesteps:
            raise DataFormatError(
                path, line, "end_timestep",
                f"range [{start}, {end}) exceeds signal length {n_timesteps}",
            )
        if label < 0:
            raise DataFormatError(path, line, "label", "label must be >= 0")
        out.append((tid, start, end, label))
    return out


def load_trials(
    signals_path, labels_path, layout_path, sample_rate: float = 1000.0, subject: str = ""
) -> tuple[list[Trial], ElectrodeLayout]:
    """Load labeled trials and the electrode layout from the three import CSVs.

    The layout is returned with channels in the same order as the signals
    header, which is the channel order used everywhere downstream.
    """
    channel_ids, data = read_signals(signals_path)
    layout = read_layout(layout_path)
    if layout.n_channels != len(channel_ids):
        raise DataFormatError(
            layout_path, None, None,
            f"layout has {layout.n_channels} channels, signals have {len(channel_ids)}",
        )
    unknown = sorted(set(channel_ids) - set(layout.channel_ids))
    if unknown:
        raise DataFormatError(
            layout_path, None, "channel_id", f"signal channels missing from layout: {unknown}"
        )
    layout = layout.reordered(channel_ids)
    trials = [
        Trial(tid, data[:, start:end], sample_rate, label, subject)
        for tid, start, end, label in read_labels(labels_path, data.shape[1])
    ]
    return trials, layout


def write_recording(
    trials: Sequence[Trial], layout: ElectrodeLayout, directory, gap: int = 0
) -> dict[str, Path]:
    """Write trials back-to-back as a signals/labels/layout CSV triple.

    ``gap`` zero-valued timesteps are inserted between trials to stand in
    for rest intervals; they carry no label row.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "signals": directory / "signals.csv",
        "labels": directory / "labels.csv",
        "layout": directory / "layout.csv",
    }
    n_ch = layout.n_channels
    with paths["signals"].open("w", newline="") as sig, paths["labels"].open(
        "w", newline=""
    ) as lab:
        sw, lw = csv.writer(sig, lineterminator="\n"), csv.writer(lab, lineterminator="\n")
        sw.writerow(layout.channel_ids)
        lw.writerow(LABEL_COLUMNS)
        t = 0
        for i, trial in enumerate(trials):
            if trial.signal.shape[0] != n_ch:
                raise ValidationError(f"trial {trial.id} channel count != layout")
            if i and gap:
                for _ in range(gap):
                    sw.writerow(["0.0"] * n_ch)
                t += gap
            for col in trial.signal.T:
                sw.writerow([repr(float(v)) for v in col])
            lw.writerow([trial.id, t, t + trial.n_timesteps, trial.label])
            t += trial.n_timesteps
    with paths["layout"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(LAYOUT_COLUMNS) + (["cluster"] if layout.clusters is not None else []))
        for cid, pos in zip(layout.channel_ids, layout.positions):
            row = [cid] + [repr(float(v)) for v in pos]
            if layout.clusters is not None:
                row.append(layout.clusters[cid])
            w.writerow(row)
    return paths


# -- segmentation and normalization ---------------------------------------

def segment_trials(
    trials: Sequence[Trial], window_len: int
) -> tuple[list[Sample], list[str]]:
    """Cut each trial into non-overlapping windows aligned to the trial start.

    Returns:
        The samples, and the ids of trials skipped for being shorter than
        one window. Any trailing remainder shorter than a window is dropped.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    samples: list[Sample] = []
    skipped: list[str] = []
    for trial in trials:
        n = trial.n_timesteps // window_len
        if n == 0:
            skipped.append(trial.id)
            continue
        for w in range(n):
            chunk = trial.signal[:, w * window_len:(w + 1) * window_len].copy()
            samples.append(Sample(chunk, trial.label, trial.id, w))
    if skipped:
        log.warning("skipped %d trial(s) shorter than %d timesteps", len(skipped), window_len)
    return samples, skipped


def normalize_signal(signal: np.ndarray) -> np.ndarray:
    """Min-max map every row of ``signal`` to [-1, 1]; constant rows become 0."""
    x = np.asarray(signal, dtype=np.float64)
    lo = x.min(axis=1, keepdims=True)
    hi = x.max(axis=1, keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = (x - lo) / safe * 2.0 - 1.0
    out = np.where(span > 0, out, 0.0)
    # rows already spanning exactly [-1, 1] pass through so the map is idempotent
    done = ((lo == -1.0) & (hi == 1.0))[:, 0]
    out[done] = x[done]
    return out


def normalize_sample(sample: Sample) -> Sample:
    return Sample(normalize_signal(sample.signal), sample.label, sample.trial_id, sample.window_index)


# -- synthetic data -------------------------------------------------------

def _fibonacci_sphere(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros((1, 3))
    i = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * i / n)
    azimuth = np.pi * (1 + 5 ** 0.5) * i
    return np.column_stack(
        [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)]
    )


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def blob_sizes(n_channels: int, n_blobs: int) -> list[int]:
    base, extra = divmod(n_channels, n_blobs)
    return [base + (1 if b < extra else 0) for b in range(n_blobs)]


def synthetic_layout(
    n_channels: int,
    n_blobs: int,
    seed: int,
    separation: float = 10.0,
    radius: float = 1.0,
) -> tuple[ElectrodeLayout, np.ndarray]:
    """Place channels in ``n_blobs`` spatially separated 3-D blobs.

    Blob centres sit on a randomly rotated sphere, scaled so the closest
    pair of centres is ``separation`` apart. Channels are drawn uniformly
    inside a ball of ``radius`` around their centre and numbered blob by blob.

    Returns:
        The layout and the ground-truth blob index of every channel.
    """
    if not 1 <= n_blobs <= n_channels:
        raise ValueError("need 1 <= n_blobs <= n_channels")
    rng = np.random.default_rng([seed, 0x1A])
    centres = _fibonacci_sphere(n_blobs)
    if n_blobs > 1:
        d = np.linalg.norm(centres[:, None] - centres[None], axis=-1)
        centres = centres * (separation / d[np.triu_indices(n_blobs, 1)].min())
    centres = centres @ _random_rotation(rng).T
    truth = np.repeat(np.arange(n_blobs), blob_sizes(n_channels, n_blobs))
    direction = rng.standard_normal((n_channels, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    dist = radius * rng.random(n_channels) ** (1 / 3)
    positions = centres[truth] + direction * dist[:, None]
    ids = [f"ch{i:02d}" for i in range(n_channels)]
    return ElectrodeLayout(ids, positions), truth


def colored_noise(rng: np.random.Generator, shape, pole: float) -> np.ndarray:
    """AR(1) noise along the last axis with unit stationary variance."""
    if not 0 <= pole < 1:
        raise ValueError("noise pole must lie in [0, 1)")
    white = rng.standard_normal(shape)
    white[..., 0] /= np.sqrt(1 - pole**2)
    return lfilter([np.sqrt(1 - pole**2)], [1.0, -pole], white, axis=-1)


def synthetic_trials(
    n_classes: int,
    n_channels: int,
    n_trials_per_class: int | Sequence[int],
    window_len: int,
    seed: int,
    *,
    noise: float = 0.5,
    noise_pole: float = 0.98,
    phase_jitter: float = 1.0,
    n_blobs: int | None = None,
    sample_rate: float = 1000.0,
) -> tuple[list[Trial], ElectrodeLayout]:
    """Generate two-window trials whose classes differ in frequency content.

    Each blob of channels carries a dominant sinusoid plus a weaker slow one.
    Every class draws a distinct dominant frequency per blob, so spike rates
    separate the classes blob by blob. Channels share their blob's waveform
    up to a fixed per-channel phase lag.

    Two stochastic terms vary between trials: a phase offset per blob drawn
    uniformly from ``[-pi, pi] * phase_jitter`` (regions drift in phase
    independently), and first-order autoregressive Gaussian noise with pole
    ``noise_pole`` and stationary standard deviation ``noise``. With both
    set to zero, trials of one class are identical.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if n_channels < 3:
        raise ValueError("n_channels must be >= 3")
    if window_len < 3:
        raise ValueError("window_len must be >= 3")
    if noise < 0 or phase_jitter < 0:
        raise ValueError("noise and phase_jitter must be >= 0")
    if isinstance(n_trials_per_class, (int, np.integer)):
        counts = [int(n_trials_per_class)] * n_classes
    else:
        counts = [int(c) for c in n_trials_per_class]
        if len(counts) != n_classes:
            raise ValueError("one trial count per class required")
    if any(c < 1 for c in counts):
        raise ValueError("trial counts must be >= 1")
    if n_blobs is None:
        n_blobs = max(1, min(5, n_channels // 3))
    if not 1 <= n_blobs <= n_channels // 3:
        raise ValueError("n_blobs must leave at least 3 channels per blob")

    layout, blob = synthetic_layout(n_channels, n_blobs, seed)
    rng = np.random.default_rng([seed, 0xC1])
    # every blob deals each class a distinct dominant frequency from a shared
    # grid; spike rate tracks that frequency, so classes differ in every blob
    grid = np.linspace(3.0, 18.0, n_classes)
    dominant = np.stack([rng.permutation(grid) for _ in range(n_blobs)], axis=1)
    freqs = np.stack([dominant, rng.uniform(1.0, 4.0, size=(n_classes, n_blobs))], axis=-1)
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_classes, n_blobs, 2))
    weights = np.stack(
        [np.ones((n_classes, n_blobs)), rng.uniform(0.2, 0.5, size=(n_classes, n_blobs))],
        axis=-1,
    )
    lag = rng.uniform(0.0, 0.6, size=n_channels)

    t = np.arange(2 * window_len) / sample_rate
    trials: list[Trial] = []
    for c in range(n_classes):
        f, p, a = freqs[c][blob], phases[c][blob], weights[c][blob]
        for i in range(counts[c]):
            trial_rng = np.random.default_rng([seed, 0x7A, c, i])
            shift = (phase_jitter * trial_rng.uniform(-np.pi, np.pi, size=n_blobs))[blob]
            offset = lag + shift
            signal = (
                a[:, 0, None] * np.sin(2 * np.pi * f[:, 0, None] * t + (p[:, 0] + offset)[:, None])
                + a[:, 1, None] * np.sin(2 * np.pi * f[:, 1, None] * t + (p[:, 1] + offset)[:, None])
            )
            signal = signal + noise * colored_noise(trial_rng, signal.shape, noise_pole)
            trials.append(Trial(f"c{c}t{i:03d}", signal, sample_rate, c))
    return trials, layout


def generate_synthetic(
    n_classes: int,
    n_channels: int,
    n_trials_per_class: int | Sequence[int],
    window_len: int,
    seed: int,
    **kwargs,
) -> LabeledDataset:
    """Synthetic labeled dataset; every trial yields exactly two samples."""
    trials, layout = synthetic_trials(
        n_classes, n_channels, n_trials_per_class, window_len, seed, **kwargs
    )
    samples, skipped = segment_trials(trials, window_len)
    return LabeledDataset(samples, synthetic_class_names(n_classes), layout, skipped)


def synthetic_class_names(n_classes: int) -> list[str]:
    return [f"class{c}" for c in range(n_classes)]


def dataset_from_trials(
    trials: Sequence[Trial],
    layout: ElectrodeLayout,
    window_len: int,
    class_names: Sequence[str] | None = None,
) -> LabeledDataset:
    samples, skipped = segment_trials(trials, window_len)
    n_classes = max((t.label for t in trials), default=-1) + 1
    if class_names is None:
        class_names = [str(c) for c in range(n_classes)]
    elif len(class_names) < n_classes:
        raise ValidationError(
            f"{len(class_names)} class names given but labels reach {n_classes - 1}"
        )
    return LabeledDataset(samples, list(class_names), layout, skipped)
