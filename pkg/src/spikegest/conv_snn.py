"""Event-driven convolutional spiking feature extractor.

Each cluster's channels (in ascending channel order) are covered by
overlapping 3-channel windows. Every window gets its own 3x3 kernel, all
starting from one shared random matrix ``W0``. A kernel slides along time,
feeds a leak-free integrate-and-fire neuron, and adapts its weights whenever
that neuron fires. The final weights of all kernels form the feature vector.

Kernel layout: row ``i`` is the channel offset inside the window, column
``j`` the timestep offset inside the patch. Column 2 is the current
timestep, so an input spike in column ``j`` lies ``2 - j`` steps in the past.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .spatial_clustering import ClusterAssignment, TopologyError

KERNEL = 3
W0_HIGH = 0.1


@dataclass(frozen=True)
class PlasticityParams:
    tau_r: float
    temporal_stride: int = 3
    channel_stride: int = 1

    def __post_init__(self) -> None:
        if not math.isfinite(self.tau_r):
            raise ValueError("tau_r must be finite")
        if self.temporal_stride < 1 or self.channel_stride < 1:
            raise ValueError("strides must be >= 1")


@dataclass
class IFNeuron:
    """Leak-free integrate-and-fire neuron with symmetric thresholds."""

    threshold: float
    v: float = 0.0

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")


@dataclass
class Kernel:
    weights: np.ndarray
    cluster: int
    channels: tuple[int, int, int]

    @property
    def start(self) -> int:
        return self.channels[0]


@dataclass
class KernelBank:
    w0: np.ndarray
    windows: list[tuple[int, tuple[int, int, int]]]

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def feature_length(self) -> int:
        return KERNEL * KERNEL * len(self.windows)

    def kernels(self) -> list[Kernel]:
        return [Kernel(self.w0.copy(), c, ch) for c, ch in self.windows]


def channel_windows(
    clusters: ClusterAssignment, channel_stride: int = 1
) -> list[tuple[int, tuple[int, int, int]]]:
    """(cluster, channel triple) for every kernel, in feature order."""
    windows = []
    for c in range(clusters.n_clusters):
        members = clusters.members(c)
        if len(members) < KERNEL:
            raise TopologyError(
                f"cluster {c} has {len(members)} channel(s); at least {KERNEL} required"
            )
        for s in range(0, len(members) - KERNEL + 1, channel_stride):
            windows.append((c, tuple(members[s:s + KERNEL])))
    return windows


def draw_w0(seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, W0_HIGH, size=(KERNEL, KERNEL))


def init_kernel_bank(
    clusters: ClusterAssignment, seed: int, channel_stride: int = 1
) -> KernelBank:
    """One kernel per 3-channel window of every cluster, sharing one ``W0``.

    With channel stride 1 a cluster of m channels holds m - 2 kernels, so the
    bank holds n_channels - 2 * n_clusters kernels in total.
    """
    return KernelBank(draw_w0(seed), channel_windows(clusters, channel_stride))


def update_magnitude(input_spike: int, lag: int, tau_r: float) -> float:
    """Weight change size for one input spike ``lag`` steps before the present."""
    x = -lag - tau_r
    if input_spike > 0:
        return math.exp(x)
    return math.exp(-(x * x))


def conv_step(kernel: Kernel, patch: np.ndarray, neuron: IFNeuron) -> int:
    """Integrate one patch into the neuron; return the output spike.

    The neuron fires +1 at or above its threshold and -1 at or below the
    negative threshold, resetting to zero either way.
    """
    patch = np.asarray(patch)
    if patch.shape != (KERNEL, KERNEL):
        raise ValueError(f"patch must be {KERNEL}x{KERNEL}, got {patch.shape}")
    drive = 0.0
    for i in range(KERNEL):
        for j in range(KERNEL):
            if patch[i, j]:
                drive += kernel.weights[i, j] * float(patch[i, j])
    neuron.v = neuron.v + drive
    if neuron.v >= neuron.threshold:
        neuron.v = 0.0
        return 1
    if neuron.v <= -neuron.threshold:
        neuron.v = 0.0
        return -1
    return 0


def apply_plasticity(
    kernel: Kernel, patch: np.ndarray, output_spike: int, tau_r: float
) -> Kernel:
    """Potentiate (output +1) or depress (output -1) weights under input spikes.

    Only positions where ``patch`` holds a spike change; the kernel is
    updated in place and returned.
    """
    if output_spike not in (1, -1):
        raise ValueError(f"output_spike must be +1 or -1, got {output_spike!r}")
    patch = np.asarray(patch)
    for i in range(KERNEL):
        for j in range(KERNEL):
            p = int(patch[i, j])
            if p:
                m = update_magnitude(p, KERNEL - 1 - j, tau_r)
                kernel.weights[i, j] = kernel.weights[i, j] + (m if output_spike > 0 else -m)
    return kernel


UpdateHook = Callable[[int, int, int, int, int, int, float], None]


def _run_kernel(
    rows: list[list[int]],
    w0: list[list[float]],
    n_steps: int,
    stride: int,
    threshold: float,
    table: dict[int, tuple[float, ...]],
    hook: UpdateHook | None = None,
    kernel_index: int = 0,
) -> list[float]:
    # plain-float hot loop; arithmetic order matches conv_step/apply_plasticity
    w = [list(r) for r in w0]
    v = 0.0
    r0, r1, r2 = rows
    for s in range(n_steps):
        t0 = s * stride
        patch = (r0[t0:t0 + 3], r1[t0:t0 + 3], r2[t0:t0 + 3])
        if not (any(patch[0]) or any(patch[1]) or any(patch[2])):
            continue
        drive = 0.0
        for i in range(3):
            pi, wi = patch[i], w[i]
            for j in range(3):
                if pi[j]:
                    drive += wi[j] if pi[j] > 0 else -wi[j]
        v = v + drive
        if v >= threshold:
            out = 1
        elif v <= -threshold:
            out = -1
        else:
            continue
        v = 0.0
        for i in range(3):
            pi, wi = patch[i], w[i]
            for j in range(3):
                p = pi[j]
                if p:
                    m = table[p][2 - j]
                    wi[j] = wi[j] + (m if out > 0 else -m)
                    if hook is not None:
                        hook(kernel_index, s, out, i, j, p, m if out > 0 else -m)
    return [x for r in w for x in r]


def n_conv_steps(n_timesteps: int, stride: int) -> int:
    return (n_timesteps - KERNEL) // stride + 1


def extract_features(
    raster: np.ndarray,
    clusters: ClusterAssignment | KernelBank,
    bank_seed: int,
    params: PlasticityParams,
    threshold: float,
    hook: UpdateHook | None = None,
) -> np.ndarray:
    """Final kernel weights for one spike raster, concatenated.

    Every kernel restarts from ``W0``. Patch ``s`` covers timesteps
    ``[s * stride, s * stride + 2]``; after each integration step that makes
    the neuron fire, the same patch drives the weight update.

    Args:
        raster: Spike raster of shape (n_channels, T), values in {-1, 0, 1}.
        clusters: Channel clustering, or a prebuilt bank (``bank_seed`` is
            then ignored).
        bank_seed: Seed for ``W0``.
        params: Plasticity rate and strides.
        threshold: Firing threshold of the IF neurons.
        hook: Optional callback ``(kernel, step, out, row, col, input, delta)``
            invoked for every individual weight change.

    Returns:
        float64 vector of length 9 * n_kernels, ordered by cluster, then
        window start, then row-major weights.
    """
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError("raster must be 2-D (channels, timesteps)")
    if raster.shape[1] < KERNEL:
        raise ValueError(f"raster needs at least {KERNEL} timesteps, got {raster.shape[1]}")
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    if isinstance(clusters, KernelBank):
        bank = clusters
    else:
        if clusters.assignment.shape[0] != raster.shape[0]:
            raise ValueError(
                f"raster has {raster.shape[0]} channels, clustering covers "
                f"{clusters.assignment.shape[0]}"
            )
        bank = init_kernel_bank(clusters, bank_seed, params.channel_stride)
    steps = n_conv_steps(raster.shape[1], params.temporal_stride)
    rows = raster.astype(np.int64).tolist()
    w0 = bank.w0.tolist()
    table = {
        1: tuple(update_magnitude(1, d, params.tau_r) for d in range(KERNEL)),
        -1: tuple(update_magnitude(-1, d, params.tau_r) for d in range(KERNEL)),
    }
    out: list[float] = []
    for k, (_, chans) in enumerate(bank.windows):
        out.extend(
            _run_kernel(
                [rows[c] for c in chans], w0, steps, params.temporal_stride,
                threshold, table, hook, k,
            )
        )
    return np.array(out, dtype=np.float64)


class FeatureExtractionError(RuntimeError):
    def __init__(self, sample_id: str, cause: Exception):
        self.sample_id = sample_id
        super().__init__(f"sample {sample_id}: {cause}")


def _extract_one(args):
    sample_id, raster, bank, params, threshold = args
    try:
        return extract_features(raster, bank, 0, params, threshold)
    except Exception as exc:  # noqa: BLE001 - re-raised with the sample id
        raise FeatureExtractionError(sample_id, exc) from exc


def extract_dataset_features(
    rasters: Sequence[np.ndarray],
    clusters: ClusterAssignment,
    bank_seed: int,
    params: PlasticityParams,
    threshold: float,
    sample_ids: Sequence[str] | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Feature matrix (n_samples, 9 * n_kernels), rows in input order.

    ``workers > 1`` spreads samples over processes; results are identical
    to the sequential path.
    """
    bank = init_kernel_bank(clusters, bank_seed, params.channel_stride)
    if sample_ids is None:
        sample_ids = [str(i) for i in range(len(rasters))]
    jobs = [(sid, r, bank, params, threshold) for sid, r in zip(sample_ids, rasters)]
    if not jobs:
        return np.empty((0, bank.feature_length))
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_extract_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_extract_one(job) for job in jobs]
    return np.vstack(rows)
