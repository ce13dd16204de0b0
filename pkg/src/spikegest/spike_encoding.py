"""Temporal-contrast (delta) spike encoding of analog channels."""

from __future__ import annotations

import numpy as np

from .signal_io import Sample


class EncodingError(ValueError):
    """Raised for non-finite input; carries the offending channel and timestep."""

    def __init__(self, channel: int, timestep: int, value: float):
        self.channel = channel
        self.timestep = timestep
        super().__init__(f"non-finite value {value!r} at channel {channel}, timestep {timestep}")


def encode_raster(signal: np.ndarray, threshold: float, return_residual: bool = False):
    """Encode every row of a (channels, T) array into a signed spike raster.

    At each step k >= 1 the change ``f[k] - f[k-1]`` is added to a carried
    residual. When the magnitude of the sum reaches ``threshold`` a spike of
    the same sign is emitted and the residual drops to exactly zero;
    otherwise the sum is carried forward. Step 0 never spikes.

    Returns:
        int8 array with the shape of ``signal`` and values in {-1, 0, 1};
        with ``return_residual`` also the residual carried after each step.
    """
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"expected (channels, timesteps) with timesteps >= 1, got {x.shape}")
    bad = ~np.isfinite(x)
    if bad.any():
        ch, t = np.argwhere(bad)[0]
        raise EncodingError(int(ch), int(t), float(x[ch, t]))

    spikes = np.zeros(x.shape, dtype=np.int8)
    trace = np.zeros(x.shape) if return_residual else None
    residual = np.zeros(x.shape[0])
    diffs = np.diff(x, axis=1)
    for k in range(1, x.shape[1]):
        du = diffs[:, k - 1] + residual
        fire = np.abs(du) >= threshold
        spikes[:, k] = np.where(fire, np.sign(du), 0)
        residual = np.where(fire, 0.0, du)
        if trace is not None:
            trace[:, k] = residual
    if trace is not None:
        return spikes, trace
    return spikes


def encode_channel(signal, threshold: float) -> np.ndarray:
    """Encode one analog channel; see :func:`encode_raster`."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("encode_channel expects a 1-D signal")
    return encode_raster(x[None, :], threshold)[0]


def encode_sample(sample: Sample, threshold: float) -> np.ndarray:
    return encode_raster(sample.signal, threshold)


def write_raster(raster: np.ndarray, path, channel_ids=None) -> None:
    """Dump a raster as CSV, one row per channel."""
    with open(path, "w") as fh:
        for i, row in enumerate(np.asarray(raster)):
            prefix = f"{channel_ids[i]}," if channel_ids is not None else ""
            fh.write(prefix + ",".join(str(int(v)) for v in row) + "\n")
