import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spikegest.signal_io import (
    DataFormatError,
    ElectrodeLayout,
    LabeledDataset,
    Sample,
    Trial,
    ValidationError,
    generate_synthetic,
    load_trials,
    normalize_sample,
    normalize_signal,
    read_layout,
    segment_trials,
    synthetic_trials,
    write_recording,
)


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def small_files(tmp_path):
    signals = write(tmp_path / "signals.csv", "a,b\n0.0,1.5\n1.0,2.5\n2.0,3.5\n3.0,4.5\n")
    labels = write(tmp_path / "labels.csv", "trial_id,start_timestep,end_timestep,label\nt0,0,4,1\n")
    layout = write(tmp_path / "layout.csv", "channel_id,x,y,z\na,0,0,0\nb,1,0,0\n")
    return signals, labels, layout


def test_load_minimal(small_files):
    trials, layout = load_trials(*small_files)
    assert len(trials) == 1
    assert trials[0].signal.shape == (2, 4)
    assert trials[0].label == 1
    np.testing.assert_array_equal(trials[0].signal[1], [1.5, 2.5, 3.5, 4.5])
    assert layout.channel_ids == ["a", "b"]
    assert layout.positions.shape == (2, 3)


def test_layout_is_reordered_to_signal_header(tmp_path, small_files):
    signals, labels, _ = small_files
    layout = write(tmp_path / "l2.csv", "channel_id,x,y,z\nb,1,0,0\na,0,0,0\n")
    _, lay = load_trials(signals, labels, layout)
    assert lay.channel_ids == ["a", "b"]
    np.testing.assert_array_equal(lay.positions[1], [1, 0, 0])


def test_label_range_beyond_signal(tmp_path, small_files):
    signals, _, layout = small_files
    labels = write(tmp_path / "bad.csv", "trial_id,start_timestep,end_timestep,label\nt0,0,5,0\n")
    with pytest.raises(DataFormatError) as exc:
        load_trials(signals, labels, layout)
    assert exc.value.line == 2
    assert exc.value.field == "end_timestep"


def test_duplicate_layout_channel(tmp_path, small_files):
    signals, labels, _ = small_files
    layout = write(tmp_path / "dup.csv", "channel_id,x,y,z\na,0,0,0\na,1,0,0\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        load_trials(signals, labels, layout)
    with pytest.raises(ValidationError):
        ElectrodeLayout(["a", "a"], np.zeros((2, 3)))


def test_malformed_row_names_file_line_field(tmp_path, small_files):
    _, labels, layout = small_files
    signals = write(tmp_path / "s.csv", "a,b\n0.0,1.0\n1.0,oops\n2.0,3.0\n3.0,4.0\n")
    with pytest.raises(DataFormatError) as exc:
        load_trials(signals, labels, layout)
    assert exc.value.line == 3 and exc.value.field == "b"
    assert "s.csv" in str(exc.value)


def test_channel_count_mismatch(tmp_path, small_files):
    signals, labels, _ = small_files
    layout = write(tmp_path / "l3.csv", "channel_id,x,y,z\na,0,0,0\nb,1,0,0\nc,2,0,0\n")
    with pytest.raises(DataFormatError, match="channels"):
        load_trials(signals, labels, layout)


def test_layout_cluster_column(tmp_path):
    path = write(tmp_path / "l.csv", "channel_id,x,y,z,cluster\na,0,0,0,2\nb,1,0,0,0\n")
    lay = read_layout(path)
    assert lay.clusters == {"a": 2, "b": 0}


def test_round_trip(tmp_path, rng):
    layout = ElectrodeLayout(["x", "y", "z"], rng.normal(size=(3, 3)))
    trials = [Trial(f"t{i}", rng.normal(size=(3, 20 + i)), 1000.0, i % 2) for i in range(3)]
    paths = write_recording(trials, layout, tmp_path, gap=7)
    back, lay = load_trials(paths["signals"], paths["labels"], paths["layout"])
    assert [t.id for t in back] == [t.id for t in trials]
    for a, b in zip(trials, back):
        np.testing.assert_array_equal(a.signal, b.signal)
        assert a.label == b.label
    np.testing.assert_array_equal(lay.positions, layout.positions)


def _trial(n, label=0, tid="t"):
    return Trial(tid, np.arange(2 * n, dtype=float).reshape(2, n), 1000.0, label)


def test_segment_two_windows():
    samples, skipped = segment_trials([_trial(2000, label=3)], 1000)
    assert len(samples) == 2 and not skipped
    assert [s.window_index for s in samples] == [0, 1]
    assert all(s.label == 3 and s.signal.shape == (2, 1000) for s in samples)
    np.testing.assert_array_equal(samples[1].signal[0], np.arange(1000, 2000))


def test_segment_full_corpus_size():
    # 200 two-second trials, two one-second samples each
    trials = [_trial(2000, tid=f"t{i}") for i in range(200)]
    samples, _ = segment_trials(trials, 1000)
    assert len(samples) == 400


def test_segment_too_short_is_skipped():
    samples, skipped = segment_trials([_trial(999)], 1000)
    assert samples == [] and skipped == ["t"]


@given(n=st.integers(1, 60), w=st.integers(1, 25))
def test_segment_count_bound(n, w):
    samples, skipped = segment_trials([_trial(n)], w)
    assert len(samples) == n // w
    assert all(s.signal.shape[1] == w for s in samples)
    assert bool(skipped) == (n < w)


@pytest.mark.parametrize(
    "channel, expected",
    [([0, 5, 10], [-1, 0, 1]), ([3, 3, 3], [0, 0, 0]), ([-2, 0, 2], [-1, 0, 1])],
)
def test_normalize_examples(channel, expected):
    sample = Sample(np.array([channel], dtype=float), 0, "t", 0)
    np.testing.assert_array_equal(normalize_sample(sample).signal[0], expected)


@given(arrays(np.float64, (3, 17), elements=st.floats(-1e6, 1e6)))
def test_normalize_range_and_idempotence(x):
    y = normalize_signal(x)
    assert np.all(y >= -1) and np.all(y <= 1)
    np.testing.assert_array_equal(normalize_signal(y), y)


def test_dataset_validation():
    layout = ElectrodeLayout(["a", "b"], np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        LabeledDataset([Sample(np.zeros((3, 4)), 0, "t", 0)], ["c0"], layout)
    with pytest.raises(ValidationError):
        LabeledDataset([Sample(np.zeros((2, 4)), 1, "t", 0)], ["c0"], layout)


def test_synthetic_is_deterministic():
    a = generate_synthetic(6, 15, 20, 1000, seed=7)
    b = generate_synthetic(6, 15, 20, 1000, seed=7)
    assert len(a) == len(b) == 240
    for x, y in zip(a.samples, b.samples):
        assert x.signal.tobytes() == y.signal.tobytes()
        assert x.id == y.id and x.label == y.label
    assert a.layout.positions.tobytes() == b.layout.positions.tobytes()
    c = generate_synthetic(6, 15, 20, 1000, seed=8)
    assert a.samples[0].signal.tobytes() != c.samples[0].signal.tobytes()


def test_synthetic_without_stochastic_terms_repeats_within_class():
    ds = generate_synthetic(3, 9, 4, 200, seed=1, noise=0.0, phase_jitter=0.0)
    by_key = {}
    for s in ds.samples:
        by_key.setdefault((s.label, s.window_index), []).append(s.signal)
    for signals in by_key.values():
        for other in signals[1:]:
            np.testing.assert_array_equal(signals[0], other)
    # different classes must still differ
    assert not np.array_equal(by_key[(0, 0)][0], by_key[(1, 0)][0])


def test_synthetic_trials_are_order_independent():
    trials, _ = synthetic_trials(3, 9, [2, 3, 1], 100, seed=5)
    again, _ = synthetic_trials(3, 9, [4, 3, 1], 100, seed=5)
    first = {t.id: t.signal for t in trials}
    for t in again:
        if t.id in first:
            np.testing.assert_array_equal(first[t.id], t.signal)


@settings(max_examples=20, deadline=None)
@given(n_classes=st.integers(2, 4), n_channels=st.integers(3, 12), seed=st.integers(0, 2**16))
def test_synthetic_shapes(n_classes, n_channels, seed):
    ds = generate_synthetic(n_classes, n_channels, 2, 10, seed)
    assert len(ds) == n_classes * 2 * 2
    assert ds.layout.n_channels == n_channels
    assert all(s.signal.shape == (n_channels, 10) for s in ds.samples)


@pytest.mark.parametrize(
    "args",
    [(1, 15, 2, 100, 0), (3, 2, 2, 100, 0), (3, 15, 0, 100, 0), (3, 15, [1, 2], 100, 0)],
)
def test_synthetic_rejects_bad_counts(args):
    with pytest.raises(ValueError):
        generate_synthetic(*args)
