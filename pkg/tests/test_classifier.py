import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import knn_vote
from spikegest.classifier import (
    KnnModel,
    confusion_matrix,
    confusion_rows,
    evaluate,
    format_confusion,
    repeated_evaluation,
    report_from_confusion,
    split_dataset,
)


def test_one_nearest_neighbour():
    model = KnnModel([[0, 0], [10, 10]], [0, 1], k=1)
    assert model.predict([1, 1]) == 0


def test_majority_vote():
    model = KnnModel([[0, 0], [0, 1], [10, 10]], [0, 0, 1], k=3)
    assert model.predict([9, 9]) == 0


def test_vote_tie_goes_to_closer_class():
    model = KnnModel([[0.0], [3.0]], [1, 0], k=2)
    assert model.predict([1.0]) == 1
    assert model.predict([2.0]) == 0


def test_vote_tie_with_equal_distance_goes_to_lower_class():
    model = KnnModel([[-1.0], [1.0]], [1, 0], k=2)
    assert model.predict([0.0]) == 0


def test_distance_tie_goes_to_lower_index():
    model = KnnModel([[1.0], [-1.0], [5.0]], [2, 1, 1], k=1)
    assert model.predict([0.0]) == 2


def test_bad_k_and_shape():
    with pytest.raises(ValueError):
        KnnModel([[0.0]], [0], k=2)
    with pytest.raises(ValueError):
        KnnModel([[0.0]], [0], k=1).predict([0.0, 1.0])


vectors = st.integers(2, 25).flatmap(
    lambda n: st.tuples(
        st.lists(st.lists(st.integers(-5, 5), min_size=3, max_size=3), min_size=n, max_size=n),
        st.lists(st.integers(0, 3), min_size=n, max_size=n),
        st.lists(st.integers(-5, 5), min_size=3, max_size=3),
        st.integers(1, n),
    )
)


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_matches_oracle(case):
    train, labels, query, k = case
    model = KnnModel(train, labels, k)
    assert model.predict(query) == knn_vote(train, labels, query, k)


@settings(max_examples=50, deadline=None)
@given(vectors, st.floats(0.1, 100), st.integers(0, 2**16))
def test_invariances(case, scale, seed):
    train, labels, query, k = case
    train, query = np.array(train, float), np.array(query, float)
    sq = ((train - query) ** 2).sum(axis=1)  # exact for integer coordinates
    assume(len(set(sq.tolist())) == len(sq))
    base = KnnModel(train, labels, k).predict(query)
    assert KnnModel(train * scale, labels, k).predict(query * scale) == base
    shift = np.random.default_rng(seed).normal(size=3)
    assert KnnModel(train + shift, labels, k).predict(query + shift) == base


def test_split_six_class_sizes():
    labels = np.repeat(np.arange(6), [68, 68, 66, 66, 66, 66])
    sp = split_dataset(labels, 0.8, seed=0)
    assert len(sp.train) == 320 and len(sp.test) == 80
    assert not set(sp.train) & set(sp.test)
    assert sorted(np.concatenate([sp.train, sp.test]).tolist()) == list(range(400))
    assert set(labels[sp.test]) == set(range(6))


def test_split_deterministic_and_fold_dependent():
    labels = np.repeat(np.arange(3), 20)
    a, b = split_dataset(labels, 0.75, 4), split_dataset(labels, 0.75, 4)
    assert np.array_equal(a.train, b.train)
    assert not np.array_equal(a.train, split_dataset(labels, 0.75, 4, fold=1).train)


@pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
def test_split_fraction_bounds(fraction):
    with pytest.raises(ValueError):
        split_dataset([0, 0, 1, 1], fraction, 0)


def test_singleton_class_goes_to_train():
    sp = split_dataset([0, 0, 0, 0, 1], 0.5, 0)
    assert 4 in sp.train


def test_self_retrieval():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 5))
    y = np.arange(30) % 3
    report = evaluate(x, y, x, y, k=1)
    assert report.accuracy == 1.0
    assert report.n_test == 30


def test_confusion_counts():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], 3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]
    r = report_from_confusion(cm)
    assert r.accuracy == 0.75
    assert r.precision == [1.0, 0.5, 1.0]
    assert r.recall == [0.5, 1.0, 1.0]


def test_repeated_evaluation_totals():
    rng = np.random.default_rng(1)
    y = np.repeat(np.arange(4), 10)
    x = rng.normal(size=(40, 3)) + y[:, None]
    reports = repeated_evaluation(x, y, 3, 0.8, seed=2, n_splits=3)
    assert [r.fold for r in reports] == [0, 1, 2]
    assert all(r.n_test == 8 and r.confusion.shape == (4, 4) for r in reports)


def test_format_confusion():
    cm = np.array([[3, 1], [0, 4]])
    text = format_confusion(cm, ["left", "right"])
    assert "3 (75.0%)" in text and "4 (100.0%)" in text
    rows = confusion_rows(cm, ["left", "right"])
    assert rows[0] == ["true", "left", "right", "left_pct", "right_pct"]
    assert rows[1] == ["left", 3, 1, 75.0, 25.0]


def test_format_confusion_name_mismatch():
    with pytest.raises(ValueError):
        format_confusion(np.eye(2, dtype=int), ["a"])
    with pytest.raises(ValueError):
        confusion_rows(np.eye(2, dtype=int), ["a", "b", "c"])
