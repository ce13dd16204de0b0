"""Euclidean k-nearest-neighbour classification and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


class KnnModel:
    """Stored training set queried by majority vote of the k nearest vectors.

    Ties in distance go to the lower training index. Ties in the vote go to
    the class whose voting neighbours have the smaller summed distance, then
    to the lower class id.
    """

    def __init__(self, vectors, labels, k: int):
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.vectors.ndim != 2:
            raise ValueError("training vectors must form a 2-D array")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ValueError("one label per training vector required")
        if not 1 <= k <= self.vectors.shape[0]:
            raise ValueError(f"k={k} must be between 1 and {self.vectors.shape[0]}")
        self.k = int(k)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def distances(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query has shape {q.shape}, model expects ({self.dim},)")
        diff = self.vectors - q
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def predict(self, query) -> int:
        d = self.distances(query)
        nearest = np.argsort(d, kind="stable")[: self.k]
        votes: dict[int, list[float]] = {}
        for i in nearest:
            votes.setdefault(int(self.labels[i]), []).append(float(d[i]))
        return min(votes, key=lambda c: (-len(votes[c]), sum(votes[c]), c))

    def predict_many(self, queries) -> np.ndarray:
        return np.array([self.predict(q) for q in np.asarray(queries)], dtype=np.int64)


def knn_predict(model: KnnModel, query) -> int:
    return model.predict(query)


@dataclass
class Split:
    train: np.ndarray
    test: np.ndarray
    seed: int
    fold: int = 0


def split_dataset(labels, train_fraction: float, seed: int, fold: int = 0) -> Split:
    """Stratified, seeded train/test split over sample indices.

    Per-class train counts are the floors of ``train_fraction * count`` with
    the leftover seats handed out by largest remainder, so the total train
    size is ``round(train_fraction * n)``. Every class with at least two
    samples lands in both partitions; singleton classes go to train.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    members = {int(c): np.flatnonzero(labels == c) for c in classes}
    exact = {c: train_fraction * len(m) for c, m in members.items()}
    quota = {c: int(np.floor(v)) for c, v in exact.items()}
    leftover = int(round(train_fraction * len(labels))) - sum(quota.values())
    for c in sorted(exact, key=lambda c: (-(exact[c] - quota[c]), c))[: max(leftover, 0)]:
        quota[c] += 1
    train, test = [], []
    for c, idx in members.items():
        if len(idx) == 1:
            log.warning("class %d has a single sample; it goes to train", c)
            train.extend(idx.tolist())
            continue
        n_train = min(max(quota[c], 1), len(idx) - 1)
        rng = np.random.default_rng([seed, fold, c])
        perm = idx[rng.permutation(len(idx))]
        train.extend(perm[:n_train].tolist())
        test.extend(perm[n_train:].tolist())
    return Split(np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64)), seed, fold)


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray
    precision: list[float]
    recall: list[float]
    seed: int | None = None
    fold: int | None = None
    n_test: int = field(init=False)

    def __post_init__(self) -> None:
        self.n_test = int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "precision": self.precision,
            "recall": self.recall,
            "seed": self.seed,
            "fold": self.fold,
            "n_test": self.n_test,
        }


def report_from_confusion(confusion: np.ndarray, seed=None, fold=None) -> EvalReport:
    cm = np.asarray(confusion, dtype=np.int64)
    total = int(cm.sum())
    col, row = cm.sum(axis=0), cm.sum(axis=1)
    diag = np.diag(cm)
    precision = [float(diag[c] / col[c]) if col[c] else 0.0 for c in range(cm.shape[0])]
    recall = [float(diag[c] / row[c]) if row[c] else 0.0 for c in range(cm.shape[0])]
    accuracy = float(diag.sum() / total) if total else 0.0
    return EvalReport(accuracy, cm, precision, recall, seed, fold)


def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def evaluate(
    train_x, train_y, test_x, test_y, k: int, n_classes: int | None = None,
    seed: int | None = None, fold: int | None = None,
) -> EvalReport:
    """Fit on the training partition and score the test partition.

    Confusion rows are true labels, columns predicted labels.
    """
    if len(train_y) == 0 or len(test_y) == 0:
        raise ValueError("train and test partitions must be non-empty")
    model = KnnModel(train_x, train_y, k)
    pred = model.predict_many(test_x)
    if n_classes is None:
        n_classes = int(max(np.max(train_y), np.max(test_y), pred.max())) + 1
    return report_from_confusion(confusion_matrix(test_y, pred, n_classes), seed, fold)


def repeated_evaluation(
    features, labels, k: int, train_fraction: float, seed: int, n_splits: int,
    n_classes: int | None = None,
) -> list[EvalReport]:
    """Evaluate over ``n_splits`` stratified splits seeded from (seed, fold)."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    reports = []
    for fold in range(n_splits):
        sp = split_dataset(labels, train_fraction, seed, fold)
        reports.append(
            evaluate(
                features[sp.train], labels[sp.train], features[sp.test], labels[sp.test],
                k, n_classes, seed, fold,
            )
        )
    return reports


def format_confusion(confusion: np.ndarray, class_names: Sequence[str]) -> str:
    """Text table of counts with row-normalized percentages."""
    cm = np.asarray(confusion, dtype=np.int64)
    if len(class_names) != cm.shape[0]:
        raise ValueError(
            f"{len(class_names)} class names for a {cm.shape[0]}x{cm.shape[0]} matrix"
        )
    rows = cm.sum(axis=1)
    width = max(max(len(n) for n in class_names), 12)
    lines = ["true \\ pred".ljust(width) + "".join(n.rjust(width) for n in class_names)]
    for r, name in enumerate(class_names):
        cells = []
        for c in range(cm.shape[1]):
            pct = 100.0 * cm[r, c] / rows[r] if rows[r] else 0.0
            cells.append(f"{cm[r, c]} ({pct:.1f}%)".rjust(width))
        lines.append(name.ljust(width) + "".join(cells))
    return "\n".join(lines)


def confusion_rows(confusion: np.ndarray, class_names: Sequence[str]) -> list[list]:
    """CSV rows: header then one row per true class, counts then percentages."""
    cm = np.asarray(confusion, dtype=np.int64)
    if len(class_names) != cm.shape[0]:
        raise ValueError(
            f"{len(class_names)} class names for a {cm.shape[0]}x{cm.shape[0]} matrix"
        )
    header = ["true"] + list(class_names) + [f"{n}_pct" for n in class_names]
    out = [header]
    for r, name in enumerate(class_names):
        total = cm[r].sum()
        pct = [round(100.0 * v / total, 4) if total else 0.0 for v in cm[r]]
        out.append([name] + cm[r].tolist() + pct)
    return out
