"""Illumination estimation and switching over feature vectors.

The estimator assigns one of the known illumination labels to any sample
by nearest centroid; the switch is the same machinery trained over
condition indices 1..N so that every deployment sample is forced into one
of the N chosen conditions.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Sample, SampleSet


@dataclass(frozen=True)
class CentroidClassifier:
    """Nearest-centroid classifier; ties always resolve to the lowest label.

    Labels are kept strictly increasing so that the first arg-min index is
    the lowest label.
    """

    labels: tuple[int, ...]
    centroids: np.ndarray

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        arr = np.array(self.centroids, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != len(labels):
            raise ValueError("centroids must be a (n_labels, d) matrix")
        if not labels:
            raise ValueError("classifier requires at least one label")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise ValueError("labels must be strictly increasing")
        if not np.isfinite(arr).all():
            raise ValueError("centroids must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "centroids", arr)

    @property
    def dimension(self) -> int:
        return self.centroids.shape[1]


def _check_dim(classifier: CentroidClassifier, d: int) -> None:
    if d != classifier.dimension:
        raise ValueError(f"dimension mismatch: classifier is {classifier.dimension}-d, input is {d}-d")


def classify_batch(classifier: CentroidClassifier, features: np.ndarray) -> np.ndarray:
    """Predicted labels for an (n, d) matrix of feature vectors."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("classify_batch expects an (n, d) matrix")
    _check_dim(classifier, x.shape[1])
    sq = ((x[:, None, :] - classifier.centroids[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(sq, axis=1)
    return np.asarray(classifier.labels, dtype=np.int64)[idx]


def classify(classifier: CentroidClassifier, x) -> int:
    """Label of the nearest centroid under Euclidean distance."""
    vec = x.features if isinstance(x, Sample) else np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("classify expects a single feature vector")
    return int(classify_batch(classifier, vec[None, :])[0])


def train_illumination_estimator(labeled: SampleSet) -> CentroidClassifier:
    """Per-label mean centroids from a fully illumination-labeled set."""
    if len(labeled) == 0:
        raise ValueError("cannot train an illumination estimator on an empty set")
    if any(s.illumination is None for s in labeled):
        raise ValueError("every training sample must carry an illumination label")
    mat = labeled.feature_matrix()
    labs = labeled.illuminations()
    uniq = sorted(int(v) for v in np.unique(labs))
    centroids = np.stack([mat[labs == lab].mean(axis=0) for lab in uniq])
    return CentroidClassifier(labels=tuple(uniq), centroids=centroids)


def most_common_labels(classifier: CentroidClassifier, target: SampleSet, n: int) -> list[int]:
    """The n most frequently predicted labels over the target, by descending
    count; count ties resolve to the lower label."""
    if n < 1:
        raise ValueError("n must be >= 1")
    preds = classify_batch(classifier, target.feature_matrix())
    counts = Counter(int(v) for v in preds)
    if n > len(counts):
        raise ValueError(f"n={n} exceeds the {len(counts)} distinct predicted labels")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [lab for lab, _ in ordered[:n]]


def coverage_fraction(classifier: CentroidClassifier, target: SampleSet, labels: Sequence[int]) -> float:
    """Fraction of target samples whose predicted label is in ``labels``."""
    if len(labels) == 0:
        raise ValueError("labels must be non-empty")
    if len(target) == 0:
        return 0.0
    preds = classify_batch(classifier, target.feature_matrix())
    return float(np.isin(preds, np.asarray(list(labels), dtype=np.int64)).mean())


def train_switch(per_condition: Sequence[SampleSet]) -> CentroidClassifier:
    """Nearest-centroid switch over condition indices 1..N, one training set
    per condition."""
    if len(per_condition) < 1:
        raise ValueError("at least one condition set is required")
    dims = {s.dimension for s in per_condition}
    if len(dims) != 1:
        raise ValueError("condition sets must share one feature dimension")
    centroids = []
    for i, sset in enumerate(per_condition, start=1):
        if len(sset) == 0:
            raise ValueError(f"condition {i} training set is empty")
        centroids.append(sset.feature_matrix().mean(axis=0))
    return CentroidClassifier(
        labels=tuple(range(1, len(per_condition) + 1)),
        centroids=np.stack(centroids),
    )


def partition_target(switch: CentroidClassifier, target: SampleSet) -> list[SampleSet]:
    """Partition by switch prediction: one SampleSet per condition, order
    preserved within each; the union is exactly the input."""
    if len(target) == 0:
        return [SampleSet([], dimension=target.dimension) for _ in switch.labels]
    preds = classify_batch(switch, target.feature_matrix())
    return [target.take(np.flatnonzero(preds == lab)) for lab in switch.labels]


def write_classifier(path, classifier: CentroidClassifier) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lab, row in zip(classifier.labels, classifier.centroids):
            fh.write(str(lab) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_classifier(path) -> CentroidClassifier:
    path = Path(path)
    labels, rows = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return CentroidClassifier(labels=tuple(labels), centroids=np.array(rows))
