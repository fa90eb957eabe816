"""Datasets and class-incremental task streams.

A dataset is a per-class 80/20 train/test split over labeled feature
vectors. A stream partitions the classes into tasks with mutually
exclusive label sets; labels keep their global ids so one K-way head
serves the whole sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParseError


@dataclass
class LabeledData:
    """Unsplit labeled samples, as loaded from disk."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    label_map: dict | None = None  # original -> dense id, set by the CSV loader


@dataclass
class Dataset:
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    num_classes: int
    label_map: dict | None = None

    @property
    def input_dim(self):
        return self.train_features.shape[1]


@dataclass
class TaskSpec:
    index: int
    class_ids: tuple
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray


@dataclass
class TaskStream:
    tasks: list = field(default_factory=list)
    num_classes: int = 0

    @property
    def num_tasks(self):
        return len(self.tasks)

    @property
    def input_dim(self):
        return self.tasks[0].train_features.shape[1]


def split_per_class(features, labels, num_classes, label_map=None):
    """Assemble a Dataset by splitting each class 80/20 in sample order.

    Deterministic: the first 80% of each class's samples (floor of one
    fifth reserved for test) become training data.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_x, train_y, test_x, test_y = [], [], [], []
    for c in range(num_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size < 5:
            raise DataError(f"class {c} has {idx.size} samples; need >= 5 for an 80/20 split")
        n_test = idx.size // 5
        train_idx, test_idx = idx[:idx.size - n_test], idx[idx.size - n_test:]
        train_x.append(features[train_idx])
        train_y.append(labels[train_idx])
        test_x.append(features[test_idx])
        test_y.append(labels[test_idx])
    return Dataset(
        train_features=np.concatenate(train_x),
        train_labels=np.concatenate(train_y),
        test_features=np.concatenate(test_x),
        test_labels=np.concatenate(test_y),
        num_classes=num_classes,
        label_map=label_map,
    )


def make_synthetic_gaussian(num_classes, per_class, dim, spread, seed):
    """Isotropic Gaussian blobs around class means on the seeded unit sphere."""
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if dim < 2:
        raise ConfigError("need at least 2 feature dimensions")
    if spread <= 0:
        raise ConfigError("spread must be positive")
    if per_class < 5:
        raise DataError(f"per_class={per_class} too small for an 80/20 split; need >= 5")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((num_classes, dim))
    means /= np.maximum(np.linalg.norm(means, axis=1, keepdims=True), 1e-12)
    features = np.empty((num_classes * per_class, dim))
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        features[block] = means[c] + spread * rng.standard_normal((per_class, dim))
        labels[block] = c
    return split_per_class(features, labels, num_classes)


def split_class_incremental(dataset, num_tasks, seed):
    """Partition classes into ``num_tasks`` disjoint, equally sized tasks.

    seed=0 keeps the identity class order; any other seed applies a seeded
    permutation before chunking.
    """
    k = dataset.num_classes
    if num_tasks < 1 or k % num_tasks != 0:
        raise DataError(f"{k} classes not divisible into {num_tasks} tasks")
    if seed == 0:
        order = np.arange(k)
    else:
        order = np.random.default_rng(seed).permutation(k)
    per_task = k // num_tasks
    tasks = []
    for t in range(num_tasks):
        class_ids = tuple(int(c) for c in order[t * per_task:(t + 1) * per_task])
        train_mask = np.isin(dataset.train_labels, class_ids)
        test_mask = np.isin(dataset.test_labels, class_ids)
        tasks.append(TaskSpec(
            index=t,
            class_ids=class_ids,
            train_features=dataset.train_features[train_mask],
            train_labels=dataset.train_labels[train_mask],
            test_features=dataset.test_features[test_mask],
            test_labels=dataset.test_labels[test_mask],
        ))
    return TaskStream(tasks=tasks, num_classes=k)


def save_dataset_csv(path, features, labels):
    """Write rows of "label,f0,...,f{d-1}" with a header, full float round-trip."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(features.shape[1])])
        for label, row in zip(labels, features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_dataset_csv(path):
    """Parse a labeled CSV into :class:`LabeledData`.

    Labels are remapped onto a dense [0, K) range (sorted original order)
    and the mapping is recorded on the returned dataset. Any malformed row
    raises :class:`ParseError` carrying its 1-based line number. Use
    :func:`split_per_class` to turn the result into a train/test Dataset.
    """
    with open(path, "r", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2 or header[0] != "label":
        raise ParseError(f"{path}: header must be 'label,f0,...'", line=1)
    dim = len(header) - 1
    if len(rows) == 1:
        raise ParseError(f"{path}: no samples", line=1)
    raw_labels = []
    features = np.empty((len(rows) - 1, dim))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != dim + 1:
            raise ParseError(f"{path}: expected {dim + 1} fields, got {len(row)}", line=i)
        try:
            label = float(row[0])
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}: non-numeric field ({exc})", line=i) from None
        if label != int(label):
            raise ParseError(f"{path}: non-integer label {row[0]}", line=i)
        raw_labels.append(int(label))
        features[i - 2] = values
    uniques = sorted(set(raw_labels))
    label_map = {orig: dense for dense, orig in enumerate(uniques)}
    labels = np.array([label_map[v] for v in raw_labels], dtype=np.int64)
    return LabeledData(features=features, labels=labels,
                       num_classes=len(uniques), label_map=label_map)
