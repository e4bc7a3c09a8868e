"""Dataset generation, Dirichlet non-iid partitioning, and CSV ingestion.

Every randomized operation here is a pure function of its inputs and seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .nn import Array

PARTITION_RETRIES = 100


@dataclass
class Dataset:
    features: Array  # (N, d) float64
    labels: Array    # (N,) int64
    classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (N, d) with one label per row")
        if len(self.features) < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise ValueError(f"labels must lie in [0, {self.classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx].copy(), self.labels[idx].copy(),
                       self.classes)


@dataclass
class PartitionSpec:
    clients: int
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if self.clients < 1:
            raise ValueError("client count must be at least 1")
        if self.alpha <= 0.0:
            raise ValueError("Dirichlet concentration must be positive")


def make_blobs(classes: int, per_class: int, dim: int, spread: float,
               seed: int = 0) -> Dataset:
    """Gaussian class clusters: unit-normal class means, per-sample noise of
    scale ``spread``. ``spread=0`` collapses each class onto its mean."""
    if classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("classes, per_class, and dim must be positive")
    if spread < 0:
        raise ValueError("spread must be nonnegative")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 1.0, size=(classes, dim))
    features = np.repeat(means, per_class, axis=0)
    features = features + spread * rng.normal(size=features.shape)
    labels = np.repeat(np.arange(classes), per_class)
    return Dataset(features, labels, classes)


def dirichlet_partition(ds: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Split a dataset across clients with per-class Dirichlet proportions.

    Each class's samples are divided by a fresh Dir(alpha * 1_K) draw; the
    whole assignment is redrawn (up to PARTITION_RETRIES times) until every
    client holds at least one sample.
    """
    k = spec.clients
    if k > len(ds):
        raise ValueError(f"cannot split {len(ds)} samples across {k} clients")
    rng = np.random.default_rng(spec.seed)
    by_class = [np.flatnonzero(ds.labels == c) for c in range(ds.classes)]
    for _ in range(PARTITION_RETRIES):
        assignment: list[list[int]] = [[] for _ in range(k)]
        for idx_c in by_class:
            if len(idx_c) == 0:
                continue
            idx_c = rng.permutation(idx_c)
            p = rng.dirichlet(np.full(k, spec.alpha))
            counts = _proportional_counts(p, len(idx_c))
            start = 0
            for client, take in enumerate(counts):
                assignment[client].extend(idx_c[start:start + take].tolist())
                start += take
        if all(len(a) > 0 for a in assignment):
            return [ds.subset(sorted(a)) for a in assignment]
    raise RuntimeError(
        f"could not give every one of {k} clients a sample in "
        f"{PARTITION_RETRIES} draws; fewer clients or a larger dataset needed")


def _proportional_counts(p: Array, n: int) -> Array:
    """Integer counts summing to n, proportional to p, largest remainders
    rounded up first (ties to the lower index)."""
    raw = p * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    if short > 0:
        remainders = raw - counts
        order = np.argsort(-remainders, kind="stable")
        counts[order[:short]] += 1
    return counts


def dev_indices(n: int, ratio: float, seed: int = 0) -> Array:
    """Sorted indices of a uniform subset of size max(1, floor(ratio * n))."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    size = max(1, int(ratio * n))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=size, replace=False))


def dev_split(ds: Dataset, ratio: float, seed: int = 0) -> Dataset:
    """Uniform subset of size max(1, floor(ratio * N)), without replacement,
    in original sample order."""
    return ds.subset(dev_indices(len(ds), ratio, seed))


def split_indices(n: int, fractions: list[float], seed: int) -> list[Array]:
    """Disjoint random index groups covering 0..n-1: one group per fraction
    (floored sizes) plus a final remainder group."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    groups = []
    start = 0
    for frac in fractions:
        take = int(frac * n)
        groups.append(np.sort(perm[start:start + take]))
        start += take
    groups.append(np.sort(perm[start:]))
    return groups


def load_csv(path, skip_header: bool = False) -> Dataset:
    """Parse a comma-separated file: numeric feature columns, final integer
    label column. Class count is max label + 1."""
    features: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if skip_header and lineno == 1:
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ValueError(f"line {lineno}: need at least one "
                                     "feature column and a label column")
            if len(row) != width:
                raise ValueError(f"line {lineno}: expected {width} columns, "
                                 f"got {len(row)}")
            try:
                feats = [float(v) for v in row[:-1]]
            except ValueError:
                raise ValueError(f"line {lineno}: malformed numeric value")
            try:
                label = int(row[-1])
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer label {row[-1]!r}")
            if label < 0:
                raise ValueError(f"line {lineno}: negative label {label}")
            features.append(feats)
            labels.append(label)
    if not features:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(features), np.array(labels), max(labels) + 1)
