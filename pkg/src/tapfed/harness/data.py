"""Synthetic datasets, CSV loading and per-party partitioning."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError("X must be 2-D with one row per label")

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


def make_two_class(n_samples: int, n_features: int, separation: float = 1.5,
                   seed: int = 0) -> Dataset:
    """Two Gaussian blobs whose means differ by ``separation`` along a random direction."""
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=n_features)
    direction /= np.linalg.norm(direction)
    y = rng.integers(0, 2, size=n_samples)
    X = rng.normal(size=(n_samples, n_features)) + np.outer(2 * y - 1, direction) * separation / 2
    return Dataset(X, y.astype(float))


def make_linear(n_samples: int, n_features: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    w = rng.normal(size=n_features) / np.sqrt(n_features)
    X = rng.normal(size=(n_samples, n_features))
    return Dataset(X, X @ w + 0.3 + noise * rng.normal(size=n_samples))


def load_csv(path) -> Dataset:
    """Features in every column but the last, label last; a header row is skipped."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    arr = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return Dataset(arr[:, :-1], arr[:, -1])


def train_test_split(data: Dataset, test_fraction: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    n_test = int(round(len(data) * test_fraction))
    return data.subset(perm[n_test:]), data.subset(perm[:n_test])


def partition_data(data: Dataset, n_parties: int, mode: str = "iid",
                   concentration: float = 1.0, seed: int = 0) -> list:
    """Disjoint per-party datasets.

    ``label-skew`` draws, for each class, party proportions from a symmetric
    Dirichlet with the given concentration; ``inf`` gives an even split.
    """
    if len(data) < n_parties:
        raise ConfigError(f"{len(data)} samples cannot cover {n_parties} parties")
    rng = np.random.default_rng(seed)
    if mode == "iid":
        perm = rng.permutation(len(data))
        return [data.subset(np.sort(chunk)) for chunk in np.array_split(perm, n_parties)]
    if mode != "label-skew":
        raise ConfigError(f"unknown partition mode {mode!r}")
    classes = np.unique(data.y)
    for _ in range(100):
        buckets = [[] for _ in range(n_parties)]
        for c in classes:
            idx = rng.permutation(np.flatnonzero(data.y == c))
            if np.isinf(concentration):
                props = np.full(n_parties, 1.0 / n_parties)
            else:
                props = rng.dirichlet(np.full(n_parties, concentration))
            cuts = (np.cumsum(props)[:-1] * len(idx)).round().astype(int)
            for b, chunk in zip(buckets, np.split(idx, cuts)):
                b.extend(chunk.tolist())
        if all(buckets):
            return [data.subset(np.sort(np.array(b))) for b in buckets]
    raise ConfigError("label-skew split left a party without samples; raise the concentration")
