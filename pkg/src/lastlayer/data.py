"""Datasets, standardization, and deterministic CSV round-tripping.

CSV schema for datasets: ``x_0..x_{n_x-1}, t_0..t_{n_y-1}, split`` with
split in {train, val, test}.  Floats are written with ``repr`` so files are
byte-identical across reruns and parse back to the exact same doubles.
"""

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "Standardizer",
    "fit_standardizer",
    "split_train_val",
    "read_splits_csv",
    "write_splits_csv",
]


@dataclass(frozen=True)
class Dataset:
    """Input matrix (m, n_x) and target matrix (m, n_y)."""

    x: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        t = np.atleast_2d(np.asarray(self.t, dtype=float))
        if t.shape[0] == 1 and x.shape[0] > 1:
            t = t.T
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        if self.x.shape[0] != self.t.shape[0]:
            raise ValueError("inputs and targets disagree on sample count")
        if not (np.isfinite(self.x).all() and np.isfinite(self.t).all()):
            raise ValueError("dataset contains non-finite values")

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def n_x(self) -> int:
        return self.x.shape[1]

    @property
    def n_y(self) -> int:
        return self.t.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.x[idx], self.t[idx])


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map to zero mean / unit variance."""

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.scale

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.scale + self.mean


def fit_standardizer(values: np.ndarray) -> Standardizer:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    mean = values.mean(axis=0)
    scale = values.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return Standardizer(mean, scale)


def identity_standardizer(n: int) -> Standardizer:
    return Standardizer(np.zeros(n), np.ones(n))


def split_train_val(
    data: Dataset, val_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministic shuffle split; the validation part gets the tail."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    n_val = max(1, int(round(data.m * val_fraction)))
    if n_val >= data.m:
        raise ValueError("validation split would consume the whole dataset")
    perm = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed))).permutation(
        data.m
    )
    return data.subset(perm[:-n_val]), data.subset(perm[-n_val:])


def _fmt(value: float) -> str:
    return repr(float(value))


def write_splits_csv(path, splits: dict[str, Dataset]) -> None:
    first = next(iter(splits.values()))
    header = (
        [f"x_{i}" for i in range(first.n_x)]
        + [f"t_{j}" for j in range(first.n_y)]
        + ["split"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for name, data in splits.items():
            for i in range(data.m):
                row = [_fmt(v) for v in data.x[i]] + [_fmt(v) for v in data.t[i]]
                writer.writerow(row + [name])


def read_splits_csv(path) -> dict[str, Dataset]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_x = sum(1 for c in header if c.startswith("x_"))
        n_y = sum(1 for c in header if c.startswith("t_"))
        buckets: dict[str, list[list[float]]] = {}
        for row in reader:
            buckets.setdefault(row[-1], []).append([float(v) for v in row[:-1]])
    out = {}
    for name, rows in buckets.items():
        arr = np.array(rows)
        out[name] = Dataset(arr[:, :n_x], arr[:, n_x : n_x + n_y])
    return out


def write_table_csv(path, header: list[str], rows: list[list[float]]) -> None:
    """Generic numeric table writer with deterministic float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def read_table_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows)
