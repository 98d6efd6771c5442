"""Datasets, corpora, CSV ingestion and seeded randomness."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SPLITS = ("train", "val", "test")


class DataError(ValueError):
    """Raised for malformed or invalid dataset input."""


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; same inputs give the same stream."""
    if seed < 0 or seed >= 2**64:
        raise DataError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    X: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError(f"{self.name}: X must be 2-D, got shape {X.shape}")
        n, k = X.shape
        if n < 2 or k < 1:
            raise DataError(f"{self.name}: need N >= 2 and K >= 1, got N={n}, K={k}")
        bad = ~np.isfinite(X).all(axis=1)
        if bad.any():
            raise DataError(f"{self.name}: non-finite value in row {int(np.flatnonzero(bad)[0])}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (n,):
                raise DataError(f"{self.name}: labels length {y.shape} != N={n}")
            if not np.isin(y, (0, 1)).all():
                raise DataError(f"{self.name}: labels must be 0/1")
            y = y.astype(np.int64)
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def unlabeled(self) -> "Dataset":
        return replace(self, labels=None)


@dataclass(frozen=True)
class Corpus:
    datasets: tuple[Dataset, ...]
    split_assignment: Mapping[str, str] | None = None
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        datasets = tuple(self.datasets)
        object.__setattr__(self, "datasets", datasets)
        index: dict[str, int] = {}
        for i, ds in enumerate(datasets):
            if ds.name in index:
                raise DataError(f"duplicate dataset name {ds.name!r}")
            index[ds.name] = i
        object.__setattr__(self, "_index", index)
        if self.split_assignment is not None:
            assignment = dict(self.split_assignment)
            if set(assignment) != set(index):
                raise DataError("split assignment must cover exactly the corpus datasets")
            if not set(assignment.values()) <= set(SPLITS):
                raise DataError(f"split names must be among {SPLITS}")
            object.__setattr__(self, "split_assignment", assignment)

    def __len__(self) -> int:
        return len(self.datasets)

    def __iter__(self):
        return iter(self.datasets)

    def __getitem__(self, name: str) -> Dataset:
        return self.datasets[self._index[name]]

    @property
    def names(self) -> list[str]:
        return [ds.name for ds in self.datasets]

    def subset(self, split: str) -> list[Dataset]:
        if self.split_assignment is None:
            raise DataError("corpus has no split assignment")
        return [ds for ds in self.datasets if self.split_assignment[ds.name] == split]


def _parse_float(cell: str, row: int, col: str, path: Path) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"{path}: non-numeric value {cell!r} in row {row}, column {col!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}: non-finite value {cell!r} in row {row}, column {col!r}")
    return value


def load_dataset(path: str | Path, label_column: str | None = None, name: str | None = None) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Every column other than ``label_column`` must be numeric. Rows with a
    non-finite value are rejected rather than imputed.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column is not None and label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        label_idx = header.index(label_column) if label_column is not None else None
        feat_idx = [j for j in range(len(header)) if j != label_idx]
        rows: list[list[float]] = []
        labels: list[int] = []
        for r, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise DataError(f"{path}: row {r} has {len(cells)} cells, header has {len(header)}")
            rows.append([_parse_float(cells[j], r, header[j], path) for j in feat_idx])
            if label_idx is not None:
                raw = cells[label_idx].strip()
                try:
                    lab = float(raw)
                except ValueError:
                    lab = math.nan
                if lab not in (0.0, 1.0):
                    raise DataError(f"{path}: label value {raw!r} in row {r} is not 0 or 1")
                labels.append(int(lab))
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 rows, got {len(rows)}")
    if not feat_idx:
        raise DataError(f"{path}: no feature columns")
    X = np.array(rows, dtype=np.float64)
    return Dataset(name or path.stem, X, np.array(labels) if label_idx is not None else None)


def save_dataset(dataset: Dataset, path: str | Path, label_column: str = "label",
                 columns: Sequence[str] | None = None) -> None:
    """Write ``dataset`` as CSV; floats use shortest round-trip repr."""
    columns = list(columns) if columns is not None else [f"x{j}" for j in range(dataset.k)]
    header = columns + ([label_column] if dataset.labels is not None else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.X[i]]
            if dataset.labels is not None:
                row.append(str(int(dataset.labels[i])))
            w.writerow(row)


def load_corpus(directory: str | Path, label_column: str | None = "label") -> Corpus:
    """Load every ``*.csv`` in ``directory`` (sorted by file name) as one corpus."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"no such corpus directory: {directory}")
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DataError(f"{directory}: no CSV files")
    return Corpus(tuple(load_dataset(f, label_column) for f in files))


def write_corpus(corpus: Iterable[Dataset], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for ds in corpus:
        p = directory / f"{ds.name}.csv"
        save_dataset(ds, p)
        out.append(p)
    return out


def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items over ``ratios``."""
    raw = [n * r for r in ratios]
    sizes = [math.floor(x) for x in raw]
    remainders = sorted(range(len(raw)), key=lambda j: (-(raw[j] - sizes[j]), j))
    for j in remainders[: n - sum(sizes)]:
        sizes[j] += 1
    return sizes


def assign_splits(names: Sequence[str], ratios: Sequence[float] = (0.60, 0.15, 0.25),
                  seed: int = 0) -> dict[str, str]:
    """Map every name to train/val/test via a seeded permutation and largest-remainder sizes."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError("ratios must be three positive fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)!r}")
    if len(names) < 4:
        raise DataError(f"corpus of {len(names)} datasets is too small to split")
    sizes = split_sizes(len(names), ratios)
    if sizes[2] == 0:
        raise DataError("ratios leave the test split empty")
    order = make_rng(seed).permutation(len(names))
    assignment: dict[str, str] = {}
    bounds = np.cumsum([0, *sizes])
    for split, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
        for idx in order[lo:hi]:
            assignment[names[idx]] = split
    return assignment


def split_corpus(corpus: Corpus, ratios: Sequence[float] = (0.60, 0.15, 0.25), seed: int = 0) -> Corpus:
    return Corpus(corpus.datasets, assign_splits(corpus.names, ratios, seed))
