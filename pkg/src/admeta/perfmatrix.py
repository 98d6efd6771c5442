"""Detector-by-dataset performance matrices (AUC and AP)."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Corpus, Dataset, DataError
from .detectors import DetectorError, DetectorSpec, run_detector
from .metrics import MetricError, auc, average_precision

logger = logging.getLogger(__name__)


@dataclass
class PerformanceMatrix:
    """``values[i, j]`` is the metric of detector j on dataset i; NaN marks a missing cell."""

    metric: str
    detector_ids: list[str]
    dataset_names: list[str]
    values: np.ndarray
    reasons: dict[tuple[str, str], str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.dataset_names), len(self.detector_ids)):
            raise ValueError(f"values shape {self.values.shape} does not match labels")
        if len(set(self.detector_ids)) != len(self.detector_ids):
            raise ValueError("duplicate detector ids")
        if len(set(self.dataset_names)) != len(self.dataset_names):
            raise ValueError("duplicate dataset names")
        v = self.values[~np.isnan(self.values)]
        if ((v < 0) | (v > 1)).any():
            raise ValueError("performance values must lie in [0, 1]")

    def row(self, dataset: str) -> np.ndarray:
        return self.values[self.dataset_names.index(dataset)]

    def value(self, dataset: str, detector: str) -> float:
        return float(self.row(dataset)[self.detector_ids.index(detector)])

    def subset(self, names: Sequence[str]) -> "PerformanceMatrix":
        idx = [self.dataset_names.index(n) for n in names]
        return PerformanceMatrix(self.metric, list(self.detector_ids), list(names), self.values[idx])

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", *self.detector_ids])
            for name, row in zip(self.dataset_names, self.values):
                w.writerow([name, *("" if np.isnan(v) else repr(float(v)) for v in row)])

    @classmethod
    def load(cls, path: str | Path, metric: str | None = None) -> "PerformanceMatrix":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"no such file: {path}")
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "dataset":
            raise DataError(f"{path}: not a performance matrix (header must start with 'dataset')")
        ids = rows[0][1:]
        names, values = [], []
        for r in rows[1:]:
            if not r:
                continue
            names.append(r[0])
            values.append([float(c) if c.strip() else np.nan for c in r[1:]])
        if metric is None:
            metric = "AP" if "ap" in path.stem.lower() else "AUC"
        return cls(metric, ids, names, np.array(values, dtype=np.float64).reshape(len(names), len(ids)))


def top_performance(matrix: PerformanceMatrix, dataset: str) -> tuple[str, float]:
    """Best measured (detector, value) of a row; missing cells skipped, first wins ties."""
    row = matrix.row(dataset)
    if np.isnan(row).all():
        raise ValueError(f"{dataset}: every cell is missing")
    j = int(np.nanargmax(row))
    return matrix.detector_ids[j], float(row[j])


def _evaluate_dataset(dataset: Dataset, specs: Sequence[DetectorSpec]) -> list[tuple[float, float, str | None]]:
    cells = []
    for spec in specs:
        try:
            scores = run_detector(spec, dataset)
            cells.append((auc(scores, dataset.labels), average_precision(scores, dataset.labels), None))
        except (DetectorError, MetricError) as exc:
            cells.append((np.nan, np.nan, str(exc)))
    return cells


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def build_matrices(corpus: Corpus | Sequence[Dataset], detectors: Sequence[DetectorSpec],
                   workers: int | None = None) -> tuple[PerformanceMatrix, PerformanceMatrix]:
    """Score every dataset with every detector and return the (AUC, AP) matrices.

    Failed detectors and single-class datasets leave missing cells, with the
    reason kept in ``matrix.reasons``. Output does not depend on ``workers``.
    """
    datasets = list(corpus)
    for ds in datasets:
        if ds.labels is None:
            raise DataError(f"dataset {ds.name!r} has no labels; the performance matrix needs them")
    workers = default_workers() if workers is None else workers
    specs = list(detectors)
    if workers <= 1 or len(datasets) <= 1:
        results = [_evaluate_dataset(ds, specs) for ds in datasets]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_dataset, datasets, [specs] * len(datasets)))
    ids = [s.id for s in specs]
    names = [ds.name for ds in datasets]
    y_auc = np.full((len(names), len(ids)), np.nan)
    y_ap = np.full_like(y_auc, np.nan)
    reasons: dict[tuple[str, str], str] = {}
    for i, cells in enumerate(results):
        for j, (a, p, why) in enumerate(cells):
            y_auc[i, j], y_ap[i, j] = a, p
            if why is not None:
                reasons[(names[i], ids[j])] = why
                logger.warning("missing cell (%s, %s): %s", names[i], ids[j], why)
    return (PerformanceMatrix("AUC", ids, names, y_auc, dict(reasons)),
            PerformanceMatrix("AP", ids, names, y_ap, dict(reasons)))
