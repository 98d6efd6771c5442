"""File formats and the offline train/evaluate pipeline composed from the library."""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Corpus, DataError, Dataset, SPLITS, load_corpus, make_rng, split_corpus
from .detectors import DetectorSpec, default_specs
from .metafeatures import FEATURE_NAMES, extract
from .metamodel import (MLPConfig, MetaModel, SelectionReport, load_model, report_from_predictions,
                        save_model, select_from_features, train)
from .perfmatrix import PerformanceMatrix, build_matrices
from .stats import compare_selectors, comparison_to_json
from .synth import write_synth_corpus

logger = logging.getLogger(__name__)

SPLIT_RATIOS = (0.60, 0.15, 0.25)


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def read_json(path: str | Path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# ------------------------------------------------------------------ features

def featurize(datasets: Iterable[Dataset]) -> tuple[list[str], np.ndarray]:
    names, rows = [], []
    for ds in datasets:
        names.append(ds.name)
        rows.append(extract(ds.unlabeled()))
    return names, np.array(rows).reshape(len(rows), len(FEATURE_NAMES))


def save_features(names: Sequence[str], F: np.ndarray, path) -> None:
    """Write one row per dataset; ``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        _write_features(names, F, path)
        return
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        _write_features(names, F, fh)


def _write_features(names, F, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["dataset", *FEATURE_NAMES])
    for name, row in zip(names, F):
        w.writerow([name, *(repr(float(v)) for v in row)])


def load_features(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["dataset", *FEATURE_NAMES]:
        raise DataError(f"{path}: unexpected feature header")
    body = [r for r in rows[1:] if r]
    return [r[0] for r in body], np.array([[float(c) for c in r[1:]] for r in body]).reshape(-1, len(FEATURE_NAMES))


# ------------------------------------------------------------------ splits, detectors, reports

def save_splits(corpus: Corpus, path: str | Path, seed: int, ratios=SPLIT_RATIOS) -> None:
    write_json({"seed": seed, "ratios": list(ratios), "assignment": dict(corpus.split_assignment)}, path)


def load_splits(path: str | Path) -> dict[str, str]:
    obj = read_json(path)
    assignment = obj.get("assignment", obj)
    if not set(assignment.values()) <= set(SPLITS):
        raise DataError(f"{path}: split names must be among {SPLITS}")
    return assignment


def load_detector_config(path: str | Path | None, seed: int = 0) -> list[DetectorSpec]:
    if path is None:
        return default_specs(seed)
    obj = read_json(path)
    if not isinstance(obj, list):
        raise DataError(f"{path}: detector config must be a JSON list of {{id, params, seed}}")
    return [DetectorSpec.from_json({"seed": seed, **entry}) for entry in obj]


def save_reports(reports: Sequence[SelectionReport], path: str | Path, selector: str) -> None:
    write_json({"selector": selector, "reports": [r.to_json() for r in reports]}, path)


def load_reports(path: str | Path) -> list[SelectionReport]:
    obj = read_json(path)
    items = obj["reports"] if isinstance(obj, dict) else obj
    return [SelectionReport.from_json(r) for r in items]


def random_reports(names: Sequence[str], detector_ids: Sequence[str], seed: int) -> list[SelectionReport]:
    """Uniform-random selections; the chosen detector gets predicted value 1."""
    rng = make_rng(seed, 0x5E1EC7)
    picks = rng.integers(len(detector_ids), size=len(names))
    return [report_from_predictions(n, detector_ids, np.eye(len(detector_ids))[j]) for n, j in zip(names, picks)]


def single_best_reports(names: Sequence[str], matrix: PerformanceMatrix, train_names: Sequence[str]) -> list[SelectionReport]:
    """Always select the detector with the best mean over ``train_names``."""
    means = np.nanmean(matrix.subset(train_names).values, axis=0)
    return [report_from_predictions(n, matrix.detector_ids, means) for n in names]


# ------------------------------------------------------------------ training

def split_rows(names: Sequence[str], assignment: dict[str, str], split: str) -> list[int]:
    return [i for i, n in enumerate(names) if assignment.get(n) == split]


def train_from_files(features_path, targets_path, splits: dict[str, str], config: MLPConfig,
                     metric: str | None = None) -> MetaModel:
    names, F = load_features(features_path)
    Y = PerformanceMatrix.load(targets_path, metric)
    missing = set(names) - set(Y.dataset_names)
    if missing:
        raise DataError(f"targets lack datasets: {sorted(missing)[:5]}")
    Yv = Y.subset(names).values
    tr, va = split_rows(names, splits, "train"), split_rows(names, splits, "val")
    if not tr:
        raise DataError("no datasets assigned to the train split")
    return train(F[tr], Yv[tr], F[va], Yv[va], config, Y.detector_ids, metric or Y.metric)


# ------------------------------------------------------------------ full pipeline

@contextmanager
def _stage(name: str, timings: dict[str, float]):
    t0 = time.perf_counter()
    logger.info("stage %s", name)
    try:
        yield
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


def run_pipeline(out_dir: str | Path, n_datasets: int = 200, seed: int = 9, metric: str = "AUC",
                 config: MLPConfig | None = None, detectors: Sequence[DetectorSpec] | None = None,
                 workers: int | None = None) -> dict:
    """synth -> featurize -> matrix -> split -> train -> select -> evaluate.

    Every artifact goes to ``out_dir``; returns the evaluation summary along
    with per-stage wall-clock timings.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = config or MLPConfig(seed=seed)
    detectors = list(detectors) if detectors is not None else default_specs(seed)
    timings: dict[str, float] = {}

    with _stage("synth", timings):
        write_synth_corpus(n_datasets, seed, out / "corpus")
        corpus = load_corpus(out / "corpus")
    with _stage("featurize", timings):
        names, F = featurize(corpus)
        save_features(names, F, out / "features.csv")
    with _stage("matrix", timings):
        y_auc, y_ap = build_matrices(corpus, detectors, workers)
        y_auc.save(out / "yauc.csv")
        y_ap.save(out / "yap.csv")
        write_json([d.to_json() for d in detectors], out / "detectors.json")
    with _stage("split", timings):
        split = split_corpus(corpus, SPLIT_RATIOS, seed)
        save_splits(split, out / "splits.json", seed)
    matrix_path = out / ("yauc.csv" if metric == "AUC" else "yap.csv")
    with _stage("train", timings):
        write_json({**config.__dict__, "hidden": list(config.hidden)}, out / "mlp.json")
        model = train_from_files(out / "features.csv", matrix_path, split.split_assignment, config, metric)
        save_model(model, out / "model.json")
    with _stage("select", timings):
        model = load_model(out / "model.json")
        feat_names, F = load_features(out / "features.csv")
        test = [n for n in feat_names if split.split_assignment[n] == "test"]
        train_names = [n for n in feat_names if split.split_assignment[n] == "train"]
        rows = {n: F[i] for i, n in enumerate(feat_names)}
        meta = [select_from_features(model, n, rows[n]) for n in test]
        matrix = PerformanceMatrix.load(matrix_path, metric)
        rand = random_reports(test, model.detector_ids, seed)
        best = single_best_reports(test, matrix, train_names)
        save_reports(meta, out / "reports_meta.json", "meta")
        save_reports(rand, out / "reports_random.json", "random")
        save_reports(best, out / "reports_single_best.json", "single_best")
    with _stage("evaluate", timings):
        vs_random = compare_selectors(matrix, meta, rand)
        vs_best = compare_selectors(matrix, meta, best)
        report = {
            "metric": metric,
            "n_test": len(test),
            "single_best_detector": best[0].selected if best else None,
            "meta_vs_random": comparison_to_json(vs_random),
            "meta_vs_single_best": comparison_to_json(vs_best),
        }
        write_json(report, out / "report.json")
    report["timings"] = timings
    return report
