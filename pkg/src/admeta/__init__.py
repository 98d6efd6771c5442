"""Meta-learning selection of unsupervised anomaly detectors.

Given an unlabeled numeric dataset, compute 19 Mahalanobis-profile
meta-features and let an MLP trained on historical detector performance
recommend one of the registered detectors.
"""

from .data import Corpus, Dataset, load_dataset, split_corpus
from .detectors import DETECTOR_IDS, DetectorSpec, run_detector
from .metafeatures import FEATURE_NAMES, extract
from .metamodel import MLPConfig, MetaModel, SelectionReport, load_model, save_model, select, train
from .metrics import auc, average_precision
from .perfmatrix import PerformanceMatrix, build_matrices, top_performance

__all__ = [
    "Corpus", "Dataset", "load_dataset", "split_corpus",
    "DETECTOR_IDS", "DetectorSpec", "run_detector",
    "FEATURE_NAMES", "extract",
    "MLPConfig", "MetaModel", "SelectionReport", "load_model", "save_model", "select", "train",
    "auc", "average_precision",
    "PerformanceMatrix", "build_matrices", "top_performance",
]
