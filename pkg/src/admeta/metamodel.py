"""MLP meta-model: meta-features -> predicted performance of every detector.

A plain numpy multilayer perceptron (ReLU hidden layers, inverted dropout
after each hidden layer, linear output) trained with Adam on a masked mean
squared error, with early stopping on validation loss and restoration of the
best-validation weights.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, make_rng
from .metafeatures import N_FEATURES, extract

MODEL_FORMAT = "admeta.metamodel"
MODEL_VERSION = 1


class SchemaError(ValueError):
    """A persisted model does not match the expected schema."""


@dataclass(frozen=True)
class MLPConfig:
    hidden: tuple[int, ...] = (64, 64, 32)
    dropout: float = 0.2
    max_epochs: int = 1000
    batch_size: int = 32
    patience: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden must be a nonempty sequence of positive widths")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    @classmethod
    def from_json(cls, obj: dict) -> "MLPConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown MLP config keys {sorted(unknown)}")
        return cls(**obj)


@dataclass
class MetaModel:
    config: MLPConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    detector_ids: list[str]
    metric: str = "AUC"
    zero_variance: np.ndarray | None = None
    training_log: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    def __post_init__(self) -> None:
        dims = [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]
        for W, b, d_in, d_out in zip(self.weights, self.biases, dims[:-1], dims[1:]):
            if W.shape != (d_in, d_out) or b.shape != (d_out,):
                raise SchemaError(f"layer shapes do not chain: W{W.shape}, b{b.shape}")
        if dims[-1] != len(self.detector_ids):
            raise SchemaError(f"output width {dims[-1]} != {len(self.detector_ids)} detector ids")
        if self.scaler_mean.shape != (dims[0],) or self.scaler_std.shape != (dims[0],):
            raise SchemaError("scaler shape does not match the input layer")
        if (self.scaler_std <= 0).any():
            raise SchemaError("scaler std entries must be positive")
        if self.zero_variance is None:
            self.zero_variance = np.zeros(dims[0], dtype=bool)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


# ------------------------------------------------------------------ network

def _standardize(model: MetaModel, F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.shape[-1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} features, got {F.shape[-1]}")
    return (F - model.scaler_mean) / model.scaler_std


def _forward(weights, biases, A, masks=None):
    """Return the activations of every layer; ``masks`` holds dropout multipliers."""
    acts = [A]
    for i, (W, b) in enumerate(zip(weights, biases)):
        Z = acts[-1] @ W + b
        if i < len(weights) - 1:
            Z = np.maximum(Z, 0.0)
            if masks is not None:
                Z = Z * masks[i]
        acts.append(Z)
    return acts


def _dropout_masks(widths, n: int, rate: float, rng: np.random.Generator):
    if rate == 0.0:
        return None
    keep = 1.0 - rate
    return [(rng.random((n, w)) < keep) / keep for w in widths]


def forward(model: MetaModel, features, mode: str = "infer",
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Predicted performance per detector for one (19,) vector or an (n, 19) batch.

    ``mode="train"`` applies inverted dropout using ``rng``; ``"infer"`` is
    deterministic.
    """
    F = np.asarray(features, dtype=np.float64)
    single = F.ndim == 1
    A = _standardize(model, np.atleast_2d(F))
    masks = None
    if mode == "train":
        rng = rng if rng is not None else make_rng(model.config.seed, 2)
        masks = _dropout_masks([W.shape[1] for W in model.weights[:-1]], A.shape[0],
                               model.config.dropout, rng)
    elif mode != "infer":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    out = _forward(model.weights, model.biases, A, masks)[-1]
    return out[0] if single else out


def _masked_loss_grads(weights, biases, A, Y, M, masks=None):
    acts = _forward(weights, biases, A, masks)
    P = acts[-1]
    n_obs = M.sum()
    R = np.where(M, P - np.nan_to_num(Y), 0.0)
    loss = float((R * R).sum() / n_obs)
    delta = 2.0 * R / n_obs
    gW, gb = [None] * len(weights), [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (acts[i] > 0)
    return loss, gW, gb


def loss_and_gradients(model: MetaModel, F, Y, mask=None):
    """Masked MSE and its gradients (dropout off). Missing targets may be NaN."""
    A = _standardize(model, np.atleast_2d(F))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    M = ~np.isnan(Y) if mask is None else np.asarray(mask, dtype=bool) & ~np.isnan(Y)
    if not M.any():
        raise ValueError("all targets are masked")
    return _masked_loss_grads(model.weights, model.biases, A, Y, M)


def gradient_check(model: MetaModel, features, targets, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences over all parameters."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    _, gW, gb = loss_and_gradients(model, F, Y)
    worst = 0.0
    for param, grad in zip(model.params(), [g for pair in zip(gW, gb) for g in pair]):
        flat, gflat = param.reshape(-1), grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss_and_gradients(model, F, Y)[0]
            flat[j] = orig - epsilon
            down = loss_and_gradients(model, F, Y)[0]
            flat[j] = orig
            num = (up - down) / (2.0 * epsilon)
            denom = max(abs(num), abs(gflat[j]), 1e-7)
            worst = max(worst, abs(num - gflat[j]) / denom)
    return worst


# ------------------------------------------------------------------ training

def init_model(n_inputs: int, detector_ids: Sequence[str], config: MLPConfig,
               scaler_mean=None, scaler_std=None, metric: str = "AUC") -> MetaModel:
    """Glorot-uniform weights, zero biases."""
    rng = make_rng(config.seed, 0)
    dims = [n_inputs, *config.hidden, len(detector_ids)]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-limit, limit, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MetaModel(
        config, weights, biases,
        np.zeros(n_inputs) if scaler_mean is None else np.asarray(scaler_mean, dtype=float),
        np.ones(n_inputs) if scaler_std is None else np.asarray(scaler_std, dtype=float),
        list(detector_ids), metric,
    )


def fit_scaler(F: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = F.mean(axis=0)
    std = F.std(axis=0)
    flat = ~(std > 0)
    return mean, np.where(flat, 1.0, std), flat


def _val_loss(model: MetaModel, A: np.ndarray, Y: np.ndarray, M: np.ndarray) -> float:
    P = _forward(model.weights, model.biases, A)[-1]
    R = np.where(M, P - np.nan_to_num(Y), 0.0)
    return float((R * R).sum() / M.sum())


def train(train_F, train_Y, val_F, val_Y, config: MLPConfig = MLPConfig(),
          detector_ids: Sequence[str] | None = None, metric: str = "AUC") -> MetaModel:
    """Fit a meta-model; NaN targets are masked out of the loss.

    Validation loss is evaluated after every epoch without dropout. Training
    stops after ``config.patience`` epochs without improvement and the model
    is returned with the weights of its best validation epoch.
    """
    train_F = np.atleast_2d(np.asarray(train_F, dtype=np.float64))
    train_Y = np.atleast_2d(np.asarray(train_Y, dtype=np.float64))
    val_F = np.asarray(val_F, dtype=np.float64).reshape(-1, train_F.shape[1])
    val_Y = np.asarray(val_Y, dtype=np.float64).reshape(-1, train_Y.shape[1])
    if train_F.shape[0] == 0:
        raise ValueError("empty training set")
    if train_F.shape[0] != train_Y.shape[0] or val_F.shape[0] != val_Y.shape[0]:
        raise ValueError("feature and target row counts differ")
    M_train = ~np.isnan(train_Y)
    if not M_train.any():
        raise ValueError("all training targets are masked")
    ids = list(detector_ids) if detector_ids is not None else [f"d{j}" for j in range(train_Y.shape[1])]
    if len(ids) != train_Y.shape[1]:
        raise ValueError("detector_ids length does not match target columns")

    mean, std, flat = fit_scaler(train_F)
    model = init_model(train_F.shape[1], ids, config, mean, std, metric)
    model.zero_variance = flat
    A_train = _standardize(model, train_F)
    M_val = ~np.isnan(val_Y)
    if M_val.any():
        A_val, Y_val = _standardize(model, val_F), val_Y
    else:  # no usable validation rows: monitor the training set
        A_val, Y_val, M_val = A_train, train_Y, M_train

    shuffle_rng = make_rng(config.seed, 1)
    drop_rng = make_rng(config.seed, 2)
    params = model.params()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    best = (np.inf, 0, [p.copy() for p in params])
    widths = list(config.hidden)
    n = train_F.shape[0]
    log = []
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        sq_sum = obs = 0.0
        for lo in range(0, n, config.batch_size):
            b = order[lo:lo + config.batch_size]
            Mb = M_train[b]
            if not Mb.any():
                continue
            masks = _dropout_masks(widths, b.size, config.dropout, drop_rng)
            loss, gW, gb = _masked_loss_grads(model.weights, model.biases, A_train[b], train_Y[b], Mb, masks)
            sq_sum += loss * Mb.sum()
            obs += Mb.sum()
            step += 1
            grads = [g for pair in zip(gW, gb) for g in pair]
            lr_t = config.learning_rate * np.sqrt(1 - config.beta2**step) / (1 - config.beta1**step)
            for p, g, a, v in zip(params, grads, m1, m2):
                a *= config.beta1
                a += (1 - config.beta1) * g
                v *= config.beta2
                v += (1 - config.beta2) * g * g
                p -= lr_t * a / (np.sqrt(v) + config.adam_eps)
        val = _val_loss(model, A_val, Y_val, M_val)
        log.append({"epoch": epoch, "loss": sq_sum / obs, "val_loss": val})
        if val < best[0]:
            best = (val, epoch, [p.copy() for p in params])
        elif epoch - best[1] >= config.patience:
            break
    for p, saved in zip(params, best[2]):
        p[...] = saved
    model.training_log = log
    model.best_epoch = best[1]
    return model


# ------------------------------------------------------------------ selection

@dataclass
class SelectionReport:
    dataset: str
    predicted: dict[str, float]
    selected: str
    selected_predicted: float

    def ranking(self) -> list[tuple[str, float]]:
        return sorted(self.predicted.items(), key=lambda kv: -kv[1])

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "selected": self.selected,
            "selected_predicted": self.selected_predicted,
            "predicted": self.predicted,
            "ranking": [d for d, _ in self.ranking()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SelectionReport":
        return cls(obj["dataset"], {k: float(v) for k, v in obj["predicted"].items()},
                   obj["selected"], float(obj["selected_predicted"]))


def report_from_predictions(name: str, detector_ids: Sequence[str], yhat) -> SelectionReport:
    yhat = np.asarray(yhat, dtype=float)
    j = int(np.argmax(yhat))
    return SelectionReport(name, {d: float(v) for d, v in zip(detector_ids, yhat)},
                           detector_ids[j], float(yhat[j]))


def select_from_features(model: MetaModel, name: str, features) -> SelectionReport:
    return report_from_predictions(name, model.detector_ids, forward(model, features, "infer"))


def select(model: MetaModel, dataset: Dataset) -> SelectionReport:
    """Recommend the detector with the highest predicted performance (labels unused)."""
    return select_from_features(model, dataset.name, extract(dataset.unlabeled()))


# ------------------------------------------------------------------ persistence

def model_to_json(model: MetaModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "metric": model.metric,
        "detector_ids": list(model.detector_ids),
        "config": {**asdict(model.config), "hidden": list(model.config.hidden)},
        "scaler": {
            "mean": model.scaler_mean.tolist(),
            "std": model.scaler_std.tolist(),
            "zero_variance": [bool(v) for v in model.zero_variance],
        },
        "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in zip(model.weights, model.biases)],
        "best_epoch": model.best_epoch,
        "training_log": model.training_log,
    }


def model_from_json(obj: dict) -> MetaModel:
    if obj.get("format") != MODEL_FORMAT:
        raise SchemaError(f"not a meta-model file (format={obj.get('format')!r})")
    if obj.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {obj.get('version')!r}")
    try:
        config = MLPConfig.from_json(obj["config"])
        weights = [np.array(layer["W"], dtype=np.float64) for layer in obj["layers"]]
        biases = [np.array(layer["b"], dtype=np.float64) for layer in obj["layers"]]
        scaler = obj["scaler"]
        if any(W.ndim != 2 for W in weights) or any(b.ndim != 1 for b in biases):
            raise SchemaError("layer arrays have the wrong rank")
        if len(weights) != len(config.hidden) + 1:
            raise SchemaError("layer count does not match config.hidden")
        for W, h in zip(weights[:-1], config.hidden):
            if W.shape[1] != h:
                raise SchemaError(f"layer width {W.shape[1]} does not match config hidden {h}")
        return MetaModel(
            config, weights, biases,
            np.array(scaler["mean"], dtype=np.float64), np.array(scaler["std"], dtype=np.float64),
            list(obj["detector_ids"]), obj.get("metric", "AUC"),
            np.array(scaler.get("zero_variance", [False] * len(scaler["mean"])), dtype=bool),
            list(obj.get("training_log", [])), int(obj.get("best_epoch", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed model file: {exc}") from exc


def save_model(model: MetaModel, path: str | Path) -> None:
    # json writes floats with repr(), which round-trips doubles exactly
    Path(path).write_text(json.dumps(model_to_json(model), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> MetaModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_json(obj)


__all__ = [
    "MLPConfig", "MetaModel", "SelectionReport", "SchemaError", "N_FEATURES",
    "forward", "train", "gradient_check", "loss_and_gradients", "select",
    "select_from_features", "save_model", "load_model", "init_model",
]
