"""From-scratch multilayer perceptron for gesture classification.

Fully connected layers with ReLU hidden activations and a softmax output,
trained with mini-batch Adam on categorical cross-entropy. Everything runs
in float64 and is fully deterministic for a fixed seed: the same dataset
and config always produce bit-identical model files.

Training persists two JSON artifacts, a model file (dims, class table,
base64 little-endian float64 parameter blobs) and a scaler file (means and
stds), so a trained gesture set can be reloaded without retraining.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .dataset import DatasetError, GestureClass, GestureDataset, stratified_split
from .pose import FeatureVector, Scaler, apply_scaler, fit_scaler, get_spec, scale_matrix

MODEL_FORMAT = "cuepose-mlp"
SCALER_FORMAT = "cuepose-scaler"
FILE_VERSION = 1


class ModelError(Exception):
    pass


@dataclass
class MlpModel:
    spec_id: str
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]   # per layer, shape (out, in)
    biases: list[np.ndarray]    # per layer, shape (out,)
    classes: tuple[GestureClass, ...]

    def __post_init__(self):
        dims = tuple(self.layer_dims)
        if len(dims) < 2:
            raise ModelError("need at least input and output dims")
        shapes = [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]
        if [w.shape for w in self.weights] != shapes:
            raise ModelError(f"weight shapes {[w.shape for w in self.weights]} "
                             f"do not chain with dims {dims}")
        if [b.shape for b in self.biases] != [(d,) for d in dims[1:]]:
            raise ModelError("bias shapes do not chain with dims")
        if dims[-1] != len(self.classes):
            raise ModelError(f"output dim {dims[-1]} != class count {len(self.classes)}")
        if any(not np.all(np.isfinite(w)) for w in self.weights + self.biases):
            raise ModelError("parameters must be finite")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "classes", tuple(sorted(self.classes, key=lambda c: c.id)))

    @property
    def class_ids(self) -> list[int]:
        return [c.id for c in self.classes]

    def class_index(self, class_id: int) -> int:
        for i, c in enumerate(self.classes):
            if c.id == class_id:
                return i
        raise ModelError(f"unknown class id {class_id}")

    def parameters_equal(self, other: "MlpModel") -> bool:
        return (self.layer_dims == other.layer_dims
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))


@dataclass(frozen=True)
class TrainConfig:
    hidden_dims: tuple[int, ...] = (64,)
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 200
    early_stop_patience: int = 20
    val_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if (any(d < 1 for d in self.hidden_dims) or self.learning_rate <= 0
                or self.batch_size < 1 or self.max_epochs < 1
                or self.early_stop_patience < 1):
            raise ModelError("train config values must be positive")
        if not 0 < self.val_fraction < 1:
            raise ModelError("val_fraction must be in (0, 1)")


@dataclass
class TrainReport:
    train_losses: list[float]
    val_accuracies: list[float]
    best_epoch: int
    validation_report: "metrics.ClassificationReport"

    @property
    def epochs_run(self) -> int:
        return len(self.train_losses)


def init_model(spec_id: str, layer_dims, classes, seed: int) -> MlpModel:
    """He-initialized weights, zero biases; deterministic per seed."""
    dims = tuple(layer_dims)
    spec = get_spec(spec_id)
    if dims[0] != spec.dimensionality:
        raise ModelError(f"input dim {dims[0]} != spec {spec_id!r} "
                         f"dimensionality {spec.dimensionality}")
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i + 1], dims[i]))
               for i in range(len(dims) - 1)]
    biases = [np.zeros(d) for d in dims[1:]]
    return MlpModel(spec_id, dims, weights, biases, tuple(classes))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(model: MlpModel, X: np.ndarray):
    """Returns (probabilities, pre-activations, layer inputs) for backprop."""
    activations = [X]
    pre = []
    a = X
    n_layers = len(model.weights)
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < n_layers - 1 else z
        activations.append(a)
    return _softmax(pre[-1]), pre, activations


def forward(model: MlpModel, scaled_features) -> np.ndarray:
    """Probability vector for one already-scaled input."""
    x = np.asarray(scaled_features, dtype=np.float64)
    if x.shape != (model.layer_dims[0],):
        raise ModelError(f"input length {x.shape} != input dim {model.layer_dims[0]}")
    probs, _, _ = _forward_cached(model, x[None, :])
    return probs[0]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_and_grads(model: MlpModel, X: np.ndarray, class_ids):
    """Mean cross-entropy over the batch and backprop gradients.

    ``class_ids`` are dataset class ids (not output indices).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("batch must be a non-empty (n, d) matrix")
    y = np.array([model.class_index(c) for c in class_ids], dtype=np.int64)
    n = X.shape[0]
    probs, pre, activations = _forward_cached(model, X)
    log_probs = _log_softmax(pre[-1])
    loss = float(-log_probs[np.arange(n), y].mean())

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads_w = [np.empty(0)] * len(model.weights)
    grads_b = [np.empty(0)] * len(model.biases)
    delta = dlogits
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ activations[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * (pre[i - 1] > 0)
    return loss, grads_w, grads_b


def _accuracy(model: MlpModel, X: np.ndarray, y_idx: np.ndarray) -> float:
    probs, _, _ = _forward_cached(model, X)
    return float((probs.argmax(axis=1) == y_idx).mean())


def train(ds: GestureDataset, cfg: TrainConfig = TrainConfig()):
    """Train on a stratified split; returns (model, scaler, report).

    The scaler is fitted on the training portion only. Parameters from the
    best-validation-accuracy epoch are kept, and training stops early after
    ``early_stop_patience`` epochs without improvement.
    """
    counts = {cid: n for cid, n in ds.counts().items() if n > 0}
    if len(counts) < 2:
        raise DatasetError(f"need at least 2 classes with samples, have {len(counts)}")
    for cid, n in sorted(counts.items()):
        if n < 2:
            raise DatasetError(
                f"class {ds.class_by_id(cid).name!r} (id {cid}) has {n} sample(s); need >= 2"
            )
    train_ds, val_ds = stratified_split(ds, cfg.val_fraction, cfg.seed)
    scaler = fit_scaler([s.features for s in train_ds.samples])

    classes = tuple(c for c in ds.classes if counts.get(c.id, 0) > 0)
    dims = (get_spec(ds.spec_id).dimensionality, *cfg.hidden_dims, len(classes))
    init_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).generate_state(2)
    model = init_model(ds.spec_id, dims, classes, int(init_seed))
    index_of = {c.id: i for i, c in enumerate(model.classes)}

    X_train = scale_matrix(scaler, train_ds.feature_matrix())
    y_train = np.array([index_of[c] for c in train_ds.labels()])
    X_val = scale_matrix(scaler, val_ds.feature_matrix())
    y_val = np.array([index_of[c] for c in val_ds.labels()])
    train_class_ids = train_ds.labels()

    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    rng = np.random.default_rng(shuffle_seed)
    n = len(train_ds)
    losses: list[float] = []
    val_accs: list[float] = []
    best_epoch = 0
    best_acc = -1.0
    best_params = None
    since_best = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            loss, gw, gb = loss_and_grads(model, X_train[batch], train_class_ids[batch])
            epoch_losses.append(loss)
            step += 1
            correction = np.sqrt(1 - beta2**step) / (1 - beta1**step)
            for i in range(len(model.weights)):
                m_w[i] = beta1 * m_w[i] + (1 - beta1) * gw[i]
                v_w[i] = beta2 * v_w[i] + (1 - beta2) * gw[i] ** 2
                model.weights[i] -= cfg.learning_rate * correction * m_w[i] / (np.sqrt(v_w[i]) + eps)
                m_b[i] = beta1 * m_b[i] + (1 - beta1) * gb[i]
                v_b[i] = beta2 * v_b[i] + (1 - beta2) * gb[i] ** 2
                model.biases[i] -= cfg.learning_rate * correction * m_b[i] / (np.sqrt(v_b[i]) + eps)
        losses.append(float(np.mean(epoch_losses)))
        acc = _accuracy(model, X_val, y_val)
        val_accs.append(acc)
        if acc >= best_acc:
            # ties keep the latest epoch: accuracy plateaus early while the
            # softmax is still sharpening, and sharper confidences matter
            # downstream for detection thresholds
            best_epoch = epoch
            best_params = ([w.copy() for w in model.weights], [b.copy() for b in model.biases])
        if acc > best_acc:
            best_acc = acc
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break

    model.weights, model.biases = best_params
    probs, _, _ = _forward_cached(model, X_val)
    pred_ids = np.array(model.class_ids)[probs.argmax(axis=1)]
    cm = metrics.confusion(val_ds.labels(), pred_ids, model.classes)
    report = TrainReport(losses, val_accs, best_epoch, metrics.report(cm))
    return model, scaler, report


def predict(model: MlpModel, scaler: Scaler, raw_features: FeatureVector):
    """(class_id, confidence) for one unscaled feature vector.

    Ties break toward the lower class id.
    """
    if raw_features.spec_id != model.spec_id:
        raise ModelError(f"feature spec {raw_features.spec_id!r} does not match "
                         f"model spec {model.spec_id!r}")
    probs = forward(model, apply_scaler(scaler, raw_features).values)
    idx = int(np.argmax(probs))  # first max -> lowest class id
    return model.classes[idx].id, float(probs[idx])


def predict_dataset(model: MlpModel, scaler: Scaler, ds: GestureDataset) -> np.ndarray:
    """Vectorized argmax class ids for every sample of a dataset."""
    if ds.spec_id != model.spec_id:
        raise ModelError(f"dataset spec {ds.spec_id!r} does not match model "
                         f"spec {model.spec_id!r}")
    X = scale_matrix(scaler, ds.feature_matrix())
    probs, _, _ = _forward_cached(model, X)
    return np.array(model.class_ids)[probs.argmax(axis=1)]


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _unb64(s: str, shape) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)
    if flat.size != int(np.prod(shape)):
        raise ModelError(f"parameter blob has {flat.size} values, expected shape {shape}")
    return flat.reshape(shape)


def save_model(model: MlpModel, scaler: Scaler, model_path, scaler_path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": FILE_VERSION,
        "spec_id": model.spec_id,
        "dims": list(model.layer_dims),
        "classes": [{"id": c.id, "name": c.name} for c in model.classes],
        "w": [_b64(w) for w in model.weights],
        "b": [_b64(b) for b in model.biases],
    }
    with open(model_path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")
    sdoc = {
        "format": SCALER_FORMAT,
        "version": FILE_VERSION,
        "spec_id": scaler.spec_id,
        "means": scaler.means.tolist(),
        "stds": scaler.stds.tolist(),
    }
    with open(scaler_path, "w", encoding="utf-8") as f:
        json.dump(sdoc, f)
        f.write("\n")


def _check_header(doc: dict, expected_format: str, path) -> None:
    if doc.get("format") != expected_format:
        raise ModelError(f"{path}: not a {expected_format} file")
    if doc.get("version") != FILE_VERSION:
        raise ModelError(f"{path}: version mismatch: got {doc.get('version')}, "
                         f"expected {FILE_VERSION}")


def load_model(model_path, scaler_path) -> tuple[MlpModel, Scaler]:
    with open(model_path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    _check_header(doc, MODEL_FORMAT, model_path)
    dims = tuple(int(d) for d in doc["dims"])
    classes = tuple(GestureClass(int(c["id"]), str(c["name"])) for c in doc["classes"])
    if len(doc["w"]) != len(dims) - 1 or len(doc["b"]) != len(dims) - 1:
        raise ModelError(f"{model_path}: layer count does not match dims")
    weights = [_unb64(s, (dims[i + 1], dims[i])) for i, s in enumerate(doc["w"])]
    biases = [_unb64(s, (dims[i + 1],)) for i, s in enumerate(doc["b"])]
    model = MlpModel(str(doc["spec_id"]), dims, weights, biases, classes)

    with open(scaler_path, "r", encoding="utf-8") as f:
        sdoc = json.load(f)
    _check_header(sdoc, SCALER_FORMAT, scaler_path)
    means = np.asarray(sdoc["means"], dtype=np.float64)
    stds = np.asarray(sdoc["stds"], dtype=np.float64)
    if means.shape != (dims[0],) or stds.shape != (dims[0],):
        raise ModelError(
            f"{scaler_path}: scaler length {means.shape[0]} does not match "
            f"model input dim {dims[0]}"
        )
    if sdoc["spec_id"] != doc["spec_id"]:
        raise ModelError(f"{scaler_path}: scaler spec {sdoc['spec_id']!r} does not "
                         f"match model spec {doc['spec_id']!r}")
    return model, Scaler(str(sdoc["spec_id"]), means, stds)


def numeric_gradient_check(model: MlpModel, X: np.ndarray, class_ids,
                           eps: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Intended for small models (<= a few hundred parameters); touches every
    parameter twice per central difference.
    """
    if eps <= 0:
        raise ModelError("eps must be positive")
    _, grads_w, grads_b = loss_and_grads(model, X, class_ids)
    max_rel = 0.0
    for params, grads in ((model.weights, grads_w), (model.biases, grads_b)):
        for p, g in zip(params, grads):
            flat = p.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up, _, _ = loss_and_grads(model, X, class_ids)
                flat[i] = orig - eps
                down, _, _ = loss_and_grads(model, X, class_ids)
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                rel = abs(gflat[i] - numeric) / max(1e-12, abs(gflat[i]) + abs(numeric))
                max_rel = max(max_rel, rel)
    return max_rel
