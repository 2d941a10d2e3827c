"""Confusion matrices, classification reports, learning curves, latency stats.

Report semantics: precision_i = TP/(TP+FP), recall_i = TP/(TP+FN), F1 the
harmonic mean, all reported as 0 when the denominator is 0 (those cells
are listed in ``undefined`` and flagged in the text rendering). Accuracy
is trace/total; macro averages are unweighted means over classes and
weighted averages are support-weighted. Percentiles use the nearest-rank
definition, which is exact and deterministic on small traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dataset import GestureClass, GestureDataset, stratified_split, take_per_class
from .pose import Scaler


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[GestureClass, ...]
    counts: np.ndarray  # rows true, cols predicted

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise MetricsError(f"counts shape {counts.shape} != ({k}, {k})")
        if np.any(counts < 0):
            raise MetricsError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(true_labels, predicted_labels, classes) -> ConfusionMatrix:
    classes = tuple(sorted(classes, key=lambda c: c.id))
    true_labels = list(true_labels)
    predicted_labels = list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise MetricsError(f"label lists differ in length: "
                           f"{len(true_labels)} vs {len(predicted_labels)}")
    index = {c.id: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index or p not in index:
            raise MetricsError(f"label outside class table: true={t}, pred={p}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes, counts)


@dataclass(frozen=True)
class ClassificationReport:
    classes: tuple[GestureClass, ...]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    undefined: tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return int(self.support.sum())

    def to_json(self) -> dict:
        return {
            "classes": [
                {"name": c.name, "id": c.id,
                 "precision": float(self.precision[i]),
                 "recall": float(self.recall[i]),
                 "f1": float(self.f1[i]),
                 "support": int(self.support[i])}
                for i, c in enumerate(self.classes)
            ],
            "accuracy": self.accuracy,
            "macro_avg": {"precision": self.macro_precision, "recall": self.macro_recall,
                          "f1": self.macro_f1, "support": self.total},
            "weighted_avg": {"precision": self.weighted_precision,
                             "recall": self.weighted_recall,
                             "f1": self.weighted_f1, "support": self.total},
            "undefined": list(self.undefined),
        }

    def to_text(self) -> str:
        width = max([len("Weighted Avg")] + [len(c.name) for c in self.classes])
        header = f"{'':<{width}}  Precision  Recall  F1-Score  Support"
        lines = [header]
        for i, c in enumerate(self.classes):
            lines.append(f"{c.name:<{width}}  {self.precision[i]:>9.2f}  "
                         f"{self.recall[i]:>6.2f}  {self.f1[i]:>8.2f}  {self.support[i]:>7d}")
        lines.append(f"{'Accuracy':<{width}}  {'':>9}  {'':>6}  {self.accuracy:>8.2f}  "
                     f"{self.total:>7d}")
        lines.append(f"{'Macro Avg':<{width}}  {self.macro_precision:>9.2f}  "
                     f"{self.macro_recall:>6.2f}  {self.macro_f1:>8.2f}  {self.total:>7d}")
        lines.append(f"{'Weighted Avg':<{width}}  {self.weighted_precision:>9.2f}  "
                     f"{self.weighted_recall:>6.2f}  {self.weighted_f1:>8.2f}  {self.total:>7d}")
        if self.undefined:
            lines.append("undefined (0/0 reported as 0): " + ", ".join(self.undefined))
        return "\n".join(lines)


def report(cm: ConfusionMatrix) -> ClassificationReport:
    if cm.total == 0:
        raise MetricsError("cannot report on an empty confusion matrix")
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    pred_totals = counts.sum(axis=0).astype(np.float64)
    support = counts.sum(axis=1)
    undefined = []
    precision = np.zeros(len(cm.classes))
    recall = np.zeros(len(cm.classes))
    f1 = np.zeros(len(cm.classes))
    for i, c in enumerate(cm.classes):
        if pred_totals[i] > 0:
            precision[i] = tp[i] / pred_totals[i]
        else:
            undefined.append(f"precision[{c.name}]")
        if support[i] > 0:
            recall[i] = tp[i] / support[i]
        else:
            undefined.append(f"recall[{c.name}]")
        if precision[i] + recall[i] > 0:
            f1[i] = 2 * precision[i] * recall[i] / (precision[i] + recall[i])
        else:
            undefined.append(f"f1[{c.name}]")
    weights = support / cm.total
    return ClassificationReport(
        classes=cm.classes,
        precision=precision, recall=recall, f1=f1, support=support,
        accuracy=float(tp.sum() / cm.total),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float(precision @ weights),
        weighted_recall=float(recall @ weights),
        weighted_f1=float(f1 @ weights),
        undefined=tuple(undefined),
    )


@dataclass(frozen=True)
class LearningCurve:
    points: tuple[tuple[int, float], ...]  # (samples per class, accuracy)

    def __post_init__(self):
        sizes = [s for s, _ in self.points]
        if sizes != sorted(set(sizes)):
            raise MetricsError("sample sizes must be strictly increasing")
        object.__setattr__(self, "points", tuple(self.points))


def learning_curve(ds: GestureDataset, cfg, sizes, eval_split: float,
                   seed: int) -> LearningCurve:
    """Accuracy on a fixed held-out split as training size grows.

    For each size s, a model is trained on the first s samples per class in
    a seeded shuffle order of the non-held-out pool.
    """
    from . import mlp  # deferred to avoid import cycle

    sizes = list(sizes)
    if sizes != sorted(set(sizes)):
        raise MetricsError("sizes must be strictly increasing")
    pool, eval_ds = stratified_split(ds, eval_split, seed)
    eval_true = eval_ds.labels()
    points = []
    for s in sizes:
        subset = take_per_class(pool, s, seed)
        model, scaler, _ = mlp.train(subset, cfg)
        pred = mlp.predict_dataset(model, scaler, eval_ds)
        points.append((s, float((pred == eval_true).mean())))
    return LearningCurve(tuple(points))


def cross_user_eval(model, scaler: Scaler, ds: GestureDataset) -> ClassificationReport:
    """Evaluate one user's model and scaler on another user's dataset."""
    from . import mlp  # deferred to avoid import cycle

    if ds.spec_id != model.spec_id:
        raise MetricsError(f"dataset spec {ds.spec_id!r} does not match "
                           f"model spec {model.spec_id!r}")
    pred = mlp.predict_dataset(model, scaler, ds)
    return report(confusion(ds.labels(), pred, model.classes))


@dataclass(frozen=True)
class LatencyStats:
    count: int
    p50: float
    p95: float
    p99: float
    max: float

    def to_json(self) -> dict:
        return {"count": self.count, "p50_ms": self.p50, "p95_ms": self.p95,
                "p99_ms": self.p99, "max_ms": self.max}

    def __str__(self) -> str:
        return (f"n={self.count}  p50={self.p50:.3f}ms  p95={self.p95:.3f}ms  "
                f"p99={self.p99:.3f}ms  max={self.max:.3f}ms")


def _nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    rank = math.ceil(percentile / 100.0 * len(sorted_values))
    return float(sorted_values[max(rank, 1) - 1])


def latency_stats(pairs) -> LatencyStats:
    """Nearest-rank percentiles of (dispatch - ingest) millisecond deltas."""
    deltas = np.array([d - i for i, d in pairs], dtype=np.float64)
    if deltas.size == 0:
        raise MetricsError("empty latency trace")
    if np.any(deltas < 0):
        raise MetricsError("dispatch precedes ingest in latency trace")
    deltas.sort()
    return LatencyStats(
        count=int(deltas.size),
        p50=_nearest_rank(deltas, 50),
        p95=_nearest_rank(deltas, 95),
        p99=_nearest_rank(deltas, 99),
        max=float(deltas[-1]),
    )


def latency_from_values(deltas_ms) -> LatencyStats:
    """Latency stats straight from precomputed millisecond deltas."""
    return latency_stats([(0.0, d) for d in deltas_ms])
