"""Combining per-source classifier outputs at prediction time, and target metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

REPORT_VERSION = 1
SCHEMAS = ("uniform", "weighted", "inverse_divergence")


class DegenerateWeightsError(ValueError):
    """All candidate weights are zero; callers fall back to uniform weights."""


@dataclass(frozen=True)
class EnsembleWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError(f"weights must be non-negative and finite, got {w}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size


def uniform_weights(n: int) -> EnsembleWeights:
    if n < 1:
        raise ValueError(f"need at least one classifier, got n={n}")
    return EnsembleWeights(np.full(n, 1.0 / n))


def normalized_weights(raw: Sequence[float]) -> EnsembleWeights:
    raw = np.asarray(raw, dtype=np.float64)
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ValueError(f"raw weights must be non-negative and finite, got {raw}")
    total = raw.sum()
    if total <= 0:
        raise DegenerateWeightsError("all raw weights are zero")
    return EnsembleWeights(raw / total)


def accuracy_weights(source_only_accs: Sequence[float]) -> EnsembleWeights:
    """w_i = acc_i / sum_j acc_j."""
    return normalized_weights(source_only_accs)


def inverse_divergence_weights(divergences: Sequence[float], floor: float = 1e-12) -> EnsembleWeights:
    """Label-free fallback: w_i proportional to 1 / d_CM^1(source_i, target)."""
    d = np.maximum(np.asarray(divergences, dtype=np.float64), floor)
    return normalized_weights(1.0 / d)


def domain_probabilities(model, batch) -> list[np.ndarray]:
    """Softmax output per source domain; a classifier pair contributes its average."""
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    feats = model.g(x).detach()
    probs = [T.softmax(c(feats)).data for c in model.classifiers]
    if model.paired_classifiers is not None:
        probs = [0.5 * (p + T.softmax(c(feats)).data) for p, c in zip(probs, model.paired_classifiers)]
    return probs


def combine(probs: Sequence[np.ndarray], w: EnsembleWeights) -> np.ndarray:
    if len(probs) != len(w):
        raise ValueError(f"{len(w)} weights for {len(probs)} classifiers")
    out = np.zeros_like(probs[0])
    for wi, p in zip(w.weights, probs):
        out = out + wi * p
    return out


def predict(model, batch, w: EnsembleWeights) -> np.ndarray:
    """argmax_c sum_i w_i softmax(C_i(G(x)))_c; np.argmax breaks ties toward the lowest class."""
    return np.argmax(combine(domain_probabilities(model, batch), w), axis=1)


@dataclass
class EvalReport:
    schema: str
    weights: list
    accuracy: float
    per_class: list
    confusion: list
    source_accs: Optional[list] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_VERSION,
            "schema": self.schema,
            "weights": list(self.weights),
            "accuracy": self.accuracy,
            "per_class": list(self.per_class),
            "confusion": [list(r) for r in self.confusion],
            "source_accs": None if self.source_accs is None else list(self.source_accs),
            "notes": list(self.notes),
        }


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def report_from_predictions(schema, w: EnsembleWeights, y_true, y_pred, n_classes, source_accs=None, notes=()):
    cm = confusion_matrix(y_true, y_pred, n_classes)
    counts = cm.sum(axis=1)
    per_class = [float(cm[c, c] / counts[c]) if counts[c] else float("nan") for c in range(n_classes)]
    acc = float(np.trace(cm) / max(len(y_true), 1))
    return EvalReport(
        schema,
        w.weights.tolist(),
        acc,
        per_class,
        cm.tolist(),
        None if source_accs is None else [float(a) for a in source_accs],
        list(notes),
    )


def head_accuracies(model, target) -> list[float]:
    """Target accuracy of each domain's classifier (pair-averaged for pair models)."""
    return [float(np.mean(np.argmax(p, axis=1) == target.labels)) for p in domain_probabilities(model, target.features)]


def evaluate(model, target, schema: str = "uniform", *, source_accs=None, divergences=None) -> EvalReport:
    """Score the ensemble on a labeled target split.

    ``weighted`` needs ``source_accs`` (target accuracy of source-only
    classifiers, which reads target labels: transductive/oracle weighting).
    ``inverse_divergence`` needs ``divergences`` and uses no labels. A
    degenerate weight vector falls back to uniform and says so in ``notes``.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}")
    notes = []
    n = model.n_heads
    if schema == "uniform":
        w = uniform_weights(n)
    elif schema == "weighted":
        if source_accs is None:
            raise ValueError("weighted schema needs source_accs")
        notes.append("weights use target-label accuracies of source-only classifiers (oracle/transductive)")
        try:
            w = accuracy_weights(source_accs)
        except DegenerateWeightsError:
            w = uniform_weights(n)
            notes.append("all source accuracies zero; fell back to uniform weights")
    else:
        if divergences is None:
            raise ValueError("inverse_divergence schema needs divergences")
        w = inverse_divergence_weights(divergences)
    if len(w) != n:
        raise ValueError(f"{len(w)} weights for {n} classifiers")
    pred = predict(model, target.features, w)
    return report_from_predictions(schema, w, target.labels, pred, target.n_classes, source_accs, notes)
