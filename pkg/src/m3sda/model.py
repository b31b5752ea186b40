"""Shared feature extractor, per-source classifier heads, and classifier pairs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Model/task/config combination is inconsistent."""


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple
    activation: str = "relu"
    final_activation: str = "none"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"need >= 1 layer with positive widths, got {widths}")
        if self.activation != "relu" or self.final_activation not in ("none", "relu"):
            raise ValueError("supported activations: relu hidden, none|relu final")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_in(self) -> int:
        return self.layer_widths[0]

    @property
    def n_out(self) -> int:
        return self.layer_widths[-1]


class Mlp:
    """Fully connected net; layer l computes x @ W_l + b_l."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(Tensor(rng.uniform(-a, a, size=(fan_in, fan_out)), requires_grad=True))
            self.biases.append(Tensor(np.zeros((1, fan_out)), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __call__(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.data.ndim != 2 or h.shape[1] != self.spec.n_in:
            raise ShapeError(f"expected input [b, {self.spec.n_in}], got {h.shape}")
        ones = Tensor(np.ones((h.shape[0], 1)))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            # bias as ones @ b keeps add() to equal shapes
            h = T.matmul(h, w) + T.matmul(ones, b)
            if i < last or self.spec.final_activation == "relu":
                h = T.relu(h)
        return h

    def state(self) -> list[dict]:
        return [
            {"W": w.data.reshape(-1).tolist(), "W_shape": list(w.shape), "b": b.data.reshape(-1).tolist()}
            for w, b in zip(self.weights, self.biases)
        ]

    def load_state(self, layers: list[dict]) -> None:
        if len(layers) != len(self.weights):
            raise ConfigError(f"checkpoint has {len(layers)} layers, model has {len(self.weights)}")
        for layer, w, b in zip(layers, self.weights, self.biases):
            W = np.array(layer["W"], dtype=np.float64).reshape(layer["W_shape"])
            if W.shape != w.shape:
                raise ConfigError(f"weight shape {W.shape} != {w.shape}")
            w.data = W
            b.data = np.array(layer["b"], dtype=np.float64).reshape(b.shape)


@dataclass
class MsdaModel:
    g: Mlp
    classifiers: list
    paired_classifiers: Optional[list] = None

    @property
    def n_heads(self) -> int:
        return len(self.classifiers)

    @property
    def n_classes(self) -> int:
        return self.classifiers[0].spec.n_out

    @property
    def has_pairs(self) -> bool:
        return self.paired_classifiers is not None

    def heads(self) -> list[Mlp]:
        return list(self.classifiers) + list(self.paired_classifiers or [])

    def g_parameters(self) -> list[Tensor]:
        return self.g.parameters()

    def head_parameters(self) -> list[Tensor]:
        return [p for h in self.heads() for p in h.parameters()]

    def parameters(self) -> list[Tensor]:
        return self.g_parameters() + self.head_parameters()

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]


def build_model(
    n_features: int,
    n_classes: int,
    n_sources: int,
    *,
    hidden: Sequence[int] = (16, 8),
    paired: bool = False,
    seed: int = 0,
    feature_activation: str = "relu",
) -> MsdaModel:
    """Feature extractor ``[n_features, *hidden]`` (relu throughout) and linear heads.

    Parameters are drawn in a fixed order (G, heads C_1..C_N, then C'_1..C'_N)
    from one PCG64 stream, so each C'_i gets a different draw from C_i.
    """
    if n_sources < 1:
        raise ConfigError("need at least one source head")
    rng = np.random.Generator(np.random.PCG64(seed))
    g = Mlp(MlpSpec((n_features, *hidden), final_activation=feature_activation), rng)
    head_spec = MlpSpec((g.spec.n_out, n_classes))
    classifiers = [Mlp(head_spec, rng) for _ in range(n_sources)]
    pairs = [Mlp(head_spec, rng) for _ in range(n_sources)] if paired else None
    return MsdaModel(g, classifiers, pairs)


def forward_features(model: MsdaModel, batch) -> Tensor:
    return model.g(batch)


def classify(model: MsdaModel, head_index: int, features, paired: bool = False) -> Tensor:
    heads = model.paired_classifiers if paired else model.classifiers
    if heads is None:
        raise ConfigError("model has no paired classifiers")
    if not 0 <= head_index < len(heads):
        raise IndexError(f"head index {head_index} out of range for {len(heads)} heads")
    return heads[head_index](features)


def discrepancy(p, p_prime, reduction: str = "mean") -> Tensor:
    """L1 distance between two classifiers' probability outputs.

    ``mean`` averages |p - p'| over batch and classes; ``sum`` sums over classes
    and averages over the batch, i.e. the mean per-sample L1 distance.
    """
    p = p if isinstance(p, Tensor) else Tensor(p)
    q = p_prime if isinstance(p_prime, Tensor) else Tensor(p_prime)
    if p.shape != q.shape or p.data.ndim != 2:
        raise ShapeError(f"discrepancy needs equal [b, c] shapes, got {p.shape} and {q.shape}")
    diff = T.abs_(p - q)
    if reduction == "mean":
        return T.mean(diff)
    if reduction == "sum":
        return T.sum_(diff) * (1.0 / p.shape[0])
    raise ValueError(f"unknown discrepancy reduction {reduction!r}")


# -- checkpoints ---------------------------------------------------------------

def model_to_dict(model: MsdaModel) -> dict:
    """Checkpoint layout: g, classifiers[i], paired_classifiers[i]; each a list of
    layers ``{"W": row-major flat, "W_shape": [in, out], "b": flat}``."""
    return {
        "format_version": CHECKPOINT_VERSION,
        "spec": {
            "g": list(model.g.spec.layer_widths),
            "head": list(model.classifiers[0].spec.layer_widths),
            "n_heads": model.n_heads,
            "paired": model.has_pairs,
            "feature_activation": model.g.spec.final_activation,
        },
        "g": model.g.state(),
        "classifiers": [h.state() for h in model.classifiers],
        "paired_classifiers": [h.state() for h in model.paired_classifiers] if model.has_pairs else None,
    }


def model_from_dict(doc: dict) -> MsdaModel:
    spec = doc["spec"]
    g_widths = spec["g"]
    model = build_model(
        g_widths[0], spec["head"][-1], spec["n_heads"], hidden=g_widths[1:], paired=spec["paired"],
        feature_activation=spec.get("feature_activation", "relu"),
    )
    model.g.load_state(doc["g"])
    for h, s in zip(model.classifiers, doc["classifiers"]):
        h.load_state(s)
    if model.has_pairs:
        for h, s in zip(model.paired_classifiers, doc["paired_classifiers"]):
            h.load_state(s)
    return model


def save_checkpoint(model: MsdaModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> MsdaModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
