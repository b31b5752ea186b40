"""The shifted-blobs toy protocol shared by the acceptance suite and scripts/."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import SplitSpec, gen_blobs, split_task, standardize
from .ensemble import evaluate
from .model import build_model
from .trainer import TrainConfig, train


@dataclass(frozen=True)
class ToySetup:
    """Three 2-D Gaussian classes, two sources plus a target, translated per domain.

    The class centers are deliberately irregular. Evenly spaced centers are
    symmetric under rotation, so low-order moments cannot tell a correct
    alignment from a class permutation.

    G's last layer is linear: with a relu there, a strong moment term can push
    every feature unit below zero, after which no gradient revives them.
    """

    n_domains: int = 3
    n_classes: int = 3
    per_class: int = 100
    shift: float = 2.4
    rot: float = 0.0
    spread: float = 0.7
    centers: tuple = ((3.5, 0.0), (-1.2, 2.5), (-1.5, -1.5))
    train_fraction: float = 0.7
    hidden: tuple = (16, 8)
    feature_activation: str = "none"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=150, lr=0.01, momentum=0.9, batch_size=32))


@dataclass
class ToyRun:
    algorithm: str
    lam: float
    seed: int
    accuracy: float
    md: list
    target_acc: list
    seconds: float


def toy_split(setup: ToySetup, seed: int):
    task = gen_blobs(
        setup.n_domains,
        setup.n_classes,
        setup.per_class,
        setup.shift,
        setup.rot,
        seed,
        spread=setup.spread,
        centers=setup.centers,
    )
    return split_task(standardize(task), SplitSpec(setup.train_fraction, seed))


def run_toy(setup: ToySetup, algorithm: str, seed: int, lam: float | None = None) -> ToyRun:
    """Train on the 70% split of every domain; score the uniform ensemble on the held-out target."""
    start = time.perf_counter()
    tr, te = toy_split(setup, seed)
    heads = 1 if algorithm == "source_combine" else tr.n_sources
    model = build_model(
        tr.n_features,
        tr.n_classes,
        heads,
        hidden=setup.hidden,
        paired=algorithm == "m3sda_beta",
        seed=seed,
        feature_activation=setup.feature_activation,
    )
    cfg = replace(setup.train, algorithm=algorithm, seed=seed, lam=setup.train.lam if lam is None else lam)
    model, trace = train(tr, model, cfg, eval_target=te.target)
    acc = evaluate(model, te.target).accuracy
    return ToyRun(algorithm, cfg.lam, seed, acc, list(trace.md), list(trace.target_acc), time.perf_counter() - start)


def median_accuracy(runs: Sequence[ToyRun]) -> float:
    return float(np.median([r.accuracy for r in runs]))
