"""Multi-domain datasets: synthetic generators, CSV I/O, standardization, splits.

All randomness comes from numpy's PCG64 bit generator seeded through
``numpy.random.SeedSequence``; each domain draws from its own spawned child
stream, so a domain's samples depend only on ``(seed, domain index)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

GENERATOR_VERSION = "pcg64-v1"


class SchemaError(ValueError):
    """CSV header or column layout does not match the expected schema."""


class ParseError(ValueError):
    """A CSV field could not be parsed."""


@dataclass(frozen=True)
class DomainDataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError(f"{self.name}: features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"{self.name}: {y.shape[0]} labels for {X.shape[0]} samples")
        if X.shape[0] == 0:
            raise ValueError(f"{self.name}: empty dataset")
        if self.n_classes < 1:
            raise ValueError(f"{self.name}: n_classes must be positive")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"{self.name}: labels outside [0, {self.n_classes})")
        if not np.all(np.isfinite(X)):
            raise ValueError(f"{self.name}: non-finite feature values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray, name: Optional[str] = None) -> "DomainDataset":
        return DomainDataset(name or self.name, self.features[idx], self.labels[idx], self.n_classes)


@dataclass(frozen=True)
class MsdaTask:
    """Labeled source domains plus one target whose labels are for evaluation only."""

    sources: tuple
    target: DomainDataset
    target_labels_visible_for_eval_only: bool = True

    def __post_init__(self):
        srcs = tuple(self.sources)
        if len(srcs) < 1:
            raise ValueError("a task needs at least one source domain")
        widths = {d.n_features for d in srcs} | {self.target.n_features}
        classes = {d.n_classes for d in srcs} | {self.target.n_classes}
        if len(widths) != 1:
            raise ValueError(f"domains disagree on feature width: {sorted(widths)}")
        if len(classes) != 1:
            raise ValueError(f"domains disagree on class count: {sorted(classes)}")
        object.__setattr__(self, "sources", srcs)

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def n_features(self) -> int:
        return self.target.n_features

    @property
    def n_classes(self) -> int:
        return self.target.n_classes

    @property
    def domains(self) -> list:
        return [*self.sources, self.target]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def _domain_streams(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _check_counts(n_domains: int, n_classes: int, per_class: int) -> None:
    if n_domains < 2:
        raise ValueError(f"need at least 2 domains (sources + target), got {n_domains}")
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")


def _assemble(name_prefix, domains, n_classes) -> MsdaTask:
    sets = [
        DomainDataset(f"{name_prefix}{i}" if i < len(domains) - 1 else "target", X, y, n_classes)
        for i, (X, y) in enumerate(domains)
    ]
    return MsdaTask(tuple(sets[:-1]), sets[-1])


def gen_blobs(
    n_domains: int = 3,
    n_classes: int = 3,
    per_class: int = 100,
    shift_scale: float = 1.0,
    rot_scale: float = 0.0,
    seed: int = 0,
    *,
    radius: float = 3.0,
    spread: float = 0.8,
    centers: Optional[Sequence[Sequence[float]]] = None,
) -> MsdaTask:
    """Gaussian class clusters in 2-D, moved per domain by a random rotation and translation.

    Class centers sit evenly on a circle of ``radius`` unless ``centers`` gives
    one 2-D point per class. Domain ``i`` rotates its
    samples by an angle drawn from U(-rot_scale, rot_scale) and translates them
    by an offset drawn from U(-shift_scale, shift_scale)^2. The last domain is the
    target.
    """
    _check_counts(n_domains, n_classes, per_class)
    if centers is None:
        angles = 2 * np.pi * np.arange(n_classes) / n_classes
        centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != (n_classes, 2):
            raise ValueError(f"centers must have shape ({n_classes}, 2), got {centers.shape}")
    labels = np.repeat(np.arange(n_classes), per_class)
    out = []
    for rng in _domain_streams(seed, n_domains):
        theta = rng.uniform(-rot_scale, rot_scale) if rot_scale > 0 else 0.0
        offset = rng.uniform(-shift_scale, shift_scale, size=2) if shift_scale > 0 else np.zeros(2)
        X = centers[labels] + spread * rng.standard_normal((labels.size, 2))
        X = X @ _rotation(theta).T + offset
        out.append((X, labels.copy()))
    return _assemble("blobs_src", out, n_classes)


def gen_moons(
    n_domains: int = 3,
    per_class: int = 100,
    shift_scale: float = 1.0,
    seed: int = 0,
    *,
    rot_scale: float = 0.0,
    noise: float = 0.05,
) -> MsdaTask:
    """Two interleaved half circles per domain, with the same per-domain shift as ``gen_blobs``.

    Points sit at evenly spaced angles along each arc plus Gaussian ``noise``,
    so domains differ only by noise and their own rotation/translation.
    """
    _check_counts(n_domains, 2, per_class)
    labels = np.repeat(np.arange(2), per_class)
    out = []
    for rng in _domain_streams(seed, n_domains):
        theta = rng.uniform(-rot_scale, rot_scale) if rot_scale > 0 else 0.0
        offset = rng.uniform(-shift_scale, shift_scale, size=2) if shift_scale > 0 else np.zeros(2)
        t = np.tile(np.linspace(0.0, np.pi, per_class), 2)
        upper = np.stack([np.cos(t), np.sin(t)], axis=1)
        lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
        X = np.where(labels[:, None] == 0, upper, lower)
        X = X - np.array([0.5, 0.25])
        X = X + noise * rng.standard_normal(X.shape)
        X = X @ _rotation(theta).T + offset
        out.append((X, labels.copy()))
    return _assemble("moons_src", out, 2)


# -- CSV ------------------------------------------------------------------

def load_csv(path, name: Optional[str] = None, n_classes: Optional[int] = None) -> DomainDataset:
    """Read ``f0,...,f{d-1},label`` rows into a dataset.

    ``n_classes`` defaults to ``1 + max(label)``; pass it explicitly when a
    domain may be missing the highest class.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        d = len(header) - 1
        expected = [f"f{j}" for j in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise SchemaError(f"{path}: header must be f0,...,f{{d-1}},label; got {','.join(header)}")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise SchemaError(f"{path}:{lineno}: expected {d + 1} columns, got {len(row)}")
            try:
                feats = [float(v) for v in row[:d]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad feature value ({exc})") from None
            lab = row[d].strip()
            if not lab.isdigit():
                raise ParseError(f"{path}:{lineno}: label must be a non-negative integer, got {lab!r}")
            rows.append(feats)
            labels.append(int(lab))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    k = max(labels) + 1 if n_classes is None else n_classes
    return DomainDataset(name or path.stem, np.array(rows), np.array(labels), k)


def write_csv(ds: DomainDataset, path) -> None:
    path = Path(path)
    header = [f"f{j}" for j in range(ds.n_features)] + ["label"]
    lines = [",".join(header)]
    for x, y in zip(ds.features, ds.labels):
        lines.append(",".join(repr(float(v)) for v in x) + f",{int(y)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- preprocessing -----------------------------------------------------------

def source_statistics(task: MsdaTask) -> tuple[np.ndarray, np.ndarray]:
    pooled = np.concatenate([d.features for d in task.sources], axis=0)
    return pooled.mean(axis=0), pooled.std(axis=0)


def standardize(task: MsdaTask) -> MsdaTask:
    """Z-score every domain with mean/std pooled over the source samples only."""
    mu, sd = source_statistics(task)
    degenerate = sd <= 0
    mu = np.where(degenerate, 0.0, mu)
    sd = np.where(degenerate, 1.0, sd)

    def tx(d: DomainDataset) -> DomainDataset:
        return replace(d, features=(d.features - mu) / sd)

    return replace(task, sources=tuple(tx(d) for d in task.sources), target=tx(task.target))


def split(ds: DomainDataset, spec: SplitSpec = SplitSpec()) -> tuple[DomainDataset, DomainDataset]:
    """Stratified train/test split with round(fraction * n) training samples.

    The training size is clamped to [1, n - 1]. Per-class training counts are ``floor(fraction * count)`` plus one extra
    sample for the classes with the largest remainders (ties go to the lower
    class index) until the total is reached.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = ds.n_samples
    if n < 2:
        raise ValueError(f"{ds.name}: need at least 2 samples to split")
    # both halves stay non-empty
    n_train = min(max(int(math.floor(spec.train_fraction * n + 0.5)), 1), n - 1)
    classes = [np.flatnonzero(ds.labels == c) for c in range(ds.n_classes)]
    quotas = [spec.train_fraction * idx.size for idx in classes]
    take = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(classes)), key=lambda c: (-(quotas[c] - take[c]), c))
    for c in order[: n_train - sum(take)]:
        take[c] += 1
    train_idx, test_idx = [], []
    for idx, t in zip(classes, take):
        idx = idx[rng.permutation(idx.size)]
        train_idx.append(idx[:t])
        test_idx.append(idx[t:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return ds.subset(train, f"{ds.name}_train"), ds.subset(test, f"{ds.name}_test")


def split_task(task: MsdaTask, spec: SplitSpec = SplitSpec()) -> tuple[MsdaTask, MsdaTask]:
    """Apply ``split`` to every domain; returns the (train, test) tasks."""
    pairs = [split(d, replace(spec, seed=spec.seed + i)) for i, d in enumerate(task.domains)]
    train = MsdaTask(tuple(p[0] for p in pairs[:-1]), pairs[-1][0], task.target_labels_visible_for_eval_only)
    test = MsdaTask(tuple(p[1] for p in pairs[:-1]), pairs[-1][1], task.target_labels_visible_for_eval_only)
    return train, test
