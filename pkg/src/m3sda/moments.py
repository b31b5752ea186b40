"""Moment statistics and moment-based distances between domains.

Two different moment objects live here:

* elementwise raw moments ``mean(x_j ** k)`` per feature, used by the
  differentiable moment distance ``md_squared`` that drives training;
* full monomial (cross) moments ``mean(prod_j x_j ** i_j)`` over every
  multi-index with ``sum(i) == k``, used by ``cross_moment_divergence``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

FORMAT_VERSION = 1


@dataclass(frozen=True)
class MomentConfig:
    max_order: int = 2
    use_raw_elementwise_moments: bool = True

    def __post_init__(self):
        if self.max_order < 1:
            raise ValueError(f"max_order must be >= 1, got {self.max_order}")
        if not self.use_raw_elementwise_moments:
            raise ValueError("only raw elementwise moments are supported for the training distance")


@dataclass(frozen=True)
class MomentVector:
    order: int
    values: np.ndarray


@dataclass(frozen=True)
class MultiIndexSet:
    n_dims: int
    order: int
    indices: tuple

    def __len__(self) -> int:
        return len(self.indices)


def _matrix(samples) -> np.ndarray:
    X = samples.data if isinstance(samples, Tensor) else np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"samples must be a 2-D matrix, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    return X


def elementwise_moment(samples, k: int) -> MomentVector:
    if k < 1:
        raise ValueError(f"moment order must be >= 1, got {k}")
    X = _matrix(samples)
    return MomentVector(k, T.mean(T.pow_k(Tensor(X), k), axis=0).data)


def _moment(batch: Tensor, k: int) -> Tensor:
    return T.mean(T.pow_k(batch, k), axis=0)


def md_terms(source_batches: Sequence, target_batch, cfg: MomentConfig = MomentConfig()) -> tuple[Tensor, Tensor]:
    """Source-target and source-source parts of the moment distance.

    Returns ``(st, ss)`` where, summed over orders k = 1..max_order,
    ``st = mean_i ||E[X_i^k] - E[X_T^k]||`` and
    ``ss = mean_{i<j} ||E[X_i^k] - E[X_j^k]||``. ``ss`` is 0 for one source.
    """
    sources = [b if isinstance(b, Tensor) else Tensor(b) for b in source_batches]
    target = target_batch if isinstance(target_batch, Tensor) else Tensor(target_batch)
    if not sources:
        raise ValueError("need at least one source batch")
    for b in [*sources, target]:
        if b.data.ndim != 2 or b.shape[0] == 0:
            raise ShapeError(f"batches must be non-empty 2-D matrices, got {b.shape}")
        if b.shape[1] != target.shape[1]:
            raise ShapeError(f"batch width {b.shape[1]} != target width {target.shape[1]}")
    n = len(sources)
    pairs = list(itertools.combinations(range(n), 2))
    st = Tensor(0.0)
    ss = Tensor(0.0)
    for k in range(1, cfg.max_order + 1):
        src_m = [_moment(b, k) for b in sources]
        tgt_m = _moment(target, k)
        st_k = Tensor(0.0)
        for m in src_m:
            st_k = st_k + T.l2_norm(m - tgt_m)
        st = st + st_k * (1.0 / n)
        if pairs:
            ss_k = Tensor(0.0)
            for i, j in pairs:
                ss_k = ss_k + T.l2_norm(src_m[i] - src_m[j])
            ss = ss + ss_k * (1.0 / len(pairs))
    return st, ss


def md_squared(source_batches: Sequence, target_batch, cfg: MomentConfig = MomentConfig()) -> Tensor:
    """Moment distance between the source batches and the target batch (differentiable)."""
    st, ss = md_terms(source_batches, target_batch, cfg)
    return st + ss


def enumerate_multi_indices(n_dims: int, order: int) -> MultiIndexSet:
    """All non-negative integer tuples of length ``n_dims`` summing to ``order``, sorted."""
    if n_dims < 1 or order < 1:
        raise ValueError("n_dims and order must both be >= 1")
    out = []

    def rec(prefix: list, remaining: int, slots: int):
        if slots == 1:
            out.append((*prefix, remaining))
            return
        for v in range(remaining + 1):
            rec([*prefix, v], remaining - v, slots - 1)

    rec([], order, n_dims)
    return MultiIndexSet(n_dims, order, tuple(out))


def cross_moments(samples, k: int) -> MomentVector:
    """Empirical monomial moments of order exactly ``k``, in multi-index order."""
    X = _matrix(samples)
    idx = np.array(enumerate_multi_indices(X.shape[1], k).indices, dtype=np.int64)
    # [n, |Δ_k|] monomials, then a left-to-right mean over samples
    mono = np.prod(X[:, None, :] ** idx[None, :, :], axis=2)
    vals = np.cumsum(mono, axis=0)[-1] / X.shape[0]
    return MomentVector(k, vals)


def cross_moment_divergence(a, b, k: int) -> float:
    """L1 distance between the order-k monomial moment vectors of two samples."""
    if k < 1:
        raise ValueError(f"order must be >= 1, got {k}")
    A, B = _matrix(a), _matrix(b)
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"width mismatch: {A.shape[1]} vs {B.shape[1]}")
    diff = np.abs(cross_moments(A, k).values - cross_moments(B, k).values)
    return float(np.cumsum(diff)[-1])


@dataclass
class MomentReport:
    """Pairwise cross-moment divergences per order, with triangle-inequality checks."""

    names: list
    orders: list = field(default_factory=list)

    def matrix(self, k: int) -> np.ndarray:
        for entry in self.orders:
            if entry["order"] == k:
                return np.array(entry["pairwise"])
        raise KeyError(k)

    def min_triangle_check(self) -> float:
        vals = [c["value"] for e in self.orders for c in e["triangle_checks"]]
        return min(vals) if vals else math.inf

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "domains": list(self.names), "orders": self.orders}


def divergence_matrix(domains: Sequence, k_max: int, names: Sequence[str] | None = None) -> MomentReport:
    """Full pairwise d_CM^k matrices for k = 1..k_max.

    Each triangle check for a pair (i, j) and a third domain t stores
    ``d(i, t) + d(j, t) - d(i, j)``, which is non-negative up to rounding.
    """
    mats = [_matrix(d) for d in domains]
    if len(mats) < 2:
        raise ValueError("need at least two domains")
    names = list(names) if names is not None else [f"D{i}" for i in range(len(mats))]
    n = len(mats)
    report = MomentReport(names)
    for k in range(1, k_max + 1):
        moms = [cross_moments(X, k).values for X in mats]
        widths = {X.shape[1] for X in mats}
        if len(widths) != 1:
            raise ShapeError(f"domains disagree on width: {sorted(widths)}")
        D = np.zeros((n, n))
        for i, j in itertools.combinations(range(n), 2):
            D[i, j] = D[j, i] = float(np.cumsum(np.abs(moms[i] - moms[j]))[-1])
        checks = [
            {"i": i, "j": j, "t": t, "value": float(D[i, t] + D[j, t] - D[i, j])}
            for i, j in itertools.combinations(range(n), 2)
            for t in range(n)
            if t not in (i, j)
        ]
        report.orders.append({"order": k, "pairwise": D.tolist(), "triangle_checks": checks})
    return report
