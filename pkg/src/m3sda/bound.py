"""Computable terms of the moment-based multi-source target-error bound.

Everything here works on 1-D binary domains with a finite class of threshold
classifiers, so every minimum over hypotheses is an exhaustive search.
Empirical samples stand in for the domain measures. The approximation
constants of the bound (``a_{n_eps}``, ``n_eps``, ``eps``) are not computable;
``verify_bound_structure`` fixes them to ``a = 1``, ``n_eps = k_max``,
``eps = 0`` and labels its verdict as a structural check only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import DomainDataset
from .moments import cross_moment_divergence

REPORT_VERSION = 1
THRESHOLD_VC_DIM = 2


class DomainError(ValueError):
    """Dataset is not a binary-labeled domain."""


def _check_simplex(v: np.ndarray, name: str) -> None:
    if v.ndim != 1 or v.size == 0 or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a non-negative vector summing to 1, got {v.tolist()}")


@dataclass(frozen=True)
class BoundInputs:
    alpha: np.ndarray
    beta: np.ndarray
    m: int
    d: int
    delta: float
    k_max: int = 2

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        b = np.asarray(self.beta, dtype=np.float64)
        _check_simplex(a, "alpha")
        _check_simplex(b, "beta")
        if a.shape != b.shape:
            raise ValueError("alpha and beta must have the same length")
        if self.m < 1 or self.d < 1 or self.k_max < 1:
            raise ValueError("m, d and k_max must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


@dataclass(frozen=True)
class Threshold:
    """h(x) = 0 for x <= t and 1 above (orientation 0), or the reverse (orientation 1)."""

    t: float
    orientation: int = 0

    def __call__(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=np.float64)
        x = x[:, 0] if x.ndim == 2 else x
        below = x <= self.t
        return np.where(below, self.orientation, 1 - self.orientation).astype(np.int64)


@dataclass(frozen=True)
class ThresholdHypothesisClass:
    grid: np.ndarray
    orientations: tuple = (0, 1)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64).reshape(-1)
        if g.size == 0:
            raise ValueError("threshold grid is empty")
        if np.any(np.diff(g) <= 0):
            raise ValueError("threshold grid must be strictly increasing")
        object.__setattr__(self, "grid", g)

    @classmethod
    def from_data(cls, *domains: DomainDataset) -> "ThresholdHypothesisClass":
        """All midpoints between consecutive distinct values, plus one threshold past each end."""
        x = np.unique(np.concatenate([d.features[:, 0] for d in domains]))
        mids = (x[:-1] + x[1:]) / 2
        return cls(np.concatenate([[x[0] - 1.0], mids, [x[-1] + 1.0]]))

    def __len__(self) -> int:
        return self.grid.size * len(self.orientations)

    def hypotheses(self) -> list[Threshold]:
        return [Threshold(float(t), o) for t in self.grid for o in self.orientations]

    def errors(self, ds: DomainDataset) -> np.ndarray:
        """Error of every hypothesis on ``ds``, in ``hypotheses()`` order."""
        y = _binary_labels(ds)
        x = ds.features[:, 0]
        below = x[None, :] <= self.grid[:, None]  # [grid, n]
        out = []
        for row in below:
            for o in self.orientations:
                pred = np.where(row, o, 1 - o)
                out.append(np.mean(pred != y))
        return np.array(out)


def _binary_labels(ds: DomainDataset) -> np.ndarray:
    if ds.n_classes > 2 or np.any(ds.labels > 1):
        raise DomainError(f"{ds.name}: expected binary labels, got {ds.n_classes} classes")
    return ds.labels


def empirical_error(h: Callable, ds: DomainDataset) -> float:
    """Fraction of samples where h disagrees with the labels."""
    y = _binary_labels(ds)
    return float(np.mean(np.asarray(h(ds.features)) != y))


def alpha_weighted_error(h: Callable, sources: Sequence[DomainDataset], alpha) -> float:
    a = np.asarray(alpha, dtype=np.float64)
    _check_simplex(a, "alpha")
    if a.size != len(sources):
        raise ValueError(f"{a.size} weights for {len(sources)} sources")
    return float(sum(w * empirical_error(h, d) for w, d in zip(a, sources)))


def eta_term(b: BoundInputs) -> float:
    """4 sqrt((sum_j alpha_j^2 / beta_j) (2d(ln(2m/d) + 1) + 2 ln(4/delta)) / m)."""
    if b.m < b.d:
        raise ValueError(f"need m >= d, got m={b.m}, d={b.d}")
    ratio = 0.0
    for a, be in zip(b.alpha, b.beta):
        if a == 0:
            continue
        if be == 0:
            raise ZeroDivisionError("beta_j = 0 while alpha_j > 0")
        ratio += a * a / be
    complexity = (2 * b.d * (math.log(2 * b.m / b.d) + 1) + 2 * math.log(4 / b.delta)) / b.m
    return 4.0 * math.sqrt(ratio * complexity)


def lambda_j(hclass: ThresholdHypothesisClass, source: DomainDataset, target: DomainDataset) -> tuple[float, Threshold]:
    """min over the class of eps_T(h) + eps_j(h), with the first minimizer."""
    joint = hclass.errors(target) + hclass.errors(source)
    i = int(np.argmin(joint))
    return float(joint[i]), hclass.hypotheses()[i]


@dataclass(frozen=True)
class BoundInstance:
    sources: tuple
    target: DomainDataset
    alpha: Optional[np.ndarray] = None
    delta: float = 0.1
    k_max: int = 2

    def weights(self) -> np.ndarray:
        if self.alpha is None:
            return np.full(len(self.sources), 1.0 / len(self.sources))
        return np.asarray(self.alpha, dtype=np.float64)


@dataclass
class BoundReport:
    lhs: float
    rhs_terms: dict
    rhs: float
    satisfied: bool
    satisfied_without_eta: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_VERSION,
            "check": "structural",
            "convention": {"a_{n_eps}": 1.0, "n_eps": self.details.get("k_max"), "epsilon": 0.0},
            "lhs": {"epsilon_T(h_hat)": self.lhs},
            "rhs_terms": dict(self.rhs_terms),
            "rhs": self.rhs,
            "satisfied": self.satisfied,
            "satisfied_without_eta": self.satisfied_without_eta,
            "details": self.details,
        }


def verify_bound_structure(inst: BoundInstance, hclass: Optional[ThresholdHypothesisClass] = None) -> BoundReport:
    """Evaluate both sides of the bound on an empirical 1-D instance.

    h_hat minimizes the empirical alpha-weighted source error, h*_T the target
    error. ``satisfied`` compares eps_T(h_hat) to the right-hand side with eta
    included and the uncomputable constants at their conventional values.
    """
    sources = list(inst.sources)
    hclass = hclass or ThresholdHypothesisClass.from_data(*sources, inst.target)
    alpha = inst.weights()
    sizes = np.array([d.n_samples for d in sources], dtype=np.float64)
    m = int(sizes.sum())
    beta = sizes / m
    b = BoundInputs(alpha, beta, m, THRESHOLD_VC_DIM, inst.delta, inst.k_max)

    hyps = hclass.hypotheses()
    src_err = np.stack([hclass.errors(d) for d in sources])  # [N, H]
    tgt_err = hclass.errors(inst.target)
    weighted = alpha @ src_err
    i_hat = int(np.argmin(weighted))
    i_star = int(np.argmin(tgt_err))
    lams = (src_err + tgt_err[None, :]).min(axis=1)
    dcm = np.array(
        [[cross_moment_divergence(d.features, inst.target.features, k) for k in range(1, inst.k_max + 1)] for d in sources]
    )
    eta = eta_term(b)
    lam_term = float(np.sum(alpha * 2 * lams))
    moment_term = float(np.sum(alpha * dcm.sum(axis=1)))
    lhs = float(tgt_err[i_hat])
    terms = {
        "epsilon_T(h*_T)": float(tgt_err[i_star]),
        "eta_{alpha,beta,m,delta}": eta,
        "epsilon": 0.0,
        "sum_j alpha_j*2*lambda_j": lam_term,
        "sum_j alpha_j*a_{n_eps}*sum_k d_CM^k(D_j,D_T)": moment_term,
    }
    rhs = float(sum(terms.values()))
    no_eta = rhs - eta
    return BoundReport(
        lhs,
        terms,
        rhs,
        bool(lhs <= rhs),
        bool(lhs <= no_eta),
        {
            "h_hat": {"t": hyps[i_hat].t, "orientation": hyps[i_hat].orientation},
            "h*_T": {"t": hyps[i_star].t, "orientation": hyps[i_star].orientation},
            "alpha_weighted_error(h_hat)": float(weighted[i_hat]),
            "alpha": alpha.tolist(),
            "beta": beta.tolist(),
            "m": m,
            "d": THRESHOLD_VC_DIM,
            "delta": inst.delta,
            "k_max": inst.k_max,
            "lambda_j": lams.tolist(),
            "d_CM^k(D_j,D_T)": dcm.tolist(),
        },
    )


def source_source_lower_bound(d1, d2, dt, k: int) -> tuple[float, float]:
    """(d(D1,DT) + d(D2,DT), d(D1,D2)) for the order-k cross-moment divergence."""
    lhs = cross_moment_divergence(d1, dt, k) + cross_moment_divergence(d2, dt, k)
    return lhs, cross_moment_divergence(d1, d2, k)
