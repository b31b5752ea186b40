"""Training loops: source-only, moment matching, the classifier-pair variant, and ablations."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .data import DomainDataset, MsdaTask
from .ensemble import predict, uniform_weights
from .model import ConfigError, MsdaModel, discrepancy
from .moments import MomentConfig, md_terms
from .tensor import Tensor

ALGORITHMS = ("source_only", "source_combine", "m3sda", "m3sda_beta", "ss_only", "st_only")
TRACE_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "m3sda"
    lam: float = 0.5
    epochs: int = 40
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    g_steps_per_cycle: int = 1
    seed: int = 0
    moment_cfg: MomentConfig = field(default_factory=MomentConfig)
    discrepancy_reduction: str = "mean"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.batch_size < 1 or self.epochs < 1 or self.g_steps_per_cycle < 1:
            raise ConfigError("batch_size, epochs and g_steps_per_cycle must be positive")
        if self.lr < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("need lr >= 0 and momentum in [0, 1)")
        if self.discrepancy_reduction not in ("mean", "sum"):
            raise ConfigError(f"discrepancy_reduction must be mean|sum, got {self.discrepancy_reduction!r}")
        if self.batch_size < 2:
            warnings.warn("batch_size < 2: minibatch moments are single-sample values", stacklevel=2)


@dataclass
class TrainTrace:
    """Per-epoch diagnostics; every list has one entry per epoch (0-based)."""

    algorithm: str
    epochs: list = field(default_factory=list)
    md: list = field(default_factory=list)
    train_err: dict = field(default_factory=dict)
    disc: dict = field(default_factory=dict)
    target_acc: list = field(default_factory=list)
    step_losses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": TRACE_VERSION,
            "algorithm": self.algorithm,
            "epochs": list(self.epochs),
            "md": list(self.md),
            "train_err": {k: list(v) for k, v in self.train_err.items()},
            "disc": {k: list(v) for k, v in self.disc.items()},
            "target_acc": list(self.target_acc),
            "step_losses": {k: list(v) for k, v in self.step_losses.items()},
        }


class SGD:
    """SGD with heavy-ball momentum: v <- mu * v + g; p <- p - lr * v."""

    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[int, np.ndarray] = {}

    def step(self, params: list[Tensor]) -> None:
        for p in params:
            if p.grad is None:
                continue
            v = self._velocity.get(id(p))
            v = p.grad.copy() if v is None else self.momentum * v + p.grad
            self._velocity[id(p)] = v
            if self.lr != 0.0:
                p.data = p.data - self.lr * v


class _CyclicSampler:
    """Yields fixed-size index batches, reshuffling whenever a pass is exhausted."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.bs = min(batch_size, n)
        self.rng = rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.bs > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        out = self._perm[self._pos : self._pos + self.bs]
        self._pos += self.bs
        return out


def _zero(params) -> None:
    for p in params:
        p.grad = None


def _check(task: MsdaTask, model: MsdaModel, cfg: TrainConfig, n_heads: int) -> None:
    if model.n_classes != task.n_classes:
        raise ConfigError(f"model emits {model.n_classes} classes, task has {task.n_classes}")
    if model.g.spec.n_in != task.n_features:
        raise ConfigError(f"model expects {model.g.spec.n_in} features, task has {task.n_features}")
    if model.n_heads != n_heads:
        raise ConfigError(f"model has {model.n_heads} heads, algorithm needs {n_heads}")


def _target_accuracy(model: MsdaModel, target: DomainDataset) -> float:
    pred = predict(model, target.features, uniform_weights(model.n_heads))
    return float(np.mean(pred == target.labels))


def _run_moment_matching(task, model, cfg, md_mode, eval_target):
    """Sum of head cross-entropies plus lambda * (part of) MD^2, one step per minibatch."""
    n = task.n_sources
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    samplers = [_CyclicSampler(d.n_samples, cfg.batch_size, rng) for d in task.sources]
    tgt_sampler = _CyclicSampler(task.target.n_samples, cfg.batch_size, rng)
    steps = math.ceil(max(d.n_samples for d in task.domains) / cfg.batch_size)
    opt = SGD(cfg.lr, cfg.momentum)
    params = model.parameters()
    use_md = md_mode is not None and cfg.lam > 0
    trace = TrainTrace(cfg.algorithm, train_err={f"C{i + 1}": [] for i in range(n)})
    for epoch in range(cfg.epochs):
        ce_sum = np.zeros(n)
        md_sum = 0.0
        for _ in range(steps):
            idx = [s.next() for s in samplers]
            tidx = tgt_sampler.next()
            feats = [model.g(d.features[i]) for d, i in zip(task.sources, idx)]
            tgt = model.g(task.target.features[tidx])
            loss = Tensor(0.0)
            for h, (f, d, i) in enumerate(zip(feats, task.sources, idx)):
                ce = T.softmax_cross_entropy(model.classifiers[h](f), d.labels[i])
                ce_sum[h] += ce.item()
                loss = loss + ce
            st, ss = md_terms(feats, tgt, cfg.moment_cfg) if use_md else md_terms(
                [f.detach() for f in feats], tgt.detach(), cfg.moment_cfg
            )
            md_sum += st.item() + ss.item()
            if use_md:
                term = {"full": st + ss, "st": st, "ss": ss}[md_mode]
                loss = loss + term * cfg.lam
            _zero(params)
            loss.backward()
            opt.step(params)
        trace.epochs.append(epoch)
        trace.md.append(md_sum / steps)
        for h in range(n):
            trace.train_err[f"C{h + 1}"].append(ce_sum[h] / steps)
        trace.target_acc.append(_target_accuracy(model, eval_target))
    return model, trace


def train_m3sda(task: MsdaTask, model: MsdaModel, cfg: TrainConfig, eval_target: Optional[DomainDataset] = None):
    """Cross-entropy on every head plus lambda * MD^2 on G's features, one SGD step per minibatch."""
    if model.has_pairs:
        raise ConfigError("train_m3sda expects a model without paired classifiers")
    _check(task, model, cfg, task.n_sources)
    mode = None if cfg.algorithm == "source_only" else "full"
    return _run_moment_matching(task, model, cfg, mode, eval_target or task.target)


def train_source_only(task, model, cfg, eval_target=None):
    """Multi-head training without the moment term (same batches as ``train_m3sda``)."""
    if model.has_pairs:
        raise ConfigError("source_only expects a model without paired classifiers")
    _check(task, model, cfg, task.n_sources)
    return _run_moment_matching(task, model, cfg, None, eval_target or task.target)


def train_ablation(task: MsdaTask, model: MsdaModel, cfg: TrainConfig, eval_target=None):
    """Moment matching restricted to the source-source (ss_only) or source-target (st_only) term."""
    if cfg.algorithm not in ("ss_only", "st_only"):
        raise ConfigError(f"ablation algorithm must be ss_only or st_only, got {cfg.algorithm}")
    if cfg.algorithm == "ss_only" and task.n_sources < 2:
        raise ConfigError("ss_only needs at least two sources")
    if model.has_pairs:
        raise ConfigError("ablations expect a model without paired classifiers")
    _check(task, model, cfg, task.n_sources)
    mode = "ss" if cfg.algorithm == "ss_only" else "st"
    return _run_moment_matching(task, model, cfg, mode, eval_target or task.target)


def combine_sources(task: MsdaTask) -> MsdaTask:
    X = np.concatenate([d.features for d in task.sources], axis=0)
    y = np.concatenate([d.labels for d in task.sources], axis=0)
    pooled = DomainDataset("combined", X, y, task.n_classes)
    return MsdaTask((pooled,), task.target, task.target_labels_visible_for_eval_only)


def train_source_combine(task: MsdaTask, model: MsdaModel, cfg: TrainConfig, eval_target=None):
    """Pool all sources into one domain; single head, single source-target MD^2 term."""
    combined = combine_sources(task)
    if model.has_pairs:
        raise ConfigError("source_combine expects a model without paired classifiers")
    _check(combined, model, cfg, 1)
    return _run_moment_matching(combined, model, cfg, "full", eval_target or task.target)


def _pair_discrepancies(model: MsdaModel, feats_t: Tensor, reduction: str) -> list[Tensor]:
    out = []
    for c, c2 in zip(model.classifiers, model.paired_classifiers):
        out.append(discrepancy(T.softmax(c(feats_t)), T.softmax(c2(feats_t)), reduction))
    return out


def train_m3sda_beta(
    task: MsdaTask,
    model: MsdaModel,
    cfg: TrainConfig,
    eval_target: Optional[DomainDataset] = None,
    step_hook: Optional[Callable[[str, MsdaModel], None]] = None,
):
    """Three steps per minibatch cycle.

    i.   G and every head on sum_i (CE(C_i) + CE(C'_i)) + lambda * MD^2
    ii.  heads only (G frozen) on sum_i (CE(C_i) + CE(C'_i)) - sum_i disc_i(target)
    iii. G only, ``g_steps_per_cycle`` times, on sum_i disc_i(target)

    ``step_hook(name, model)`` runs after each step ("i", "ii", "iii").
    """
    if not model.has_pairs:
        raise ConfigError("train_m3sda_beta needs a model with paired classifiers")
    _check(task, model, cfg, task.n_sources)
    eval_target = eval_target or task.target
    n = task.n_sources
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    samplers = [_CyclicSampler(d.n_samples, cfg.batch_size, rng) for d in task.sources]
    tgt_sampler = _CyclicSampler(task.target.n_samples, cfg.batch_size, rng)
    steps = math.ceil(max(d.n_samples for d in task.domains) / cfg.batch_size)
    opt = SGD(cfg.lr, cfg.momentum)
    g_params, h_params = model.g_parameters(), model.head_parameters()
    all_params = g_params + h_params
    red = cfg.discrepancy_reduction
    trace = TrainTrace(
        cfg.algorithm,
        train_err={f"C{i + 1}": [] for i in range(n)} | {f"C{i + 1}'": [] for i in range(n)},
        disc={f"D{i + 1}": [] for i in range(n)},
        step_losses={"step_i": [], "step_ii": [], "step_iii": []},
    )

    def source_ce(feats, idx, record=None):
        total = Tensor(0.0)
        for h, (f, d, i) in enumerate(zip(feats, task.sources, idx)):
            a = T.softmax_cross_entropy(model.classifiers[h](f), d.labels[i])
            b = T.softmax_cross_entropy(model.paired_classifiers[h](f), d.labels[i])
            if record is not None:
                record[h] += a.item()
                record[n + h] += b.item()
            total = total + a + b
        return total

    for epoch in range(cfg.epochs):
        ce_sum = np.zeros(2 * n)
        disc_sum = np.zeros(n)
        md_sum = 0.0
        s1 = s2 = s3 = 0.0
        for _ in range(steps):
            idx = [s.next() for s in samplers]
            tidx = tgt_sampler.next()
            xs = [d.features[i] for d, i in zip(task.sources, idx)]
            xt = task.target.features[tidx]

            # i. classify sources, match moments
            feats = [model.g(x) for x in xs]
            tgt = model.g(xt)
            st, ss = md_terms(feats, tgt, cfg.moment_cfg)
            md = st + ss
            loss1 = source_ce(feats, idx, ce_sum)
            if cfg.lam > 0:
                loss1 = loss1 + md * cfg.lam
            md_sum += md.item()
            s1 += loss1.item()
            _zero(all_params)
            loss1.backward()
            opt.step(all_params)
            if step_hook:
                step_hook("i", model)

            # ii. heads only: stay accurate on sources, disagree on target
            feats = [model.g(x).detach() for x in xs]
            tgt = model.g(xt).detach()
            disc = _pair_discrepancies(model, tgt, red)
            loss2 = source_ce(feats, idx)
            for d_i in disc:
                loss2 = loss2 - d_i
            s2 += loss2.item()
            _zero(all_params)
            loss2.backward()
            opt.step(h_params)
            if step_hook:
                step_hook("ii", model)

            # iii. G only: make each pair agree on target
            for _ in range(cfg.g_steps_per_cycle):
                disc = _pair_discrepancies(model, model.g(xt), red)
                loss3 = Tensor(0.0)
                for d_i in disc:
                    loss3 = loss3 + d_i
                _zero(all_params)
                loss3.backward()
                opt.step(g_params)
                if step_hook:
                    step_hook("iii", model)
            for h, d_i in enumerate(disc):
                disc_sum[h] += d_i.item()
            s3 += loss3.item()

        trace.epochs.append(epoch)
        trace.md.append(md_sum / steps)
        for h in range(n):
            trace.train_err[f"C{h + 1}"].append(ce_sum[h] / steps)
            trace.train_err[f"C{h + 1}'"].append(ce_sum[n + h] / steps)
            trace.disc[f"D{h + 1}"].append(disc_sum[h] / steps)
        trace.step_losses["step_i"].append(s1 / steps)
        trace.step_losses["step_ii"].append(s2 / steps)
        trace.step_losses["step_iii"].append(s3 / steps)
        trace.target_acc.append(_target_accuracy(model, eval_target))
    return model, trace


def train(task: MsdaTask, model: MsdaModel, cfg: TrainConfig, eval_target: Optional[DomainDataset] = None):
    """Dispatch on ``cfg.algorithm``."""
    algo = cfg.algorithm
    if algo == "source_only":
        return train_source_only(task, model, cfg, eval_target)
    if algo == "m3sda":
        return train_m3sda(task, model, cfg, eval_target)
    if algo == "m3sda_beta":
        return train_m3sda_beta(task, model, cfg, eval_target)
    if algo in ("ss_only", "st_only"):
        return train_ablation(task, model, cfg, eval_target)
    if algo == "source_combine":
        return train_source_combine(task, model, cfg, eval_target)
    raise ConfigError(f"unknown algorithm {algo!r}")


def config_to_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["lambda"] = d.pop("lam")
    return d
