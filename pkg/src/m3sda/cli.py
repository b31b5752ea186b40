"""Command-line entry point: ``m3sda {gen-data,train,moments,bound,gradcheck}``.

Exit codes: 0 success, 1 internal or check failure, 2 config error, 3 data error.
Every command is a pure function of its flags and input files; the only
environment variable consulted is ``M3SDA_VERBOSE`` (extra progress on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import bound as B
from .data import (
    GENERATOR_VERSION,
    DomainDataset,
    MsdaTask,
    ParseError,
    SchemaError,
    SplitSpec,
    gen_blobs,
    gen_moons,
    load_csv,
    split_task,
    standardize,
    write_csv,
)
from .ensemble import SCHEMAS, evaluate, head_accuracies
from .gradcheck import CASES_PER_OP, TOLERANCE, run_suite
from .model import ConfigError, build_model, save_checkpoint
from .moments import MomentConfig, divergence_matrix
from .tensor import ShapeError
from .trainer import TrainConfig, config_to_dict, train

METRICS_VERSION = 1
MANIFEST_VERSION = 1

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


class DataError(Exception):
    """Input data is missing or malformed."""


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, doc) -> None:
    text = _dump(doc)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _verbose(msg: str) -> None:
    if os.environ.get("M3SDA_VERBOSE"):
        print(msg, file=sys.stderr)


# -- experiment config -------------------------------------------------------------

@dataclass(frozen=True)
class DataSection:
    scenario: str = "blobs"
    domains: int = 3
    n_classes: int = 3
    per_class: int = 100
    shift: float = 3.0
    rot: float = 0.0
    radius: float = 3.0
    spread: float = 0.5
    centers: Optional[tuple] = None
    noise: float = 0.05
    standardize: bool = True
    train_fraction: float = 0.7
    sources: tuple = ()
    target: Optional[str] = None


@dataclass(frozen=True)
class ModelSection:
    hidden: tuple = (16, 8)
    feature_activation: str = "none"


@dataclass(frozen=True)
class TrainSection:
    algorithm: str = "m3sda"
    lam: float = 0.5
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    g_steps_per_cycle: int = 1
    discrepancy_reduction: str = "mean"


@dataclass(frozen=True)
class EnsembleSection:
    schemas: tuple = ("uniform", "weighted")


@dataclass(frozen=True)
class MomentsSection:
    max_order: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    moments: MomentsSection = field(default_factory=MomentsSection)
    base_dir: str = "."

    def train_config(self, seed: Optional[int] = None, **override) -> TrainConfig:
        kw = asdict(self.train)
        kw.update(override)
        return TrainConfig(
            seed=self.seed if seed is None else seed,
            moment_cfg=MomentConfig(max_order=self.moments.max_order),
            **kw,
        )

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        for name in ("data", "model", "train", "ensemble", "moments"):
            sec = asdict(getattr(self, name))
            if name == "train":
                sec["lambda"] = sec.pop("lam")
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out


def _section(cls, raw, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    raw = dict(raw)
    if cls is TrainSection and "lambda" in raw:
        raw["lam"] = raw.pop("lambda")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    for k, v in raw.items():
        if isinstance(v, list):
            raw[k] = tuple(v)
    return cls(**raw)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_config(doc: dict, base_dir=".") -> ExperimentConfig:
    """Validate a config document; unknown keys anywhere are a config error."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"seed", "data", "model", "train", "ensemble", "moments", "format_version"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "seed" not in doc or not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
        raise ConfigError("config needs an integer 'seed'")
    cfg = ExperimentConfig(
        seed=doc["seed"],
        data=_section(DataSection, doc.get("data"), "data"),
        model=_section(ModelSection, doc.get("model"), "model"),
        train=_section(TrainSection, doc.get("train"), "train"),
        ensemble=_section(EnsembleSection, doc.get("ensemble"), "ensemble"),
        moments=_section(MomentsSection, doc.get("moments"), "moments"),
        base_dir=str(base_dir),
    )
    if cfg.data.scenario not in ("blobs", "moons", "csv"):
        raise ConfigError(f"data.scenario must be blobs|moons|csv, got {cfg.data.scenario!r}")
    if cfg.data.scenario == "csv" and (not cfg.data.sources or not cfg.data.target):
        raise ConfigError("csv scenario needs data.sources and data.target")
    c = cfg.data.centers
    if c is not None and (
        len(c) != cfg.data.n_classes
        or any(not isinstance(p, (list, tuple)) or len(p) != 2 or not all(_is_number(v) for v in p) for p in c)
    ):
        raise ConfigError(f"data.centers must list {cfg.data.n_classes} [x, y] points")
    bad = [s for s in cfg.ensemble.schemas if s not in SCHEMAS]
    if bad:
        raise ConfigError(f"unknown ensemble schema(s): {bad}")
    try:
        cfg.train_config()
        MomentConfig(max_order=cfg.moments.max_order)
        SplitSpec(cfg.data.train_fraction)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {p}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON: {e}") from e
    return parse_config(doc, p.parent)


def build_task(cfg: ExperimentConfig, seed: int) -> MsdaTask:
    d = cfg.data
    try:
        if d.scenario == "blobs":
            task = gen_blobs(d.domains, d.n_classes, d.per_class, d.shift, d.rot, seed, radius=d.radius, spread=d.spread, centers=d.centers)
        elif d.scenario == "moons":
            task = gen_moons(d.domains, d.per_class, d.shift, seed, rot_scale=d.rot, noise=d.noise)
        else:
            base = Path(cfg.base_dir)
            srcs = [load_csv(base / s, name=Path(s).stem) for s in d.sources]
            tgt = load_csv(base / d.target, name="target")
            k = max(x.n_classes for x in [*srcs, tgt])
            task = MsdaTask(
                tuple(DomainDataset(s.name, s.features, s.labels, k) for s in srcs),
                DomainDataset(tgt.name, tgt.features, tgt.labels, k),
            )
    except (FileNotFoundError, SchemaError, ParseError) as e:
        raise DataError(str(e)) from e
    except ValueError as e:
        if d.scenario == "csv":
            raise DataError(str(e)) from e
        raise ConfigError(str(e)) from e
    return standardize(task) if d.standardize else task


# -- train ---------------------------------------------------------------------------

def _fresh_model(cfg: ExperimentConfig, task: MsdaTask, algorithm: str, seed: int):
    heads = 1 if algorithm == "source_combine" else task.n_sources
    return build_model(
        task.n_features,
        task.n_classes,
        heads,
        hidden=cfg.model.hidden,
        paired=algorithm == "m3sda_beta",
        seed=seed,
        feature_activation=cfg.model.feature_activation,
    )


def run_experiment(cfg: ExperimentConfig, seed: int, algorithm: Optional[str] = None):
    """One seed: train, evaluate every configured schema; returns (metrics, model)."""
    algorithm = algorithm or cfg.train.algorithm
    task = build_task(cfg, seed)
    train_task, test_task = split_task(task, SplitSpec(cfg.data.train_fraction, seed))
    tcfg = cfg.train_config(seed, algorithm=algorithm)
    model, trace = train(train_task, _fresh_model(cfg, task, algorithm, seed), tcfg, eval_target=test_task.target)
    reports = {}
    source_accs = None
    if "weighted" in cfg.ensemble.schemas:
        if algorithm == "source_combine":
            reports["weighted"] = {"skipped": "single pooled head; per-source weights undefined"}
        else:
            # acc_i: target accuracy of head i of a source-only run with the same seed
            ref, _ = train(
                train_task,
                _fresh_model(cfg, task, "source_only", seed),
                cfg.train_config(seed, algorithm="source_only"),
                eval_target=test_task.target,
            )
            source_accs = head_accuracies(ref, test_task.target)
    for schema in cfg.ensemble.schemas:
        if schema in reports:
            continue
        divs = None
        if schema == "inverse_divergence":
            from .moments import cross_moment_divergence

            heads = [train_task.target] if algorithm == "source_combine" else train_task.sources
            divs = [cross_moment_divergence(d.features, train_task.target.features, 1) for d in heads]
        reports[schema] = evaluate(
            model, test_task.target, schema, source_accs=source_accs, divergences=divs
        ).to_dict()
    metrics = {
        "seed": seed,
        "algorithm": algorithm,
        "train_config": config_to_dict(tcfg),
        "trace": trace.to_dict(),
        "reports": reports,
        "source_only_accs": source_accs,
    }
    return metrics, model


def _run_seed(args):
    cfg, seed, algorithm, ckpt = args
    metrics, model = run_experiment(cfg, seed, algorithm)
    if ckpt is not None:
        save_checkpoint(model, ckpt)
        metrics["checkpoint"] = Path(ckpt).name
    return metrics


def cmd_train(ns) -> int:
    cfg = load_config(ns.config)
    seeds = [cfg.seed] if not ns.seeds else [int(s) for s in ns.seeds.split(",")]
    algorithm = ns.algo or cfg.train.algorithm
    cfg.train_config(algorithm=algorithm)  # validate the override early
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("")
    jobs = [
        (cfg, s, algorithm, f"{stem}.ckpt.json" if len(seeds) == 1 else f"{stem}.seed{s}.ckpt.json")
        for s in seeds
    ]
    if ns.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            runs = list(pool.map(_run_seed, jobs))
    else:
        runs = [_run_seed(j) for j in jobs]
    for r in runs:
        _verbose(f"seed {r['seed']}: " + ", ".join(f"{k}={v.get('accuracy')}" for k, v in r["reports"].items()))
    _write(out, {"format_version": METRICS_VERSION, "config": cfg.to_dict(), "runs": runs})
    return EXIT_OK


# -- gen-data ------------------------------------------------------------------------

def cmd_gen_data(ns) -> int:
    try:
        if ns.scenario == "blobs":
            task = gen_blobs(ns.domains, ns.classes, ns.per_class, ns.shift, ns.rot, ns.seed)
        else:
            task = gen_moons(ns.domains, ns.per_class, ns.shift, ns.seed, rot_scale=ns.rot)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = Path(ns.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create {out}: {e}") from e
    files = []
    for i, d in enumerate(task.domains):
        name = "target.csv" if i == task.n_sources else f"source_{i + 1}.csv"
        path = out / name
        try:
            write_csv(d, path)
        except OSError as e:
            raise DataError(f"cannot write {path}: {e}") from e
        files.append(
            {
                "file": name,
                "role": "target" if i == task.n_sources else "source",
                "n_samples": d.n_samples,
                "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
            }
        )
    manifest = {
        "format_version": MANIFEST_VERSION,
        "generator_version": GENERATOR_VERSION,
        "flags": {
            "scenario": ns.scenario,
            "domains": ns.domains,
            "classes": ns.classes if ns.scenario == "blobs" else 2,
            "per_class": ns.per_class,
            "shift": ns.shift,
            "rot": ns.rot,
            "seed": ns.seed,
        },
        "files": files,
    }
    _write(out / "manifest.json", manifest)
    return EXIT_OK


# -- moments ---------------------------------------------------------------------------

def _load(path, name=None) -> DomainDataset:
    try:
        return load_csv(path, name=name)
    except (FileNotFoundError, SchemaError, ParseError, ValueError) as e:
        raise DataError(str(e)) from e


def cmd_moments(ns) -> int:
    paths = [ns.a, ns.b, *(ns.more or [])]
    sets = [_load(p, Path(p).stem) for p in paths]
    if ns.order < 1:
        raise ConfigError("--order must be >= 1")
    try:
        rep = divergence_matrix([d.features for d in sets], ns.order, names=[d.name for d in sets])
    except ShapeError as e:
        raise DataError(str(e)) from e
    _write(ns.out, rep.to_dict())
    return EXIT_OK


# -- bound -------------------------------------------------------------------------------

def _instance_domain(spec, base: Path, name: str) -> DomainDataset:
    if isinstance(spec, str):
        return _load(base / spec, name)
    if isinstance(spec, dict) and set(spec) == {"x", "y"}:
        try:
            return DomainDataset(name, np.asarray(spec["x"], dtype=float).reshape(-1, 1), spec["y"], 2)
        except ValueError as e:
            raise DataError(f"{name}: {e}") from e
    raise ConfigError(f"{name}: expected a CSV path or an object with keys x, y")


def cmd_bound(ns) -> int:
    p = Path(ns.instance)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise DataError(f"instance file not found: {p}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON: {e}") from e
    unknown = sorted(set(doc) - {"format_version", "sources", "target", "alpha", "delta", "k_max"})
    if unknown:
        raise ConfigError(f"unknown instance key(s): {', '.join(unknown)}")
    if "sources" not in doc or "target" not in doc:
        raise ConfigError("instance needs 'sources' and 'target'")
    sources = tuple(_instance_domain(s, p.parent, f"source_{i + 1}") for i, s in enumerate(doc["sources"]))
    target = _instance_domain(doc["target"], p.parent, "target")
    for d in (*sources, target):
        if d.n_features != 1:
            raise DataError(f"{d.name}: bound instances are 1-D, got {d.n_features} features")
        if d.n_classes > 2:
            raise DataError(f"{d.name}: bound instances need binary labels")
    alpha = None if doc.get("alpha") is None else np.asarray(doc["alpha"], dtype=float)
    try:
        inst = B.BoundInstance(sources, target, alpha, float(doc.get("delta", 0.1)), int(doc.get("k_max", 2)))
        rep = B.verify_bound_structure(inst)
    except B.DomainError as e:
        raise DataError(str(e)) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
    _write(ns.out, rep.to_dict())
    return EXIT_OK


# -- gradcheck ----------------------------------------------------------------------------

def cmd_gradcheck(ns) -> int:
    res = run_suite(ns.seed, ns.cases)
    for name, err in res.max_rel_error.items():
        print(f"{name:24s} max_rel_error={err:.3e} {'ok' if err < TOLERANCE else 'FAIL'}")
    print(f"{'all':24s} {'passed' if res.passed else 'FAILED'} (tolerance {TOLERANCE:g})")
    return EXIT_OK if res.passed else EXIT_FAIL


# -- entry point -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="m3sda", description="Multi-source moment matching experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic multi-domain dataset as CSV")
    g.add_argument("--scenario", choices=("blobs", "moons"), default="blobs")
    g.add_argument("--domains", type=int, default=3)
    g.add_argument("--classes", type=int, default=3, help="blobs only")
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--shift", type=float, default=1.0)
    g.add_argument("--rot", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one algorithm and evaluate the ensembles")
    t.add_argument("--config", required=True)
    t.add_argument("--algo", default=None, help="override train.algorithm")
    t.add_argument("--out", required=True, help="metrics JSON path")
    t.add_argument("--seeds", default=None, help="comma-separated seeds (default: config seed)")
    t.add_argument("--jobs", type=int, default=1, help="processes across seeds")
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("moments", help="pairwise cross-moment divergences between CSV domains")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.add_argument("--more", nargs="*", default=[])
    m.add_argument("--order", type=int, default=2)
    m.add_argument("--out", default="-")
    m.set_defaults(func=cmd_moments)

    b = sub.add_parser("bound", help="evaluate the error-bound terms on a 1-D instance")
    b.add_argument("--instance", required=True)
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_bound)

    c = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--cases", type=int, default=CASES_PER_OP)
    c.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
