"""Central finite-difference checks for every differentiable op and the training objectives."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .model import build_model, discrepancy
from .moments import MomentConfig, md_squared
from .tensor import Tensor

STEP = 1e-6
TOLERANCE = 1e-4
CASES_PER_OP = 20


def numeric_grad(f: Callable[[list[np.ndarray]], float], arrays: list[np.ndarray], step: float = STEP) -> list[np.ndarray]:
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(arrays)
            flat[i] = orig - step
            down = f(arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def analytic_grad(build: Callable[[list[Tensor]], Tensor], arrays: list[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(leaves).backward()
    return [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, leaves)]


def relative_error(a: Sequence[np.ndarray], n: Sequence[np.ndarray]) -> float:
    va = np.concatenate([x.reshape(-1) for x in a])
    vn = np.concatenate([x.reshape(-1) for x in n])
    denom = max(np.linalg.norm(va), np.linalg.norm(vn), 1e-8)
    return float(np.linalg.norm(va - vn) / denom)


def check(build: Callable[[list[Tensor]], Tensor], arrays: list[np.ndarray]) -> float:
    """Relative error between backprop and central differences for a scalar-valued ``build``."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    ana = analytic_grad(build, arrays)
    num = numeric_grad(lambda arrs: build([Tensor(x) for x in arrs]).item(), arrays)
    return relative_error(ana, num)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def _cases(rng: np.random.Generator) -> dict[str, Callable[[], float]]:
    def unary(fn, sampler):
        def case():
            x = sampler()
            R = rng.standard_normal(x.shape)
            return check(lambda t: T.sum_(fn(t[0]) * Tensor(R)), [x])

        return case

    def binary(fn, same_shape=True):
        def case():
            shape = tuple(rng.integers(1, 5, size=2))
            a = rng.standard_normal(shape)
            b = rng.standard_normal(shape) if same_shape or rng.random() < 0.5 else rng.standard_normal(())
            R = rng.standard_normal(shape)
            return check(lambda t: T.sum_(fn(t[0], t[1]) * Tensor(R)), [a, b])

        return case

    def shape2():
        return tuple(rng.integers(1, 5, size=2))

    def matmul_case():
        m, k, n = rng.integers(1, 5, size=3)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        R = rng.standard_normal((m, n))
        return check(lambda t: T.sum_(T.matmul(t[0], t[1]) * Tensor(R)), [a, b])

    def pow_case():
        k = int(rng.integers(1, 5))
        x = rng.standard_normal(shape2())
        R = rng.standard_normal(x.shape)
        return check(lambda t: T.sum_(T.pow_k(t[0], k) * Tensor(R)), [x])

    def reduce_case(fn):
        def case():
            x = rng.standard_normal(shape2())
            axis = [None, 0, 1][int(rng.integers(0, 3))]
            out_shape = fn(Tensor(x), axis).shape
            R = Tensor(rng.standard_normal(out_shape))
            return check(lambda t: T.sum_(fn(t[0], axis) * R), [x])

        return case

    def l2_case():
        x = rng.standard_normal(shape2()) + 0.1
        return check(lambda t: T.l2_norm(t[0]), [x])

    def softmax_case():
        x = 2 * rng.standard_normal(shape2())
        R = rng.standard_normal(x.shape)
        return check(lambda t: T.sum_(T.softmax(t[0]) * Tensor(R)), [x])

    def xent_case():
        b, c = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        z = 2 * rng.standard_normal((b, c))
        y = rng.integers(0, c, size=b)
        return check(lambda t: T.softmax_cross_entropy(t[0], y), [z])

    def md_case():
        n_src = int(rng.integers(1, 4))
        d = int(rng.integers(1, 4))
        arrays = [rng.standard_normal((int(rng.integers(2, 6)), d)) for _ in range(n_src + 1)]
        order = int(rng.integers(1, 4))
        cfg = MomentConfig(max_order=order)
        return check(lambda t: md_squared(t[:-1], t[-1], cfg), arrays)

    def disc_case():
        b, c = int(rng.integers(1, 5)), int(rng.integers(2, 5))
        z1, z2 = rng.standard_normal((b, c)), rng.standard_normal((b, c))
        red = ["mean", "sum"][int(rng.integers(0, 2))]
        return check(lambda t: discrepancy(T.softmax(t[0]), T.softmax(t[1]), red), [z1, z2])

    def objective_case():
        return check_m3sda_objective(int(rng.integers(0, 2**31)))

    return {
        "matmul": matmul_case,
        "add": binary(T.add, same_shape=False),
        "sub": binary(T.sub, same_shape=False),
        "mul": binary(T.mul, same_shape=False),
        "neg": unary(T.neg, lambda: rng.standard_normal(shape2())),
        "relu": unary(T.relu, lambda: _away_from_zero(rng, shape2())),
        "pow_k": pow_case,
        "abs": unary(T.abs_, lambda: _away_from_zero(rng, shape2())),
        "log": unary(T.log, lambda: rng.uniform(0.2, 3.0, size=shape2())),
        "exp": unary(T.exp, lambda: rng.standard_normal(shape2())),
        "sum": reduce_case(T.sum_),
        "mean": reduce_case(T.mean),
        "l2_norm": l2_case,
        "softmax": softmax_case,
        "softmax_cross_entropy": xent_case,
        "md_squared": md_case,
        "discrepancy": disc_case,
        "m3sda_objective": objective_case,
    }


def check_m3sda_objective(seed: int, lam: float = 0.5) -> float:
    """Gradient of sum_i CE_i + lam * MD^2 w.r.t. every parameter, on a 3-sample 2-feature task."""
    rng = np.random.default_rng(seed)
    model = build_model(2, 2, 2, hidden=(4, 3), seed=seed)
    for p in model.g_parameters():
        # nonzero biases keep ReLU inputs off the kink with high probability
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    xs = [rng.standard_normal((3, 2)) for _ in range(2)]
    ys = [rng.integers(0, 2, size=3) for _ in range(2)]
    xt = rng.standard_normal((3, 2))
    mlps = [model.g, *model.classifiers]
    arrays = [p.data.copy() for p in model.parameters()]

    def objective(leaves: list[Tensor]) -> Tensor:
        it = iter(leaves)
        for mlp in mlps:
            for j in range(len(mlp.weights)):
                mlp.weights[j], mlp.biases[j] = next(it), next(it)
        feats = [model.g(x) for x in xs]
        loss = Tensor(0.0)
        for h, (f, y) in enumerate(zip(feats, ys)):
            loss = loss + T.softmax_cross_entropy(model.classifiers[h](f), y)
        return loss + md_squared(feats, model.g(xt)) * lam

    return check(objective, arrays)


@dataclass
class GradcheckResult:
    max_rel_error: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v < TOLERANCE for v in self.max_rel_error.values())


def run_suite(seed: int = 0, cases: int = CASES_PER_OP) -> GradcheckResult:
    rng = np.random.Generator(np.random.PCG64(seed))
    start = time.perf_counter()
    result = GradcheckResult()
    for name, case in _cases(rng).items():
        result.max_rel_error[name] = max(case() for _ in range(cases))
    result.seconds = time.perf_counter() - start
    return result
