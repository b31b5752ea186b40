"""Independent reference implementations: plain Python loops, no numpy reductions."""

import itertools
import math

import numpy as np

from m3sda.data import DomainDataset


def brute_md2(sources, target, max_order=2):
    def moment(X, k):
        n = len(X)
        return [sum(row[j] ** k for row in X) / n for j in range(len(X[0]))]

    def dist(u, v):
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))

    N = len(sources)
    total = 0.0
    for k in range(1, max_order + 1):
        mt = moment(target, k)
        ms = [moment(S, k) for S in sources]
        total += sum(dist(m, mt) for m in ms) / N
        if N > 1:
            pair = sum(dist(ms[i], ms[j]) for i in range(N) for j in range(i + 1, N))
            total += pair / math.comb(N, 2)
    return total


def brute_cross_divergence(A, B, k):
    d = len(A[0])
    total = 0.0
    for idx in itertools.product(range(k + 1), repeat=d):
        if sum(idx) != k:
            continue
        ma = sum(math.prod(x ** i for x, i in zip(row, idx)) for row in A) / len(A)
        mb = sum(math.prod(x ** i for x, i in zip(row, idx)) for row in B) / len(B)
        total += abs(ma - mb)
    return total


def ds(x, y, name="d"):
    return DomainDataset(name, np.asarray(x, dtype=float).reshape(-1, 1), y, 2)


def random_domain(rng, name, shift=0.0):
    n = int(rng.integers(3, 12))
    x = rng.standard_normal(n) + shift
    y = (x + 0.3 * rng.standard_normal(n) > shift).astype(int)
    return ds(x, y, name)


def threshold_grid(x):
    vals = sorted(set(x))
    return [vals[0] - 1.0] + [(a + b) / 2 for a, b in zip(vals, vals[1:])] + [vals[-1] + 1.0]


def brute_lambda(source, target):
    """min over every threshold x <= t and both orientations of eps_T(h) + eps_S(h), by loop."""
    xs = list(source.features[:, 0]) + list(target.features[:, 0])
    best = math.inf
    for t, o in itertools.product(threshold_grid(xs), (0, 1)):
        errs = []
        for dom in (target, source):
            wrong = 0
            for xi, yi in zip(dom.features[:, 0], dom.labels):
                pred = o if xi <= t else 1 - o
                wrong += pred != yi
            errs.append(wrong / dom.n_samples)
        best = min(best, errs[0] + errs[1])
    return best


def hand_eta(m, d, delta, N, alpha=None, beta=None):
    """Hand-written eta: 4*sqrt(sum_j alpha_j^2/beta_j * (2d(log(2m/d)+1) + 2log(4/delta)) / m)."""
    alpha = alpha or [1.0 / N] * N
    beta = beta or [1.0 / N] * N
    w = sum(a * a / b for a, b in zip(alpha, beta))
    return 4 * math.sqrt(w * (2 * d * (math.log(2 * m / d) + 1) + 2 * math.log(4 / delta)) / m)
