import math

import numpy as np
import pytest

from m3sda.bound import (
    BoundInputs,
    BoundInstance,
    DomainError,
    Threshold,
    ThresholdHypothesisClass,
    alpha_weighted_error,
    empirical_error,
    eta_term,
    lambda_j,
    source_source_lower_bound,
    verify_bound_structure,
)
from m3sda.data import DomainDataset
from m3sda.moments import cross_moment_divergence
from oracles import brute_lambda, ds, random_domain


# -- errors ------------------------------------------------------------------------

def test_empirical_error_examples():
    d = ds([0, 1, 2, 3, 4], [0, 0, 1, 1, 1])
    f = Threshold(1.5, 0)
    assert empirical_error(f, d) == 0.0
    assert empirical_error(Threshold(1.5, 1), d) == 1.0
    d = ds(range(10), [1] * 4 + [0] * 6)
    assert empirical_error(lambda X: np.zeros(len(X), dtype=int), d) == pytest.approx(0.4)


def test_empirical_error_rejects_multiclass():
    with pytest.raises(DomainError):
        empirical_error(Threshold(0.0), DomainDataset("m", np.zeros((3, 1)), [0, 1, 2], 3))


def test_alpha_weighted_error():
    a = ds([0, 1, 2, 3, 4], [0, 0, 0, 0, 1])  # constant 0 errs 0.2
    b = ds([0, 1, 2, 3, 4], [0, 0, 0, 1, 1])  # errs 0.4
    h = Threshold(10.0, 0)
    assert alpha_weighted_error(h, [a], [1.0]) == empirical_error(h, a)
    assert alpha_weighted_error(h, [a, b], [0.0, 1.0]) == empirical_error(h, b)
    assert alpha_weighted_error(h, [a, b], [0.5, 0.5]) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        alpha_weighted_error(h, [a, b], [0.7, 0.7])


# -- eta ---------------------------------------------------------------------------

def test_eta_reference_value():
    b = BoundInputs([1.0], [1.0], m=100, d=1, delta=0.1)
    want = 4 * math.sqrt((2 * (math.log(200) + 1) + 2 * math.log(40)) / 100)
    assert eta_term(b) == pytest.approx(want, abs=1e-12)
    assert eta_term(b) == pytest.approx(1.7877, abs=1e-4)


def test_eta_monotone():
    base = dict(alpha=[0.5, 0.5], beta=[0.5, 0.5], delta=0.1)
    for m in (10, 50, 200, 1000):
        assert eta_term(BoundInputs(m=2 * m, d=2, **base)) < eta_term(BoundInputs(m=m, d=2, **base))
    for d in (1, 2, 3):
        assert eta_term(BoundInputs(m=500, d=d + 1, **base)) > eta_term(BoundInputs(m=500, d=d, **base))
    lo = BoundInputs([0.5, 0.5], [0.5, 0.5], 500, 2, 0.05)
    hi = BoundInputs([0.5, 0.5], [0.5, 0.5], 500, 2, 0.1)
    assert eta_term(lo) > eta_term(hi)


@pytest.mark.parametrize("a1", [0.1, 0.3, 0.5, 0.8])
def test_beta_equal_alpha_minimizes_eta_on_grid(a1):
    alpha = [a1, 1 - a1]
    values = {b1: eta_term(BoundInputs(alpha, [b1, 1 - b1], 200, 2, 0.1)) for b1 in np.round(np.arange(0.05, 1.0, 0.05), 2)}
    best = min(values, key=values.get)
    assert best == pytest.approx(a1)


def test_eta_errors():
    with pytest.raises(ZeroDivisionError):
        eta_term(BoundInputs([0.5, 0.5], [1.0, 0.0], 100, 2, 0.1))
    with pytest.raises(ValueError):
        eta_term(BoundInputs([1.0], [1.0], 1, 2, 0.1))
    with pytest.raises(ValueError):
        BoundInputs([0.6, 0.6], [0.5, 0.5], 100, 2, 0.1)


# -- lambda_j ------------------------------------------------------------------------

def test_lambda_identical_separable_domains_is_zero():
    d = ds([0, 1, 2, 3], [0, 0, 1, 1])
    val, h = lambda_j(ThresholdHypothesisClass.from_data(d), d, d)
    assert val == 0.0 and empirical_error(h, d) == 0.0


def test_lambda_source_equals_target_doubles_best_error():
    d = ds([0, 1, 2, 3, 4], [0, 1, 0, 1, 1])
    hc = ThresholdHypothesisClass.from_data(d)
    assert lambda_j(hc, d, d)[0] == pytest.approx(2 * hc.errors(d).min())


def test_lambda_six_point_instance():
    s = ds([0.0, 1.0, 2.0], [0, 0, 1], "s")
    t = ds([0.5, 1.5, 2.5], [0, 1, 1], "t")
    val, _ = lambda_j(ThresholdHypothesisClass.from_data(s, t), s, t)
    # threshold at 1.25 is perfect on both
    assert val == brute_lambda(s, t) == 0.0
    t2 = ds([0.5, 1.5, 2.5], [1, 0, 0], "t")
    val, _ = lambda_j(ThresholdHypothesisClass.from_data(s, t2), s, t2)
    assert val == pytest.approx(brute_lambda(s, t2))


@pytest.mark.parametrize("case", range(50))
def test_lambda_matches_enumeration(case):
    rng = np.random.default_rng(case)
    s, t = random_domain(rng, "s"), random_domain(rng, "t", shift=float(rng.uniform(-1, 1)))
    val, h = lambda_j(ThresholdHypothesisClass.from_data(s, t), s, t)
    assert val == pytest.approx(brute_lambda(s, t), abs=1e-12)
    assert val >= 0.0
    assert empirical_error(h, s) + empirical_error(h, t) == pytest.approx(val, abs=1e-12)


def test_hypothesis_class_validation():
    with pytest.raises(ValueError):
        ThresholdHypothesisClass(np.array([]))
    with pytest.raises(ValueError):
        ThresholdHypothesisClass(np.array([1.0, 1.0]))


# -- verify_bound_structure ------------------------------------------------------------

def test_identical_domains():
    rng = np.random.default_rng(0)
    d = random_domain(rng, "d")
    rep = verify_bound_structure(BoundInstance((d, d), d))
    assert rep.lhs == rep.rhs_terms["epsilon_T(h*_T)"]
    assert rep.satisfied and rep.rhs >= rep.lhs


def test_h_hat_attains_min_weighted_error():
    rng = np.random.default_rng(3)
    srcs = (random_domain(rng, "a"), random_domain(rng, "b", 0.5))
    tgt = random_domain(rng, "t", 1.0)
    rep = verify_bound_structure(BoundInstance(srcs, tgt, alpha=np.array([0.3, 0.7])))
    hc = ThresholdHypothesisClass.from_data(*srcs, tgt)
    brute = min(alpha_weighted_error(h, srcs, [0.3, 0.7]) for h in hc.hypotheses())
    assert rep.details["alpha_weighted_error(h_hat)"] == pytest.approx(brute, abs=1e-12)


def test_bound_report_terms_nonnegative_and_json():
    rng = np.random.default_rng(4)
    rep = verify_bound_structure(BoundInstance((random_domain(rng, "a"),), random_domain(rng, "t", 1.0)))
    assert all(np.isfinite(v) and v >= 0 for v in rep.rhs_terms.values())
    doc = rep.to_dict()
    assert doc["check"] == "structural"
    assert doc["convention"]["n_eps"] == 2
    assert doc["details"]["d"] == 2


def test_random_instances_satisfied():
    violations = []
    for i in range(200):
        rng = np.random.default_rng(10_000 + i)
        n_src = int(rng.integers(1, 4))
        srcs = tuple(random_domain(rng, f"s{j}", float(rng.uniform(-2, 2))) for j in range(n_src))
        tgt = random_domain(rng, "t", float(rng.uniform(-2, 2)))
        rep = verify_bound_structure(BoundInstance(srcs, tgt))
        if not rep.satisfied:
            violations.append((i, rep.lhs, rep.rhs))
    assert not violations, violations


def test_moment_term_grows_along_shift_path():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(40)
    y = (x > 0).astype(int)
    src = ds(x, y, "s")
    terms = []
    for shift in np.linspace(0.0, 3.0, 7):
        rep = verify_bound_structure(BoundInstance((src,), ds(x + shift, y, "t")))
        terms.append(rep.rhs_terms["sum_j alpha_j*a_{n_eps}*sum_k d_CM^k(D_j,D_T)"])
    assert terms[0] == 0.0
    assert all(b > a for a, b in zip(terms, terms[1:]))


# -- source-source lower bound ----------------------------------------------------------

def test_lower_bound_examples():
    rng = np.random.default_rng(0)
    a, t = rng.standard_normal((6, 2)), rng.standard_normal((5, 2))
    lhs, rhs = source_source_lower_bound(a, a.copy(), t, 2)
    assert rhs == 0.0 and lhs >= rhs
    b = rng.standard_normal((7, 2))
    lhs, rhs = source_source_lower_bound(t, b, t, 2)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    assert lhs == pytest.approx(cross_moment_divergence(b, t, 2))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lower_bound_random_triples(k):
    rng = np.random.default_rng(k)
    for _ in range(500):
        d = int(rng.integers(1, 4))
        d1, d2, dt = (rng.standard_normal((int(rng.integers(1, 9)), d)) * rng.uniform(0.2, 2) for _ in range(3))
        lhs, rhs = source_source_lower_bound(d1, d2, dt, k)
        assert lhs >= rhs - 1e-9
