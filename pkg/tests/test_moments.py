import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m3sda.moments import (
    MomentConfig,
    cross_moment_divergence,
    cross_moments,
    divergence_matrix,
    elementwise_moment,
    enumerate_multi_indices,
    md_squared,
    md_terms,
)
from m3sda.gradcheck import check
from m3sda.tensor import ShapeError, Tensor
from oracles import brute_cross_divergence, brute_md2


# -- elementwise moments ---------------------------------------------------------------

def test_elementwise_moment_examples():
    X = [[1.0, 2.0], [3.0, 4.0]]
    assert elementwise_moment(X, 1).values.tolist() == [2.0, 3.0]
    assert elementwise_moment(X, 2).values.tolist() == [5.0, 10.0]


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_single_sample_moment_is_power(k):
    assert np.allclose(elementwise_moment([[1.5, -2.0]], k).values, [1.5**k, (-2.0) ** k])


def test_elementwise_moment_rejects_empty():
    with pytest.raises(ValueError):
        elementwise_moment(np.zeros((0, 2)), 1)


# -- MD^2 ----------------------------------------------------------------------

def test_md2_hand_instance():
    val = md_squared([[[0.0], [0.0]], [[1.0], [1.0]]], [[0.0], [0.0]]).item()
    assert val == pytest.approx(3.0, abs=1e-12)
    assert brute_md2([[[0.0], [0.0]], [[1.0], [1.0]]], [[0.0], [0.0]]) == pytest.approx(3.0, abs=1e-12)


def test_md2_identical_batches_is_zero():
    X = np.random.default_rng(0).standard_normal((6, 3))
    assert md_squared([X, X.copy(), X.copy()], X.copy()).item() == 0.0


@pytest.mark.parametrize("case", range(50))
def test_md2_matches_brute_force(case):
    rng = np.random.default_rng(1000 + case)
    n_src = int(rng.integers(1, 5))
    d = int(rng.integers(1, 4))
    order = int(rng.integers(1, 4))
    srcs = [rng.standard_normal((int(rng.integers(1, 7)), d)) for _ in range(n_src)]
    tgt = rng.standard_normal((int(rng.integers(1, 7)), d))
    got = md_squared(srcs, tgt, MomentConfig(max_order=order)).item()
    want = brute_md2([s.tolist() for s in srcs], tgt.tolist(), order)
    assert abs(got - want) <= 1e-10


def test_md2_permutation_and_source_swap_invariance():
    rng = np.random.default_rng(5)
    a, b, t = (rng.standard_normal((8, 3)) for _ in range(3))
    base = md_squared([a, b], t).item()
    assert md_squared([a[rng.permutation(8)], b], t[rng.permutation(8)]).item() == pytest.approx(base, abs=1e-12)
    assert md_squared([b, a], t).item() == pytest.approx(base, abs=1e-12)


def test_md2_single_source_reduces_to_source_target_sum():
    rng = np.random.default_rng(6)
    a, t = rng.standard_normal((5, 2)), rng.standard_normal((7, 2))
    want = sum(np.linalg.norm((a**k).mean(0) - (t**k).mean(0)) for k in (1, 2))
    st_, ss_ = md_terms([a], t)
    assert ss_.item() == 0.0
    assert md_squared([a], t).item() == pytest.approx(want, abs=1e-12)


def test_md2_terms_sum_to_total():
    rng = np.random.default_rng(7)
    srcs = [rng.standard_normal((5, 3)) for _ in range(3)]
    t = rng.standard_normal((5, 3))
    st_, ss_ = md_terms(srcs, t)
    assert st_.item() + ss_.item() == md_squared(srcs, t).item()


def test_md2_width_mismatch():
    with pytest.raises(ShapeError):
        md_squared([np.zeros((2, 2))], np.zeros((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_md2_nonnegative_and_zero_iff_moments_coincide(seed, n_src, d):
    rng = np.random.default_rng(seed)
    srcs = [rng.standard_normal((4, d)) for _ in range(n_src)]
    t = rng.standard_normal((4, d))
    assert md_squared(srcs, t).item() >= 0.0
    # permuted copies share every moment, so the distance vanishes
    same = [t[rng.permutation(4)] for _ in range(n_src)]
    assert md_squared(same, t).item() <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_md2_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal((4, 3)) for _ in range(3)]
    assert check(lambda t: md_squared(t[:2], t[2]), arrays) < 1e-4


def test_md2_gradient_flows_to_every_batch():
    rng = np.random.default_rng(1)
    ts = [Tensor(rng.standard_normal((3, 2)), requires_grad=True) for _ in range(3)]
    md_squared(ts[:2], ts[2]).backward()
    assert all(t.grad is not None and np.any(t.grad != 0) for t in ts)


# -- multi-indices ------------------------------------------------------------------

def test_multi_indices_examples():
    assert enumerate_multi_indices(2, 2).indices == ((0, 2), (1, 1), (2, 0))
    assert enumerate_multi_indices(1, 4).indices == ((4,),)
    assert len(enumerate_multi_indices(3, 3)) == 10 == math.comb(5, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5))
def test_multi_indices_match_brute_enumeration(n, k):
    got = enumerate_multi_indices(n, k).indices
    want = sorted(i for i in itertools.product(range(k + 1), repeat=n) if sum(i) == k)
    assert list(got) == want
    assert len(got) == math.comb(k + n - 1, n - 1)


# -- cross-moment divergence ------------------------------------------------------------

def test_cross_divergence_examples():
    X = np.random.default_rng(0).standard_normal((5, 2))
    assert cross_moment_divergence(X, X.copy(), 2) == 0.0
    assert cross_moment_divergence([[0.0]], [[1.0]], 1) == 1.0


def test_cross_moments_include_mixed_terms():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    # order 2 multi-indices: (0,2), (1,1), (2,0)
    assert cross_moments(X, 2).values.tolist() == [10.0, 7.0, 5.0]


@pytest.mark.parametrize("case", range(20))
def test_cross_divergence_matches_brute_force(case):
    rng = np.random.default_rng(case)
    d, k = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    A, B = rng.standard_normal((5, d)), rng.standard_normal((7, d))
    assert cross_moment_divergence(A, B, k) == pytest.approx(brute_cross_divergence(A.tolist(), B.tolist(), k), abs=1e-10)


def test_cross_divergence_width_mismatch():
    with pytest.raises(ShapeError):
        cross_moment_divergence(np.zeros((2, 2)), np.zeros((2, 3)), 1)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_cross_divergence_metric_axioms(k):
    rng = np.random.default_rng(100 + k)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        a, b, c = (rng.standard_normal((int(rng.integers(1, 8)), d)) for _ in range(3))
        ab, ba = cross_moment_divergence(a, b, k), cross_moment_divergence(b, a, k)
        assert ab == ba
        assert ab >= 0.0
        assert cross_moment_divergence(a, c, k) <= ab + cross_moment_divergence(b, c, k) + 1e-9


# -- divergence matrix ---------------------------------------------------------------------

def test_divergence_matrix_properties():
    rng = np.random.default_rng(3)
    doms = [rng.standard_normal((10, 2)) + i for i in range(4)]
    rep = divergence_matrix(doms, 3)
    for k in (1, 2, 3):
        D = rep.matrix(k)
        assert np.all(np.diag(D) == 0)
        assert np.array_equal(D, D.T)
    assert rep.min_triangle_check() >= -1e-9
    assert len(rep.orders[0]["triangle_checks"]) == math.comb(4, 2) * 2


def test_divergence_matrix_identical_domains_share_rows():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((6, 2))
    rep = divergence_matrix([a, a.copy(), a + 2.0], 2)
    for k in (1, 2):
        D = rep.matrix(k)
        assert D[0].tolist() == D[1].tolist()


def test_moment_report_json_shape():
    rep = divergence_matrix([np.zeros((2, 1)), np.ones((2, 1)), np.full((2, 1), 3.0)], 2)
    doc = rep.to_dict()
    assert doc["format_version"] == 1
    assert [o["order"] for o in doc["orders"]] == [1, 2]
    assert set(doc["orders"][0]) == {"order", "pairwise", "triangle_checks"}
