import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m3sda.data import DomainDataset
from m3sda.ensemble import (
    DegenerateWeightsError,
    EnsembleWeights,
    accuracy_weights,
    combine,
    domain_probabilities,
    evaluate,
    inverse_divergence_weights,
    normalized_weights,
    predict,
    uniform_weights,
)
from m3sda.model import build_model


def test_uniform_weights():
    assert uniform_weights(4).weights.tolist() == [0.25] * 4
    assert uniform_weights(1).weights.tolist() == [1.0]
    with pytest.raises(ValueError):
        uniform_weights(0)


@pytest.mark.parametrize("n", [1, 3, 7, 10, 1000, 10**6])
def test_uniform_weights_sum_to_one(n):
    assert abs(uniform_weights(n).weights.sum() - 1.0) <= 1e-9


@pytest.mark.parametrize("accs", [(0.5, 0.5), (0.9, 0.1), (0.6, 0.2, 0.2)])
def test_accuracy_weights_examples(accs):
    assert np.allclose(accuracy_weights(accs).weights, accs, atol=1e-15)


def test_accuracy_weights_degenerate():
    with pytest.raises(DegenerateWeightsError):
        accuracy_weights([0.0, 0.0])


def test_weights_validation():
    with pytest.raises(ValueError):
        EnsembleWeights([0.5, 0.6])
    with pytest.raises(ValueError):
        EnsembleWeights([1.5, -0.5])


def test_inverse_divergence_prefers_closer_source():
    w = inverse_divergence_weights([1.0, 3.0]).weights
    assert w.tolist() == pytest.approx([0.75, 0.25])


def test_hand_combination():
    probs = [np.array([[0.6, 0.4]]), np.array([[0.3, 0.7]])]
    out = combine(probs, uniform_weights(2))
    assert out[0].tolist() == pytest.approx([0.45, 0.55])
    assert int(np.argmax(out, axis=1)[0]) == 1


def test_combine_length_mismatch():
    with pytest.raises(ValueError):
        combine([np.ones((1, 2))], uniform_weights(2))


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3),
    st.floats(0.01, 100.0),
    st.integers(0, 2**32 - 1),
)
def test_weights_sum_to_one_and_argmax_scale_invariant(raw, scale, seed):
    model = build_model(2, 3, 3, seed=seed % 1000)
    x = np.random.default_rng(seed).standard_normal((20, 2))
    a = normalized_weights(raw)
    b = normalized_weights([r * scale for r in raw])
    assert abs(a.weights.sum() - 1.0) <= 1e-9 and abs(b.weights.sum() - 1.0) <= 1e-9
    assert np.array_equal(predict(model, x, a), predict(model, x, b))


@pytest.mark.parametrize("i", range(3))
def test_one_hot_weights_reproduce_single_head(i):
    model = build_model(2, 3, 3, seed=5)
    x = np.random.default_rng(5).standard_normal((50, 2))
    w = EnsembleWeights(np.eye(3)[i])
    single = np.argmax(domain_probabilities(model, x)[i], axis=1)
    assert np.array_equal(predict(model, x, w), single)


def test_identical_heads_agree_for_any_weights():
    model = build_model(2, 3, 3, seed=1)
    for h in model.classifiers[1:]:
        for a, b in zip(model.classifiers[0].parameters(), h.parameters()):
            b.data = a.data.copy()
    x = np.random.default_rng(1).standard_normal((30, 2))
    ref = np.argmax(domain_probabilities(model, x)[0], axis=1)
    for w in ([0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.0, 0.5, 0.5]):
        assert np.array_equal(predict(model, x, EnsembleWeights(w)), ref)


def test_pair_model_uses_pair_averages():
    model = build_model(2, 3, 2, paired=True, seed=2)
    x = np.random.default_rng(2).standard_normal((10, 2))
    probs = domain_probabilities(model, x)
    from m3sda import tensor as T

    feats = model.g(x).data
    for i in range(2):
        p = T.softmax(model.classifiers[i](feats)).data
        q = T.softmax(model.paired_classifiers[i](feats)).data
        assert np.allclose(probs[i], (p + q) / 2, atol=1e-15)


def _target(labels):
    labels = np.asarray(labels)
    return DomainDataset("t", np.zeros((len(labels), 2)), labels, 2)


def test_evaluate_constant_predictor_on_balanced_data():
    model = build_model(2, 2, 1, seed=0)
    rep = evaluate(model, _target([0, 1] * 10))
    assert rep.accuracy == 0.5
    assert np.trace(rep.confusion) / 20 == rep.accuracy
    assert [sum(r) for r in rep.confusion] == [10, 10]


def test_evaluate_perfect_classifier():
    model = build_model(1, 2, 1, hidden=(2,), seed=0, feature_activation="none")
    # G maps x to (x, -x); the head turns that into logits (-2x, 2x)
    model.g.weights[0].data = np.array([[1.0, -1.0]])
    model.classifiers[0].weights[0].data = np.array([[-1.0, 1.0], [1.0, -1.0]])
    x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    tgt = DomainDataset("t", x, [0, 0, 1, 1], 2)
    rep = evaluate(model, tgt)
    assert rep.accuracy == 1.0
    assert rep.confusion == [[2, 0], [0, 2]]
    assert rep.per_class == [1.0, 1.0]


def test_evaluate_weighted_schema_notes_and_fallback():
    model = build_model(2, 2, 2, seed=0)
    rep = evaluate(model, _target([0, 1]), "weighted", source_accs=[0.8, 0.2])
    assert rep.weights == pytest.approx([0.8, 0.2])
    assert any("oracle" in n for n in rep.notes)
    rep = evaluate(model, _target([0, 1]), "weighted", source_accs=[0.0, 0.0])
    assert rep.weights == [0.5, 0.5]
    assert any("uniform" in n for n in rep.notes)
    with pytest.raises(ValueError):
        evaluate(model, _target([0, 1]), "weighted")


def test_report_json_fields():
    model = build_model(2, 2, 2, seed=0)
    doc = evaluate(model, _target([0, 1, 1])).to_dict()
    for key in ("schema", "weights", "accuracy", "per_class", "confusion", "format_version"):
        assert key in doc
