"""Baseline training loop tests."""

import numpy as np
import pytest

import erloop.autodiff as ad
from erloop.errors import DivergenceError
from erloop.model import forward
from erloop.train import (
    TrainConfig,
    cross_entropy_graph,
    dataset_cross_entropy,
    evaluate,
    train_baseline,
)
from helpers import dataset_from_tokens, random_dataset, separable_rows, small_model


def naive_cross_entropy(logits, labels):
    exps = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = exps / exps.sum(axis=1, keepdims=True)
    return float(-np.log(probs[np.arange(len(labels)), labels]).mean())


def test_cross_entropy_value_matches_naive():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(7, 3)) * 5
    labels = rng.integers(0, 3, size=7)
    t = ad.leaf(logits)
    loss = cross_entropy_graph(t, labels)
    assert abs(loss.item() - naive_cross_entropy(logits, labels)) < 1e-12


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, size=5)
    t = ad.leaf(logits)
    loss = cross_entropy_graph(t, labels)
    (g,) = ad.grad(loss, [t])
    g = g.data
    exps = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = exps / exps.sum(axis=1, keepdims=True)
    expected = probs.copy()
    expected[np.arange(5), labels] -= 1.0
    expected /= 5.0
    assert np.allclose(g, expected, atol=1e-12)


def test_cross_entropy_stable_at_extreme_logits():
    logits = np.array([[1000.0, -1000.0], [-1000.0, 1000.0]])
    labels = np.array([0, 0])
    loss = cross_entropy_graph(ad.leaf(logits), labels)
    assert np.isfinite(loss.item())
    assert abs(loss.item() - 1000.0) < 1e-9


def test_zero_epochs_leave_parameters_unchanged():
    data, vocab = dataset_from_tokens([("e1", ["a"], 0), ("e2", ["b"], 1)])
    model = small_model(vocab)
    out = train_baseline(model, data, TrainConfig(epochs=0))
    for name, arr in model.params().items():
        assert np.array_equal(arr, out.params()[name])


def test_training_is_bitwise_deterministic():
    data, vocab = random_dataset(np.random.default_rng(5), 40)
    model = small_model(vocab, seed=2)
    cfg = TrainConfig(epochs=5, batch_size=8, seed=42)
    a = train_baseline(model, data, cfg)
    b = train_baseline(model, data, cfg)
    for name in a.params():
        assert np.array_equal(a.params()[name], b.params()[name])


def test_input_model_is_not_mutated():
    data, vocab = dataset_from_tokens([("e1", ["a"], 0), ("e2", ["b"], 1)])
    model = small_model(vocab)
    before = {k: v.copy() for k, v in model.params().items()}
    train_baseline(model, data, TrainConfig(epochs=3, batch_size=2))
    for name, arr in model.params().items():
        assert np.array_equal(arr, before[name])


def test_separable_data_reaches_high_accuracy():
    data, vocab = dataset_from_tokens(separable_rows())
    model = small_model(vocab, seed=0)
    trained = train_baseline(model, data, TrainConfig(epochs=50, batch_size=8, seed=0))
    assert evaluate(trained, data) >= 0.95


def test_final_loss_not_above_initial_loss():
    data, vocab = dataset_from_tokens(separable_rows(n_per_class=20, seed=9))
    model = small_model(vocab, seed=3)
    before = dataset_cross_entropy(model, data)
    trained = train_baseline(model, data, TrainConfig(epochs=30, batch_size=8))
    after = dataset_cross_entropy(trained, data)
    assert after <= before


def test_divergence_aborts_with_error():
    # an infinite learning rate turns zero-gradient entries into nan on the
    # first update, which the next batch's loss check must catch
    data, vocab = dataset_from_tokens([("e1", ["a", "a"], 0), ("e2", ["b", "b"], 1)])
    model = small_model(vocab)
    with np.errstate(all="ignore"):
        with pytest.raises(DivergenceError):
            train_baseline(model, data, TrainConfig(epochs=2, batch_size=1, learning_rate=np.inf))


def test_evaluate_constant_predictor_on_balanced_data():
    data, vocab = dataset_from_tokens(
        [("e1", ["a"], 0), ("e2", ["a"], 1), ("e3", ["b"], 0), ("e4", ["b"], 1)]
    )
    model = small_model(vocab)
    for arr in model.params().values():
        arr[...] = 0.0
    model.b_out[...] = [5.0, 0.0]
    assert evaluate(model, data) == 0.5


def test_evaluate_matches_brute_force_recount():
    rng = np.random.default_rng(31)
    data, vocab = random_dataset(rng, 100)
    model = small_model(vocab, seed=8)
    acc = evaluate(model, data)
    recount = sum(1 for ex in data if forward(model, ex).correct) / len(data)
    assert acc == recount
