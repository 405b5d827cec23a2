import numpy as np
import pytest

from hgcn_absa.model import iter_instances
from hgcn_absa.toydata import generate_toy_corpus
from hgcn_absa.training import Adam, evaluate, span_prf, train

from conftest import build_params, small_config


def test_adam_step_matches_hand_computation():
    from hgcn_absa.autodiff import Tensor

    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.5, -1.0])
    opt = Adam(lr=0.1)
    opt.step([("p", p)])
    # First step: m_hat = g, v_hat = g^2, so the update is lr*g/(|g|+eps).
    want = np.array([1.0, -2.0]) - 0.1 * np.sign([0.5, -1.0]) \
        * (np.abs([0.5, -1.0]) / (np.abs([0.5, -1.0]) + 1e-8))
    assert np.allclose(p.data, want, atol=1e-12)


def test_adam_zero_gradient_is_noop():
    from hgcn_absa.autodiff import Tensor

    p = Tensor(np.array([3.0]), requires_grad=True)
    opt = Adam(lr=0.5)
    opt.step([("p", p)])  # grad is None
    assert p.data.tolist() == [3.0]


def test_same_seed_runs_bitwise_identical_epoch1_loss():
    corpus = generate_toy_corpus(6, seed=2)
    config = small_config(epochs=1, seed=7)
    losses = []
    for _ in range(2):
        result = train(corpus, config)
        losses.append(result.history[0].loss)
    assert losses[0] == losses[1]


def test_different_seed_changes_epoch1_loss():
    corpus = generate_toy_corpus(6, seed=2)
    a = train(corpus, small_config(epochs=1, seed=7)).history[0].loss
    b = train(corpus, small_config(epochs=1, seed=8)).history[0].loss
    assert a != b


def test_gamma_zero_keeps_crf_transition_gradients_zero():
    corpus = generate_toy_corpus(4, seed=3)
    config = small_config(epochs=1, scope_loss_weight=0.0, l2_weight=0.0)
    seen = []

    def check(step, params):
        grad = params.crf.transitions.grad
        seen.append(grad is None or not np.any(grad))

    train(corpus, config, after_batch=check)
    assert seen and all(seen)


def test_crf_gets_gradients_when_scope_loss_on():
    corpus = generate_toy_corpus(4, seed=3)
    config = small_config(epochs=1)
    hits = []

    def check(step, params):
        grad = params.crf.transitions.grad
        hits.append(grad is not None and np.any(grad != 0.0))

    train(corpus, config, after_batch=check)
    assert any(hits)


def test_training_reduces_loss_on_toy_data():
    corpus = generate_toy_corpus(8, seed=4)
    config = small_config(epochs=8, batch_size=8, seed=1)
    result = train(corpus, config)
    assert result.history[-1].loss < result.history[0].loss


def test_ablation_configs_train_and_evaluate():
    corpus = generate_toy_corpus(3, seed=5)
    for flags in (dict(use_cgcn=True, use_dgcn=False),
                  dict(use_cgcn=False, use_dgcn=True)):
        config = small_config(epochs=1, **flags)
        result = train(corpus, config)
        metrics = evaluate(corpus, result.params, config)
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert metrics["scope"]["gold"] == 6


def test_evaluate_majority_class_matches_independent_count(demo_corpus):
    config = small_config()
    params = build_params(demo_corpus, config)
    params.classifier.w.data[:] = 0.0
    params.classifier.b.data[:] = 0.0
    params.classifier.b.data[0] = 100.0  # always predict "positive"
    metrics = evaluate(demo_corpus, params, config)
    gold = [t.polarity for s in demo_corpus for t in s.targets]
    majority_fraction = gold.count("positive") / len(gold)
    assert metrics["accuracy"] == pytest.approx(majority_fraction)
    assert metrics["total"] == len(gold)


def test_evaluate_buckets_by_target_count(demo_corpus):
    config = small_config()
    params = build_params(demo_corpus, config)
    metrics = evaluate(demo_corpus, params, config)
    assert set(metrics["by_target_count"]) == {"1", "2"}
    assert metrics["by_target_count"]["2"]["total"] == 2
    assert metrics["by_target_count"]["1"]["total"] == 2


def test_evaluate_invariant_to_corpus_order(demo_corpus):
    config = small_config()
    params = build_params(demo_corpus, config)
    a = evaluate(demo_corpus, params, config)
    b = evaluate(list(reversed(demo_corpus)), params, config)
    assert a["accuracy"] == b["accuracy"]
    assert a["scope"] == b["scope"]


def test_span_prf_exact_match_only():
    gold = [[(0, 2)], [(3, 5)]]
    perfect = span_prf([[(0, 2)], [(3, 5)]], gold)
    assert perfect["f1"] == 1.0
    off_by_one = span_prf([[(0, 2)], [(3, 6)]], gold)
    assert off_by_one["matched"] == 1
    assert off_by_one["precision"] == 0.5 and off_by_one["recall"] == 0.5
    empty = span_prf([[], []], gold)
    assert empty["f1"] == 0.0


def test_train_empty_corpus_is_an_error():
    with pytest.raises(ValueError):
        train([], small_config())


def test_dev_split_tracks_best_epoch():
    corpus = generate_toy_corpus(6, seed=2)
    dev = generate_toy_corpus(3, seed=12)
    config = small_config(epochs=3)
    result = train(corpus, config, dev_corpus=dev)
    assert result.best_epoch in (1, 2, 3)
    assert result.best_state is not None
    assert all(r.dev_accuracy is not None for r in result.history)
    best = max(result.history, key=lambda r: r.dev_accuracy).dev_accuracy
    assert result.history[result.best_epoch - 1].dev_accuracy == best
    result.restore_best()
    from hgcn_absa.training import evaluate as _eval
    assert _eval(dev, result.params, config)["accuracy"] == best


def test_no_dev_split_has_no_best_state():
    corpus = generate_toy_corpus(3, seed=2)
    result = train(corpus, small_config(epochs=1))
    assert result.best_state is None
    with pytest.raises(ValueError):
        result.restore_best()
