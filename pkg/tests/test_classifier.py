import json
import math

import numpy as np
import pytest
from scipy import sparse
from scipy.special import expit

from toxtrig.classifier import (
    Hyperparams,
    Model,
    NgramLogisticClassifier,
    build_vocabulary,
    evaluate,
    featurize,
    loss_gradient,
    predict,
    regularized_log_loss,
    train,
)
from toxtrig.errors import ConfigError, DatasetError, TrainingDivergedError
from toxtrig.triggers import TriggerExample, TriggerLabelValue

from synth import planted_split


def zero_model(vocab=None, bias=0.0):
    vocab = vocab or {}
    return Model(
        vocabulary=vocab,
        weights=np.zeros(len(vocab)),
        bias=bias,
        hyperparams=Hyperparams(),
    )


class TestFeaturize:
    def test_empty_text_empty_vector(self):
        vocab = build_vocabulary(["some words"])
        assert featurize("", vocab) == {}

    def test_unigram_and_bigram_counts(self):
        vocab = build_vocabulary(["bad bad idea"])
        counts = {term: featurize("bad bad idea", vocab)[idx] for term, idx in vocab.items()}
        assert counts == {"bad": 2, "idea": 1, "bad bad": 1, "bad idea": 1}

    def test_out_of_vocabulary_dropped(self):
        vocab = build_vocabulary(["known words"])
        assert featurize("entirely novel phrasing", vocab) == {}

    def test_oov_text_predicts_sigmoid_bias(self):
        model = zero_model({"known": 0}, bias=-1.3)
        assert predict(model, "unseen stuff") == pytest.approx(float(expit(-1.3)))

    def test_vocabulary_min_count(self):
        vocab = build_vocabulary(["rare word word word"], min_count=3)
        assert "rare" not in vocab
        assert "word" in vocab


class TestGradient:
    def rand_problem(self, rng, n=12, d=8):
        matrix = sparse.csr_matrix(
            np.where(rng.random((n, d)) < 0.4, rng.integers(1, 4, (n, d)), 0).astype(float)
        )
        labels = rng.integers(0, 2, n).astype(float)
        weights = rng.normal(0, 1, d)
        bias = float(rng.normal())
        return matrix, labels, weights, bias

    def test_analytic_matches_central_differences(self):
        h = 1e-6
        for seed in range(10):
            rng = np.random.default_rng(seed)
            matrix, labels, weights, bias = self.rand_problem(rng)
            l2 = 10.0 ** rng.uniform(-4, -1)
            grad_w, grad_b = loss_gradient(weights, bias, matrix, labels, l2)
            numeric = np.zeros_like(weights)
            for j in range(len(weights)):
                up, down = weights.copy(), weights.copy()
                up[j] += h
                down[j] -= h
                numeric[j] = (
                    regularized_log_loss(up, bias, matrix, labels, l2)
                    - regularized_log_loss(down, bias, matrix, labels, l2)
                ) / (2 * h)
            numeric_b = (
                regularized_log_loss(weights, bias + h, matrix, labels, l2)
                - regularized_log_loss(weights, bias - h, matrix, labels, l2)
            ) / (2 * h)
            analytic = np.append(grad_w, grad_b)
            estimate = np.append(numeric, numeric_b)
            rel = np.linalg.norm(analytic - estimate) / max(
                np.linalg.norm(analytic), np.linalg.norm(estimate), 1e-12
            )
            assert rel < 1e-4


class TestTrain:
    def test_separable_corpus_training_accuracy(self):
        split = planted_split(n_per_class=60, seed=1)
        model = train(split, Hyperparams(epochs=300))
        correct = sum(
            (predict(model, e.text) >= 0.5) == e.is_trigger for e in split.train
        )
        assert correct / len(split.train) >= 0.99

    def test_planted_example_scores_high(self):
        split = planted_split(n_per_class=60, seed=2)
        model = train(split, Hyperparams(epochs=300))
        trigger_texts = [e.text for e in split.test if e.is_trigger]
        assert predict(model, trigger_texts[0]) > 0.9

    def test_huge_l2_shrinks_weights_to_zero(self):
        split = planted_split(n_per_class=30, seed=3)
        model = train(split, Hyperparams(epochs=200, l2=1e6))
        assert np.max(np.abs(model.weights)) < 1e-4
        assert predict(model, "zyxflare quorvex") == pytest.approx(
            float(expit(model.bias)), abs=1e-3
        )

    def test_bit_identical_reruns(self):
        split = planted_split(n_per_class=25, seed=4)
        a = train(split, Hyperparams(seed=7, epochs=50))
        b = train(split, Hyperparams(seed=7, epochs=50))
        assert a.bias == b.bias
        assert np.array_equal(a.weights, b.weights)
        assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(
            b.to_json(), sort_keys=True
        )

    def test_loss_history_non_increasing(self):
        split = planted_split(n_per_class=25, seed=5)
        model = train(split, Hyperparams(epochs=120, learning_rate=4.0))
        history = model.loss_history
        assert len(history) >= 2
        assert all(b <= a for a, b in zip(history, history[1:]))
        assert history[-1] <= history[0]

    def test_too_few_examples_per_class(self):
        # built by hand: make_dataset would reject this upstream
        from toxtrig.triggers import DatasetSplit

        trig = [TriggerExample("t0", "a b", TriggerLabelValue.TRIGGER)]
        non = [
            TriggerExample(f"n{i}", "c d", TriggerLabelValue.NON_TRIGGER) for i in range(4)
        ]
        split = DatasetSplit(train=trig + non, test=non[:1], ratio=0.8, seed=0)
        with pytest.raises(DatasetError, match="2 examples per class"):
            train(split)

    def test_divergence_guard_raises_with_advice(self, monkeypatch):
        split = planted_split(n_per_class=10, seed=6)
        monkeypatch.setattr(
            "toxtrig.classifier.regularized_log_loss",
            lambda *args, **kwargs: float("inf"),
        )
        with pytest.raises(TrainingDivergedError, match="learning rate"):
            train(split, Hyperparams(epochs=5))

    def test_bad_hyperparams_rejected(self):
        with pytest.raises(ConfigError):
            Hyperparams(learning_rate=float("nan"))
        with pytest.raises(ConfigError):
            Hyperparams(l2=-1.0)
        with pytest.raises(ConfigError):
            Hyperparams(epochs=0)


class TestPredict:
    def test_zero_model_gives_half(self):
        model = zero_model({"word": 0})
        assert predict(model, "word word") == 0.5
        assert predict(model, "anything else") == 0.5

    def test_empty_text_gives_sigmoid_bias(self):
        model = zero_model(bias=2.0)
        assert predict(model, "") == pytest.approx(float(expit(2.0)))

    def test_probabilities_strictly_inside_unit_interval(self):
        model = Model(
            vocabulary={"x": 0},
            weights=np.array([1000.0]),
            bias=0.0,
            hyperparams=Hyperparams(),
        )
        high = predict(model, "x x x")
        low = predict(Model({"x": 0}, np.array([-1000.0]), 0.0, Hyperparams()), "x x")
        assert 0.0 < low < high < 1.0


class TestEvaluate:
    def test_perfect_predictor_all_ones(self):
        split = planted_split(n_per_class=40, seed=8)
        model = train(split, Hyperparams(epochs=300))
        report = evaluate(model, split.test)
        assert report.total == len(split.test)
        assert report.accuracy == report.precision == report.recall == report.f1 == 1.0

    def test_confusion_counts_sum_to_test_size(self):
        split = planted_split(n_per_class=20, seed=9)
        model = train(split, Hyperparams(epochs=30))
        report = evaluate(model, split.test)
        assert report.total == len(split.test)
        if report.precision + report.recall:
            expected_f1 = (
                2 * report.precision * report.recall / (report.precision + report.recall)
            )
            assert report.f1 == pytest.approx(expected_f1)

    def test_empty_test_split_rejected(self):
        split = planted_split(n_per_class=10, seed=10)
        model = train(split, Hyperparams(epochs=10))
        with pytest.raises(DatasetError):
            evaluate(model, [])

    def test_degenerate_metrics_are_zero_not_nan(self):
        model = zero_model({"x": 0}, bias=-5.0)  # predicts non-trigger always
        report = evaluate(
            model, [TriggerExample("t", "x", TriggerLabelValue.TRIGGER)]
        )
        assert report.precision == 0.0
        assert report.recall == 0.0
        assert report.f1 == 0.0


class TestModelSerialization:
    def test_round_trip_preserves_predictions(self, tmp_path):
        split = planted_split(n_per_class=20, seed=11)
        model = train(split, Hyperparams(epochs=60))
        path = tmp_path / "model.json"
        with open(path, "w") as handle:
            model.save(handle)
        with open(path) as handle:
            loaded = Model.load(handle)
        for example in split.test[:10]:
            assert predict(loaded, example.text) == predict(model, example.text)

    def test_serialized_fields(self):
        split = planted_split(n_per_class=10, seed=12)
        model = train(split, Hyperparams(epochs=5))
        payload = model.to_json()
        assert set(payload) == {"vocabulary", "weights", "bias", "hyperparams", "pipeline_version"}
        assert len(payload["weights"]) == len(payload["vocabulary"])
        assert all(math.isfinite(w) for w in payload["weights"])


def test_classifier_interface_registry():
    from toxtrig.classifier import CLASSIFIER_REGISTRY

    clf = CLASSIFIER_REGISTRY["ngram_logistic"](Hyperparams(epochs=40))
    assert isinstance(clf, NgramLogisticClassifier)
    with pytest.raises(ValueError):
        clf.predict_proba("before fitting")
    split = planted_split(n_per_class=15, seed=13)
    clf.fit(split)
    assert clf.predict_proba(split.test[0].text) == predict(clf.model, split.test[0].text)
