"""Trigger prediction with n-gram logistic regression.

The classifier sits behind a small interface so a fine-tuned transformer
service can slot in later; the in-tree reference implementation is
L2-regularized logistic regression over unigram/bigram counts, trained by
full-batch gradient descent with backtracking (the learning rate halves
whenever a step would increase the loss, so the recorded loss sequence never
increases).  Everything is deterministic for a fixed seed and dataset.
"""

from __future__ import annotations

import abc
import json
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from . import PIPELINE_VERSION
from .errors import ConfigError, DatasetError, TrainingDivergedError
from .textproc import ngram_counts, tokenize
from .triggers import DatasetSplit, TriggerExample

_PROB_FLOOR = 1e-15
_LR_FLOOR = 1e-15


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.5
    l2: float = 1e-3
    epochs: int = 500
    seed: int = 0
    ngram_max: int = 2
    min_term_count: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be positive and finite: {self.learning_rate}")
        if not (math.isfinite(self.l2) and self.l2 >= 0):
            raise ConfigError(f"l2 must be non-negative and finite: {self.l2}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1: {self.epochs}")
        if self.ngram_max < 1:
            raise ConfigError(f"ngram_max must be >= 1: {self.ngram_max}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "l2": self.l2,
            "epochs": self.epochs,
            "seed": self.seed,
            "ngram_max": self.ngram_max,
            "min_term_count": self.min_term_count,
        }


def build_vocabulary(
    texts: Sequence[str], *, ngram_max: int = 2, min_count: int = 1
) -> dict[str, int]:
    """Deterministic term -> index map over the training texts."""
    totals: dict[str, int] = {}
    for text in texts:
        for term, count in ngram_counts(tokenize(text), ngram_max).items():
            totals[term] = totals.get(term, 0) + count
    terms = sorted(t for t, c in totals.items() if c >= min_count)
    return {term: i for i, term in enumerate(terms)}


def featurize(text: str, vocabulary: Mapping[str, int], ngram_max: int = 2) -> dict[int, int]:
    """Sparse count vector; out-of-vocabulary terms are dropped."""
    features: dict[int, int] = {}
    for term, count in ngram_counts(tokenize(text), ngram_max).items():
        index = vocabulary.get(term)
        if index is not None:
            features[index] = count
    return features


def featurize_tokens(
    tokens: Sequence[str], vocabulary: Mapping[str, int], ngram_max: int = 2
) -> dict[int, int]:
    """As :func:`featurize` but over an already-tokenized sequence, so
    callers masking tokens do not re-tokenize."""
    features: dict[int, int] = {}
    for term, count in ngram_counts(list(tokens), ngram_max).items():
        index = vocabulary.get(term)
        if index is not None:
            features[index] = count
    return features


@dataclass
class Model:
    """Trained trigger classifier: vocabulary, weights, bias, provenance."""

    vocabulary: dict[str, int]
    weights: np.ndarray
    bias: float
    hyperparams: Hyperparams
    loss_history: list[float] = field(default_factory=list, repr=False)

    def decision_score(self, text: str) -> float:
        return self.decision_score_tokens(tokenize(text))

    def decision_score_tokens(self, tokens: Sequence[str]) -> float:
        features = featurize_tokens(tokens, self.vocabulary, self.hyperparams.ngram_max)
        return float(self.bias + sum(self.weights[i] * c for i, c in features.items()))

    def to_json(self) -> dict:
        return {
            "vocabulary": self.vocabulary,
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "hyperparams": self.hyperparams.to_dict(),
            "pipeline_version": PIPELINE_VERSION,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Model":
        return cls(
            vocabulary=dict(obj["vocabulary"]),
            weights=np.asarray(obj["weights"], dtype=float),
            bias=float(obj["bias"]),
            hyperparams=Hyperparams(**obj["hyperparams"]),
        )

    def save(self, handle: IO[str]) -> None:
        json.dump(self.to_json(), handle, sort_keys=True)
        handle.write("\n")

    @classmethod
    def load(cls, handle: IO[str]) -> "Model":
        return cls.from_json(json.load(handle))


def _design_matrix(
    examples: Sequence[TriggerExample], vocabulary: Mapping[str, int], ngram_max: int
) -> tuple[sparse.csr_matrix, np.ndarray]:
    rows: list[int] = []
    cols: list[int] = []
    data: list[float] = []
    labels = np.zeros(len(examples))
    for row, example in enumerate(examples):
        labels[row] = 1.0 if example.is_trigger else 0.0
        for col, count in featurize(example.text, vocabulary, ngram_max).items():
            rows.append(row)
            cols.append(col)
            data.append(float(count))
    matrix = sparse.csr_matrix(
        (data, (rows, cols)), shape=(len(examples), len(vocabulary))
    )
    return matrix, labels


def regularized_log_loss(
    weights: np.ndarray,
    bias: float,
    matrix: sparse.csr_matrix,
    labels: np.ndarray,
    l2: float,
) -> float:
    """Mean logistic loss plus (l2/2)*||w||^2; the bias is not penalized.

    Computed via log(1+e^z) - y*z in a numerically stable form, so the value
    stays finite unless the weights themselves overflow.
    """
    scores = matrix @ weights + bias
    per_example = np.logaddexp(0.0, scores) - labels * scores
    return float(per_example.mean() + 0.5 * l2 * float(weights @ weights))


def loss_gradient(
    weights: np.ndarray,
    bias: float,
    matrix: sparse.csr_matrix,
    labels: np.ndarray,
    l2: float,
) -> tuple[np.ndarray, float]:
    """Analytic gradient of :func:`regularized_log_loss` in (weights, bias)."""
    scores = matrix @ weights + bias
    residual = expit(scores) - labels
    grad_w = (matrix.T @ residual) / len(labels) + l2 * weights
    grad_b = float(residual.mean())
    return np.asarray(grad_w).ravel(), grad_b


def train(dataset: DatasetSplit, hyperparams: Hyperparams = Hyperparams()) -> Model:
    """Fit the reference classifier on the train split.

    Weights start at zero, so identical data and hyperparameters give
    bit-identical models.  Raises TrainingDivergedError when no step of any
    size keeps the loss finite.
    """
    positives = sum(1 for e in dataset.train if e.is_trigger)
    negatives = len(dataset.train) - positives
    if positives < 2 or negatives < 2:
        raise DatasetError(
            f"training needs >= 2 examples per class, got {positives} triggers "
            f"and {negatives} non-triggers"
        )
    vocabulary = build_vocabulary(
        [e.text for e in dataset.train],
        ngram_max=hyperparams.ngram_max,
        min_count=hyperparams.min_term_count,
    )
    matrix, labels = _design_matrix(dataset.train, vocabulary, hyperparams.ngram_max)

    weights = np.zeros(len(vocabulary))
    bias = 0.0
    learning_rate = hyperparams.learning_rate
    loss = regularized_log_loss(weights, bias, matrix, labels, hyperparams.l2)
    history = [loss]
    for _ in range(hyperparams.epochs):
        grad_w, grad_b = loss_gradient(weights, bias, matrix, labels, hyperparams.l2)
        stepped = False
        candidate_loss = loss
        while learning_rate >= _LR_FLOOR:
            next_weights = weights - learning_rate * grad_w
            next_bias = bias - learning_rate * grad_b
            candidate_loss = regularized_log_loss(
                next_weights, next_bias, matrix, labels, hyperparams.l2
            )
            if math.isfinite(candidate_loss) and candidate_loss <= loss:
                weights, bias, loss = next_weights, next_bias, candidate_loss
                stepped = True
                break
            learning_rate /= 2.0
        if not stepped:
            if not math.isfinite(candidate_loss):
                raise TrainingDivergedError(
                    "loss became non-finite at every attempted step size; "
                    "try a smaller learning rate"
                )
            break  # no step improves the loss: converged
        history.append(loss)
    return Model(
        vocabulary=vocabulary,
        weights=weights,
        bias=bias,
        hyperparams=hyperparams,
        loss_history=history,
    )


def predict(model: Model, text: str) -> float:
    """Probability that ``text`` is a trigger, strictly inside (0, 1)."""
    p = float(expit(model.decision_score(text)))
    return min(max(p, _PROB_FLOOR), 1.0 - _PROB_FLOOR)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int

    @property
    def total(self) -> int:
        return (
            self.true_positives
            + self.false_positives
            + self.true_negatives
            + self.false_negatives
        )

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {
                "true_positives": self.true_positives,
                "false_positives": self.false_positives,
                "true_negatives": self.true_negatives,
                "false_negatives": self.false_negatives,
            },
        }


def evaluate(
    model: Model, test: Sequence[TriggerExample], threshold: float = 0.5
) -> EvalReport:
    """Confusion counts and derived metrics; positive class is trigger."""
    if not test:
        raise DatasetError("cannot evaluate on an empty test split")
    tp = fp = tn = fn = 0
    for example in test:
        predicted_trigger = predict(model, example.text) >= threshold
        if example.is_trigger:
            tp, fn = tp + predicted_trigger, fn + (not predicted_trigger)
        else:
            fp, tn = fp + predicted_trigger, tn + (not predicted_trigger)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(
        accuracy=(tp + tn) / len(test),
        precision=precision,
        recall=recall,
        f1=f1,
        true_positives=tp,
        false_positives=fp,
        true_negatives=tn,
        false_negatives=fn,
    )


class TriggerClassifier(abc.ABC):
    """Adapter slot for alternative classifiers (e.g. a remote fine-tuned
    transformer).  Implementations register under a config name."""

    @abc.abstractmethod
    def fit(self, dataset: DatasetSplit) -> None: ...

    @abc.abstractmethod
    def predict_proba(self, text: str) -> float: ...


class NgramLogisticClassifier(TriggerClassifier):
    """Reference implementation wrapping the module-level functions."""

    def __init__(self, hyperparams: Hyperparams = Hyperparams()) -> None:
        self.hyperparams = hyperparams
        self.model: Model | None = None

    def fit(self, dataset: DatasetSplit) -> None:
        self.model = train(dataset, self.hyperparams)

    def predict_proba(self, text: str) -> float:
        if self.model is None:
            raise ValueError("classifier is not fitted")
        return predict(self.model, text)


CLASSIFIER_REGISTRY: dict[str, Callable[..., TriggerClassifier]] = {
    "ngram_logistic": NgramLogisticClassifier,
}
