"""Shapley-value attribution of classifier output to comment tokens.

A coalition is a subset of token positions; absent tokens are removed before
featurization, so n-gram features vanish (or newly form) exactly as they
would if the text had been written that way.  By default the game value is
the pre-sigmoid decision score, where the reference model is additive in its
features and attributions compose cleanly; probability-space attribution is
available behind a flag.

Three routes compute the same quantity: exact subset enumeration (tractable
to 20 tokens), Monte Carlo permutation sampling for longer comments, and a
closed form for models that are additive over unigrams.  Tests hold the
routes to pairwise agreement.
"""

from __future__ import annotations

import csv
import hashlib
import math
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Sequence

from .classifier import Model
from .errors import ConfigError
from .textproc import tokenize
from .toxicity import sigmoid

EXACT_TOKEN_LIMIT = 20
_CACHE_TOKEN_LIMIT = 24

ValueFunction = Callable[[Sequence[str]], float]


@dataclass(frozen=True)
class Attribution:
    token: str
    position: int
    value: float
    stderr: float | None = None


def masked_value_fn(
    model: Model, tokens: Sequence[str], *, probability_space: bool = False
) -> ValueFunction:
    """Game value for a kept-token subsequence under the trained model."""
    if probability_space:
        return lambda kept: sigmoid(model.decision_score_tokens(kept))
    return lambda kept: model.decision_score_tokens(kept)


class _CoalitionEvaluator:
    """Evaluates value_fn on bitmask coalitions, caching when small enough."""

    def __init__(self, value_fn: ValueFunction, tokens: Sequence[str]):
        self.value_fn = value_fn
        self.tokens = list(tokens)
        self.m = len(self.tokens)
        self._cache: dict[int, float] | None = {} if self.m <= _CACHE_TOKEN_LIMIT else None

    def __call__(self, mask: int) -> float:
        if self._cache is not None:
            hit = self._cache.get(mask)
            if hit is not None:
                return hit
        kept = [self.tokens[i] for i in range(self.m) if mask >> i & 1]
        value = self.value_fn(kept)
        if self._cache is not None:
            self._cache[mask] = value
        return value


def shapley_exact(
    value_fn: ValueFunction,
    tokens: Sequence[str],
    *,
    max_tokens: int = EXACT_TOKEN_LIMIT,
) -> list[Attribution]:
    """Exact Shapley values by subset enumeration.

    For each position i, sums |S|!(m-|S|-1)!/m! * (f(S u {i}) - f(S)) over
    the subsets S not containing i.  Cost grows as 2^m; positions beyond
    ``max_tokens`` must go through :func:`shapley_sample` instead.
    """
    m = len(tokens)
    if m > max_tokens:
        raise ConfigError(
            f"exact attribution supports at most {max_tokens} tokens, got {m}; "
            "use shapley_sample for longer comments"
        )
    if m == 0:
        return []
    evaluate = _CoalitionEvaluator(value_fn, tokens)
    values = [evaluate(mask) for mask in range(1 << m)]
    fact = [math.factorial(k) for k in range(m + 1)]
    weight_by_size = [fact[s] * fact[m - s - 1] / fact[m] for s in range(m)]
    attributions = []
    for i in range(m):
        bit = 1 << i
        total = 0.0
        for mask in range(1 << m):
            if mask & bit:
                continue
            total += weight_by_size[mask.bit_count()] * (values[mask | bit] - values[mask])
        attributions.append(Attribution(tokens[i], i, total))
    return attributions


def shapley_sample(
    value_fn: ValueFunction,
    tokens: Sequence[str],
    num_permutations: int,
    seed: int,
) -> list[Attribution]:
    """Monte Carlo Shapley estimate over uniform permutations.

    Deterministic per seed.  Each attribution carries the sample standard
    error of its marginal contributions (None when only one permutation was
    drawn).  Coalition values are cached, so repeated prefixes cost one
    model evaluation.
    """
    if num_permutations < 1:
        raise ConfigError(f"num_permutations must be >= 1, got {num_permutations}")
    m = len(tokens)
    if m == 0:
        return []
    evaluate = _CoalitionEvaluator(value_fn, tokens)
    empty = evaluate(0)
    sums = [0.0] * m
    sums_sq = [0.0] * m
    rng = random.Random(seed)
    order = list(range(m))
    for _ in range(num_permutations):
        rng.shuffle(order)
        mask = 0
        previous = empty
        for position in order:
            mask |= 1 << position
            current = evaluate(mask)
            delta = current - previous
            sums[position] += delta
            sums_sq[position] += delta * delta
            previous = current
    attributions = []
    for i in range(m):
        mean = sums[i] / num_permutations
        stderr = None
        if num_permutations > 1:
            variance = max(
                (sums_sq[i] - num_permutations * mean * mean) / (num_permutations - 1), 0.0
            )
            stderr = math.sqrt(variance / num_permutations)
        attributions.append(Attribution(tokens[i], i, mean, stderr))
    return attributions


def linear_shapley(model: Model, tokens: Sequence[str]) -> tuple[list[Attribution], bool]:
    """Closed-form attribution of the pre-sigmoid score for additive models.

    Each occurrence of a token receives its unigram weight.  Bigram weights
    present in the full text are split evenly between the two positions,
    which keeps the values summing to f(full) - f(empty) but is only an
    approximation of the removal game (masking interior tokens forms new
    bigrams across the gap); the returned flag is True whenever that
    approximation is in play.  For unigram-only vocabularies the result is
    exact.
    """
    vocabulary = model.vocabulary
    values = [float(model.weights[vocabulary[t]]) if t in vocabulary else 0.0 for t in tokens]
    approximate = False
    model_has_bigrams = model.hyperparams.ngram_max >= 2 and any(
        " " in term for term in vocabulary
    )
    if model_has_bigrams and len(tokens) >= 2:
        approximate = True
        for p in range(len(tokens) - 1):
            index = vocabulary.get(f"{tokens[p]} {tokens[p + 1]}")
            if index is not None:
                half = float(model.weights[index]) / 2.0
                values[p] += half
                values[p + 1] += half
    return (
        [Attribution(token, i, value) for i, (token, value) in enumerate(zip(tokens, values))],
        approximate,
    )


@dataclass(frozen=True)
class RankedTerm:
    term: str
    mean_value: float
    occurrences: int


@dataclass
class RankedTerms:
    entries: list[RankedTerm]
    note: str | None = None

    def terms(self) -> list[str]:
        return [e.term for e in self.entries]


def aggregate_top_terms(
    per_comment: Iterable[Sequence[Attribution]], k: int | None
) -> RankedTerms:
    """Rank terms by mean Shapley value across all their occurrences.

    Ties break alphabetically.  ``k=None`` returns the full ranking; a k
    beyond the vocabulary seen also returns everything, with a note.
    """
    sums: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    for attributions in per_comment:
        for attribution in attributions:
            sums[attribution.token] += attribution.value
            counts[attribution.token] += 1
    ranked = sorted(
        (RankedTerm(term, sums[term] / counts[term], counts[term]) for term in sums),
        key=lambda e: (-e.mean_value, e.term),
    )
    if k is None:
        return RankedTerms(entries=ranked)
    note = None
    if k > len(ranked):
        note = f"requested top {k} but only {len(ranked)} distinct terms were attributed"
    return RankedTerms(entries=ranked[: max(k, 0)] if k <= len(ranked) else ranked, note=note)


def context_terms(
    texts: Iterable[str], trigger_terms: Iterable[str], min_count: int = 1
) -> list[tuple[str, int]]:
    """Frequencies of words co-occurring with trigger terms.

    Counts every token of every text that contains at least one trigger
    term, excluding the trigger terms themselves; sorted by count descending
    then term.
    """
    trigger_set = set(trigger_terms)
    counts: dict[str, int] = defaultdict(int)
    for text in texts:
        tokens = tokenize(text)
        if trigger_set.isdisjoint(tokens):
            continue
        for token in tokens:
            if token not in trigger_set:
                counts[token] += 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(term, count) for term, count in ordered if count >= min_count]


def derive_seed(global_seed: int, comment_id: str) -> int:
    """Stable per-comment seed so parallel and serial runs agree."""
    digest = hashlib.sha256(f"{global_seed}:{comment_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class CommentAttribution:
    comment_id: str
    method: str  # "exact" | "sample"
    attributions: list[Attribution]
    full_minus_empty: float


@dataclass
class AttributionReport:
    comments: list[CommentAttribution]
    aggregate: RankedTerms  # every attributed term, ranked
    ranking: RankedTerms  # the requested top-k prefix

    def to_dict(self) -> dict:
        return {
            "comments": [
                {
                    "comment_id": c.comment_id,
                    "method": c.method,
                    "full_minus_empty": c.full_minus_empty,
                    "attributions": [
                        {
                            "token": a.token,
                            "position": a.position,
                            "value": a.value,
                            **({"stderr": a.stderr} if a.stderr is not None else {}),
                        }
                        for a in c.attributions
                    ],
                }
                for c in self.comments
            ],
            "aggregate": {
                e.term: {"mean_value": e.mean_value, "occurrences": e.occurrences}
                for e in self.aggregate.entries
            },
            "ranking": self.ranking.terms(),
            **({"note": self.ranking.note} if self.ranking.note else {}),
        }


def attribute_comments(
    model: Model,
    comments: Sequence[tuple[str, str]],
    *,
    top_k: int,
    exact_max_tokens: int = 12,
    sample_permutations: int = 2000,
    seed: int = 0,
    probability_space: bool = False,
) -> AttributionReport:
    """Attribute each (id, text) pair and aggregate the term ranking.

    Comments within the exact token budget use subset enumeration; longer
    ones fall back to permutation sampling with a per-comment seed derived
    from (seed, comment id).
    """
    results = []
    for comment_id, text in comments:
        tokens = tokenize(text)
        value_fn = masked_value_fn(model, tokens, probability_space=probability_space)
        if len(tokens) <= exact_max_tokens:
            attributions = shapley_exact(value_fn, tokens)
            method = "exact"
        else:
            attributions = shapley_sample(
                value_fn, tokens, sample_permutations, derive_seed(seed, comment_id)
            )
            method = "sample"
        results.append(
            CommentAttribution(
                comment_id=comment_id,
                method=method,
                attributions=attributions,
                full_minus_empty=value_fn(tokens) - value_fn([]),
            )
        )
    aggregate = aggregate_top_terms((c.attributions for c in results), None)
    note = None
    if top_k > len(aggregate.entries):
        note = (
            f"requested top {top_k} but only {len(aggregate.entries)} distinct terms "
            "were attributed"
        )
    ranking = RankedTerms(entries=aggregate.entries[: max(top_k, 0)], note=note)
    return AttributionReport(comments=results, aggregate=aggregate, ranking=ranking)


def write_ranked_terms_csv(handle: IO[str], ranking: RankedTerms) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["term", "mean_shapley", "occurrences"])
    for entry in ranking.entries:
        writer.writerow([entry.term, repr(entry.mean_value), entry.occurrences])


def write_context_terms_csv(handle: IO[str], counts: Sequence[tuple[str, int]]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["term", "count"])
    for term, count in counts:
        writer.writerow([term, count])


def read_ranking_csv(handle: IO[str]) -> RankedTerms:
    """Read a ranking written by :func:`write_ranked_terms_csv`."""
    reader = csv.DictReader(handle)
    entries = [
        RankedTerm(row["term"], float(row["mean_shapley"]), int(row["occurrences"]))
        for row in reader
    ]
    return RankedTerms(entries=entries)
