"""Independent attribution oracles: brute-force permutation averaging and
random reference models shared by module and acceptance tests."""

from __future__ import annotations

import itertools
import random

import numpy as np

from toxtrig.classifier import Hyperparams, Model


def brute_force_shapley(value_fn, tokens):
    """Average marginal contribution over all m! insertion orders.

    Literal definition, no weighting tricks; usable only for small m.
    """
    m = len(tokens)
    totals = [0.0] * m
    n_perms = 0
    for order in itertools.permutations(range(m)):
        n_perms += 1
        present: list[int] = []
        previous = value_fn([])
        for position in order:
            present.append(position)
            kept = [tokens[i] for i in sorted(present)]
            current = value_fn(kept)
            totals[position] += current - previous
            previous = current
    return [t / n_perms for t in totals]


WORDS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo "
    "lima mike november oscar papa quebec romeo sierra tango"
).split()


def random_tokens(rng: random.Random, m: int, *, with_repeats: bool = True) -> list[str]:
    pool = WORDS if with_repeats else rng.sample(WORDS, m)
    return [rng.choice(pool) for _ in range(m)] if with_repeats else list(pool)


def random_unigram_model(rng: random.Random, tokens, *, scale: float = 1.0) -> Model:
    """Unigram-only model covering the given tokens plus extra vocabulary."""
    vocab_terms = sorted(set(tokens) | set(rng.sample(WORDS, 5)))
    vocabulary = {term: i for i, term in enumerate(vocab_terms)}
    weights = np.array([rng.uniform(-scale, scale) for _ in vocab_terms])
    return Model(
        vocabulary=vocabulary,
        weights=weights,
        bias=rng.uniform(-1, 1),
        hyperparams=Hyperparams(ngram_max=1),
    )


def random_ngram_model(rng: random.Random, tokens, *, scale: float = 1.0) -> Model:
    """Unigram+bigram model over the tokens; non-additive under masking."""
    unigrams = sorted(set(tokens))
    bigrams = sorted({f"{a} {b}" for a, b in zip(tokens, tokens[1:])})
    vocab_terms = unigrams + [b for b in bigrams if rng.random() < 0.7]
    vocabulary = {term: i for i, term in enumerate(sorted(vocab_terms))}
    weights = np.array([rng.uniform(-scale, scale) for _ in vocabulary])
    return Model(
        vocabulary=vocabulary,
        weights=weights,
        bias=rng.uniform(-1, 1),
        hyperparams=Hyperparams(ngram_max=2),
    )
