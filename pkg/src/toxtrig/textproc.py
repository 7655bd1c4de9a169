"""Shared tokenization used by term statistics, features, and attribution.

One tokenizer for the whole pipeline: lowercase, split on Unicode word
boundaries, drop tokens that are pure digits/underscores.  Keeping this in a
single module guarantees the classifier, the term-association statistics, and
the attribution layer all see the same vocabulary for the same text.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

_WORD_RE = re.compile(r"\w+", re.UNICODE)
_NON_WORD_RE = re.compile(r"[\d_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens of ``text``, excluding digit-only tokens."""
    return [t for t in _WORD_RE.findall(text.lower()) if not _NON_WORD_RE.fullmatch(t)]


def ngram_counts(tokens: Sequence[str], ngram_max: int = 2) -> Counter[str]:
    """Counts of unigrams up to ``ngram_max``-grams; n-grams are space-joined."""
    counts: Counter[str] = Counter(tokens)
    for n in range(2, ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            counts[" ".join(tokens[i : i + n])] += 1
    return counts


def term_frequencies(texts: Iterable[str]) -> Counter[str]:
    """Token frequencies pooled over many texts."""
    total: Counter[str] = Counter()
    for text in texts:
        total.update(tokenize(text))
    return total
