"""Signed term-association scores separating toxic from non-toxic vocabulary.

For each term and category the score combines category-specific precision
(share of the term's occurrences falling in the category) with
category-specific frequency (share of the category's tokens that are this
term).  Both statistics are log-dampened with log(1+x), z-standardized
across the vocabulary, pushed through the standard normal CDF, and merged by
harmonic mean into a per-category association F_c.  The final score is
F_toxic - F_nontoxic, which lands in [-1, 1] with positive values marking
toxic-associated terms.

Dampening operates on the precision/frequency ratios, not on raw counts, so
the whole pipeline is exactly invariant under uniform count duplication
(ratios are scale-free and standardization is affine-invariant).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateCorpusError
from .textproc import tokenize
from .toxicity import ToxicityLabel

DEFAULT_MIN_TERM_COUNT = 5


@dataclass(frozen=True)
class TermStats:
    term: str
    count_toxic: int
    count_nontoxic: int

    @property
    def total(self) -> int:
        return self.count_toxic + self.count_nontoxic


def term_stats(
    labeled_texts: Iterable[tuple[str, ToxicityLabel]],
    *,
    min_count: int = DEFAULT_MIN_TERM_COUNT,
) -> list[TermStats]:
    """Per-term occurrence counts in toxic vs non-toxic comments.

    Ambiguous and unscored comments do not participate.  Terms with fewer
    than ``min_count`` total occurrences are dropped.  Output is sorted by
    term for determinism.
    """
    toxic: dict[str, int] = {}
    nontoxic: dict[str, int] = {}
    for text, label in labeled_texts:
        if label is ToxicityLabel.TOXIC:
            bucket = toxic
        elif label is ToxicityLabel.NON_TOXIC:
            bucket = nontoxic
        else:
            continue
        for token in tokenize(text):
            bucket[token] = bucket.get(token, 0) + 1
    stats = []
    for term in sorted(set(toxic) | set(nontoxic)):
        ct, cn = toxic.get(term, 0), nontoxic.get(term, 0)
        if ct + cn >= min_count:
            stats.append(TermStats(term, ct, cn))
    return stats


def scaled_f_scores(stats: list[TermStats]) -> dict[str, float]:
    """Signed association score per term; see the module docstring.

    Raises DegenerateCorpusError when fewer than two terms survive or either
    category has no occurrences at all.
    """
    if len(stats) < 2:
        raise DegenerateCorpusError(
            f"degenerate corpus: need at least 2 terms, got {len(stats)}"
        )
    ct = np.array([s.count_toxic for s in stats], dtype=float)
    cn = np.array([s.count_nontoxic for s in stats], dtype=float)
    total_toxic = ct.sum()
    total_nontoxic = cn.sum()
    if total_toxic == 0 or total_nontoxic == 0:
        raise DegenerateCorpusError(
            "degenerate corpus: both toxic and non-toxic occurrences are required "
            f"(toxic total {int(total_toxic)}, non-toxic total {int(total_nontoxic)})"
        )

    f_toxic = _category_association(ct, cn, total_toxic)
    f_nontoxic = _category_association(cn, ct, total_nontoxic)
    scores = f_toxic - f_nontoxic
    return {s.term: float(v) for s, v in zip(stats, scores)}


def _category_association(own: np.ndarray, other: np.ndarray, own_total: float) -> np.ndarray:
    precision = own / (own + other)
    frequency = own / own_total
    cdf_precision = ndtr(_standardize(np.log1p(precision)))
    cdf_frequency = ndtr(_standardize(np.log1p(frequency)))
    return _harmonic_mean(cdf_precision, cdf_frequency)


def _standardize(values: np.ndarray) -> np.ndarray:
    spread = values.std()
    if spread == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / spread


def _harmonic_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def write_term_scores_csv(
    handle: IO[str], stats: list[TermStats], scores: dict[str, float]
) -> None:
    """Plot-ready CSV sorted by score descending, ties broken by term."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["term", "count_toxic", "count_nontoxic", "scaled_f_score"])
    ordered = sorted(stats, key=lambda s: (-scores[s.term], s.term))
    for s in ordered:
        writer.writerow([s.term, s.count_toxic, s.count_nontoxic, repr(scores[s.term])])
