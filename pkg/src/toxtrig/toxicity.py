"""Toxicity scoring back ends and score categorization.

Three interchangeable scorers: a deterministic lexicon scorer for offline
work, a replay scorer that serves precomputed scores from a file, and an
HTTP client for Perspective-style endpoints with retry and a persistent
cache.  Scores in [0, 1] map to four labels via two thresholds; comments
that could not be scored land in ``Other``.
"""

from __future__ import annotations

import abc
import hashlib
import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Callable, Iterable, Mapping, Sequence

from .corpus import Comment
from .errors import ConfigError, ExternalServiceError
from .textproc import tokenize


class ToxicityLabel(str, Enum):
    TOXIC = "toxic"
    NON_TOXIC = "non_toxic"
    AMBIGUOUS = "ambiguous"
    OTHER = "other"


@dataclass(frozen=True)
class ToxicityScore:
    """A score in [0, 1], or None with a reason when scoring failed."""

    value: float | None
    reason: str | None = None

    def __post_init__(self) -> None:
        if self.value is not None and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"toxicity score out of range: {self.value}")


@dataclass(frozen=True)
class Thresholds:
    """Score cut-offs: >= toxic_min is toxic, <= nontoxic_max is non-toxic."""

    toxic_min: float = 0.8
    nontoxic_max: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 <= self.nontoxic_max < self.toxic_min <= 1.0:
            raise ConfigError(
                f"thresholds must satisfy 0 <= nontoxic_max < toxic_min <= 1, "
                f"got nontoxic_max={self.nontoxic_max}, toxic_min={self.toxic_min}"
            )


def categorize(score: ToxicityScore, thresholds: Thresholds = Thresholds()) -> ToxicityLabel:
    """Map a score to a label; both boundaries are inclusive."""
    if score.value is None:
        return ToxicityLabel.OTHER
    if score.value >= thresholds.toxic_min:
        return ToxicityLabel.TOXIC
    if score.value <= thresholds.nontoxic_max:
        return ToxicityLabel.NON_TOXIC
    return ToxicityLabel.AMBIGUOUS


class Scorer(abc.ABC):
    """Scoring back end. Same text must score the same within one run."""

    name = "abstract"

    @abc.abstractmethod
    def score(self, text: str) -> ToxicityScore:
        raise NotImplementedError

    def score_comment(self, comment: Comment) -> ToxicityScore:
        return self.score(comment.body)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


# Weighted unigram lexicon for the offline scorer. Weights are tuned so that
# neutral text stays near sigmoid(bias) and strongly abusive text crosses 0.8.
DEFAULT_LEXICON: Mapping[str, float] = {
    "ass": 3.0,
    "asshole": 4.5,
    "awful": 1.0,
    "bastard": 4.0,
    "bitch": 4.0,
    "clown": 2.0,
    "clowns": 2.0,
    "crap": 1.5,
    "damn": 1.5,
    "die": 2.0,
    "disgusting": 2.0,
    "dumb": 2.0,
    "fool": 2.0,
    "fools": 2.0,
    "fuck": 4.0,
    "fucking": 4.0,
    "garbage": 2.0,
    "hate": 1.5,
    "hell": 1.0,
    "idiot": 3.0,
    "idiots": 3.0,
    "jerk": 2.5,
    "kill": 2.0,
    "loser": 2.5,
    "losers": 2.5,
    "moron": 3.5,
    "morons": 3.5,
    "pathetic": 2.0,
    "scum": 4.0,
    "shit": 3.0,
    "shut": 1.0,
    "stupid": 2.5,
    "sucks": 2.0,
    "terrible": 1.0,
    "trash": 2.0,
    "worthless": 3.0,
}

DEFAULT_LEXICON_BIAS = -4.0


class LexiconScorer(Scorer):
    """Deterministic offline scorer: sigmoid(bias + sum of term weights)."""

    name = "lexicon"

    def __init__(
        self,
        lexicon: Mapping[str, float] = DEFAULT_LEXICON,
        bias: float = DEFAULT_LEXICON_BIAS,
    ) -> None:
        self.lexicon = dict(lexicon)
        self.bias = bias

    def score(self, text: str) -> ToxicityScore:
        total = self.bias + sum(self.lexicon.get(token, 0.0) for token in tokenize(text))
        return ToxicityScore(sigmoid(total))


class ReplayScorer(Scorer):
    """Serve precomputed id -> score pairs from an NDJSON file."""

    name = "replay"

    def __init__(self, scores: Mapping[str, float]) -> None:
        self.scores = dict(scores)

    @classmethod
    def from_file(cls, handle: IO[str]) -> "ReplayScorer":
        scores = {}
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            scores[str(obj["id"])] = float(obj["score"])
        return cls(scores)

    @classmethod
    def from_path(cls, path: str | Path) -> "ReplayScorer":
        with open(path, encoding="utf-8") as handle:
            return cls.from_file(handle)

    def score(self, text: str) -> ToxicityScore:
        return ToxicityScore(None, reason="not_in_replay")

    def score_comment(self, comment: Comment) -> ToxicityScore:
        value = self.scores.get(comment.id)
        if value is None:
            return ToxicityScore(None, reason="not_in_replay")
        return ToxicityScore(value)


class RemoteScorer(Scorer):
    """HTTP client for a Perspective-compatible scoring endpoint.

    Requests POST ``{"comment": {"text": ...}}`` and read
    ``attributeScores.TOXICITY.summaryScore.value`` from the response.
    Transient failures retry with exponential backoff; anything still
    failing after ``max_attempts`` yields an absent score with reason
    ``remote_error`` and never aborts the batch.  Scores persist in an
    append-only NDJSON cache keyed by SHA-256 of the text, so re-scoring an
    unchanged corpus issues no network calls.
    """

    name = "remote"
    _RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(
        self,
        endpoint: str,
        api_key_env: str | None = None,
        *,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        timeout: float = 10.0,
        cache_path: str | Path | None = None,
        session=None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.api_key = None
        if api_key_env is not None:
            self.api_key = os.environ.get(api_key_env)
            if self.api_key is None:
                raise ConfigError(f"environment variable {api_key_env} is not set")
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._sleep = sleep
        self._lock = threading.Lock()
        self.request_count = 0
        self.cache_path = Path(cache_path) if cache_path is not None else None
        self._cache: dict[str, float] = {}
        if self.cache_path is not None and self.cache_path.exists():
            with open(self.cache_path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        obj = json.loads(line)
                        self._cache[obj["sha256"]] = float(obj["score"])
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def score(self, text: str) -> ToxicityScore:
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        with self._lock:
            if key in self._cache:
                return ToxicityScore(self._cache[key])
        value = self._fetch(text)
        if value is None:
            return ToxicityScore(None, reason="remote_error")
        value = min(max(value, 0.0), 1.0)
        with self._lock:
            self._cache[key] = value
            if self.cache_path is not None:
                self.cache_path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.cache_path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps({"sha256": key, "score": value}) + "\n")
        return ToxicityScore(value)

    def _fetch(self, text: str) -> float | None:
        import requests

        url = self.endpoint
        if self.api_key:
            sep = "&" if "?" in url else "?"
            url = f"{url}{sep}key={self.api_key}"
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._lock:
                    self.request_count += 1
                response = self._session.post(
                    url, json={"comment": {"text": text}}, timeout=self.timeout
                )
            except requests.RequestException:
                continue
            if response.status_code == 200:
                try:
                    payload = response.json()
                    return float(
                        payload["attributeScores"]["TOXICITY"]["summaryScore"]["value"]
                    )
                except (KeyError, TypeError, ValueError):
                    return None  # malformed payload will not improve on retry
            if response.status_code not in self._RETRYABLE:
                return None
        return None


@dataclass
class ScoredComment:
    comment: Comment
    score: ToxicityScore
    label: ToxicityLabel | None = None


def score_corpus(
    comments: Sequence[Comment],
    scorer: Scorer,
    *,
    parallelism: int = 1,
) -> list[ScoredComment]:
    """Score every comment, in input order; failures become absent scores."""
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if parallelism == 1 or len(comments) <= 1:
        scores = [scorer.score_comment(c) for c in comments]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            scores = list(pool.map(scorer.score_comment, comments))
    return [ScoredComment(comment, score) for comment, score in zip(comments, scores)]


def label_corpus(
    scored: Iterable[ScoredComment], thresholds: Thresholds = Thresholds()
) -> list[ScoredComment]:
    items = list(scored)
    for item in items:
        item.label = categorize(item.score, thresholds)
    return items


@dataclass
class Distribution:
    """Per-label counts and proportions over a labeled corpus."""

    counts: dict[str, int]
    proportions: dict[str, float]
    total: int

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(sorted(self.counts.items())),
            "proportions": dict(sorted(self.proportions.items())),
        }


def distribution(labels: Iterable[ToxicityLabel]) -> Distribution:
    """Label counts and proportions; an empty corpus reports all zeros."""
    counts = {label.value: 0 for label in ToxicityLabel}
    total = 0
    for label in labels:
        counts[label.value] += 1
        total += 1
    if total == 0:
        proportions = {key: 0.0 for key in counts}
    else:
        proportions = {key: count / total for key, count in counts.items()}
    return Distribution(counts=counts, proportions=proportions, total=total)


def build_scorer(kind: str, **kwargs) -> Scorer:
    """Construct a scorer by configuration name."""
    if kind == "lexicon":
        return LexiconScorer(**kwargs)
    if kind == "replay":
        path = kwargs.pop("replay_path", None)
        if path is None:
            raise ConfigError("replay scorer requires replay_path")
        if kwargs:
            raise ConfigError(f"unexpected replay scorer options: {sorted(kwargs)}")
        try:
            return ReplayScorer.from_path(path)
        except OSError as exc:
            raise ExternalServiceError(f"cannot read replay file {path}: {exc}") from exc
    if kind == "remote":
        return RemoteScorer(**kwargs)
    raise ConfigError(f"unknown scorer kind: {kind!r}")
