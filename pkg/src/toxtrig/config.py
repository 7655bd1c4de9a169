"""Pipeline configuration: YAML loading, strict validation, hashing.

Unknown keys are rejected with their dotted path so typos fail loudly before
any stage runs.  Paths inside the file resolve relative to the file itself;
an ``--out`` override resolves against the working directory.  The config
hash covers everything that affects artifact content (so the output
directory is excluded) and feeds every stage signature.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .classifier import CLASSIFIER_REGISTRY, Hyperparams
from .errors import ConfigError
from .toxicity import Thresholds
from .triggers import TriggerConfig

SCORER_KINDS = ("lexicon", "replay", "remote")
ATTRIBUTION_SCOPES = ("dataset", "train", "test")


@dataclass(frozen=True)
class ScorerSettings:
    kind: str
    replay_path: Path | None
    bias: float | None
    endpoint: str | None
    api_key_env: str | None
    max_attempts: int
    cache_path: Path | None
    parallelism: int


@dataclass(frozen=True)
class AttributionSettings:
    scope: str
    top_k: int
    exact_max_tokens: int
    sample_permutations: int
    probability_space: bool
    context_top_terms: int
    context_min_count: int


@dataclass(frozen=True)
class ExternalRanking:
    community: str
    path: Path


@dataclass(frozen=True)
class CompareSettings:
    k_values: tuple[int, ...]
    rankings: tuple[ExternalRanking, ...]


@dataclass(frozen=True)
class PipelineConfig:
    community: str
    input_path: Path
    output_dir: Path
    seed: int
    bot_authors: tuple[str, ...]
    scorer: ScorerSettings
    thresholds: Thresholds
    min_term_count: int
    trigger: TriggerConfig
    train_ratio: float
    classifier_kind: str
    hyperparams: Hyperparams
    attribution: AttributionSettings
    compare: CompareSettings
    config_hash: str


class _Section:
    """Typed reader over one mapping level that tracks consumed keys."""

    def __init__(self, data: Mapping[str, Any], path: str):
        if not isinstance(data, Mapping):
            raise ConfigError(f"config section {path or '<root>'} must be a mapping")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _label(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def value(self, key: str, kinds: tuple, default=None, required: bool = False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"missing required config key: {self._label(key)}")
            return default
        value = self.data[key]
        if isinstance(value, bool) and bool not in kinds:
            raise ConfigError(f"config key {self._label(key)} has wrong type: bool")
        if not isinstance(value, kinds):
            names = "/".join(k.__name__ for k in kinds)
            raise ConfigError(
                f"config key {self._label(key)} must be {names}, got {type(value).__name__}"
            )
        return value

    def string(self, key: str, default=None, required=False) -> str | None:
        return self.value(key, (str,), default, required)

    def integer(self, key: str, default=None, required=False) -> int | None:
        return self.value(key, (int,), default, required)

    def number(self, key: str, default=None, required=False) -> float | None:
        value = self.value(key, (int, float), default, required)
        return None if value is None else float(value)

    def boolean(self, key: str, default=None) -> bool | None:
        return self.value(key, (bool,), default)

    def sequence(self, key: str, default=None) -> list | None:
        return self.value(key, (list,), default)

    def section(self, key: str) -> "_Section":
        self.seen.add(key)
        return _Section(self.data.get(key) or {}, self._label(key))

    def finish(self) -> None:
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            raise ConfigError(f"unknown config key: {self._label(unknown[0])}")


def load_config(
    config_path: str | Path,
    *,
    seed_override: int | None = None,
    out_override: str | Path | None = None,
) -> PipelineConfig:
    config_path = Path(config_path)
    try:
        raw = yaml.safe_load(config_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {config_path}: {exc}") from exc
    if raw is None:
        raw = {}
    base_dir = config_path.resolve().parent
    return parse_config(
        raw, base_dir=base_dir, seed_override=seed_override, out_override=out_override
    )


def parse_config(
    raw: Mapping[str, Any],
    *,
    base_dir: Path,
    seed_override: int | None = None,
    out_override: str | Path | None = None,
) -> PipelineConfig:
    root = _Section(raw, "")

    community = root.string("community", required=True)
    input_name = root.string("input", required=True)
    output_name = root.string("output_dir", default="out")
    seed = root.integer("seed", default=0)
    if seed_override is not None:
        seed = seed_override

    cleaning = root.section("cleaning")
    bot_authors = cleaning.sequence("bot_authors", default=["AutoModerator"])
    if not all(isinstance(a, str) for a in bot_authors):
        raise ConfigError("config key cleaning.bot_authors must be a list of strings")
    cleaning.finish()

    scorer = _parse_scorer(root.section("scorer"), base_dir)

    thresholds_section = root.section("thresholds")
    thresholds = Thresholds(
        toxic_min=thresholds_section.number("toxic_min", default=0.8),
        nontoxic_max=thresholds_section.number("nontoxic_max", default=0.2),
    )
    thresholds_section.finish()

    tokenizer = root.section("tokenizer")
    min_term_count = tokenizer.integer("min_term_count", default=5)
    if min_term_count < 1:
        raise ConfigError("config key tokenizer.min_term_count must be >= 1")
    tokenizer.finish()

    triggers_section = root.section("triggers")
    trigger = TriggerConfig(
        n=triggers_section.integer("n", default=2),
        child_scope=triggers_section.string("child_scope", default="direct"),
    )
    triggers_section.finish()

    dataset = root.section("dataset")
    train_ratio = dataset.number("train_ratio", default=0.8)
    dataset.finish()

    classifier = root.section("classifier")
    classifier_kind = classifier.string("kind", default="ngram_logistic")
    if classifier_kind not in CLASSIFIER_REGISTRY:
        raise ConfigError(
            f"config key classifier.kind must be one of {sorted(CLASSIFIER_REGISTRY)}, "
            f"got {classifier_kind!r}"
        )
    hyperparams = Hyperparams(
        learning_rate=classifier.number("learning_rate", default=0.5),
        l2=classifier.number("l2", default=1e-3),
        epochs=classifier.integer("epochs", default=500),
        seed=seed,
        ngram_max=classifier.integer("ngram_max", default=2),
        min_term_count=classifier.integer("min_term_count", default=1),
    )
    classifier.finish()

    attribution = _parse_attribution(root.section("attribution"))
    compare = _parse_compare(root.section("compare"), base_dir)
    root.finish()

    config_hash = _hash_config(raw, seed)

    output_dir = Path(out_override) if out_override is not None else base_dir / output_name
    return PipelineConfig(
        community=community,
        input_path=_resolve(base_dir, input_name),
        output_dir=output_dir,
        seed=seed,
        bot_authors=tuple(bot_authors),
        scorer=scorer,
        thresholds=thresholds,
        min_term_count=min_term_count,
        trigger=trigger,
        train_ratio=train_ratio,
        classifier_kind=classifier_kind,
        hyperparams=hyperparams,
        attribution=attribution,
        compare=compare,
        config_hash=config_hash,
    )


def _parse_scorer(section: _Section, base_dir: Path) -> ScorerSettings:
    kind = section.string("kind", default="lexicon")
    if kind not in SCORER_KINDS:
        raise ConfigError(
            f"config key scorer.kind must be one of {SCORER_KINDS}, got {kind!r}"
        )
    replay_path = section.string("replay_path")
    bias = section.number("bias")
    endpoint = section.string("endpoint")
    api_key_env = section.string("api_key_env")
    max_attempts = section.integer("max_attempts", default=5)
    cache_path = section.string("cache_path")
    parallelism = section.integer("parallelism", default=1)
    section.finish()
    if kind == "replay" and replay_path is None:
        raise ConfigError("config key scorer.replay_path is required for the replay scorer")
    if kind == "remote" and endpoint is None:
        raise ConfigError("config key scorer.endpoint is required for the remote scorer")
    if parallelism < 1:
        raise ConfigError("config key scorer.parallelism must be >= 1")
    return ScorerSettings(
        kind=kind,
        replay_path=_resolve(base_dir, replay_path) if replay_path else None,
        bias=bias,
        endpoint=endpoint,
        api_key_env=api_key_env,
        max_attempts=max_attempts,
        cache_path=_resolve(base_dir, cache_path) if cache_path else None,
        parallelism=parallelism,
    )


def _parse_attribution(section: _Section) -> AttributionSettings:
    scope = section.string("scope", default="dataset")
    if scope not in ATTRIBUTION_SCOPES:
        raise ConfigError(
            f"config key attribution.scope must be one of {ATTRIBUTION_SCOPES}, got {scope!r}"
        )
    settings = AttributionSettings(
        scope=scope,
        top_k=section.integer("top_k", default=20),
        exact_max_tokens=section.integer("exact_max_tokens", default=12),
        sample_permutations=section.integer("sample_permutations", default=2000),
        probability_space=section.boolean("probability_space", default=False),
        context_top_terms=section.integer("context_top_terms", default=500),
        context_min_count=section.integer("context_min_count", default=2),
    )
    section.finish()
    if settings.exact_max_tokens > 20:
        raise ConfigError("config key attribution.exact_max_tokens must be <= 20")
    if settings.sample_permutations < 1:
        raise ConfigError("config key attribution.sample_permutations must be >= 1")
    return settings


def _parse_compare(section: _Section, base_dir: Path) -> CompareSettings:
    k_values = section.sequence("k_values", default=[10, 50, 200])
    if not all(isinstance(k, int) and not isinstance(k, bool) and k >= 1 for k in k_values):
        raise ConfigError("config key compare.k_values must be a list of positive integers")
    entries = section.sequence("rankings", default=[])
    rankings = []
    for i, entry in enumerate(entries):
        sub = _Section(entry, f"compare.rankings[{i}]")
        rankings.append(
            ExternalRanking(
                community=sub.string("community", required=True),
                path=_resolve(base_dir, sub.string("path", required=True)),
            )
        )
        sub.finish()
    section.finish()
    return CompareSettings(k_values=tuple(k_values), rankings=tuple(rankings))


def _resolve(base_dir: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def _hash_config(raw: Mapping[str, Any], seed: int) -> str:
    """Hash of configuration content that affects artifacts.

    The output directory is excluded (it changes where artifacts live, not
    what they contain); the effective seed is folded in so a --seed override
    changes the hash.
    """
    hashable = {k: v for k, v in raw.items() if k != "output_dir"}
    hashable["seed"] = seed
    canonical = json.dumps(hashable, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
