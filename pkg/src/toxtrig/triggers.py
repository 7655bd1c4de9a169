"""Trigger labeling and balanced dataset construction.

A trigger is a non-toxic comment with at least ``n`` toxic replies.  "Reply"
defaults to a direct child; ``descendants`` widens it to the whole subtree
because dump conventions differ on what a child comment means.  Ambiguous
and unscored comments never count as toxic replies and can never be
triggers, and neither can orphans, whose position in the tree is unknown.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .corpus import CommentThread
from .errors import ConfigError, DatasetError
from .toxicity import ToxicityLabel

CHILD_SCOPES = ("direct", "descendants")


@dataclass(frozen=True)
class TriggerConfig:
    n: int = 2
    child_scope: str = "direct"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"trigger threshold n must be >= 1, got {self.n}")
        if self.child_scope not in CHILD_SCOPES:
            raise ConfigError(
                f"child_scope must be one of {CHILD_SCOPES}, got {self.child_scope!r}"
            )


@dataclass
class TriggerLabeling:
    """Trigger decisions plus the toxic-reply counts behind them.

    ``toxic_child_counts`` covers every candidate (non-orphan comments
    labeled non-toxic); ``trigger_ids`` is the subset meeting the threshold.
    """

    trigger_ids: frozenset[str]
    toxic_child_counts: dict[str, int]

    @property
    def nontrigger_candidate_ids(self) -> frozenset[str]:
        return frozenset(self.toxic_child_counts) - self.trigger_ids


def label_triggers(
    threads: Iterable[CommentThread],
    labels: Mapping[str, ToxicityLabel],
    config: TriggerConfig = TriggerConfig(),
) -> TriggerLabeling:
    """Find triggers among non-toxic, non-orphan comments.

    Every comment in every thread must appear in ``labels``.
    """
    counts: dict[str, int] = {}
    triggers: set[str] = set()
    for thread in threads:
        toxic_below = _toxic_descendant_counts(thread, labels) if (
            config.child_scope == "descendants"
        ) else None
        for cid in thread.members:
            if cid in thread.orphans or labels[cid] is not ToxicityLabel.NON_TOXIC:
                continue
            if toxic_below is not None:
                count = toxic_below[cid]
            else:
                count = sum(
                    1
                    for child in thread.children.get(cid, ())
                    if labels[child] is ToxicityLabel.TOXIC
                )
            counts[cid] = count
            if count >= config.n:
                triggers.add(cid)
    return TriggerLabeling(trigger_ids=frozenset(triggers), toxic_child_counts=counts)


def _toxic_descendant_counts(
    thread: CommentThread, labels: Mapping[str, ToxicityLabel]
) -> dict[str, int]:
    """Toxic comments strictly below each comment, computed iteratively
    (reply chains can exceed the recursion limit)."""
    counts: dict[str, int] = {}
    for root in thread.roots():
        stack: list[tuple[str, bool]] = [(root, False)]
        while stack:
            cid, expanded = stack.pop()
            children = thread.children.get(cid, ())
            if not expanded:
                stack.append((cid, True))
                stack.extend((child, False) for child in children)
            else:
                total = 0
                for child in children:
                    total += counts[child]
                    if labels[child] is ToxicityLabel.TOXIC:
                        total += 1
                counts[cid] = total
    return counts


class TriggerLabelValue:
    TRIGGER = "trigger"
    NON_TRIGGER = "non_trigger"


@dataclass(frozen=True)
class TriggerExample:
    comment_id: str
    text: str
    label: str  # TriggerLabelValue

    def __post_init__(self) -> None:
        if self.label not in (TriggerLabelValue.TRIGGER, TriggerLabelValue.NON_TRIGGER):
            raise ValueError(f"bad trigger label: {self.label!r}")

    @property
    def is_trigger(self) -> bool:
        return self.label == TriggerLabelValue.TRIGGER


def sample_nontriggers(
    candidate_ids: Iterable[str], count: int, seed: int
) -> frozenset[str]:
    """Uniform sample without replacement, deterministic per seed.

    Candidates are sorted before sampling so the draw does not depend on
    input order.
    """
    ordered = sorted(set(candidate_ids))
    if count > len(ordered):
        raise DatasetError(
            f"cannot sample {count} non-triggers from {len(ordered)} candidates"
        )
    rng = random.Random(seed)
    return frozenset(rng.sample(ordered, count))


@dataclass
class DatasetSplit:
    train: list[TriggerExample]
    test: list[TriggerExample]
    ratio: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "seed": self.seed,
            "train": [
                {"comment_id": e.comment_id, "label": e.label} for e in self.train
            ],
            "test": [{"comment_id": e.comment_id, "label": e.label} for e in self.test],
        }


def make_dataset(
    triggers: Sequence[TriggerExample],
    nontriggers: Sequence[TriggerExample],
    ratio: float = 0.8,
    seed: int = 0,
) -> DatasetSplit:
    """Stratified shuffle-split, deterministic per seed.

    Each class is shuffled and cut at ``round(ratio * n)``, clamped so both
    splits keep at least one example per class.
    """
    if not 0.0 < ratio < 1.0:
        raise DatasetError(f"split ratio must be in (0, 1), got {ratio}")
    trigger_ids = {e.comment_id for e in triggers}
    nontrigger_ids = {e.comment_id for e in nontriggers}
    if trigger_ids & nontrigger_ids:
        clash = sorted(trigger_ids & nontrigger_ids)[0]
        raise DatasetError(f"trigger and non-trigger ids overlap, e.g. {clash!r}")
    for name, examples, want in (
        ("trigger", triggers, TriggerLabelValue.TRIGGER),
        ("non-trigger", nontriggers, TriggerLabelValue.NON_TRIGGER),
    ):
        if len(examples) < 2:
            raise DatasetError(f"need at least 2 {name} examples, got {len(examples)}")
        if any(e.label != want for e in examples):
            raise DatasetError(f"all {name} examples must carry the {want!r} label")

    rng = random.Random(seed)
    train: list[TriggerExample] = []
    test: list[TriggerExample] = []
    for examples in (triggers, nontriggers):
        ordered = sorted(examples, key=lambda e: e.comment_id)
        rng.shuffle(ordered)
        cut = min(max(round(ratio * len(ordered)), 1), len(ordered) - 1)
        train.extend(ordered[:cut])
        test.extend(ordered[cut:])
    rng.shuffle(train)
    rng.shuffle(test)
    return DatasetSplit(train=train, test=test, ratio=ratio, seed=seed)


def write_triggers_csv(handle: IO[str], labeling: TriggerLabeling) -> None:
    """One row per candidate: comment_id, trigger/non_trigger, toxic count."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["comment_id", "label", "toxic_child_count"])
    for cid in sorted(labeling.toxic_child_counts):
        label = (
            TriggerLabelValue.TRIGGER
            if cid in labeling.trigger_ids
            else TriggerLabelValue.NON_TRIGGER
        )
        writer.writerow([cid, label, labeling.toxic_child_counts[cid]])
