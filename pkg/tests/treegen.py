"""Random labeled reply trees and the naive trigger oracle used by tests."""

from __future__ import annotations

import random

from toxtrig.corpus import RawRecord, build_threads
from toxtrig.toxicity import ToxicityLabel

LABEL_POOL = [
    ToxicityLabel.TOXIC,
    ToxicityLabel.NON_TOXIC,
    ToxicityLabel.NON_TOXIC,
    ToxicityLabel.NON_TOXIC,
    ToxicityLabel.AMBIGUOUS,
    ToxicityLabel.OTHER,
]


def random_labeled_forest(rng: random.Random, max_nodes: int = 1000):
    """A random multi-thread corpus with labels and a few orphans.

    Returns (threads, labels, comments).
    """
    n = rng.randint(2, max_nodes)
    comments = []
    for i in range(n):
        thread = f"t{rng.randint(0, max(1, n // 50))}"
        if i == 0 or rng.random() < 0.15:
            parent = None
        elif rng.random() < 0.03:
            parent = f"missing{i}"
        else:
            parent = f"c{rng.randrange(i)}"
        comments.append(
            RawRecord(
                id=f"c{i}",
                parent_id=parent,
                thread_id=thread,
                author="a",
                body="text",
                created_at=rng.randint(1, 10_000),
                community="x",
            )
        )
    labels = {c.id: rng.choice(LABEL_POOL) for c in comments}
    return build_threads(comments), labels, comments


def naive_direct_triggers(comments, labels, threads, n):
    """Quadratic scan over (comment, reply) pairs; independent of the
    package's labeling path apart from the orphan set."""
    orphans = set()
    for thread in threads:
        orphans |= thread.orphans
    per_thread = {}
    triggers = set()
    flat = [
        (c.id, c.parent_id, c.thread_id, labels[c.id] is ToxicityLabel.TOXIC)
        for c in comments
    ]
    for cid, _, thread_id, _ in flat:
        if cid in orphans or labels[cid] is not ToxicityLabel.NON_TOXIC:
            continue
        count = 0
        for rid, parent, r_thread, toxic in flat:
            if parent == cid and r_thread == thread_id and toxic and rid not in orphans:
                count += 1
        if count >= n:
            triggers.add(cid)
    return triggers


def naive_descendant_triggers(comments, labels, threads, n):
    """Quadratic ancestor-walk oracle for descendants scope (small trees)."""
    orphans = set()
    cut_edges = set()
    for thread in threads:
        orphans |= thread.orphans
    by_id = {c.id: c for c in comments}
    triggers = set()
    for c in comments:
        if c.id in orphans or labels[c.id] is not ToxicityLabel.NON_TOXIC:
            continue
        count = 0
        for d in comments:
            if d.id == c.id or labels[d.id] is not ToxicityLabel.TOXIC:
                continue
            node = d
            while True:
                if node.id in orphans or node.parent_id is None:
                    break
                parent = by_id.get(node.parent_id)
                if parent is None or parent.thread_id != d.thread_id:
                    break
                if parent.id == c.id:
                    count += 1
                    break
                node = parent
        if count >= n:
            triggers.add(c.id)
    return triggers
