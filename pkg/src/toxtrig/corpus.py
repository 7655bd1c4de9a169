"""Parse raw comment dumps, clean them, and rebuild reply trees.

Input follows the public Reddit dump convention: NDJSON with one object per
line carrying ``id``, ``parent_id``, ``link_id``, ``author``, ``body``,
``created_utc`` and ``subreddit``.  ``t1_``/``t3_`` prefixes on ids are
stripped so parent references and comment ids live in one namespace; a
parent reference equal to the thread id marks a top-level comment and is
stored as ``None``.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping

from .errors import CorpusError
from .textproc import tokenize

REMOVAL_REASONS = (
    "deleted",
    "bot_or_moderator",
    "link_only",
    "image_only",
    "empty",
    "malformed",
)

DEFAULT_BOT_AUTHORS = frozenset({"automoderator"})

_DELETED_BODIES = {"[deleted]", "[removed]"}
_ID_PREFIX_RE = re.compile(r"^t[0-9]_")
_MD_IMAGE_RE = re.compile(r"!\[[^\]]*\]\([^)]*\)")
_MD_LINK_RE = re.compile(r"\[([^\]]*)\]\([^)]*\)")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+")


@dataclass(frozen=True, slots=True)
class RawRecord:
    """One parsed dump line. Invariants (non-empty id, positive timestamp)
    are enforced during cleaning, not construction."""

    id: str
    parent_id: str | None
    thread_id: str
    author: str
    body: str
    created_at: int
    community: str


# A cleaned comment has the same shape as a raw record but is guaranteed to
# carry meaningful text (at least one word token after link/markup stripping).
Comment = RawRecord


@dataclass
class CleaningReport:
    """Accounting of clean(): kept + sum(removed) equals the input count."""

    kept: int = 0
    removed: dict[str, int] = field(
        default_factory=lambda: {reason: 0 for reason in REMOVAL_REASONS}
    )

    @property
    def input_count(self) -> int:
        return self.kept + sum(self.removed.values())

    def to_dict(self) -> dict:
        return {
            "input_records": self.input_count,
            "kept": self.kept,
            "removed": dict(sorted(self.removed.items())),
        }


@dataclass
class CommentThread:
    """One reply tree: every comment sharing a thread id.

    ``children`` maps a comment id to its replies ordered by
    ``(created_at, id)``; ``orphans`` are members whose parent id points at a
    comment absent from the corpus.  Orphans stay in the thread so counts add
    up, but they start their own subtrees.
    """

    root_id: str
    members: dict[str, Comment]
    children: dict[str, list[str]]
    orphans: frozenset[str]

    def roots(self) -> list[str]:
        """Top-level comments plus orphans, ordered by (created_at, id)."""
        tops = [
            c.id for c in self.members.values() if c.parent_id is None or c.id in self.orphans
        ]
        return sorted(tops, key=lambda cid: (self.members[cid].created_at, cid))

    def to_dict(self) -> dict:
        return {
            "root_id": self.root_id,
            "members": [comment_to_dict(self.members[cid]) for cid in sorted(self.members)],
            "children": {cid: list(kids) for cid, kids in sorted(self.children.items())},
            "orphans": sorted(self.orphans),
        }


def _strip_prefix(value: str) -> str:
    return _ID_PREFIX_RE.sub("", value)


def parse_dump(stream: Iterable[str]) -> tuple[list[RawRecord], int]:
    """Parse NDJSON lines into records, counting malformed lines.

    A line is malformed when it is not a JSON object, misses a required
    field, or carries a field of the wrong JSON type.  Malformed lines are
    skipped, never fatal.  Blank lines are ignored.
    """
    records: list[RawRecord] = []
    malformed = 0
    for line in stream:
        if not line.strip():
            continue
        record = _parse_line(line)
        if record is None:
            malformed += 1
        else:
            records.append(record)
    return records, malformed


def _parse_line(line: str) -> RawRecord | None:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    try:
        comment_id = obj["id"]
        thread_id = obj["link_id"]
        author = obj["author"]
        body = obj["body"]
        created = obj["created_utc"]
        community = obj["subreddit"]
    except KeyError:
        return None
    for value in (comment_id, thread_id, author, body, community):
        if not isinstance(value, str):
            return None
    created_at = _coerce_timestamp(created)
    if created_at is None:
        return None
    parent = obj.get("parent_id")
    if parent is not None and not isinstance(parent, str):
        return None

    comment_id = _strip_prefix(comment_id)
    thread_id = _strip_prefix(thread_id)
    parent_id = _strip_prefix(parent) if parent else None
    if parent_id == thread_id:
        parent_id = None  # reply to the submission itself, i.e. top level
    return RawRecord(
        id=comment_id,
        parent_id=parent_id,
        thread_id=thread_id,
        author=author,
        body=body,
        created_at=created_at,
        community=community,
    )


def _coerce_timestamp(value: object) -> int | None:
    # Dumps variously store created_utc as int, float, or numeric string.
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, str):
        try:
            return int(float(value))
        except ValueError:
            return None
    return None


def clean(
    records: Iterable[RawRecord],
    bot_authors: Iterable[str] = DEFAULT_BOT_AUTHORS,
) -> tuple[list[Comment], CleaningReport]:
    """Drop records with no meaningful text and account for every input.

    Removal reasons, checked in order: ``malformed`` (record invariants
    violated), ``deleted``, ``bot_or_moderator``, then body-content checks
    (``empty``, ``image_only``, ``link_only``).  Kept comments pass through
    unchanged, which makes cleaning idempotent on its own output.
    """
    denylist = {a.lower() for a in bot_authors}
    kept: list[Comment] = []
    report = CleaningReport()
    for record in records:
        reason = removal_reason(record, denylist)
        if reason is None:
            kept.append(record)
            report.kept += 1
        else:
            report.removed[reason] += 1
    return kept, report


def removal_reason(record: RawRecord, bot_denylist: frozenset[str] | set[str]) -> str | None:
    """The reason ``record`` should be dropped, or None to keep it."""
    if not record.id or record.created_at <= 0:
        return "malformed"
    body = record.body.strip()
    if body in _DELETED_BODIES or record.author == "[deleted]":
        return "deleted"
    author = record.author.lower()
    if author in bot_denylist or author.endswith("bot"):
        return "bot_or_moderator"
    if not body:
        return "empty"
    without_images, n_images = _MD_IMAGE_RE.subn(" ", body)
    with_anchor_text = _MD_LINK_RE.sub(r"\1", without_images)
    remainder, n_urls = _URL_RE.subn(" ", with_anchor_text)
    n_links = n_urls + (without_images != with_anchor_text)
    if tokenize(remainder):
        return None
    if n_images:
        return "image_only"
    if n_links:
        return "link_only"
    return "empty"


def build_threads(comments: Iterable[Comment]) -> list[CommentThread]:
    """Partition comments into reply trees, one per thread id.

    Output is deterministic regardless of input order: threads sort by root
    id, members by id, child lists by ``(created_at, id)``.  Parent cycles
    (possible in corrupt dumps) are broken by orphaning the cycle member with
    the smallest ``(created_at, id)``.  Duplicate ids are fatal.
    """
    by_id: dict[str, Comment] = {}
    for comment in comments:
        if comment.id in by_id:
            raise CorpusError(f"duplicate comment id: {comment.id!r}")
        by_id[comment.id] = comment

    by_thread: dict[str, list[Comment]] = defaultdict(list)
    for comment in by_id.values():
        by_thread[comment.thread_id].append(comment)

    threads = []
    for thread_id in sorted(by_thread):
        threads.append(_build_thread(thread_id, by_thread[thread_id]))
    return threads


def _build_thread(thread_id: str, members: list[Comment]) -> CommentThread:
    ordered = sorted(members, key=lambda c: (c.created_at, c.id))
    member_map = {c.id: c for c in sorted(ordered, key=lambda c: c.id)}

    orphans = {
        c.id for c in ordered if c.parent_id is not None and c.parent_id not in member_map
    }
    orphans |= _cycle_cuts(ordered, member_map, orphans)

    children: dict[str, list[str]] = defaultdict(list)
    for comment in ordered:
        if comment.parent_id is not None and comment.id not in orphans:
            children[comment.parent_id].append(comment.id)
    return CommentThread(
        root_id=thread_id,
        members=member_map,
        children={cid: kids for cid, kids in sorted(children.items())},
        orphans=frozenset(orphans),
    )


def _cycle_cuts(
    ordered: list[Comment],
    member_map: Mapping[str, Comment],
    orphans: set[str],
) -> set[str]:
    """Ids whose parent edge must be cut to make the reply graph a forest."""
    cuts: set[str] = set()
    resolved: set[str] = set()  # known to reach a root, an orphan, or a cut
    for comment in ordered:
        path: list[str] = []
        on_path: set[str] = set()
        current: str | None = comment.id
        while True:
            if current is None or current in resolved:
                break
            node = member_map[current]
            if node.parent_id is None or current in orphans or current in cuts:
                break
            if current in on_path:
                cycle_start = path.index(current)
                cycle = path[cycle_start:]
                cut = min(cycle, key=lambda cid: (member_map[cid].created_at, cid))
                cuts.add(cut)
                break
            path.append(current)
            on_path.add(current)
            current = node.parent_id
        resolved.update(path)
    return cuts


def comment_to_dict(comment: Comment) -> dict:
    """Serialize a comment back to the dump field names."""
    return {
        "id": comment.id,
        "parent_id": comment.parent_id,
        "link_id": comment.thread_id,
        "author": comment.author,
        "body": comment.body,
        "created_utc": comment.created_at,
        "subreddit": comment.community,
    }


def comment_from_dict(obj: Mapping[str, object]) -> Comment:
    """Inverse of :func:`comment_to_dict` for already-cleaned NDJSON."""
    parent = obj.get("parent_id")
    return Comment(
        id=str(obj["id"]),
        parent_id=str(parent) if parent else None,
        thread_id=str(obj["link_id"]),
        author=str(obj["author"]),
        body=str(obj["body"]),
        created_at=int(obj["created_utc"]),  # type: ignore[arg-type]
        community=str(obj["subreddit"]),
    )


def read_ndjson(handle: IO[str]) -> Iterator[dict]:
    """Yield one JSON object per non-blank line."""
    for line in handle:
        if line.strip():
            yield json.loads(line)
