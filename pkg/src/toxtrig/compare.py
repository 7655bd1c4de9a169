"""Cross-community comparison of trigger-term rankings.

Overlap@k is plain set intersection over the top-k terms of two rankings,
divided by k.  A Spearman rank correlation over shared terms is reported
alongside for context but carries no acceptance weight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import DataError
from .ioutils import write_text_atomic

_ABSENT = "absent (needs at least two communities)"


@dataclass(frozen=True)
class TriggerRanking:
    community: str
    terms: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.terms)) != len(self.terms):
            raise DataError(f"ranking for {self.community!r} contains duplicate terms")


@dataclass
class OverlapReport:
    """overlap(k) = |top_k(A) intersect top_k(B)| / k for each requested k."""

    overlaps: dict[int, float]
    note: str | None = None

    def to_dict(self) -> dict:
        payload: dict = {"overlap_at_k": {str(k): v for k, v in sorted(self.overlaps.items())}}
        if self.note:
            payload["note"] = self.note
        return payload


def overlap_at_k(
    ranking_a: TriggerRanking, ranking_b: TriggerRanking, k_values: Sequence[int]
) -> OverlapReport:
    """Set-intersection overlap of the two top-k prefixes per k.

    k values beyond the shorter ranking are dropped and noted.  Empty
    rankings are an error.
    """
    if not ranking_a.terms or not ranking_b.terms:
        empty = ranking_a if not ranking_a.terms else ranking_b
        raise DataError(f"ranking for {empty.community!r} is empty")
    limit = min(len(ranking_a.terms), len(ranking_b.terms))
    usable = sorted({k for k in k_values if 1 <= k <= limit})
    dropped = sorted({k for k in k_values if k > limit})
    overlaps = {}
    for k in usable:
        shared = set(ranking_a.terms[:k]) & set(ranking_b.terms[:k])
        overlaps[k] = len(shared) / k
    note = None
    if dropped:
        note = (
            f"k values {dropped} exceed the shorter ranking ({limit} terms) and were dropped"
        )
    return OverlapReport(overlaps=overlaps, note=note)


def rank_correlation(ranking_a: TriggerRanking, ranking_b: TriggerRanking) -> float | None:
    """Spearman correlation of shared-term ranks; None below two shared terms."""
    position_a = {term: i for i, term in enumerate(ranking_a.terms)}
    position_b = {term: i for i, term in enumerate(ranking_b.terms)}
    shared = sorted(set(position_a) & set(position_b))
    if len(shared) < 2:
        return None
    xs = [position_a[t] for t in shared]
    ys = [position_b[t] for t in shared]
    mean_x = sum(xs) / len(xs)
    mean_y = sum(ys) / len(ys)
    cov = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    var_x = sum((x - mean_x) ** 2 for x in xs)
    var_y = sum((y - mean_y) ** 2 for y in ys)
    if var_x == 0 or var_y == 0:
        return None
    return cov / (var_x * var_y) ** 0.5


def comparison_report(
    rankings: Sequence[TriggerRanking],
    k_values: Sequence[int],
    metadata: Mapping[str, object],
    json_path: str | Path,
    markdown_path: str | Path,
) -> dict:
    """Combine rankings and pairwise overlaps into JSON plus a summary.

    With a single community the overlap section is marked absent; with three
    or more, every pair appears.  Output is deterministic for fixed inputs.
    """
    if not rankings:
        raise DataError("comparison needs at least one ranking")
    names = [r.community for r in rankings]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate community names in comparison: {names}")

    pairs = []
    for i, left in enumerate(rankings):
        for right in rankings[i + 1 :]:
            report = overlap_at_k(left, right, k_values)
            pairs.append(
                {
                    "communities": [left.community, right.community],
                    **report.to_dict(),
                    "rank_correlation": rank_correlation(left, right),
                }
            )
    payload = {
        "communities": [
            {"community": r.community, "terms": list(r.terms)} for r in rankings
        ],
        "overlap": pairs if pairs else _ABSENT,
        "metadata": dict(sorted(metadata.items(), key=lambda kv: kv[0])),
    }
    write_text_atomic(Path(json_path), json.dumps(payload, sort_keys=True, indent=2) + "\n")
    write_text_atomic(Path(markdown_path), _render_markdown(rankings, pairs))
    return payload


def _render_markdown(rankings: Sequence[TriggerRanking], pairs: list[dict]) -> str:
    lines = ["# Trigger comparison", ""]
    for ranking in rankings:
        preview = ", ".join(ranking.terms[:10])
        lines.append(f"- **{ranking.community}** ({len(ranking.terms)} terms): {preview}")
    lines.append("")
    if not pairs:
        lines.append(f"Overlap: {_ABSENT}.")
    for pair in pairs:
        left, right = pair["communities"]
        lines.append(f"## {left} vs {right}")
        lines.append("")
        lines.append("| k | overlap |")
        lines.append("|---|---------|")
        for k, value in pair["overlap_at_k"].items():
            lines.append(f"| {k} | {value:.4f} |")
        correlation = pair["rank_correlation"]
        shown = "n/a" if correlation is None else f"{correlation:.4f}"
        lines.append("")
        lines.append(f"Spearman rank correlation over shared terms: {shown}")
        if pair.get("note"):
            lines.append(f"Note: {pair['note']}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
