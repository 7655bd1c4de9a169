"""Stage orchestration: artifacts, manifests, idempotent re-runs.

Each stage reads the artifacts of the stage it depends on, writes its own
atomically (temp file + rename), and records a signature in the run manifest.
A re-run with an unchanged signature is a no-op unless forced.  Signatures
cover the stage version, the config hash, and the digests of every input
file, so identical configuration and inputs skip cleanly and any change
reruns exactly the affected stages.

All data artifacts are byte-deterministic for fixed config, inputs, and
seeds.  The manifest additionally records wall-clock completion times, so it
is run metadata rather than a comparable artifact.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from . import PIPELINE_VERSION
from .attribution import (
    attribute_comments,
    context_terms,
    derive_seed,
    read_ranking_csv,
    write_context_terms_csv,
    write_ranked_terms_csv,
)
from .characterize import scaled_f_scores, term_stats, write_term_scores_csv
from .classifier import Model, evaluate, train
from .compare import TriggerRanking, comparison_report
from .config import PipelineConfig
from .corpus import (
    Comment,
    build_threads,
    clean,
    comment_from_dict,
    comment_to_dict,
    parse_dump,
)
from .errors import ConfigError, DataError, MissingDependencyError
from .ioutils import file_digest, write_json_atomic, write_text_atomic
from .toxicity import (
    ToxicityLabel,
    build_scorer,
    categorize,
    distribution,
    score_corpus,
)
from .triggers import (
    DatasetSplit,
    TriggerExample,
    TriggerLabelValue,
    label_triggers,
    make_dataset,
    sample_nontriggers,
    write_triggers_csv,
)

MANIFEST_NAME = "manifest.json"

STAGES = (
    "ingest",
    "score",
    "characterize",
    "label-triggers",
    "train",
    "evaluate",
    "attribute",
    "compare",
)

DEPENDENCIES: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "score": ("ingest",),
    "characterize": ("score",),
    "label-triggers": ("score",),
    "train": ("label-triggers",),
    "evaluate": ("train",),
    "attribute": ("train",),
    "compare": ("attribute",),
}

ARTIFACTS: dict[str, tuple[str, ...]] = {
    "ingest": ("cleaned.ndjson", "cleaning_report.json"),
    "score": ("scored.ndjson", "scoring_report.json"),
    "characterize": ("scaled_f_scores.csv",),
    "label-triggers": ("triggers.csv", "dataset.json"),
    "train": ("model.json",),
    "evaluate": ("eval_report.json",),
    "attribute": ("attribution_report.json", "top_terms.csv", "context_terms.csv"),
    "compare": ("comparison.json", "comparison.md"),
}

STAGE_VERSIONS: dict[str, str] = {stage: "1" for stage in STAGES}


@dataclass
class StageResult:
    stage: str
    skipped: bool
    outputs: tuple[str, ...]


def _write_csv_artifact(path: Path, writer: Callable, *args) -> None:
    buffer = io.StringIO()
    writer(buffer, *args)
    write_text_atomic(path, buffer.getvalue())


def load_manifest(out_dir: Path) -> dict:
    path = out_dir / MANIFEST_NAME
    if not path.exists():
        return {"pipeline_version": PIPELINE_VERSION, "stages": {}}
    return json.loads(path.read_text(encoding="utf-8"))


def _stage_inputs(stage: str, config: PipelineConfig) -> dict[str, Path]:
    """Files whose digests feed the stage signature."""
    out = config.output_dir
    inputs: dict[str, Path] = {}
    if stage == "ingest":
        inputs["input"] = config.input_path
    if stage == "score":
        inputs["cleaned.ndjson"] = out / "cleaned.ndjson"
        if config.scorer.kind == "replay" and config.scorer.replay_path is not None:
            inputs["replay"] = config.scorer.replay_path
    if stage in ("characterize", "label-triggers"):
        inputs["scored.ndjson"] = out / "scored.ndjson"
    if stage in ("train", "evaluate", "attribute"):
        inputs["scored.ndjson"] = out / "scored.ndjson"
        inputs["dataset.json"] = out / "dataset.json"
    if stage in ("evaluate", "attribute"):
        inputs["model.json"] = out / "model.json"
    if stage == "compare":
        inputs["top_terms.csv"] = out / "top_terms.csv"
        for ranking in config.compare.rankings:
            inputs[f"ranking:{ranking.community}"] = ranking.path
    return inputs


def run_stage(stage: str, config: PipelineConfig, *, force: bool = False) -> StageResult:
    """Run one stage; no-op when its signature already matches the manifest."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    out_dir = config.output_dir
    for dependency in DEPENDENCIES[stage]:
        missing = [name for name in ARTIFACTS[dependency] if not (out_dir / name).exists()]
        if missing:
            raise MissingDependencyError(
                f"stage {stage!r} needs {', '.join(missing)}; run stage {dependency!r} first"
            )
    inputs = _stage_inputs(stage, config)
    for label, path in inputs.items():
        if not path.exists():
            raise DataError(f"stage {stage!r} input {label} not found: {path}")
    digests = {label: file_digest(path) for label, path in sorted(inputs.items())}
    signature = hashlib.sha256(
        json.dumps(
            {
                "stage": stage,
                "version": STAGE_VERSIONS[stage],
                "config": config.config_hash,
                "inputs": digests,
            },
            sort_keys=True,
        ).encode("utf-8")
    ).hexdigest()

    manifest = load_manifest(out_dir)
    record = manifest["stages"].get(stage)
    outputs_present = all((out_dir / name).exists() for name in ARTIFACTS[stage])
    if not force and record and record.get("signature") == signature and outputs_present:
        return StageResult(stage=stage, skipped=True, outputs=ARTIFACTS[stage])

    _STAGE_FUNCTIONS[stage](config)

    manifest["pipeline_version"] = PIPELINE_VERSION
    manifest["config_hash"] = config.config_hash
    manifest["stages"][stage] = {
        "version": STAGE_VERSIONS[stage],
        "signature": signature,
        "input_digests": digests,
        "outputs": list(ARTIFACTS[stage]),
        "completed_at": datetime.now(timezone.utc).isoformat(),
    }
    write_json_atomic(out_dir / MANIFEST_NAME, manifest)
    return StageResult(stage=stage, skipped=False, outputs=ARTIFACTS[stage])


# --- stage implementations -------------------------------------------------


def _stage_ingest(config: PipelineConfig) -> None:
    try:
        with open(config.input_path, encoding="utf-8") as handle:
            records, malformed_lines = parse_dump(handle)
    except OSError as exc:
        raise DataError(f"cannot read input dump {config.input_path}: {exc}") from exc
    comments, report = clean(records, config.bot_authors)
    lines = [json.dumps(comment_to_dict(c), sort_keys=True) for c in comments]
    write_text_atomic(
        config.output_dir / "cleaned.ndjson", "".join(line + "\n" for line in lines)
    )
    write_json_atomic(
        config.output_dir / "cleaning_report.json",
        {"malformed_lines": malformed_lines, **report.to_dict()},
    )


def read_cleaned(path: Path) -> list[Comment]:
    with open(path, encoding="utf-8") as handle:
        return [comment_from_dict(json.loads(line)) for line in handle if line.strip()]


def _make_scorer(config: PipelineConfig):
    settings = config.scorer
    if settings.kind == "lexicon":
        kwargs = {"bias": settings.bias} if settings.bias is not None else {}
        return build_scorer("lexicon", **kwargs)
    if settings.kind == "replay":
        return build_scorer("replay", replay_path=settings.replay_path)
    return build_scorer(
        "remote",
        endpoint=settings.endpoint,
        api_key_env=settings.api_key_env,
        max_attempts=settings.max_attempts,
        cache_path=settings.cache_path,
    )


def _stage_score(config: PipelineConfig) -> None:
    comments = read_cleaned(config.output_dir / "cleaned.ndjson")
    scorer = _make_scorer(config)
    scored = score_corpus(comments, scorer, parallelism=config.scorer.parallelism)
    lines = []
    labels = []
    absent: dict[str, str] = {}
    for item in scored:
        label = categorize(item.score, config.thresholds)
        labels.append(label)
        row = comment_to_dict(item.comment)
        row["toxicity_score"] = item.score.value
        row["toxicity_label"] = label.value
        lines.append(json.dumps(row, sort_keys=True))
        if item.score.value is None:
            absent[item.comment.id] = item.score.reason or "unknown"
    write_text_atomic(
        config.output_dir / "scored.ndjson", "".join(line + "\n" for line in lines)
    )
    write_json_atomic(
        config.output_dir / "scoring_report.json",
        {
            "scorer": config.scorer.kind,
            "distribution": distribution(labels).to_dict(),
            "absent": dict(sorted(absent.items())),
        },
    )


@dataclass
class ScoredRow:
    comment: Comment
    score: float | None
    label: ToxicityLabel


def read_scored(path: Path) -> list[ScoredRow]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            rows.append(
                ScoredRow(
                    comment=comment_from_dict(obj),
                    score=obj["toxicity_score"],
                    label=ToxicityLabel(obj["toxicity_label"]),
                )
            )
    return rows


def _stage_characterize(config: PipelineConfig) -> None:
    rows = read_scored(config.output_dir / "scored.ndjson")
    stats = term_stats(
        ((row.comment.body, row.label) for row in rows), min_count=config.min_term_count
    )
    scores = scaled_f_scores(stats)
    _write_csv_artifact(
        config.output_dir / "scaled_f_scores.csv", write_term_scores_csv, stats, scores
    )


def _stage_label_triggers(config: PipelineConfig) -> None:
    rows = read_scored(config.output_dir / "scored.ndjson")
    comments = [row.comment for row in rows]
    labels = {row.comment.id: row.label for row in rows}
    labeling = label_triggers(build_threads(comments), labels, config.trigger)
    _write_csv_artifact(config.output_dir / "triggers.csv", write_triggers_csv, labeling)

    body_by_id = {c.id: c.body for c in comments}
    trigger_examples = [
        TriggerExample(cid, body_by_id[cid], TriggerLabelValue.TRIGGER)
        for cid in sorted(labeling.trigger_ids)
    ]
    sample_seed = derive_seed(config.seed, "nontrigger-sample")
    nontrigger_ids = sample_nontriggers(
        labeling.nontrigger_candidate_ids, len(trigger_examples), sample_seed
    )
    nontrigger_examples = [
        TriggerExample(cid, body_by_id[cid], TriggerLabelValue.NON_TRIGGER)
        for cid in sorted(nontrigger_ids)
    ]
    split = make_dataset(
        trigger_examples,
        nontrigger_examples,
        ratio=config.train_ratio,
        seed=derive_seed(config.seed, "dataset-split"),
    )
    payload = split.to_dict()
    payload["global_seed"] = config.seed
    payload["sample_seed"] = sample_seed
    payload["trigger_config"] = {
        "n": config.trigger.n,
        "child_scope": config.trigger.child_scope,
    }
    write_json_atomic(config.output_dir / "dataset.json", payload)


def read_dataset(out_dir: Path) -> DatasetSplit:
    payload = json.loads((out_dir / "dataset.json").read_text(encoding="utf-8"))
    body_by_id = {
        row.comment.id: row.comment.body for row in read_scored(out_dir / "scored.ndjson")
    }

    def rebuild(entries):
        examples = []
        for entry in entries:
            cid = entry["comment_id"]
            if cid not in body_by_id:
                raise DataError(f"dataset references unknown comment id {cid!r}")
            examples.append(TriggerExample(cid, body_by_id[cid], entry["label"]))
        return examples

    return DatasetSplit(
        train=rebuild(payload["train"]),
        test=rebuild(payload["test"]),
        ratio=payload["ratio"],
        seed=payload["seed"],
    )


def _load_model(out_dir: Path) -> Model:
    return Model.from_json(json.loads((out_dir / "model.json").read_text(encoding="utf-8")))


def _stage_train(config: PipelineConfig) -> None:
    split = read_dataset(config.output_dir)
    model = train(split, config.hyperparams)
    write_json_atomic(config.output_dir / "model.json", model.to_json())


def _stage_evaluate(config: PipelineConfig) -> None:
    split = read_dataset(config.output_dir)
    model = _load_model(config.output_dir)
    report = evaluate(model, split.test)
    write_json_atomic(
        config.output_dir / "eval_report.json", {"test_size": report.total, **report.to_dict()}
    )


def _stage_attribute(config: PipelineConfig) -> None:
    split = read_dataset(config.output_dir)
    model = _load_model(config.output_dir)
    settings = config.attribution
    examples = {
        "dataset": split.train + split.test,
        "train": split.train,
        "test": split.test,
    }[settings.scope]
    pairs = sorted((e.comment_id, e.text) for e in examples)
    report = attribute_comments(
        model,
        pairs,
        top_k=settings.top_k,
        exact_max_tokens=settings.exact_max_tokens,
        sample_permutations=settings.sample_permutations,
        seed=derive_seed(config.seed, "attribution"),
        probability_space=settings.probability_space,
    )
    write_json_atomic(config.output_dir / "attribution_report.json", report.to_dict())

    _write_csv_artifact(
        config.output_dir / "top_terms.csv", write_ranked_terms_csv, report.aggregate
    )

    trigger_terms = report.aggregate.terms()[: settings.context_top_terms]
    rows = read_scored(config.output_dir / "scored.ndjson")
    counts = context_terms(
        (row.comment.body for row in rows), trigger_terms, settings.context_min_count
    )
    _write_csv_artifact(config.output_dir / "context_terms.csv", write_context_terms_csv, counts)


def _stage_compare(config: PipelineConfig) -> None:
    with open(config.output_dir / "top_terms.csv", encoding="utf-8") as handle:
        local_ranking = read_ranking_csv(handle)
    rankings = [TriggerRanking(community=config.community, terms=tuple(local_ranking.terms()))]
    for external in config.compare.rankings:
        try:
            with open(external.path, encoding="utf-8") as handle:
                loaded = read_ranking_csv(handle)
        except OSError as exc:
            raise DataError(
                f"cannot read comparison ranking for {external.community!r}: {exc}"
            ) from exc
        rankings.append(TriggerRanking(community=external.community, terms=tuple(loaded.terms())))
    metadata = {
        "config_hash": config.config_hash,
        "seed": config.seed,
        "k_values": list(config.compare.k_values),
        "communities": [r.community for r in rankings],
    }
    comparison_report(
        rankings,
        config.compare.k_values,
        metadata,
        config.output_dir / "comparison.json",
        config.output_dir / "comparison.md",
    )


_STAGE_FUNCTIONS: dict[str, Callable[[PipelineConfig], None]] = {
    "ingest": _stage_ingest,
    "score": _stage_score,
    "characterize": _stage_characterize,
    "label-triggers": _stage_label_triggers,
    "train": _stage_train,
    "evaluate": _stage_evaluate,
    "attribute": _stage_attribute,
    "compare": _stage_compare,
}
