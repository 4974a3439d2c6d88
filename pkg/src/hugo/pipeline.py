"""End-to-end labeling run: ingest, label, check, derive, export.

Every step records a ChangeSummary and freezes a snapshot, so the whole
run reads as a ledger: summed additions minus removals must equal the
final record count. Steps skip work that is already present in the
store, which makes an interrupted run resumable by re-invoking it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Optional, Sequence

from .exports import dataset_stats, derive_composition, write_export
from .extraction import (
    PromptTooLongError,
    estimate_expected_counts,
    extract_article,
    flag_nonstandard_methods,
    load_prompt_config,
)
from .hrm import (
    ExpectedCounts,
    FlagReport,
    metric_frequencies,
    stage1_syntax,
    stage2_completeness,
    stage3_outliers,
    stage4_coverage,
)
from .ingest import load_corpus
from .llm import LlmClient, LlmError
from .postprocess.composition import load_element_table, load_nominal_table
from .postprocess.units import load_unit_rules, normalize_hardness, normalize_value
from .schema import (
    ArticleRecord,
    ExperimentRecord,
    FieldSpec,
    LabelStatus,
    SchemaDefinition,
    load_schema,
    validate_record,
)
from .store import ChangeSummary, Snapshot, Store

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Everything a run needs besides the store and the model client."""

    schema: SchemaDefinition
    prompts: dict[str, Any]
    unit_rules: Any
    elements: Any
    nominal: Any

    @classmethod
    def load(cls, schema_path: Optional[str] = None,
             prompt_path: Optional[str] = None) -> "PipelineConfig":
        schema = load_schema(schema_path)
        elements = load_element_table()
        return cls(
            schema=schema,
            prompts=load_prompt_config(prompt_path),
            unit_rules=load_unit_rules(),
            elements=elements,
            nominal=load_nominal_table(elements),
        )


@dataclass
class PipelineResult:
    summaries: list[ChangeSummary] = dc_field(default_factory=list)
    snapshots: list[Snapshot] = dc_field(default_factory=list)
    export_paths: dict[str, Path] = dc_field(default_factory=dict)
    initial_records: int = 0
    final_records: int = 0

    @property
    def ledger_consistent(self) -> bool:
        # records present at run start + every step's net change must equal
        # the final count; holds for fresh runs and resumed ones alike
        net = sum(s.added - s.removed for s in self.summaries)
        return self.initial_records + net == self.final_records

    def to_dict(self) -> dict[str, Any]:
        return {
            "steps": [s.to_dict() for s in self.summaries],
            "snapshots": [s.snapshot_id for s in self.snapshots],
            "initial_records": self.initial_records,
            "final_records": self.final_records,
            "ledger_consistent": self.ledger_consistent,
        }


def unit_metric_reader(config: PipelineConfig):
    """Metric reader for outlier checks: raw value -> canonical-unit float.

    Records keep their reported strings; this converts on the fly so the
    statistics run in one unit system without mutating anything. Values on
    a non-convertible scale (hardness passthroughs like HRC) are excluded
    rather than mixed into the wrong unit's statistics.
    """
    rules = config.unit_rules

    def read(record: ExperimentRecord, spec: FieldSpec) -> Optional[float]:
        value = record.value(spec.name)
        if value.is_empty:
            return None
        family = spec.unit_family or "dimensionless"
        unit_hint = record.value(spec.unit_field).raw if spec.unit_field else ""
        if family == "hardness":
            normalized, _load = normalize_hardness(value.raw, rules, unit_hint=unit_hint)
        else:
            normalized = normalize_value(value.raw, family, rules, unit_hint=unit_hint)
        if normalized.numeric is None:
            return None
        canonical = rules.canonical(family) if rules.has_family(family) else ""
        if canonical and normalized.unit and normalized.unit != canonical:
            return None
        return normalized.numeric

    return read


def _snapshot(store: Store, derivation: str, summary: ChangeSummary,
              parent: Optional[Snapshot]) -> Snapshot:
    record_ids = [r.record_id for r in store.active_records()]
    return store.create_snapshot(derivation, record_ids,
                                 parent_id=parent.snapshot_id if parent else None,
                                 summary=summary)


def step_ingest(store: Store, corpus_dir: str | Path) -> ChangeSummary:
    articles = load_corpus(corpus_dir)
    added = 0
    for article in articles:
        _, created = store.upsert_article(article)
        added += int(created)
    return ChangeSummary(step="ingest", articles=added,
                         detail={"seen": len(articles), "new": added})


def step_initial_labeling(store: Store, client: LlmClient,
                          config: PipelineConfig) -> ChangeSummary:
    """Label every article that has no records yet; stage-1 checks included."""
    summary = ChangeSummary(step="initial_labeling")
    syntax_flags = 0
    method_marks = 0
    for article in store.list_articles():
        # resumable: a stored response or live records mean this article was
        # already labeled; a re-run must not double-label it
        if store.active_records(article.article_id):
            continue
        if store.responses_for(article.article_id, kind="extract"):
            continue
        try:
            result = extract_article(article, config.schema, client, config.prompts)
        except PromptTooLongError as exc:
            flag = stage1_syntax(article.article_id, parse_ok=False, error=str(exc))
            if flag:
                store.add_flags([flag])
                syntax_flags += 1
            continue
        except LlmError as exc:
            flag = stage1_syntax(article.article_id, parse_ok=False,
                                 error=f"model call failed: {exc}")
            if flag:
                store.add_flags([flag])
                syntax_flags += 1
            continue
        if result.response is not None:
            store.record_response(article.article_id, "extract", result.response)
        if result.flag is not None:
            store.add_flags([result.flag])
            syntax_flags += 1
            store.set_label_status(article.article_id, LabelStatus.FLAGGED)
            continue
        store.add_records(result.candidates)
        summary.added += len(result.candidates)
        summary.articles += 1
        store.set_label_status(article.article_id, LabelStatus.LLM_LABELED)
        if result.candidates:
            try:
                marks, response = flag_nonstandard_methods(
                    article, result.candidates, config.schema, client, config.prompts
                )
            except LlmError as exc:
                logger.warning("methods check failed for %s: %s", article.article_id, exc)
                continue
            store.record_response(article.article_id, "methods", response)
            if marks:
                method_marks += marks
                for rec in result.candidates:
                    store.update_record(rec)
    summary.detail = {"syntax_flags": syntax_flags, "method_marks": method_marks}
    return summary


def step_completeness(store: Store, config: PipelineConfig,
                      article_ids: Optional[Sequence[str]] = None) -> ChangeSummary:
    summary = ChangeSummary(step="completeness")
    flags = 0
    for article in store.list_articles():
        if article_ids is not None and article.article_id not in article_ids:
            continue
        records = store.active_records(article.article_id)
        if not records:
            continue
        results, article_flags = stage2_completeness(article.article_id, records, config.schema)
        repaired = [r for r in results if r.repaired]
        for result in repaired:
            store.update_record(result.record)
        if repaired:
            summary.relabeled += len(repaired)
            summary.articles += 1
        if article_flags:
            store.add_flags(article_flags)
            flags += sum(1 for f in article_flags if f.resolution.value == "open")
    summary.detail = {"open_flags": flags}
    return summary


def step_outliers(store: Store, config: PipelineConfig) -> ChangeSummary:
    records = store.active_records()
    flags = stage3_outliers(records, config.schema,
                            metric_reader=unit_metric_reader(config))
    store.add_flags(flags)
    articles = {f.article_id for f in flags}
    return ChangeSummary(step="outliers", articles=len(articles),
                         detail={"flags": len(flags)})


def step_coverage(store: Store, client: LlmClient, config: PipelineConfig,
                  article_ids: Optional[Sequence[str]] = None) -> ChangeSummary:
    summary = ChangeSummary(step="coverage")
    frequencies = metric_frequencies(store.active_records(), config.schema)
    flags = 0
    for article in store.list_articles():
        if article_ids is not None and article.article_id not in article_ids:
            continue
        records = store.active_records(article.article_id)
        if not records and not store.responses_for(article.article_id, kind="extract"):
            continue  # never labeled; nothing to compare against
        stored = store.get_expected(article.article_id)
        if stored is not None:
            expected = ExpectedCounts(
                expected_experiments=stored.get("expected_experiments", 0),
                expected_metrics=dict(stored.get("expected_metrics", {})),
                notes=stored.get("notes", ""),
            )
        else:
            try:
                expected, response = estimate_expected_counts(
                    article, config.schema, client, config.prompts
                )
            except LlmError as exc:
                logger.warning("count estimate failed for %s: %s", article.article_id, exc)
                continue
            store.record_response(article.article_id, "counts", response)
            store.set_expected(
                article.article_id,
                {
                    "expected_experiments": expected.expected_experiments,
                    "expected_metrics": expected.expected_metrics,
                    "notes": expected.notes,
                },
            )
        score, flag = stage4_coverage(article.article_id, records, expected,
                                      frequencies, config.schema)
        store.set_coverage(article.article_id, score.to_dict())
        if flag is not None:
            store.add_flags([flag])
            flags += 1
            store.set_label_status(article.article_id, LabelStatus.FLAGGED)
        summary.articles += 1
    summary.detail = {"flags": flags}
    return summary


def step_empty_removal(store: Store, config: PipelineConfig) -> ChangeSummary:
    """Drop records whose target metrics are all empty; they carry no data."""
    doomed = []
    for rec in store.active_records():
        if validate_record(rec, config.schema).status == "empty_targets":
            doomed.append(rec.record_id)
    removed = store.deactivate_records(doomed)
    articles = len({rid.split(":")[0] for rid in doomed})
    return ChangeSummary(step="empty_result_removal", articles=articles, removed=removed,
                         detail={"record_ids": sorted(doomed)})


def step_mapping_application(store: Store) -> ChangeSummary:
    table = store.mapping_table()
    aliases = sum(len(m) for m in table.accepted.values())
    return ChangeSummary(
        step="mapping_application",
        detail={"mapping_version": table.version, "fields": sorted(table.accepted),
                "aliases": aliases},
    )


def step_composition(store: Store, config: PipelineConfig) -> ChangeSummary:
    records = store.active_records()
    with_vector = 0
    notes = 0
    lineages: dict[str, int] = {}
    for rec in records:
        outcome = derive_composition(rec, config.elements, config.nominal)
        if outcome.vector is not None:
            with_vector += 1
            lineages[outcome.lineage] = lineages.get(outcome.lineage, 0) + 1
        notes += len(outcome.notes)
    return ChangeSummary(
        step="composition",
        articles=len({r.article_id for r in records}),
        detail={"records": len(records), "with_vector": with_vector,
                "lineages": lineages, "notes": notes},
    )


def step_unit_normalization(store: Store, config: PipelineConfig) -> ChangeSummary:
    """Dry-run unit conversion over every numeric value; counts what fails."""
    records = store.active_records()
    converted = 0
    invalid = 0
    reader = unit_metric_reader(config)
    for rec in records:
        for spec in config.schema.fields:
            if spec.kind.value != "numeric":
                continue
            value = rec.value(spec.name)
            if value.is_empty:
                continue
            if reader(rec, spec) is None:
                invalid += 1
            else:
                converted += 1
    return ChangeSummary(step="unit_normalization",
                         detail={"converted": converted, "invalid": invalid})


def run_pipeline(store: Store, corpus_dir: str | Path, client: LlmClient,
                 config: Optional[PipelineConfig] = None,
                 export_dir: Optional[str | Path] = None) -> PipelineResult:
    """The whole run, in order, with a snapshot after every step."""
    if config is None:
        config = PipelineConfig.load()
    if not store.get_meta("schema_version"):
        store.set_meta("schema_version", config.schema.version)
    result = PipelineResult(initial_records=len(store.active_records()))
    parent: Optional[Snapshot] = None

    def record_step(summary: ChangeSummary) -> None:
        nonlocal parent
        parent = _snapshot(store, summary.step, summary, parent)
        result.summaries.append(summary)
        result.snapshots.append(parent)
        logger.info("step %-20s +%d ~%d -%d", summary.step, summary.added,
                    summary.relabeled, summary.removed)

    record_step(step_ingest(store, corpus_dir))
    record_step(step_initial_labeling(store, client, config))
    record_step(step_completeness(store, config))
    record_step(step_outliers(store, config))
    record_step(step_coverage(store, client, config))
    record_step(step_empty_removal(store, config))
    record_step(step_mapping_application(store))
    record_step(step_composition(store, config))
    record_step(step_unit_normalization(store, config))

    result.final_records = len(store.active_records())
    if export_dir is not None:
        result.export_paths = export_pipeline_outputs(store, config, export_dir,
                                                      snapshot=parent, result=result)
    if not result.ledger_consistent:
        logger.error("ledger mismatch: steps sum to %d, store holds %d",
                     sum(s.added - s.removed for s in result.summaries),
                     result.final_records)
    return result


def export_pipeline_outputs(store: Store, config: PipelineConfig,
                            export_dir: str | Path, snapshot: Optional[Snapshot] = None,
                            result: Optional[PipelineResult] = None) -> dict[str, Path]:
    out = Path(export_dir)
    records = store.active_records()
    articles = store.list_articles()
    paths = write_export(
        out, records, articles, config.schema,
        view="normalized", subset="all",
        unit_rules=config.unit_rules, mapping_table=store.mapping_table(),
        elements=config.elements, nominal=config.nominal,
        snapshot_id=snapshot.snapshot_id if snapshot else None,
        schema_version=store.get_meta("schema_version") or config.schema.version,
    )
    stats = dataset_stats(records, config.schema, n_articles=len(articles))
    stats_path = out / "stats.json"
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    paths["stats"] = stats_path
    if result is not None:
        summary_path = out / "summary.json"
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, ensure_ascii=False, sort_keys=True, indent=2)
            fh.write("\n")
        paths["summary"] = summary_path
    return paths


def recheck_article(store: Store, article_id: str, client: LlmClient,
                    config: PipelineConfig) -> list[FlagReport]:
    """Re-run checks for one article after its records changed.

    Relabeled records re-enter at completeness; outlier statistics are
    corpus-wide, so that pass runs over everything but only this
    article's new flags are returned. Flag ids are content-derived, so
    repeats never duplicate.
    """
    step_completeness(store, config, article_ids=[article_id])
    records = store.active_records()
    flags = stage3_outliers(records, config.schema, metric_reader=unit_metric_reader(config))
    store.add_flags(flags)
    step_coverage(store, client, config, article_ids=[article_id])
    return [f for f in store.list_flags(article_id=article_id)
            if f.resolution.value == "open"]
