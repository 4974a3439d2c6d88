"""Prompt construction and response parsing for article labeling.

Three prompt kinds run per article: the main record extraction, an
expected-count probe used by coverage checking, and a measurement-methods
probe that marks values from non-standard procedures. Prompt text lives in
``data/prompts/extraction.yaml``; the schema section is rendered from the
loaded schema so the two can never drift apart.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from .hrm import ExpectedCounts, FlagReport, stage1_syntax
from .llm import LlmClient, LlmResponse
from .schema import ArticleRecord, ExperimentRecord, SchemaDefinition, coerce_candidate

logger = logging.getLogger(__name__)

DEFAULT_CONTEXT_BUDGET_CHARS = 240_000

_SECTION_ORDER = (
    "system_role",
    "pre_prompt",
    "domain_context",
    "extraction_rules",
    "schema_description",
    "abridged_example",
    "task_restatement",
)


class PromptTooLongError(ValueError):
    def __init__(self, length: int, budget: int) -> None:
        super().__init__(f"prompt is {length} chars, budget is {budget}")
        self.length = length
        self.budget = budget


def load_prompt_config(path: str | Path | None = None) -> dict[str, Any]:
    if path is None:
        path = Path(__file__).parent / "data" / "prompts" / "extraction.yaml"
    with open(path, "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def render_schema_description(schema: SchemaDefinition) -> str:
    """One line per schema field, each field name appearing exactly once."""
    lines = []
    for spec in schema.fields:
        parts = [spec.kind.value]
        if spec.unit_family:
            parts.append(f"unit family {spec.unit_family}")
        if spec.target_metric:
            parts.append("target metric")
        if spec.gate:
            parts.append(f"gate for {spec.subprocess_group}")
        line = f"- {spec.name} ({', '.join(parts)})"
        if spec.description:
            line += f": {spec.description}"
        lines.append(line)
    return "\n".join(lines)


def build_extraction_prompt(article: ArticleRecord, schema: SchemaDefinition,
                            config: dict[str, Any]) -> str:
    """Assemble the labeling prompt in its fixed section order.

    Raises:
        PromptTooLongError: the rendered prompt exceeds the configured
            context budget; the caller should route the article to manual
            handling rather than truncate silently.
    """
    sections = dict(config)
    sections["schema_description"] = (
        "Exactly these fields, one JSON key each:\n" + render_schema_description(schema)
    )
    parts = []
    for name in _SECTION_ORDER:
        body = str(sections.get(name, "")).strip()
        if body:
            parts.append(body)
    parts.append("ARTICLE:\n" + article.markdown)
    prompt = "\n\n".join(parts)
    budget = int(config.get("context_budget_chars", DEFAULT_CONTEXT_BUDGET_CHARS))
    if len(prompt) > budget:
        raise PromptTooLongError(len(prompt), budget)
    return prompt


@dataclass
class ParsedPayload:
    data: Any = None
    parse_ok: bool = False
    error: str = ""


def parse_json_payload(text: str) -> ParsedPayload:
    """Pull the outermost bracketed JSON payload out of surrounding prose.

    Tries the array first, then the object, taking first-opener to
    last-closer in both cases. No repair is attempted: a payload either
    parses as-is or the response is treated as malformed.
    """
    last_error = "no bracketed payload found"
    for opener, closer in (("[", "]"), ("{", "}")):
        start = text.find(opener)
        end = text.rfind(closer)
        if start == -1 or end <= start:
            continue
        try:
            return ParsedPayload(data=json.loads(text[start:end + 1]), parse_ok=True)
        except json.JSONDecodeError as exc:
            last_error = f"payload candidate failed to parse: {exc}"
    return ParsedPayload(error=last_error)


@dataclass
class ExtractionResult:
    article_id: str
    candidates: list[ExperimentRecord] = dc_field(default_factory=list)
    response: Optional[LlmResponse] = None
    flag: Optional[FlagReport] = None
    error: str = ""


def parse_extraction_response(article_id: str, response: LlmResponse,
                              schema: SchemaDefinition) -> ExtractionResult:
    """Candidate records from a raw labeling response.

    Truncated responses yield zero candidates plus a syntax flag; malformed
    or non-array payloads likewise. Every key of every candidate object is
    preserved verbatim for completeness checking.
    """
    result = ExtractionResult(article_id=article_id, response=response)
    if response.truncated:
        result.flag = stage1_syntax(article_id, parse_ok=True, truncated=True)
        return result
    payload = parse_json_payload(response.text)
    if not payload.parse_ok:
        result.error = payload.error
        result.flag = stage1_syntax(article_id, parse_ok=False, error=payload.error)
        return result
    if not isinstance(payload.data, list) or not all(isinstance(x, dict) for x in payload.data):
        result.error = "payload is not an array of record objects"
        result.flag = stage1_syntax(article_id, parse_ok=True, structure_ok=False,
                                    error=result.error)
        return result
    for idx, obj in enumerate(payload.data):
        result.candidates.append(
            coerce_candidate(obj, record_id=f"{article_id}:{idx:03d}", article_id=article_id,
                             schema=schema)
        )
    return result


def extract_article(article: ArticleRecord, schema: SchemaDefinition, client: LlmClient,
                    config: dict[str, Any],
                    params: Optional[dict[str, Any]] = None) -> ExtractionResult:
    prompt = build_extraction_prompt(article, schema, config)
    response = client.complete(prompt, kind="extract", article_hash=article.content_hash,
                               params=params)
    return parse_extraction_response(article.article_id, response, schema)


def estimate_expected_counts(article: ArticleRecord, schema: SchemaDefinition,
                             client: LlmClient, config: dict[str, Any],
                             ) -> tuple[ExpectedCounts, LlmResponse]:
    """Ask how many experiments and per-metric values the article reports.

    Unparseable responses degrade to an expectation of zero with a warning
    note; coverage checking then simply has nothing to compare against.
    """
    prompt = str(config.get("counts_prompt", "")).strip() + "\n\nARTICLE:\n" + article.markdown
    response = client.complete(prompt, kind="counts", article_hash=article.content_hash)
    payload = parse_json_payload(response.text)
    if not payload.parse_ok or not isinstance(payload.data, dict):
        logger.warning("unparseable count response for %s", article.article_id)
        return ExpectedCounts(0, {}, notes="unparseable count response"), response
    try:
        experiments = int(payload.data.get("experiments", 0))
    except (TypeError, ValueError):
        return ExpectedCounts(0, {}, notes="non-numeric experiment count"), response
    metrics: dict[str, int] = {}
    notes = ""
    raw_metrics = payload.data.get("metrics", {})
    if isinstance(raw_metrics, dict):
        valid_keys = set(schema.metric_keys)
        for key, value in raw_metrics.items():
            if key not in valid_keys:
                notes = "dropped unknown metric keys"
                continue
            try:
                count = int(value)
            except (TypeError, ValueError):
                continue
            if count > experiments:
                count = experiments
                notes = "clamped per-metric count to experiment count"
            if count > 0:
                metrics[key] = count
    return ExpectedCounts(max(experiments, 0), metrics, notes=notes), response


def flag_nonstandard_methods(article: ArticleRecord, records: Sequence[ExperimentRecord],
                             schema: SchemaDefinition, client: LlmClient,
                             config: dict[str, Any]) -> tuple[int, LlmResponse]:
    """Mark record values measured by non-standard procedures.

    The response payload is an array of {"property", "procedure",
    "records"?} objects; ``property`` may be a schema field name or a
    metric key, and ``records`` holds zero-based indices (default: every
    record with that property non-empty). Returns how many marks landed.
    """
    prompt = str(config.get("methods_prompt", "")).strip() + "\n\nARTICLE:\n" + article.markdown
    response = client.complete(prompt, kind="methods", article_hash=article.content_hash)
    payload = parse_json_payload(response.text)
    if not payload.parse_ok or not isinstance(payload.data, list):
        return 0, response
    metric_to_field = {spec.metric_key: spec.name for spec in schema.target_fields if spec.metric_key}
    applied = 0
    for item in payload.data:
        if not isinstance(item, dict) or "property" not in item:
            continue
        prop = str(item["property"])
        field_name = metric_to_field.get(prop, prop)
        if field_name not in schema:
            logger.warning("methods probe named unknown property %r", prop)
            continue
        procedure = str(item.get("procedure", "")).strip() or "unspecified"
        indices = item.get("records")
        if isinstance(indices, list):
            targets = [records[i] for i in indices if isinstance(i, int) and 0 <= i < len(records)]
        else:
            targets = [rec for rec in records if not rec.value(field_name).is_empty]
        for rec in targets:
            mark = {"field": field_name, "procedure": procedure}
            if mark not in rec.nonstandard_method_flags:
                rec.nonstandard_method_flags.append(mark)
                applied += 1
    return applied, response
