"""Staged risk flagging for automated extractions.

Four checks run in order, cheapest first: response syntax, record
completeness (with automatic key realignment), statistical outliers, and
article coverage. Each check emits FlagReports that feed the review queue;
nothing here mutates the store.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field as dc_field
from difflib import SequenceMatcher
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from .schema import (
    ExperimentRecord,
    FieldSpec,
    FieldValue,
    SchemaDefinition,
    validate_record,
)

logger = logging.getLogger(__name__)

REALIGN_THRESHOLD = 0.8
GLOBAL_Z_THRESHOLD = 3.0
LOCAL_DISTANCE_MULTIPLIER = 2.0
MIN_CLASS_SIZE = 5
WEV_FLAG_THRESHOLD = 2.5

# Fallback per-metric plausibility bounds, used when no config is supplied.
# Values are in canonical units; "exclusive" marks an open lower bound.
DEFAULT_DOMAIN_BOUNDS: dict[str, dict[str, Any]] = {
    "porosity": {"min": 0.0, "max": 99.9},
    "elastic_modulus": {"min": 1.0, "max": 1500.0},
    "yield_strength": {"min": 0.0, "min_exclusive": True, "max": 10000.0},
    "ultimate_tensile_strength": {"min": 0.0, "min_exclusive": True, "max": 10000.0},
    "elongation": {"min": 0.0, "max": 200.0},
    "microhardness": {"min": 0.0, "min_exclusive": True, "max": 5000.0},
    "nanohardness": {"min": 0.0, "min_exclusive": True, "max": 5000.0},
    "deposition_efficiency": {"min": 0.0, "min_exclusive": True, "max": 100.0},
}


def string_similarity(a: str, b: str) -> float:
    """Similarity of two short strings in [0, 1].

    Both sides are stripped of surrounding whitespace and case-folded, then
    compared with the matching-blocks ratio 2*M / (len(a) + len(b)).
    Equal-after-normalization strings score 1.0; two empty strings score 1.0.
    """
    a_norm = a.strip().casefold()
    b_norm = b.strip().casefold()
    if not a_norm and not b_norm:
        return 1.0
    return SequenceMatcher(None, a_norm, b_norm).ratio()


class FlagStage(str, Enum):
    SYNTAX = "syntax"
    COMPLETENESS = "completeness"
    OUTLIER = "outlier"
    COVERAGE = "coverage"
    MANUAL_OTHER = "manual_other"


class Resolution(str, Enum):
    OPEN = "open"
    AUTO_REPAIRED = "auto_repaired"
    RELABELED = "relabeled"
    INSPECTED_KEPT = "inspected_kept"
    EXCLUDED = "excluded"


# Stage-conditional terminal states reachable from OPEN.
_TRANSITIONS: dict[Resolution, Callable[[FlagStage], bool]] = {
    Resolution.AUTO_REPAIRED: lambda stage: stage is FlagStage.COMPLETENESS,
    Resolution.RELABELED: lambda stage: True,
    Resolution.INSPECTED_KEPT: lambda stage: stage is FlagStage.OUTLIER,
    Resolution.EXCLUDED: lambda stage: True,
}


class FlagTransitionError(ValueError):
    """Raised on a resolution the flag state machine does not allow."""


def check_transition(stage: FlagStage, current: Resolution, new: Resolution) -> None:
    if current is not Resolution.OPEN:
        raise FlagTransitionError(f"flag already resolved as {current.value}")
    guard = _TRANSITIONS.get(new)
    if guard is None:
        raise FlagTransitionError(f"{new.value} is not a resolution")
    if not guard(stage):
        raise FlagTransitionError(f"{new.value} not allowed for stage {stage.value}")


@dataclass
class FlagReport:
    flag_id: str
    stage: FlagStage
    article_id: str
    detail: dict[str, Any] = dc_field(default_factory=dict)
    resolution: Resolution = Resolution.OPEN
    created_at: str = ""

    @classmethod
    def new(cls, stage: FlagStage, article_id: str, detail: dict[str, Any],
            id_detail: Optional[dict[str, Any]] = None) -> "FlagReport":
        # Content-derived id: the same finding on the same article always
        # gets the same flag, so re-running a stage never duplicates flags.
        # ``id_detail`` narrows the hashed content to the durable part of a
        # finding when the full detail carries run-dependent statistics.
        basis_detail = detail if id_detail is None else id_detail
        basis = "\x00".join(
            [stage.value, article_id,
             json.dumps(basis_detail, ensure_ascii=False, sort_keys=True)]
        )
        flag_id = hashlib.sha256(basis.encode("utf-8")).hexdigest()[:12]
        return cls(flag_id=flag_id, stage=stage, article_id=article_id, detail=detail)

    def to_dict(self) -> dict[str, Any]:
        return {
            "flag_id": self.flag_id,
            "stage": self.stage.value,
            "article_id": self.article_id,
            "detail": self.detail,
            "resolution": self.resolution.value,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FlagReport":
        return cls(
            flag_id=data["flag_id"],
            stage=FlagStage(data["stage"]),
            article_id=data["article_id"],
            detail=dict(data.get("detail", {})),
            resolution=Resolution(data.get("resolution", "open")),
            created_at=data.get("created_at", ""),
        )


# --------------------------------------------------------------------------
# stage 1: response syntax


def stage1_syntax(article_id: str, *, parse_ok: bool, truncated: bool = False,
                  structure_ok: bool = True, error: str = "") -> Optional[FlagReport]:
    """Flag malformed, truncated, or structurally invalid responses."""
    problems = []
    if truncated:
        problems.append("response truncated before completion")
    if not parse_ok:
        problems.append(error or "no parseable payload in response")
    elif not structure_ok:
        problems.append(error or "payload is not a list of record objects")
    if not problems:
        return None
    return FlagReport.new(FlagStage.SYNTAX, article_id, {"problems": problems})


# --------------------------------------------------------------------------
# stage 2: completeness and key realignment


@dataclass
class RealignmentResult:
    record: ExperimentRecord
    gate_fills: list[str] = dc_field(default_factory=list)
    realigned: dict[str, str] = dc_field(default_factory=dict)  # extra key -> schema key
    rejected_ties: list[str] = dc_field(default_factory=list)
    missing: list[str] = dc_field(default_factory=list)
    extra: list[str] = dc_field(default_factory=list)

    @property
    def compliant(self) -> bool:
        return not self.missing and not self.extra

    @property
    def repaired(self) -> bool:
        return bool(self.gate_fills or self.realigned)


def _fill_gated_params(record: ExperimentRecord, schema: SchemaDefinition) -> list[str]:
    """Fill omitted sub-process parameters as empty when the gate is false."""
    fills = []
    for group, members in schema.subprocess_groups().items():
        gate = schema.group_gate(group)
        gate_val = record.values.get(gate.name)
        if gate_val is None or gate_val.as_bool() is not False:
            continue
        for member in members:
            if member.name != gate.name and member.name not in record.values:
                record.values[member.name] = FieldValue.empty()
                fills.append(member.name)
    return fills


def _propose_realignments(extra: Sequence[str], missing: Sequence[str],
                          threshold: float) -> tuple[dict[str, str], list[str]]:
    """Match extra keys onto missing schema keys by string similarity.

    Each extra key gets its best-scoring missing key at or above the
    threshold (ties between missing keys broken lexicographically). A missing
    key claimed by several extras goes to the highest-scoring one; an exact
    score tie rejects every contender for that key.
    """
    best: dict[str, tuple[float, str]] = {}
    for ex in extra:
        scored = sorted(
            ((string_similarity(ex, miss), miss) for miss in missing),
            key=lambda pair: (-pair[0], pair[1]),
        )
        if scored and scored[0][0] >= threshold:
            best[ex] = (scored[0][0], scored[0][1])
    by_target: dict[str, list[tuple[float, str]]] = {}
    for ex, (score, target) in best.items():
        by_target.setdefault(target, []).append((score, ex))
    accepted: dict[str, str] = {}
    rejected: list[str] = []
    for target, contenders in by_target.items():
        contenders.sort(key=lambda pair: (-pair[0], pair[1]))
        if len(contenders) > 1 and contenders[0][0] == contenders[1][0]:
            rejected.extend(ex for _, ex in contenders)
            continue
        accepted[contenders[0][1]] = target
        rejected.extend(ex for _, ex in contenders[1:])
    return accepted, sorted(rejected)


def realign_record(record: ExperimentRecord, schema: SchemaDefinition,
                   threshold: float = REALIGN_THRESHOLD) -> RealignmentResult:
    """Auto-repair one record in place: gate fills, then key realignment."""
    result = RealignmentResult(record=record)
    result.gate_fills = _fill_gated_params(record, schema)
    outcome = validate_record(record, schema)
    if outcome.status != "noncompliant":
        return result
    accepted, _rejected = _propose_realignments(outcome.extra, outcome.missing, threshold)
    result.rejected_ties = _rejected
    for extra_key, schema_key in sorted(accepted.items()):
        record.values[schema_key] = record.values.pop(extra_key)
        result.realigned[extra_key] = schema_key
    outcome = validate_record(record, schema)
    if outcome.status == "noncompliant":
        result.missing = outcome.missing
        result.extra = outcome.extra
    return result


def stage2_completeness(article_id: str, records: Sequence[ExperimentRecord],
                        schema: SchemaDefinition,
                        threshold: float = REALIGN_THRESHOLD,
                        ) -> tuple[list[RealignmentResult], list[FlagReport]]:
    """Repair what similarity allows, flag the article for the rest.

    Returns the per-record repair results plus at most one completeness flag
    covering every record that stayed non-compliant. Repairs alone (all
    records compliant afterwards) yield a flag pre-resolved as auto_repaired
    so the repair trail survives in the flag log.
    """
    results = [realign_record(rec, schema, threshold) for rec in records]
    unresolved = [r for r in results if not r.compliant]
    flags: list[FlagReport] = []
    if unresolved:
        remaining = [
            {"record_id": r.record.record_id, "missing": r.missing, "extra": r.extra}
            for r in unresolved
        ]
        flags.append(
            FlagReport.new(
                FlagStage.COMPLETENESS,
                article_id,
                {"records": remaining, "repairs": _repair_trail(results)},
                # Repairs vanish from later re-runs once applied; only the
                # unresolved set identifies the finding.
                id_detail={"records": remaining},
            )
        )
    elif any(r.repaired for r in results):
        flag = FlagReport.new(
            FlagStage.COMPLETENESS, article_id, {"records": [], "repairs": _repair_trail(results)}
        )
        flag.resolution = Resolution.AUTO_REPAIRED
        flags.append(flag)
    return results, flags


def _repair_trail(results: Iterable[RealignmentResult]) -> list[dict[str, Any]]:
    trail = []
    for r in results:
        if r.repaired:
            trail.append(
                {
                    "record_id": r.record.record_id,
                    "gate_fills": r.gate_fills,
                    "realigned": r.realigned,
                }
            )
    return trail


# --------------------------------------------------------------------------
# stage 3: statistical outliers


def _mean_and_sample_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def _domain_violation(value: float, bounds: Mapping[str, Any]) -> bool:
    lo = bounds.get("min")
    hi = bounds.get("max")
    if lo is not None:
        if bounds.get("min_exclusive") and value <= lo:
            return True
        if not bounds.get("min_exclusive") and value < lo:
            return True
    if hi is not None:
        if bounds.get("max_exclusive") and value >= hi:
            return True
        if not bounds.get("max_exclusive") and value > hi:
            return True
    return False


def default_class_key(record: ExperimentRecord) -> Optional[str]:
    """Material class label: majority material x primary element."""
    material = record.value("Majority_Powder_Material").raw or ""
    element = record.value("Majority_Powder_Primary_Element").raw or ""
    material = material.strip().casefold()
    element = element.strip().casefold()
    if not material and not element:
        return None
    return f"{material}|{element}"


MetricReader = Callable[[ExperimentRecord, FieldSpec], Optional[float]]


def _plain_numeric(record: ExperimentRecord, spec: FieldSpec) -> Optional[float]:
    val = record.value(spec.name)
    return val.numeric if not val.is_empty else None


def stage3_outliers(records: Sequence[ExperimentRecord], schema: SchemaDefinition, *,
                    bounds: Optional[Mapping[str, Mapping[str, Any]]] = None,
                    z_threshold: float = GLOBAL_Z_THRESHOLD,
                    local_multiplier: float = LOCAL_DISTANCE_MULTIPLIER,
                    min_class_size: int = MIN_CLASS_SIZE,
                    metric_reader: MetricReader = _plain_numeric,
                    class_key: Callable[[ExperimentRecord], Optional[str]] = default_class_key,
                    ) -> list[FlagReport]:
    """Three outlier passes over unit-normalized target values.

    Pass 1 checks per-metric plausibility bounds, pass 2 flags values more
    than ``z_threshold`` sample standard deviations from the dataset mean,
    pass 3 flags records far from their material-class centroid in z-scored
    target space. Metrics with zero variance never produce z-based flags,
    and the z-based flag sets are invariant under positive rescaling of any
    metric.
    """
    bounds = bounds if bounds is not None else DEFAULT_DOMAIN_BOUNDS
    flags: list[FlagReport] = []

    # per-metric numeric views, in record order
    metric_values: dict[str, list[tuple[int, float]]] = {}
    for idx, rec in enumerate(records):
        for spec in schema.target_fields:
            value = metric_reader(rec, spec)
            if value is None:
                continue
            metric_values.setdefault(spec.metric_key or spec.name, []).append((idx, value))

    # pass 1: domain bounds
    for metric, pairs in metric_values.items():
        metric_bounds = bounds.get(metric)
        if not metric_bounds:
            continue
        for idx, value in pairs:
            if _domain_violation(value, metric_bounds):
                flags.append(
                    FlagReport.new(
                        FlagStage.OUTLIER,
                        records[idx].article_id,
                        {
                            "pass": "domain",
                            "record_id": records[idx].record_id,
                            "metric": metric,
                            "value": value,
                            "bounds": dict(metric_bounds),
                        },
                        id_detail={
                            "pass": "domain",
                            "record_id": records[idx].record_id,
                            "metric": metric,
                        },
                    )
                )

    # pass 2: global z-score; remember stats for the local pass
    stats: dict[str, tuple[float, float]] = {}
    for metric, pairs in metric_values.items():
        values = [v for _, v in pairs]
        mean, std = _mean_and_sample_std(values)
        stats[metric] = (mean, std)
        if std == 0.0:
            continue
        for idx, value in pairs:
            z = (value - mean) / std
            if abs(z) > z_threshold:
                flags.append(
                    FlagReport.new(
                        FlagStage.OUTLIER,
                        records[idx].article_id,
                        {
                            "pass": "global_z",
                            "record_id": records[idx].record_id,
                            "metric": metric,
                            "value": value,
                            "z": z,
                        },
                        # Corpus statistics drift as other articles change;
                        # the finding is still "this value on this record".
                        id_detail={
                            "pass": "global_z",
                            "record_id": records[idx].record_id,
                            "metric": metric,
                        },
                    )
                )

    # pass 3: distance from material-class centroid in z-scored target space
    z_by_record: dict[int, dict[str, float]] = {}
    for metric, pairs in metric_values.items():
        mean, std = stats[metric]
        if std == 0.0:
            continue
        for idx, value in pairs:
            z_by_record.setdefault(idx, {})[metric] = (value - mean) / std

    classes: dict[str, list[int]] = {}
    for idx, rec in enumerate(records):
        key = class_key(rec)
        if key is not None:
            classes.setdefault(key, []).append(idx)

    for key, members in classes.items():
        if len(members) < min_class_size:
            continue
        centroid: dict[str, float] = {}
        for metric in stats:
            zs = [z_by_record[m][metric] for m in members if metric in z_by_record.get(m, {})]
            if zs:
                centroid[metric] = sum(zs) / len(zs)
        distances: list[tuple[int, float]] = []
        for m in members:
            dims = [metric for metric in z_by_record.get(m, {}) if metric in centroid]
            if not dims:
                continue
            sq = sum((z_by_record[m][metric] - centroid[metric]) ** 2 for metric in dims)
            distances.append((m, math.sqrt(sq) / math.sqrt(len(dims))))
        if len(distances) < 2:
            continue
        _, spread = _mean_and_sample_std([d for _, d in distances])
        if spread == 0.0:
            continue
        for m, dist in distances:
            if dist > local_multiplier * spread:
                flags.append(
                    FlagReport.new(
                        FlagStage.OUTLIER,
                        records[m].article_id,
                        {
                            "pass": "local_class",
                            "record_id": records[m].record_id,
                            "class": key,
                            "distance": dist,
                            "spread": spread,
                        },
                        id_detail={
                            "pass": "local_class",
                            "record_id": records[m].record_id,
                            "class": key,
                        },
                    )
                )
    return flags


# --------------------------------------------------------------------------
# stage 4: coverage


@dataclass
class ExpectedCounts:
    """Reported-experiment counts promised by the article text."""

    expected_experiments: int = 0
    expected_metrics: dict[str, int] = dc_field(default_factory=dict)
    notes: str = ""

    def __post_init__(self) -> None:
        for metric, count in self.expected_metrics.items():
            if count > self.expected_experiments:
                raise ValueError(
                    f"expected count for {metric} ({count}) exceeds "
                    f"expected experiments ({self.expected_experiments})"
                )


@dataclass
class CoverageScore:
    article_id: str
    ev: float
    wev: float
    gaps: dict[str, int]
    weights: dict[str, float]
    frequencies: dict[str, int]
    expected: ExpectedCounts

    def to_dict(self) -> dict[str, Any]:
        return {
            "article_id": self.article_id,
            "ev": self.ev,
            "wev": self.wev,
            "gaps": self.gaps,
            "weights": self.weights,
            "frequencies": self.frequencies,
            "expected_experiments": self.expected.expected_experiments,
            "expected_metrics": self.expected.expected_metrics,
        }


def metric_frequencies(records: Sequence[ExperimentRecord],
                       schema: SchemaDefinition) -> dict[str, int]:
    """Dataset-wide non-empty counts per target metric."""
    freqs: dict[str, int] = {spec.metric_key or spec.name: 0 for spec in schema.target_fields}
    for rec in records:
        for spec in schema.target_fields:
            if not rec.value(spec.name).is_empty:
                freqs[spec.metric_key or spec.name] += 1
    return freqs


def coverage_score(article_id: str, article_records: Sequence[ExperimentRecord],
                   expected: ExpectedCounts, frequencies: Mapping[str, int],
                   schema: SchemaDefinition) -> CoverageScore:
    """Expectation-vs-extraction gap, raw (EV) and rarity-weighted (wEV).

    EV averages the per-metric shortfalls max(0, expected - extracted) over
    the metrics the article was expected to report. Each metric's weight is
    the mean dataset frequency over that metric's own frequency, so rare
    metrics weigh more. Articles promising experiments but no per-metric
    counts fall back to a single experiment-count gap at weight 1.
    """
    expected_metrics = {m: e for m, e in expected.expected_metrics.items() if e > 0}
    extracted_by_metric: dict[str, int] = {}
    for spec in schema.target_fields:
        key = spec.metric_key or spec.name
        extracted_by_metric[key] = sum(
            1 for rec in article_records if not rec.value(spec.name).is_empty
        )

    if not expected_metrics:
        gap = max(0, expected.expected_experiments - len(article_records))
        return CoverageScore(
            article_id=article_id,
            ev=float(gap),
            wev=float(gap),
            gaps={"__experiments__": gap} if gap else {},
            weights={"__experiments__": 1.0} if gap else {},
            frequencies=dict(frequencies),
            expected=expected,
        )

    positive_freqs = [f for f in frequencies.values() if f > 0]
    mean_freq = sum(positive_freqs) / len(positive_freqs) if positive_freqs else 1.0
    gaps: dict[str, int] = {}
    weights: dict[str, float] = {}
    for metric, exp_count in expected_metrics.items():
        gaps[metric] = max(0, exp_count - extracted_by_metric.get(metric, 0))
        weights[metric] = mean_freq / max(frequencies.get(metric, 0), 1)
    m_count = len(expected_metrics)
    ev = sum(gaps.values()) / m_count
    wev = sum(weights[m] * gaps[m] for m in expected_metrics) / m_count
    return CoverageScore(
        article_id=article_id,
        ev=ev,
        wev=wev,
        gaps=gaps,
        weights=weights,
        frequencies=dict(frequencies),
        expected=expected,
    )


def stage4_coverage(article_id: str, article_records: Sequence[ExperimentRecord],
                    expected: ExpectedCounts, frequencies: Mapping[str, int],
                    schema: SchemaDefinition,
                    threshold: float = WEV_FLAG_THRESHOLD,
                    ) -> tuple[CoverageScore, Optional[FlagReport]]:
    score = coverage_score(article_id, article_records, expected, frequencies, schema)
    if score.wev >= threshold:
        flag = FlagReport.new(
            FlagStage.COVERAGE,
            article_id,
            {"coverage": score.to_dict(), "wev": score.wev, "threshold": threshold},
            # Weights move with corpus frequencies; the integer shortfall per
            # metric is what identifies the finding.
            id_detail={"gaps": score.gaps},
        )
        return score, flag
    return score, None


# --------------------------------------------------------------------------
# review queue


_STAGE_ORDER = {
    FlagStage.SYNTAX: 0,
    FlagStage.COMPLETENESS: 1,
    FlagStage.OUTLIER: 2,
    FlagStage.COVERAGE: 3,
    FlagStage.MANUAL_OTHER: 4,
}

_SUGGESTED_ACTIONS = {
    FlagStage.SYNTAX: ["inspect_raw_response", "relabel", "exclude"],
    FlagStage.COMPLETENESS: ["accept_repairs", "relabel", "exclude"],
    FlagStage.OUTLIER: ["inspected_kept", "relabel", "exclude"],
    FlagStage.COVERAGE: ["add_missing_experiments", "relabel", "exclude"],
    FlagStage.MANUAL_OTHER: ["relabel", "exclude"],
}


@dataclass
class QueueItem:
    flag_id: str
    article_id: str
    stage: FlagStage
    title: str = ""
    wev: Optional[float] = None
    excerpt_offsets: list[int] = dc_field(default_factory=list)
    suggested_actions: list[str] = dc_field(default_factory=list)
    detail: dict[str, Any] = dc_field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "flag_id": self.flag_id,
            "article_id": self.article_id,
            "stage": self.stage.value,
            "title": self.title,
            "wev": self.wev,
            "excerpt_offsets": self.excerpt_offsets,
            "suggested_actions": self.suggested_actions,
            "detail": self.detail,
        }


def locate_terms(markdown: str, terms: Iterable[str], limit: int = 5) -> list[int]:
    """Character offsets of term occurrences, for excerpt jumping in review."""
    haystack = markdown.casefold()
    offsets: list[int] = []
    for term in terms:
        needle = str(term).casefold().strip()
        if not needle:
            continue
        pos = haystack.find(needle)
        while pos != -1 and len(offsets) < limit:
            offsets.append(pos)
            pos = haystack.find(needle, pos + 1)
    return sorted(set(offsets))[:limit]


def _flag_terms(flag: FlagReport) -> list[str]:
    detail = flag.detail
    if flag.stage is FlagStage.OUTLIER:
        value = detail.get("value")
        if value is not None:
            text = f"{value:g}" if isinstance(value, float) else str(value)
            return [text, text.split(".")[0]]
    if flag.stage is FlagStage.COVERAGE:
        return [m.replace("_", " ") for m in detail.get("coverage", {}).get("gaps", {})]
    return []


def build_queue(flags: Sequence[FlagReport],
                markdown_by_article: Optional[Mapping[str, str]] = None,
                titles: Optional[Mapping[str, str]] = None) -> list[QueueItem]:
    """Open flags ordered by stage, then descending weighted coverage gap."""
    items: list[QueueItem] = []
    for flag in flags:
        if flag.resolution is not Resolution.OPEN:
            continue
        wev = flag.detail.get("wev")
        markdown = (markdown_by_article or {}).get(flag.article_id, "")
        items.append(
            QueueItem(
                flag_id=flag.flag_id,
                article_id=flag.article_id,
                stage=flag.stage,
                title=(titles or {}).get(flag.article_id, ""),
                wev=wev,
                excerpt_offsets=locate_terms(markdown, _flag_terms(flag)) if markdown else [],
                suggested_actions=list(_SUGGESTED_ACTIONS[flag.stage]),
                detail=flag.detail,
            )
        )
    items.sort(
        key=lambda it: (
            _STAGE_ORDER[it.stage],
            -(it.wev if it.wev is not None else 0.0),
            it.article_id,
            it.flag_id,
        )
    )
    return items
