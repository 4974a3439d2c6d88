"""Experiment record schema: field definitions, typed values, validation.

The schema is data, not code: it ships as a YAML config (see
``data/schema_default.yaml``) and everything downstream -- prompt rendering,
validation, flagging, export -- is driven off the loaded definition.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import yaml

logger = logging.getLogger(__name__)

# Fields whose parsed numeric carries a unit belong to exactly one of these
# families; each family has one canonical unit (see postprocess.units).
UNIT_FAMILIES = frozenset(
    {
        "strength",
        "modulus",
        "length_mm",
        "length_um",
        "temperature",
        "gas_flow",
        "traverse_speed",
        "angle",
        "percent",
        "hardness",
        "dimensionless",
    }
)


class FieldKind(str, Enum):
    NUMERIC = "numeric"
    TEXT = "text"
    BOOLEAN = "boolean"
    CATEGORICAL = "categorical"


class Validity(str, Enum):
    OK = "ok"
    INVALID = "invalid"
    EMPTY = "empty"


class UncertaintyKind(str, Enum):
    PLUS_MINUS = "plus_minus"
    STD_DEV = "std_dev"
    STD_ERR = "std_err"
    CONF_INTERVAL = "conf_interval"
    ERROR_BAR = "error_bar"


class Provenance(str, Enum):
    LLM = "llm"
    HUMAN = "human"
    HYBRID = "hybrid"


class LabelStatus(str, Enum):
    UNLABELED = "unlabeled"
    LLM_LABELED = "llm_labeled"
    FLAGGED = "flagged"
    HUMAN_VERIFIED = "human_verified"
    EXCLUDED = "excluded"


class SchemaError(ValueError):
    """Raised when a schema config is internally inconsistent."""


@dataclass(frozen=True)
class FieldSpec:
    """Definition of one schema field.

    Args:
        name: Unique field name; also the JSON/CSV column name.
        kind: Value kind, one of FieldKind.
        unit_family: Unit family for numeric fields that carry units.
        target_metric: True for the material-property fields the pipeline
            is built to recover.
        metric_key: Short stable key (e.g. "porosity") for target metrics.
        subprocess_group: Group name for gated sub-process parameter blocks.
        gate: True for the single boolean switch of a sub-process group.
        unit_field: Name of the companion field holding the reported unit.
        uncertainty_field: Name of the companion numeric uncertainty field.
    """

    name: str
    kind: FieldKind
    unit_family: Optional[str] = None
    target_metric: bool = False
    metric_key: Optional[str] = None
    subprocess_group: Optional[str] = None
    gate: bool = False
    unit_field: Optional[str] = None
    uncertainty_field: Optional[str] = None
    description: str = ""


@dataclass(frozen=True)
class SchemaDefinition:
    """Immutable, validated collection of FieldSpecs."""

    version: str
    fields: tuple[FieldSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_name", {f.name: f for f in self.fields})

    def __len__(self) -> int:
        return len(self.fields)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name  # type: ignore[attr-defined]

    def __getitem__(self, name: str) -> FieldSpec:
        return self._by_name[name]  # type: ignore[attr-defined]

    def get(self, name: str) -> Optional[FieldSpec]:
        return self._by_name.get(name)  # type: ignore[attr-defined]

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    @property
    def target_fields(self) -> tuple[FieldSpec, ...]:
        return tuple(f for f in self.fields if f.target_metric)

    def metric_field(self, metric_key: str) -> FieldSpec:
        for f in self.fields:
            if f.metric_key == metric_key:
                return f
        raise KeyError(metric_key)

    @property
    def metric_keys(self) -> tuple[str, ...]:
        return tuple(f.metric_key for f in self.target_fields if f.metric_key)

    def subprocess_groups(self) -> dict[str, list[FieldSpec]]:
        groups: dict[str, list[FieldSpec]] = {}
        for f in self.fields:
            if f.subprocess_group:
                groups.setdefault(f.subprocess_group, []).append(f)
        return groups

    def group_gate(self, group: str) -> FieldSpec:
        for f in self.fields:
            if f.subprocess_group == group and f.gate:
                return f
        raise KeyError(group)


def _validate(schema: SchemaDefinition) -> None:
    seen: set[str] = set()
    for f in schema.fields:
        if f.name in seen:
            raise SchemaError(f"duplicate field name: {f.name}")
        seen.add(f.name)
        if f.unit_family is not None:
            if f.kind is not FieldKind.NUMERIC:
                raise SchemaError(f"{f.name}: unit_family on non-numeric field")
            if f.unit_family not in UNIT_FAMILIES:
                raise SchemaError(f"{f.name}: unknown unit_family {f.unit_family!r}")
        if f.target_metric and f.kind is not FieldKind.NUMERIC:
            raise SchemaError(f"{f.name}: target metric must be numeric")
        if f.gate and f.kind is not FieldKind.BOOLEAN:
            raise SchemaError(f"{f.name}: gate field must be boolean")
        if f.gate and not f.subprocess_group:
            raise SchemaError(f"{f.name}: gate without subprocess_group")
    for f in schema.fields:
        for ref_attr in ("unit_field", "uncertainty_field"):
            ref = getattr(f, ref_attr)
            if ref is None:
                continue
            if ref not in seen:
                raise SchemaError(f"{f.name}: {ref_attr} references unknown field {ref!r}")
            if ref_attr == "uncertainty_field" and schema[ref].kind is not FieldKind.NUMERIC:
                raise SchemaError(f"{f.name}: uncertainty_field {ref!r} is not numeric")
    for group, members in schema.subprocess_groups().items():
        gates = [f for f in members if f.gate]
        if len(gates) != 1:
            raise SchemaError(f"sub-process group {group!r} has {len(gates)} gates, wants 1")
        if len(members) < 2:
            raise SchemaError(f"sub-process group {group!r} has no parameter fields")


def load_schema(path: str | Path | None = None) -> SchemaDefinition:
    """Load and validate a schema config.

    Args:
        path: YAML schema file; defaults to the packaged schema.

    Returns:
        A validated SchemaDefinition.

    Raises:
        SchemaError: on duplicate names, unknown kinds/families, dangling
            companion references, or malformed sub-process groups.
    """
    if path is None:
        path = Path(__file__).parent / "data" / "schema_default.yaml"
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "fields" not in doc:
        raise SchemaError(f"{path}: expected a mapping with a 'fields' list")
    fields = []
    for entry in doc["fields"]:
        try:
            kind = FieldKind(entry["kind"])
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"{entry.get('name', '?')}: bad kind: {exc}") from exc
        fields.append(
            FieldSpec(
                name=entry["name"],
                kind=kind,
                unit_family=entry.get("unit_family"),
                target_metric=bool(entry.get("target_metric", False)),
                metric_key=entry.get("metric_key"),
                subprocess_group=entry.get("subprocess"),
                gate=bool(entry.get("gate", False)),
                unit_field=entry.get("unit_field"),
                uncertainty_field=entry.get("uncertainty_field"),
                description=entry.get("description", ""),
            )
        )
    schema = SchemaDefinition(version=str(doc.get("version", "0")), fields=tuple(fields))
    _validate(schema)
    logger.debug("loaded schema v%s with %d fields from %s", schema.version, len(schema), path)
    return schema


@dataclass
class FieldValue:
    """One extracted value: as-reported text plus the parsed view.

    An empty value is an explicit FieldValue with validity EMPTY, never a
    missing key. ``raw`` survives every normalization step untouched.
    """

    raw: Optional[str] = None
    numeric: Optional[float] = None
    uncertainty: Optional[float] = None
    uncertainty_kind: Optional[UncertaintyKind] = None
    unit: Optional[str] = None
    validity: Validity = Validity.EMPTY

    @classmethod
    def empty(cls) -> "FieldValue":
        return cls()

    @property
    def is_empty(self) -> bool:
        return self.validity is Validity.EMPTY

    def as_bool(self) -> Optional[bool]:
        if self.raw is None:
            return None
        text = self.raw.strip().lower()
        if text in ("true", "yes", "1"):
            return True
        if text in ("false", "no", "0"):
            return False
        return None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"validity": self.validity.value}
        if self.raw is not None:
            out["raw"] = self.raw
        if self.numeric is not None:
            out["numeric"] = self.numeric
        if self.uncertainty is not None:
            out["uncertainty"] = self.uncertainty
        if self.uncertainty_kind is not None:
            out["uncertainty_kind"] = self.uncertainty_kind.value
        if self.unit is not None:
            out["unit"] = self.unit
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FieldValue":
        kind = data.get("uncertainty_kind")
        return cls(
            raw=data.get("raw"),
            numeric=data.get("numeric"),
            uncertainty=data.get("uncertainty"),
            uncertainty_kind=UncertaintyKind(kind) if kind else None,
            unit=data.get("unit"),
            validity=Validity(data.get("validity", "empty")),
        )

    @classmethod
    def from_raw(cls, value: Any) -> "FieldValue":
        """Wrap a raw extracted value (string/number/bool/None) untouched."""
        if value is None or (isinstance(value, str) and not value.strip()):
            return cls.empty()
        if isinstance(value, bool):
            return cls(raw="true" if value else "false", validity=Validity.OK)
        if isinstance(value, (int, float)):
            return cls(raw=_fmt_number(value), numeric=float(value), validity=Validity.OK)
        return cls(raw=str(value), validity=Validity.OK)


def _fmt_number(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


@dataclass
class ExperimentRecord:
    """One experiment's labeled values, keyed by schema field name.

    Candidate records fresh from extraction may carry non-schema keys; those
    survive verbatim in ``values`` until completeness checking repairs or
    flags them.
    """

    record_id: str
    article_id: str
    provenance: Provenance = Provenance.LLM
    values: dict[str, FieldValue] = dc_field(default_factory=dict)
    nonstandard_method_flags: list[dict[str, str]] = dc_field(default_factory=list)

    def value(self, field_name: str) -> FieldValue:
        return self.values.get(field_name, FieldValue.empty())

    def non_empty_fields(self) -> list[str]:
        return [k for k, v in self.values.items() if not v.is_empty]


@dataclass
class ArticleMetadata:
    title: str = ""
    authors: tuple[str, ...] = ()
    venue: str = ""
    year: Optional[int] = None
    doi: str = ""
    source_link: str = ""

    @property
    def has_link(self) -> bool:
        return bool(self.doi or self.source_link)

    def to_dict(self) -> dict[str, Any]:
        return {
            "title": self.title,
            "authors": list(self.authors),
            "venue": self.venue,
            "year": self.year,
            "doi": self.doi,
            "source_link": self.source_link,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ArticleMetadata":
        return cls(
            title=data.get("title", ""),
            authors=tuple(data.get("authors", ())),
            venue=data.get("venue", ""),
            year=data.get("year"),
            doi=data.get("doi", ""),
            source_link=data.get("source_link", ""),
        )


@dataclass
class ArticleRecord:
    article_id: str
    content_hash: str
    markdown: str = ""
    metadata: ArticleMetadata = dc_field(default_factory=ArticleMetadata)
    label_status: LabelStatus = LabelStatus.UNLABELED


@dataclass
class ValidationOutcome:
    """Result of checking a record against the schema.

    ``missing`` and ``extra`` are reported together so a mis-keyed field
    shows up as one missing name plus one extra name.
    """

    status: str  # compliant | noncompliant | empty_targets
    missing: list[str] = dc_field(default_factory=list)
    extra: list[str] = dc_field(default_factory=list)

    @property
    def compliant(self) -> bool:
        return self.status == "compliant"


def validate_record(record: ExperimentRecord, schema: SchemaDefinition) -> ValidationOutcome:
    """Check key-set compliance and target coverage of one record.

    Returns:
        ValidationOutcome with status "noncompliant" (listing missing and
        extra keys), "empty_targets" (schema-compliant but no target metric
        has a value), or "compliant".
    """
    keys = set(record.values)
    schema_keys = set(schema.field_names)
    missing = sorted(schema_keys - keys)
    extra = sorted(keys - schema_keys)
    if missing or extra:
        return ValidationOutcome(status="noncompliant", missing=missing, extra=extra)
    if all(record.value(f.name).is_empty for f in schema.target_fields):
        return ValidationOutcome(status="empty_targets")
    return ValidationOutcome(status="compliant")


def serialize_record(record: ExperimentRecord) -> dict[str, Any]:
    """Record -> plain dict, round-trip exact (parse_record inverts it)."""
    return {
        "record_id": record.record_id,
        "article_id": record.article_id,
        "provenance": record.provenance.value,
        "values": {k: v.to_dict() for k, v in record.values.items()},
        "nonstandard_method_flags": list(record.nonstandard_method_flags),
    }


def parse_record(data: Mapping[str, Any]) -> ExperimentRecord:
    return ExperimentRecord(
        record_id=data["record_id"],
        article_id=data["article_id"],
        provenance=Provenance(data.get("provenance", "llm")),
        values={k: FieldValue.from_dict(v) for k, v in data.get("values", {}).items()},
        nonstandard_method_flags=list(data.get("nonstandard_method_flags", [])),
    )


def record_to_json(record: ExperimentRecord) -> str:
    return json.dumps(serialize_record(record), sort_keys=True, ensure_ascii=False)


def record_from_json(text: str) -> ExperimentRecord:
    return parse_record(json.loads(text))


def blank_record(record_id: str, article_id: str, schema: SchemaDefinition,
                 provenance: Provenance = Provenance.HUMAN) -> ExperimentRecord:
    """A fully-keyed record with every field explicitly empty."""
    return ExperimentRecord(
        record_id=record_id,
        article_id=article_id,
        provenance=provenance,
        values={name: FieldValue.empty() for name in schema.field_names},
    )


def coerce_candidate(payload: Mapping[str, Any], record_id: str, article_id: str,
                     schema: SchemaDefinition) -> ExperimentRecord:
    """Build a candidate record from one extracted JSON object.

    Every payload key is preserved verbatim (schema or not); schema fields
    absent from the payload are NOT filled in, so completeness checking can
    see exactly what the extraction produced.
    """
    values = {str(k): FieldValue.from_raw(v) for k, v in payload.items()}
    return ExperimentRecord(
        record_id=record_id,
        article_id=article_id,
        provenance=Provenance.LLM,
        values=values,
    )


def iter_metric_values(records: Iterable[ExperimentRecord], schema: SchemaDefinition,
                       metric_key: str) -> list[tuple[ExperimentRecord, FieldValue]]:
    field_name = schema.metric_field(metric_key).name
    out = []
    for rec in records:
        val = rec.value(field_name)
        if not val.is_empty:
            out.append((rec, val))
    return out
