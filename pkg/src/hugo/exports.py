"""Dataset export: flat CSV, full-fidelity JSONL, and a manifest.

Two views of the same records can be written: ``raw`` keeps values exactly
as labeled, ``normalized`` adds canonical units, accepted vocabulary
mappings, and derived powder composition columns. The ``gold`` subset
restricts to human-verified records. Exports refuse to run while any
article lacks both a DOI and a source link.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .postprocess.composition import (
    CompositionError,
    CompositionVector,
    ElementTable,
    NominalCompositionTable,
    blend,
    expand_to_vector,
    extract_ratio_numbers,
    impute_known_composition,
    parse_composition,
    to_wt_basis,
)
from .postprocess.mappings import MappingTable
from .postprocess.units import UnitRules, normalize_record
from .schema import (
    ArticleRecord,
    ExperimentRecord,
    FieldKind,
    Provenance,
    SchemaDefinition,
    serialize_record,
)

logger = logging.getLogger(__name__)

# Free-text answers longer than this need a paraphrase check before the
# dataset can be shared, to keep source wording out of the release.
PARAPHRASE_REVIEW_CHARS = 30

_TIER_FIELDS = (
    ("Majority_Powder_Material", "Majority_Powder_Composition"),
    ("Secondary_Powder_Material", "Secondary_Powder_Composition"),
    ("Tertiary_Powder_Material", "Tertiary_Powder_Composition"),
)
_BLEND_RATIO_FIELD = "Powder_Blend_Ratio"


class ExportError(RuntimeError):
    def __init__(self, message: str, offenders: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.offenders = list(offenders)


@dataclass
class CompositionOutcome:
    """Final wt-basis composition for one record, if one can be derived."""

    vector: Optional[CompositionVector] = None
    notes: list[str] = dc_field(default_factory=list)
    components: int = 0

    @property
    def lineage(self) -> str:
        return self.vector.lineage.value if self.vector else ""


def derive_composition(record: ExperimentRecord, elements: ElementTable,
                       nominal: NominalCompositionTable) -> CompositionOutcome:
    """Resolve a record's powder tiers into one wt-basis element vector.

    Each tier uses its reported composition when present, otherwise a
    nominal composition imputed from the material name. Multiple tiers
    are mass-blended by the reported ratio; a ratio naming more
    components than the record has tiers gets its surplus folded into
    the last slot.
    """
    outcome = CompositionOutcome()
    vectors: list[CompositionVector] = []
    for material_field, comp_field in _TIER_FIELDS:
        comp_text = (record.value(comp_field).raw or "").strip()
        material = (record.value(material_field).raw or "").strip()
        if comp_text:
            try:
                parsed = parse_composition(comp_text, elements)
                vectors.append(to_wt_basis(expand_to_vector(parsed, elements), elements))
            except CompositionError as exc:
                outcome.notes.append(f"{comp_field}: {exc}")
        elif material:
            imputed = impute_known_composition(material, "", nominal, elements)
            if imputed is not None:
                vectors.append(imputed)
            else:
                outcome.notes.append(f"{material_field}: no nominal composition for {material!r}")
    outcome.components = len(vectors)
    if not vectors:
        return outcome
    if len(vectors) == 1:
        outcome.vector = vectors[0]
        return outcome
    ratio_text = (record.value(_BLEND_RATIO_FIELD).raw or "").strip()
    if not ratio_text:
        outcome.notes.append("blend ratio missing for multi-component powder")
        return outcome
    ratios = extract_ratio_numbers(ratio_text)
    if len(ratios) > len(vectors):
        folded = len(ratios) - len(vectors) + 1
        ratios = ratios[: len(vectors) - 1] + [sum(ratios[len(vectors) - 1 :])]
        outcome.notes.append(f"folded {folded} trailing ratio terms into the last component")
    if len(ratios) != len(vectors) or sum(ratios) <= 0:
        outcome.notes.append(f"cannot read a {len(vectors)}-way ratio from {ratio_text!r}")
        return outcome
    outcome.vector = blend(vectors, ratios, elements)
    return outcome


# --------------------------------------------------------------------------
# row assembly


def _fmt(value: float) -> str:
    return format(value, ".10g")


def _base_columns() -> list[str]:
    return ["record_id", "article_id", "provenance", "title", "doi", "source_link"]


def _field_columns(schema: SchemaDefinition) -> list[str]:
    cols: list[str] = []
    for spec in schema.fields:
        cols.append(spec.name)
        if spec.kind is FieldKind.NUMERIC:
            cols.append(f"{spec.name}__unit")
            cols.append(f"{spec.name}__uncertainty")
    return cols


def _mapped_fields(mapping_table: Optional[MappingTable]) -> list[str]:
    if mapping_table is None:
        return []
    return sorted(f for f, aliases in mapping_table.accepted.items() if aliases)


def export_columns(schema: SchemaDefinition, view: str,
                   mapping_table: Optional[MappingTable] = None,
                   elements: Optional[ElementTable] = None) -> list[str]:
    cols = _base_columns() + _field_columns(schema)
    if view == "normalized":
        cols += [f"{f}__canonical" for f in _mapped_fields(mapping_table)]
        cols.append("Composition_Lineage")
        if elements is not None:
            cols += [f"Composition_Wt_{sym}" for sym in elements.symbols]
    return cols


def paraphrase_fields(record: ExperimentRecord, schema: SchemaDefinition) -> list[str]:
    """Names of free-text fields long enough to need a paraphrase check."""
    out = []
    for spec in schema.fields:
        if spec.kind not in (FieldKind.TEXT, FieldKind.CATEGORICAL):
            continue
        raw = record.value(spec.name).raw or ""
        if len(raw) > PARAPHRASE_REVIEW_CHARS:
            out.append(spec.name)
    return out


@dataclass
class ExportRow:
    record: ExperimentRecord
    article: ArticleRecord
    canonical: dict[str, str] = dc_field(default_factory=dict)
    composition: Optional[CompositionOutcome] = None
    paraphrase: list[str] = dc_field(default_factory=list)

    def csv_cells(self, schema: SchemaDefinition, view: str,
                  mapped_fields: Sequence[str],
                  elements: Optional[ElementTable]) -> list[str]:
        meta = self.article.metadata
        cells = [
            self.record.record_id,
            self.record.article_id,
            self.record.provenance.value,
            meta.title,
            meta.doi,
            meta.source_link,
        ]
        for spec in schema.fields:
            value = self.record.value(spec.name)
            if spec.kind is FieldKind.NUMERIC:
                if view == "normalized":
                    cells.append("" if value.numeric is None else _fmt(value.numeric))
                else:
                    cells.append(value.raw)
                cells.append(value.unit or "")
                cells.append("" if value.uncertainty is None else _fmt(value.uncertainty))
            else:
                cells.append(value.raw)
        if view == "normalized":
            for field_name in mapped_fields:
                cells.append(self.canonical.get(field_name, ""))
            outcome = self.composition or CompositionOutcome()
            cells.append(outcome.lineage)
            if elements is not None:
                if outcome.vector is not None:
                    cells += [_fmt(v) for v in outcome.vector.slot_row(elements)]
                else:
                    cells += [""] * len(elements.symbols)
        return cells

    def jsonl_payload(self, view: str) -> dict[str, Any]:
        meta = self.article.metadata
        payload: dict[str, Any] = {
            "record": serialize_record(self.record),
            "article": {
                "title": meta.title,
                "doi": meta.doi,
                "source_link": meta.source_link,
                "year": meta.year,
            },
            "paraphrase_review": self.paraphrase,
        }
        if view == "normalized":
            payload["canonical"] = self.canonical
            if self.composition and self.composition.vector is not None:
                vec = self.composition.vector
                payload["composition"] = {
                    "basis": vec.basis,
                    "lineage": vec.lineage.value,
                    "fractions": {k: v for k, v in sorted(vec.nonzero().items())},
                }
            if self.composition and self.composition.notes:
                payload["composition_notes"] = self.composition.notes
        return payload


def _apply_canonical(record: ExperimentRecord, mapping_table: MappingTable,
                     mapped_fields: Sequence[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for field_name in mapped_fields:
        raw = record.value(field_name).raw
        if not raw:
            continue
        canonical = mapping_table.canonical_for(field_name, raw)
        # unmapped values pass through unchanged rather than dropping out
        out[field_name] = canonical if canonical is not None else raw
    return out


def build_rows(records: Sequence[ExperimentRecord], articles: Mapping[str, ArticleRecord],
               schema: SchemaDefinition, view: str,
               unit_rules: Optional[UnitRules] = None,
               mapping_table: Optional[MappingTable] = None,
               elements: Optional[ElementTable] = None,
               nominal: Optional[NominalCompositionTable] = None) -> list[ExportRow]:
    if view not in ("raw", "normalized"):
        raise ExportError(f"unknown view {view!r}")
    mapped = _mapped_fields(mapping_table)
    rows = []
    for rec in records:
        article = articles.get(rec.article_id)
        if article is None:
            raise ExportError(f"record {rec.record_id} references unknown article {rec.article_id}")
        out_rec = rec
        canonical: dict[str, str] = {}
        composition: Optional[CompositionOutcome] = None
        if view == "normalized":
            if unit_rules is not None:
                out_rec = normalize_record(rec, schema, unit_rules)
            if mapping_table is not None:
                canonical = _apply_canonical(out_rec, mapping_table, mapped)
            if elements is not None and nominal is not None:
                composition = derive_composition(out_rec, elements, nominal)
        rows.append(
            ExportRow(
                record=out_rec,
                article=article,
                canonical=canonical,
                composition=composition,
                paraphrase=paraphrase_fields(out_rec, schema),
            )
        )
    return rows


def check_links(articles: Sequence[ArticleRecord]) -> None:
    offenders = sorted(a.article_id for a in articles if not a.metadata.has_link)
    if offenders:
        raise ExportError(
            "articles without a DOI or source link: " + ", ".join(offenders), offenders
        )


def write_export(out_dir: str | Path, records: Sequence[ExperimentRecord],
                 articles: Sequence[ArticleRecord], schema: SchemaDefinition,
                 view: str = "raw", subset: str = "all",
                 unit_rules: Optional[UnitRules] = None,
                 mapping_table: Optional[MappingTable] = None,
                 elements: Optional[ElementTable] = None,
                 nominal: Optional[NominalCompositionTable] = None,
                 snapshot_id: Optional[str] = None,
                 schema_version: str = "") -> dict[str, Path]:
    """Write records.csv, records.jsonl, and manifest.json into ``out_dir``.

    Returns the paths keyed by artifact name. Fails before writing
    anything if an exported article lacks both DOI and source link.
    """
    if subset == "gold":
        records = [r for r in records if r.provenance is Provenance.HUMAN]
    elif subset != "all":
        raise ExportError(f"unknown subset {subset!r}")
    article_index = {a.article_id: a for a in articles}
    used_ids = sorted({r.article_id for r in records})
    missing = [aid for aid in used_ids if aid not in article_index]
    if missing:
        raise ExportError("records reference unknown articles: " + ", ".join(missing), missing)
    check_links([article_index[aid] for aid in used_ids])

    rows = build_rows(records, article_index, schema, view, unit_rules=unit_rules,
                      mapping_table=mapping_table, elements=elements, nominal=nominal)
    rows.sort(key=lambda r: r.record.record_id)
    columns = export_columns(schema, view, mapping_table, elements)
    mapped = _mapped_fields(mapping_table)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "records.csv"
    jsonl_path = out / "records.jsonl"
    manifest_path = out / "manifest.json"

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row.csv_cells(schema, view, mapped, elements))

    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row.jsonl_payload(view), ensure_ascii=False, sort_keys=True))
            fh.write("\n")

    paraphrase = [
        {
            "record_id": row.record.record_id,
            "field": field_name,
            "chars": len(row.record.value(field_name).raw),
        }
        for row in rows
        for field_name in row.paraphrase
    ]
    manifest = {
        "view": view,
        "subset": subset,
        "schema_version": schema_version or schema.version,
        "mapping_version": mapping_table.version if mapping_table else 0,
        "snapshot_id": snapshot_id,
        "records": len(rows),
        "articles": len(used_ids),
        "columns": columns,
        "paraphrase_review": paraphrase,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")

    logger.info("exported %d records (%s/%s) to %s", len(rows), view, subset, out)
    return {"csv": csv_path, "jsonl": jsonl_path, "manifest": manifest_path}


# --------------------------------------------------------------------------
# dataset statistics


def _uncertainty_present(record: ExperimentRecord, schema: SchemaDefinition,
                         field_name: str) -> bool:
    value = record.value(field_name)
    if value.uncertainty is not None:
        return True
    spec = schema[field_name]
    if spec.uncertainty_field:
        return not record.value(spec.uncertainty_field).is_empty
    return False


def dataset_stats(records: Sequence[ExperimentRecord], schema: SchemaDefinition,
                  n_articles: Optional[int] = None) -> dict[str, Any]:
    """Per-metric value counts split by provenance, plus uncertainty rates."""
    provenances = [p.value for p in Provenance]
    by_prov = {p: 0 for p in provenances}
    for rec in records:
        by_prov[rec.provenance.value] += 1
    metrics: dict[str, Any] = {}
    for key in schema.metric_keys:
        spec = schema.metric_field(key)
        total = 0
        prov_counts = {p: 0 for p in provenances}
        with_unc = 0
        for rec in records:
            if rec.value(spec.name).is_empty:
                continue
            total += 1
            prov_counts[rec.provenance.value] += 1
            if _uncertainty_present(rec, schema, spec.name):
                with_unc += 1
        metrics[key] = {
            "field": spec.name,
            "total": total,
            "by_provenance": prov_counts,
            "with_uncertainty": with_unc,
            "uncertainty_fraction": (with_unc / total) if total else 0.0,
        }
    return {
        "articles": n_articles if n_articles is not None else len({r.article_id for r in records}),
        "records": {"total": len(records), "by_provenance": by_prov},
        "metrics": metrics,
    }
