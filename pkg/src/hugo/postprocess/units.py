"""Unit normalization onto per-family canonical units.

Conversion factors live in a YAML config (``data/unit_rules.yaml``), not in
code. Parsing handles ranges (mean of endpoints), inequality bounds, and
plus/minus uncertainties; anything it cannot read becomes validity=invalid
with the raw text untouched. Values are never guessed.
"""

from __future__ import annotations

import copy
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from ..schema import (
    ExperimentRecord,
    FieldKind,
    FieldValue,
    SchemaDefinition,
    UncertaintyKind,
    Validity,
)

logger = logging.getLogger(__name__)

_NUM = r"[+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?"
_PLAIN_RE = re.compile(rf"^({_NUM})\s*(.*)$")
_PM_RE = re.compile(rf"^({_NUM})\s*(?:±|\+/-|\+-)\s*({_NUM})\s*(.*)$")
_INEQ_RE = re.compile(rf"^(<=|>=|≤|≥|<|>)\s*({_NUM})\s*(.*)$")
_RANGE_RE = re.compile(rf"^({_NUM})\s*(?:–|—|−|to|-)\s*({_NUM})\s*(.*)$")
_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d{3}\b)")
_HV_LOAD_RE = re.compile(r"^hv\s*(\d+(?:\.\d+)?)?$")


@dataclass
class ParsedQuantity:
    value: float
    unit_text: str = ""
    uncertainty: Optional[float] = None
    uncertainty_kind: Optional[UncertaintyKind] = None
    form: str = "plain"  # plain | plus_minus | inequality | range


def _uncertainty_kind_from(text: str) -> UncertaintyKind:
    low = text.casefold()
    if "std" in low or low.endswith("sd") or "(sd)" in low:
        return UncertaintyKind.STD_DEV
    if "s.e" in low or "standard error" in low or "(se)" in low:
        return UncertaintyKind.STD_ERR
    if "ci" in low or "confidence" in low:
        return UncertaintyKind.CONF_INTERVAL
    return UncertaintyKind.PLUS_MINUS


def parse_quantity(raw: str) -> Optional[ParsedQuantity]:
    """Read a reported quantity from free text.

    Accepted forms, tried in order: plain number, number ± uncertainty,
    inequality bound (the bound is kept as the value), and a range whose
    mean is kept as the value. Returns None when nothing matches.
    """
    text = _THOUSANDS_RE.sub("", raw.strip())
    if not text:
        return None
    if text.startswith("−"):  # leading U+2212 is a sign, not a range separator
        text = "-" + text[1:]
    m = _PLAIN_RE.match(text)
    if m and not _looks_like_range_tail(m.group(2)):
        return ParsedQuantity(value=float(m.group(1)), unit_text=m.group(2).strip())
    m = _PM_RE.match(text)
    if m:
        return ParsedQuantity(
            value=float(m.group(1)),
            uncertainty=abs(float(m.group(2))),
            uncertainty_kind=_uncertainty_kind_from(m.group(3)),
            unit_text=_strip_uncertainty_notes(m.group(3)),
            form="plus_minus",
        )
    m = _INEQ_RE.match(text)
    if m:
        return ParsedQuantity(value=float(m.group(2)), unit_text=m.group(3).strip(), form="inequality")
    m = _RANGE_RE.match(text)
    if m:
        lo, hi = float(m.group(1)), float(m.group(2))
        return ParsedQuantity(value=(lo + hi) / 2.0, unit_text=m.group(3).strip(), form="range")
    return None


def _looks_like_range_tail(tail: str) -> bool:
    """True when the text after a leading number continues a range or ±."""
    stripped = tail.lstrip()
    if stripped.startswith(("±", "+/-", "+-")):
        return True
    return bool(re.match(rf"^(?:–|—|−|to\b|-)\s*{_NUM}", stripped))


def _strip_uncertainty_notes(tail: str) -> str:
    # drop parenthesized notes like "(SD)" so only the unit token remains
    return re.sub(r"\([^)]*\)", "", tail).strip()


class UnitRules:
    """Per-family conversion table keyed by normalized unit token."""

    def __init__(self, doc: dict) -> None:
        self._families: dict[str, dict] = {}
        for family, body in doc.get("families", {}).items():
            units: dict[str, tuple[float, float]] = {}
            for token, rule in (body.get("convert") or {}).items():
                if rule is None:  # documented-but-unconvertible token
                    continue
                if isinstance(rule, dict):
                    units[_norm_unit(str(token))] = (float(rule["scale"]), float(rule.get("offset", 0.0)))
                else:
                    units[_norm_unit(str(token))] = (float(rule), 0.0)
            self._families[family] = {
                "canonical": body["canonical"],
                "units": units,
                "passthrough": {_norm_unit(t) for t in body.get("passthrough", [])},
            }

    def canonical(self, family: str) -> str:
        return self._families[family]["canonical"]

    def lookup(self, family: str, unit_text: str) -> Optional[tuple[float, float]]:
        return self._families[family]["units"].get(_norm_unit(unit_text))

    def is_passthrough(self, family: str, unit_text: str) -> bool:
        return _norm_unit(unit_text) in self._families[family]["passthrough"]

    def has_family(self, family: str) -> bool:
        return family in self._families


_UNIT_CHAR_MAP = str.maketrans({"μ": "µ", "℃": "°C", "º": "°", "³": "3", "²": "2"})


def _norm_unit(text: str) -> str:
    token = text.strip().strip(".").translate(_UNIT_CHAR_MAP)
    token = re.sub(r"\s+", "", token)
    return token.casefold()


def load_unit_rules(path: str | Path | None = None) -> UnitRules:
    if path is None:
        path = Path(__file__).parent.parent / "data" / "unit_rules.yaml"
    with open(path, "r", encoding="utf-8") as fh:
        return UnitRules(yaml.safe_load(fh))


def normalize_value(raw: Optional[str], family: str, rules: UnitRules,
                    unit_hint: Optional[str] = None) -> FieldValue:
    """Parse and convert one reported value onto its family's canonical unit.

    ``unit_hint`` supplies the unit when the value text carries none
    (typically the companion units field). A value with neither is taken to
    be in canonical units already. Unknown units and unreadable text come
    back validity=invalid with ``raw`` untouched.
    """
    if raw is None or not raw.strip():
        return FieldValue.empty()
    if family == "hardness":
        value, _load = normalize_hardness(raw, rules, unit_hint=unit_hint)
        return value
    parsed = parse_quantity(raw)
    if parsed is None:
        return FieldValue(raw=raw, validity=Validity.INVALID)
    unit_text = parsed.unit_text or (unit_hint or "").strip()
    canonical = rules.canonical(family)
    if not unit_text:
        scale, offset = 1.0, 0.0
    else:
        rule = rules.lookup(family, unit_text)
        if rule is None:
            return FieldValue(raw=raw, unit=unit_text, validity=Validity.INVALID)
        scale, offset = rule
    numeric = parsed.value * scale + offset
    uncertainty = parsed.uncertainty * abs(scale) if parsed.uncertainty is not None else None
    return FieldValue(
        raw=raw,
        numeric=numeric,
        uncertainty=uncertainty,
        uncertainty_kind=parsed.uncertainty_kind,
        unit=canonical,
        validity=Validity.OK,
    )


def normalize_hardness(raw: str, rules: UnitRules, unit_hint: Optional[str] = None,
                       ) -> tuple[FieldValue, Optional[float]]:
    """Hardness values: Vickers load suffixes and non-convertible scales.

    Returns the normalized value plus the test load parsed from an HV
    suffix (``HV0.3`` -> 0.3), if any. Recognized non-Vickers scales (HRB,
    HB, ...) keep their own unit unconverted; unrecognized scales are
    invalid.
    """
    parsed = parse_quantity(raw)
    if parsed is None:
        return FieldValue(raw=raw, validity=Validity.INVALID), None
    unit_text = parsed.unit_text or (unit_hint or "").strip()
    canonical = rules.canonical("hardness")
    if not unit_text:
        return (
            FieldValue(
                raw=raw, numeric=parsed.value, uncertainty=parsed.uncertainty,
                uncertainty_kind=parsed.uncertainty_kind, unit=canonical, validity=Validity.OK,
            ),
            None,
        )
    hv_match = _HV_LOAD_RE.match(_norm_unit(unit_text))
    if hv_match:
        load = float(hv_match.group(1)) if hv_match.group(1) else None
        return (
            FieldValue(
                raw=raw, numeric=parsed.value, uncertainty=parsed.uncertainty,
                uncertainty_kind=parsed.uncertainty_kind, unit=canonical, validity=Validity.OK,
            ),
            load,
        )
    if rules.is_passthrough("hardness", unit_text):
        return (
            FieldValue(
                raw=raw, numeric=parsed.value, uncertainty=parsed.uncertainty,
                uncertainty_kind=parsed.uncertainty_kind,
                unit=unit_text.strip().strip("."), validity=Validity.OK,
            ),
            None,
        )
    rule = rules.lookup("hardness", unit_text)
    if rule is None:
        return FieldValue(raw=raw, unit=unit_text, validity=Validity.INVALID), None
    scale, offset = rule
    return (
        FieldValue(
            raw=raw,
            numeric=parsed.value * scale + offset,
            uncertainty=parsed.uncertainty * abs(scale) if parsed.uncertainty is not None else None,
            uncertainty_kind=parsed.uncertainty_kind,
            unit=canonical,
            validity=Validity.OK,
        ),
        None,
    )


_TEST_LOAD_FIELD = "Deposit_Microhardness_Test_Load_Value"
_TEST_LOAD_UNITS_FIELD = "Deposit_Microhardness_Test_Load_Units"


def normalize_record(record: ExperimentRecord, schema: SchemaDefinition,
                     rules: UnitRules) -> ExperimentRecord:
    """Copy a record with every family-scoped numeric field normalized.

    The companion units fields keep their as-reported text; consumers read
    the canonical unit off the value's FieldValue. A Vickers load suffix is
    written to the microhardness test-load field only when that field is
    empty.
    """
    out = copy.deepcopy(record)
    for spec in schema.fields:
        if spec.kind is not FieldKind.NUMERIC or not spec.unit_family:
            continue
        if not rules.has_family(spec.unit_family):
            continue
        current = out.values.get(spec.name)
        if current is None or current.is_empty or current.raw is None:
            continue
        hint = None
        if spec.unit_field:
            hint_val = out.values.get(spec.unit_field)
            if hint_val is not None and hint_val.raw:
                hint = hint_val.raw
        if spec.unit_family == "hardness":
            normalized, load = normalize_hardness(current.raw, rules, unit_hint=hint)
            out.values[spec.name] = _merge_companion_uncertainty(normalized, out, spec)
            if load is not None and spec.metric_key == "microhardness":
                _write_test_load(out, load)
        else:
            normalized = normalize_value(current.raw, spec.unit_family, rules, unit_hint=hint)
            out.values[spec.name] = _merge_companion_uncertainty(normalized, out, spec)
    return out


def _merge_companion_uncertainty(value: FieldValue, record: ExperimentRecord, spec) -> FieldValue:
    """Fold a companion uncertainty field into the parsed value view."""
    if value.uncertainty is None and spec.uncertainty_field:
        companion = record.values.get(spec.uncertainty_field)
        if companion is not None and not companion.is_empty and companion.numeric is not None:
            value.uncertainty = companion.numeric
            value.uncertainty_kind = value.uncertainty_kind or UncertaintyKind.PLUS_MINUS
    return value


def _write_test_load(record: ExperimentRecord, load: float) -> None:
    existing = record.values.get(_TEST_LOAD_FIELD)
    if existing is not None and not existing.is_empty:
        return
    record.values[_TEST_LOAD_FIELD] = FieldValue(
        raw=f"{load:g}", numeric=load, unit="kgf", validity=Validity.OK
    )
    units = record.values.get(_TEST_LOAD_UNITS_FIELD)
    if units is None or units.is_empty:
        record.values[_TEST_LOAD_UNITS_FIELD] = FieldValue(raw="kgf", validity=Validity.OK)
