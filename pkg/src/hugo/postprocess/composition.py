"""Feedstock composition parsing and fixed-basis element vectors.

Compositions normalize onto a fixed 50-element slot vector in wt.% that
always sums to 100. Reported at.% and vol.% bases convert via atomic
weights and room-temperature densities from the reviewed element table
(``data/elements.yaml``). Anything the grammar cannot read raises
CompositionError and routes to manual correction.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import yaml

logger = logging.getLogger(__name__)

SUM_TOLERANCE = 1e-6

_BALANCE_TOKENS = {"bal", "bal.", "balance", "rem", "rem.", "remainder"}
_BASIS_TOKENS = {
    "wt": "wt", "wt%": "wt", "wt.%": "wt", "wt.": "wt", "weight": "wt", "weight%": "wt",
    "at": "at", "at%": "at", "at.%": "at", "at.": "at", "atomic": "at", "atomic%": "at",
    "vol": "vol", "vol%": "vol", "vol.%": "vol", "vol.": "vol", "volume": "vol", "volume%": "vol",
    "%": None,  # bare percent: keep whatever basis is already known
}


class CompositionError(ValueError):
    """Raised when composition text cannot be parsed or does not sum."""


class Lineage(str, Enum):
    REPORTED = "reported"
    IMPUTED = "imputed"
    BLENDED = "blended"


@dataclass(frozen=True)
class ElementTable:
    """Reviewed element constants: fixed slot order, weights, densities."""

    symbols: tuple[str, ...]
    atomic_weight: Mapping[str, float]
    density: Mapping[str, float]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.atomic_weight

    def index(self, symbol: str) -> int:
        return self.symbols.index(symbol)


def load_element_table(path: str | Path | None = None) -> ElementTable:
    if path is None:
        path = Path(__file__).parent.parent / "data" / "elements.yaml"
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    symbols = []
    weights = {}
    densities = {}
    for entry in doc["elements"]:
        sym = entry["symbol"]
        symbols.append(sym)
        weights[sym] = float(entry["atomic_weight"])
        densities[sym] = float(entry["density"])
    return ElementTable(symbols=tuple(symbols), atomic_weight=weights, density=densities)


@dataclass
class ParsedComponent:
    element: str
    amount: Optional[float]  # None marks the balance component
    balance: bool = False


@dataclass
class ParsedComposition:
    components: list[ParsedComponent]
    basis: str = "wt"  # wt | at | vol


@dataclass
class CompositionVector:
    """Element fractions on one basis; on wt basis they sum to 100."""

    fractions: dict[str, float]
    basis: str = "wt"
    lineage: Lineage = Lineage.REPORTED

    def total(self) -> float:
        return sum(self.fractions.values())

    def slot_row(self, elements: ElementTable) -> list[float]:
        return [self.fractions.get(sym, 0.0) for sym in elements.symbols]

    def nonzero(self) -> dict[str, float]:
        return {sym: val for sym, val in self.fractions.items() if val != 0.0}


_DESIGNATION_RE = re.compile(r"^[A-Z][a-z]?(?:-\d+(?:\.\d+)?[A-Z][a-z]?)+$")
_DESIGNATION_PART_RE = re.compile(r"^(\d+(?:\.\d+)?)([A-Z][a-z]?)$")
_EL_FIRST_RE = re.compile(r"^([A-Z][a-z]?)\s*[:=]?\s*(\d+(?:\.\d+)?)\s*(.*)$")
_VAL_FIRST_RE = re.compile(r"^(\d+(?:\.\d+)?)\s*(?:(wt|at|vol)\.?\s*%?\s*)?([A-Z][a-z]?)$")
_EL_BALANCE_RE = re.compile(r"^([A-Z][a-z]?)\s+(\S+)$")
_ELEMENT_RE = re.compile(r"^[A-Z][a-z]?$")


def parse_composition(text: str, elements: ElementTable) -> ParsedComposition:
    """Read a reported composition string.

    Grammar, tried in order:
      * bare element symbol ("Cu") -> that element as balance;
      * alloy designation ("Ti-6Al-4V"): leading element is the balance,
        each following token is amount-then-symbol in wt.% unless a basis
        is stated elsewhere;
      * comma/semicolon-separated component list, each segment being
        "El 12.5", "El: 12.5 wt.%", "12.5Cu", or "El bal.".

    Raises:
        CompositionError: unrecognized grammar, unknown element symbol, or
            more than one balance component.
    """
    cleaned = text.strip()
    if not cleaned:
        raise CompositionError("empty composition text")
    basis, cleaned = _extract_basis(cleaned)

    if _ELEMENT_RE.match(cleaned):
        _require_element(cleaned, elements, text)
        return ParsedComposition([ParsedComponent(cleaned, None, balance=True)], basis or "wt")

    if _DESIGNATION_RE.match(cleaned):
        parts = cleaned.split("-")
        _require_element(parts[0], elements, text)
        comps = [ParsedComponent(parts[0], None, balance=True)]
        for part in parts[1:]:
            m = _DESIGNATION_PART_RE.match(part)
            if not m:
                raise CompositionError(f"bad designation token {part!r} in {text!r}")
            _require_element(m.group(2), elements, text)
            comps.append(ParsedComponent(m.group(2), float(m.group(1))))
        return _checked(comps, basis or "wt", text)

    comps = []
    for segment in re.split(r"[;,]", cleaned):
        segment = segment.strip()
        if not segment:
            continue
        seg_basis, segment = _extract_basis(segment)
        if seg_basis:
            basis = seg_basis
        comps.append(_parse_segment(segment, elements, text))
    if not comps:
        raise CompositionError(f"no components found in {text!r}")
    return _checked(comps, basis or "wt", text)


def _extract_basis(text: str) -> tuple[Optional[str], str]:
    """Pull a trailing/leading basis marker (wt.%, at.%, vol.%) off the text."""
    basis = None
    pattern = re.compile(r"\b(wt|at|vol|weight|atomic|volume)\.?\s*%", re.IGNORECASE)
    m = pattern.search(text)
    if m:
        token = m.group(1).casefold()
        basis = _BASIS_TOKENS.get(token) or _BASIS_TOKENS.get(token + "%")
        text = (text[: m.start()] + " " + text[m.end():]).strip()
    text = re.sub(r"\s*%\s*$", "", text).strip().strip(",").strip()
    return basis, text


def _parse_segment(segment: str, elements: ElementTable, source: str) -> ParsedComponent:
    segment = segment.replace("%", "").strip()
    m = _EL_FIRST_RE.match(segment)
    if m and not m.group(3).strip():
        _require_element(m.group(1), elements, source)
        return ParsedComponent(m.group(1), float(m.group(2)))
    m = _VAL_FIRST_RE.match(segment)
    if m:
        _require_element(m.group(3), elements, source)
        return ParsedComponent(m.group(3), float(m.group(1)))
    m = _EL_BALANCE_RE.match(segment)
    if m and m.group(2).casefold() in _BALANCE_TOKENS:
        _require_element(m.group(1), elements, source)
        return ParsedComponent(m.group(1), None, balance=True)
    if _ELEMENT_RE.match(segment):
        _require_element(segment, elements, source)
        return ParsedComponent(segment, None, balance=True)
    raise CompositionError(f"cannot read component {segment!r} in {source!r}")


def _require_element(symbol: str, elements: ElementTable, source: str) -> None:
    if symbol not in elements:
        raise CompositionError(f"unknown element {symbol!r} in {source!r}")


def _checked(comps: list[ParsedComponent], basis: str, source: str) -> ParsedComposition:
    balances = [c for c in comps if c.balance]
    if len(balances) > 1:
        raise CompositionError(f"multiple balance components in {source!r}")
    seen: set[str] = set()
    for c in comps:
        if c.element in seen:
            raise CompositionError(f"element {c.element} listed twice in {source!r}")
        seen.add(c.element)
    return ParsedComposition(comps, basis)


def expand_to_vector(parsed: ParsedComposition, elements: ElementTable) -> CompositionVector:
    """Assign parsed components to element slots; the balance absorbs the rest.

    Raises:
        CompositionError: stated amounts exceed 100, or no balance component
            exists and the amounts do not sum to 100 within tolerance.
    """
    stated = sum(c.amount for c in parsed.components if c.amount is not None)
    if stated > 100.0 + SUM_TOLERANCE:
        raise CompositionError(f"stated amounts sum to {stated:.6f} > 100")
    balance = [c for c in parsed.components if c.balance]
    fractions: dict[str, float] = {}
    for c in parsed.components:
        if not c.balance:
            fractions[c.element] = float(c.amount)  # type: ignore[arg-type]
    if balance:
        fractions[balance[0].element] = 100.0 - stated
    elif abs(stated - 100.0) > SUM_TOLERANCE:
        raise CompositionError(f"amounts sum to {stated:.6f} with no balance component")
    return CompositionVector(fractions=fractions, basis=parsed.basis, lineage=Lineage.REPORTED)


def to_wt_basis(vector: CompositionVector, elements: ElementTable) -> CompositionVector:
    """Convert at.% or vol.% fractions onto the wt.% basis.

    at->wt weighs each fraction by atomic weight; vol->wt weighs by density.
    Already-wt vectors pass through unchanged.
    """
    if vector.basis == "wt":
        return vector
    if vector.basis == "at":
        factor = elements.atomic_weight
    elif vector.basis == "vol":
        factor = elements.density
    else:
        raise CompositionError(f"unknown basis {vector.basis!r}")
    weighted = {sym: frac * factor[sym] for sym, frac in vector.fractions.items() if frac != 0.0}
    total = sum(weighted.values())
    if total <= 0:
        raise CompositionError("cannot convert an all-zero composition")
    fractions = {sym: val / total * 100.0 for sym, val in weighted.items()}
    return CompositionVector(fractions=fractions, basis="wt", lineage=vector.lineage)


def blend(components: Sequence[CompositionVector], ratios: Sequence[float],
          elements: ElementTable) -> CompositionVector:
    """Mass-weighted element-wise mix of wt-basis vectors.

    Ratios are normalized to fractions; every component must already be on
    the wt basis (convert first), so the result sums to 100 by construction.
    """
    if len(components) != len(ratios) or not components:
        raise CompositionError("components and ratios must pair up")
    if any(v.basis != "wt" for v in components):
        raise CompositionError("blend requires wt-basis components")
    total_ratio = float(sum(ratios))
    if total_ratio <= 0:
        raise CompositionError("ratios must sum to a positive mass")
    weights = [r / total_ratio for r in ratios]
    fractions: dict[str, float] = {}
    for vec, w in zip(components, weights):
        for sym, frac in vec.fractions.items():
            fractions[sym] = fractions.get(sym, 0.0) + w * frac
    return CompositionVector(fractions=fractions, basis="wt", lineage=Lineage.BLENDED)


_RATIO_RE = re.compile(r"(\d+(?:\.\d+)?)")


def extract_ratio_numbers(text: str) -> list[float]:
    """All numeric tokens in a mixing-ratio string, in reported order."""
    return [float(tok) for tok in _RATIO_RE.findall(text)]


def parse_blend_ratio(text: str, n_components: int) -> list[float]:
    """Numeric mixing ratio out of free text ("70:30", "3 to 1", "50/50 wt").

    The ratio must name exactly ``n_components`` amounts. When a source
    lists more components than the record has slots, the caller folds the
    surplus into the last slot before blending.
    """
    numbers = extract_ratio_numbers(text)
    if len(numbers) != n_components or not numbers or sum(numbers) <= 0:
        raise CompositionError(f"cannot read a {n_components}-way ratio from {text!r}")
    return numbers


# --------------------------------------------------------------------------
# nominal composition imputation


class NominalCompositionTable:
    """Curated nominal compositions for canonical material names."""

    def __init__(self, entries: Sequence[Mapping], elements: ElementTable) -> None:
        self._elements = elements
        self._by_name: dict[str, str] = {}
        for entry in entries:
            for name in entry["names"]:
                self._by_name[_canon_name(name)] = entry["composition"]

    def lookup(self, material_name: str) -> Optional[str]:
        return self._by_name.get(_canon_name(material_name))

    def __len__(self) -> int:
        return len(set(self._by_name.values()))


def _canon_name(name: str) -> str:
    return re.sub(r"\s+", " ", name.strip().casefold())


def load_nominal_table(elements: ElementTable, path: str | Path | None = None,
                       ) -> NominalCompositionTable:
    if path is None:
        path = Path(__file__).parent.parent / "data" / "nominal_compositions.yaml"
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return NominalCompositionTable(doc["materials"], elements)


def impute_known_composition(material_name: str, reported_composition: str,
                             table: NominalCompositionTable, elements: ElementTable,
                             ) -> Optional[CompositionVector]:
    """Nominal composition for a canonical material, only when nothing was
    reported. Returns None when a reported composition exists or the name
    is not in the table.
    """
    if reported_composition and reported_composition.strip():
        return None
    text = table.lookup(material_name)
    if text is None:
        return None
    vector = to_wt_basis(expand_to_vector(parse_composition(text, elements), elements), elements)
    vector.lineage = Lineage.IMPUTED
    return vector
