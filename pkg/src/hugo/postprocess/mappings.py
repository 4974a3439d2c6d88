"""Alias consolidation for categorical fields: propose, decide, apply.

Proposals come from string-similarity clustering plus an optional LLM pass
for semantic aliases the surface form cannot catch ("N2" vs "Nitrogen").
Nothing lands in the accepted table without an explicit human decision, and
applying a table adds a canonical column instead of touching the original
free text.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Sequence

from ..hrm import string_similarity

logger = logging.getLogger(__name__)

CLUSTER_THRESHOLD = 0.85


class ProposalSource(str, Enum):
    ALGORITHMIC = "algorithmic"
    LLM = "llm"
    HUMAN = "human"


class ProposalStatus(str, Enum):
    PROPOSED = "proposed"
    ACCEPTED = "accepted"
    PRUNED = "pruned"


class MappingConflictError(ValueError):
    """Accepting this proposal would map one alias to two canonicals."""


@dataclass
class MappingProposal:
    proposal_id: str
    field: str
    alias: str
    canonical: str
    source: ProposalSource = ProposalSource.ALGORITHMIC
    status: ProposalStatus = ProposalStatus.PROPOSED
    note: str = ""

    @classmethod
    def new(cls, field: str, alias: str, canonical: str,
            source: ProposalSource = ProposalSource.ALGORITHMIC, note: str = "") -> "MappingProposal":
        digest = hashlib.sha256(
            f"{field}\x00{alias}\x00{canonical}\x00{source.value}".encode("utf-8")
        ).hexdigest()[:12]
        return cls(proposal_id=digest, field=field, alias=alias, canonical=canonical,
                   source=source, note=note)

    def to_dict(self) -> dict[str, Any]:
        return {
            "proposal_id": self.proposal_id,
            "field": self.field,
            "alias": self.alias,
            "canonical": self.canonical,
            "source": self.source.value,
            "status": self.status.value,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MappingProposal":
        return cls(
            proposal_id=data["proposal_id"],
            field=data["field"],
            alias=data["alias"],
            canonical=data["canonical"],
            source=ProposalSource(data.get("source", "algorithmic")),
            status=ProposalStatus(data.get("status", "proposed")),
            note=data.get("note", ""),
        )


@dataclass
class MappingTable:
    """Accepted alias -> canonical mappings, versioned per change."""

    accepted: dict[str, dict[str, str]] = dc_field(default_factory=dict)  # field -> alias -> canonical
    version: int = 0

    def canonical_for(self, field: str, alias: str) -> Optional[str]:
        return self.accepted.get(field, {}).get(alias)

    def accept(self, field: str, alias: str, canonical: str) -> None:
        existing = self.canonical_for(field, alias)
        if existing is not None and existing != canonical:
            raise MappingConflictError(
                f"{field}: alias {alias!r} already maps to {existing!r}, not {canonical!r}"
            )
        if existing == canonical:
            return
        self.accepted.setdefault(field, {})[alias] = canonical
        self.version += 1

    def to_dict(self) -> dict[str, Any]:
        return {"version": self.version, "accepted": self.accepted}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MappingTable":
        return cls(accepted={f: dict(m) for f, m in data.get("accepted", {}).items()},
                   version=int(data.get("version", 0)))


def _cluster_canonical(members: Sequence[str], counts: Mapping[str, int]) -> str:
    # most frequent form wins; ties prefer the longer (more explicit) string,
    # then lexicographic order for determinism
    return sorted(members, key=lambda v: (-counts[v], -len(v), v))[0]


def propose_mappings(field: str, values: Iterable[str], llm_client=None,
                     threshold: float = CLUSTER_THRESHOLD) -> list[MappingProposal]:
    """Cluster observed values by surface similarity into mapping proposals.

    Every observed value lands in some cluster; single-value fields get an
    identity proposal so the reviewer still confirms the canonical form.
    When an LLM client is given, its semantic proposals (payload: a JSON
    array of {"alias", "canonical"} objects) are appended with source "llm";
    aliases it invents that were never observed are dropped.
    """
    counts = Counter(v for v in values if v and v.strip())
    observed = sorted(counts, key=lambda v: (-counts[v], v))
    proposals: list[MappingProposal] = []
    assigned: set[str] = set()
    for seed in observed:
        if seed in assigned:
            continue
        members = [seed] + [
            v for v in observed
            if v not in assigned and v != seed and string_similarity(seed, v) >= threshold
        ]
        assigned.update(members)
        canonical = _cluster_canonical(members, counts)
        for member in members:
            proposals.append(MappingProposal.new(field, member, canonical))

    if llm_client is not None:
        for alias, canonical in _llm_alias_pairs(field, observed, llm_client):
            if alias not in counts:
                logger.warning("dropping LLM proposal for unobserved alias %r", alias)
                continue
            if any(p.alias == alias and p.canonical == canonical for p in proposals):
                continue
            proposals.append(
                MappingProposal.new(field, alias, canonical, source=ProposalSource.LLM)
            )
    return proposals


def _llm_alias_pairs(field: str, observed: Sequence[str], llm_client) -> list[tuple[str, str]]:
    from ..extraction import parse_json_payload

    prompt = (
        f"These are the distinct reported values of the field {field!r}:\n"
        + "\n".join(f"- {v}" for v in observed)
        + "\n\nPropose alias consolidations as a JSON array of objects with "
        'keys "alias" and "canonical". Only merge values that clearly name '
        "the same thing; do not invent new values."
    )
    response = llm_client.complete(prompt, kind="mappings", article_hash=_values_hash(field, observed))
    payload = parse_json_payload(response.text)
    if not payload.parse_ok or not isinstance(payload.data, list):
        logger.warning("mapping LLM pass for %s returned no usable payload", field)
        return []
    pairs = []
    for item in payload.data:
        if isinstance(item, dict) and "alias" in item and "canonical" in item:
            pairs.append((str(item["alias"]), str(item["canonical"])))
    return pairs


def _values_hash(field: str, observed: Sequence[str]) -> str:
    return hashlib.sha256(json.dumps([field, list(observed)]).encode("utf-8")).hexdigest()


def decide_mapping(proposal: MappingProposal, table: MappingTable, accept: bool,
                   corrected_canonical: Optional[str] = None) -> MappingProposal:
    """Apply a reviewer decision to one proposal.

    Accepting writes the (possibly corrected) mapping into the table and
    bumps its version; conflicts with an already-accepted alias raise
    before anything changes. Pruning just marks the proposal.
    """
    if proposal.status is not ProposalStatus.PROPOSED:
        raise MappingConflictError(f"proposal {proposal.proposal_id} already {proposal.status.value}")
    if not accept:
        proposal.status = ProposalStatus.PRUNED
        return proposal
    canonical = corrected_canonical if corrected_canonical is not None else proposal.canonical
    table.accept(proposal.field, proposal.alias, canonical)
    proposal.canonical = canonical
    proposal.status = ProposalStatus.ACCEPTED
    return proposal


def review_mappings(field: str, table: MappingTable, llm_client) -> list[dict[str, str]]:
    """Advisory LLM pass over the accepted table; never mutates anything.

    Returns notes like {"kind": "overlap", "values": [...], "note": ...}
    for canonicals that look like the same thing, for a human to act on.
    """
    from ..extraction import parse_json_payload

    accepted = table.accepted.get(field, {})
    canonicals = sorted(set(accepted.values()))
    if len(canonicals) < 2:
        return []
    prompt = (
        f"The accepted canonical values for field {field!r} are:\n"
        + "\n".join(f"- {c}" for c in canonicals)
        + "\n\nList any pairs that likely denote the same thing as a JSON "
        'array of {"values": [..], "note": ".."} objects. Reply [] if none.'
    )
    response = llm_client.complete(prompt, kind="mapping_review",
                                   article_hash=_values_hash(field, canonicals))
    payload = parse_json_payload(response.text)
    if not payload.parse_ok or not isinstance(payload.data, list):
        return []
    notes = []
    for item in payload.data:
        if isinstance(item, dict) and item.get("values"):
            notes.append(
                {"kind": "overlap", "values": list(item["values"]), "note": str(item.get("note", ""))}
            )
    return notes


@dataclass
class ApplyStats:
    field: str
    unique_before: int
    unique_after: int
    mapped: int
    unmapped_values: list[str]

    @property
    def reduction_pct(self) -> float:
        if self.unique_before == 0:
            return 0.0
        return (self.unique_before - self.unique_after) / self.unique_before * 100.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "field": self.field,
            "unique_before": self.unique_before,
            "unique_after": self.unique_after,
            "mapped": self.mapped,
            "unmapped_values": self.unmapped_values,
            "reduction_pct": self.reduction_pct,
        }


def apply_mappings(values: Sequence[Optional[str]], field: str, table: MappingTable,
                   ) -> tuple[list[Optional[str]], ApplyStats]:
    """Canonical column for a value list; originals are left alone.

    Values without an accepted mapping pass through unchanged and are
    reported in the stats. Empty values stay empty and count nowhere.
    """
    mapping = table.accepted.get(field, {})
    canonical_column: list[Optional[str]] = []
    unmapped: set[str] = set()
    mapped_count = 0
    for value in values:
        if value is None or not value.strip():
            canonical_column.append(None)
            continue
        canonical = mapping.get(value)
        if canonical is None:
            unmapped.add(value)
            canonical_column.append(value)
        else:
            mapped_count += 1
            canonical_column.append(canonical)
    before = {v for v in values if v and v.strip()}
    after = {v for v in canonical_column if v}
    stats = ApplyStats(
        field=field,
        unique_before=len(before),
        unique_after=len(after),
        mapped=mapped_count,
        unmapped_values=sorted(unmapped),
    )
    return canonical_column, stats
