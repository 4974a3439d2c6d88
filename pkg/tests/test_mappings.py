"""Alias clustering, review decisions, and canonical-column application."""
import json
from collections import Counter
from pathlib import Path

import pytest

from hugo.llm import LlmResponse
from hugo.postprocess.mappings import (
    MappingConflictError,
    MappingProposal,
    MappingTable,
    ProposalSource,
    ProposalStatus,
    apply_mappings,
    decide_mapping,
    propose_mappings,
    review_mappings,
)

from conftest import FIXTURES

FIELD = "Majority_Powder_Material"


def load_aliases():
    doc = json.loads((FIXTURES / "material_aliases.json").read_text())
    values = []
    for entry in doc["aliases"]:
        values.extend([entry["value"]] * entry["count"])
    return doc, values


class TestProposeMappings:
    def test_alias_corpus_collapses_to_one_canonical(self):
        doc, values = load_aliases()
        proposals = propose_mappings(FIELD, values)
        assert len(proposals) == len(doc["aliases"])
        canonicals = {p.canonical for p in proposals}
        assert canonicals == {doc["canonical"]}
        assert {p.alias for p in proposals} == {e["value"] for e in doc["aliases"]}

    def test_most_frequent_form_becomes_canonical(self):
        values = ["Copper", "Copper", "Coppper"]
        proposals = propose_mappings(FIELD, values)
        assert {p.alias for p in proposals} == {"Copper", "Coppper"}
        assert all(p.canonical == "Copper" for p in proposals)

    def test_frequency_tie_prefers_longer_form(self):
        values = ["Ti6Al4V", "Ti-6Al-4V"]
        proposals = propose_mappings(FIELD, values)
        assert {p.canonical for p in proposals} == {"Ti-6Al-4V"}

    def test_singleton_gets_identity_proposal(self):
        proposals = propose_mappings(FIELD, ["Inconel 718"])
        assert len(proposals) == 1
        assert proposals[0].alias == proposals[0].canonical == "Inconel 718"
        assert proposals[0].source is ProposalSource.ALGORITHMIC

    def test_dissimilar_values_stay_separate(self):
        proposals = propose_mappings(FIELD, ["Copper", "Titanium"])
        by_alias = {p.alias: p.canonical for p in proposals}
        assert by_alias == {"Copper": "Copper", "Titanium": "Titanium"}

    def test_blank_values_ignored(self):
        assert propose_mappings(FIELD, ["", "  ", None and "" or ""]) == []

    def test_llm_proposals_append_but_unobserved_aliases_drop(self):
        class Client:
            def complete(self, prompt, kind="", article_hash=""):
                return LlmResponse(text=json.dumps([
                    {"alias": "Copper", "canonical": "Titanium"},
                    {"alias": "Bronze", "canonical": "Copper"},
                ]))

        proposals = propose_mappings(FIELD, ["Copper", "Titanium"], llm_client=Client())
        llm = [p for p in proposals if p.source is ProposalSource.LLM]
        assert [(p.alias, p.canonical) for p in llm] == [("Copper", "Titanium")]


class TestDecisions:
    def test_accept_writes_table_and_bumps_version(self):
        table = MappingTable()
        proposal = MappingProposal.new(FIELD, "SS316L", "316L stainless steel")
        decided = decide_mapping(proposal, table, accept=True)
        assert decided.status is ProposalStatus.ACCEPTED
        assert table.canonical_for(FIELD, "SS316L") == "316L stainless steel"
        assert table.version == 1

    def test_reject_marks_pruned_without_table_change(self):
        table = MappingTable()
        proposal = MappingProposal.new(FIELD, "SS316L", "316L stainless steel")
        decided = decide_mapping(proposal, table, accept=False)
        assert decided.status is ProposalStatus.PRUNED
        assert table.version == 0
        assert table.canonical_for(FIELD, "SS316L") is None

    def test_corrected_canonical_overrides_proposal(self):
        table = MappingTable()
        proposal = MappingProposal.new(FIELD, "SS316L", "316L SS")
        decide_mapping(proposal, table, accept=True, corrected_canonical="316L stainless steel")
        assert proposal.canonical == "316L stainless steel"
        assert table.canonical_for(FIELD, "SS316L") == "316L stainless steel"

    def test_conflicting_accept_raises_before_mutation(self):
        table = MappingTable()
        decide_mapping(MappingProposal.new(FIELD, "SS316L", "A"), table, accept=True)
        with pytest.raises(MappingConflictError):
            decide_mapping(MappingProposal.new(FIELD, "SS316L", "B"), table, accept=True)
        assert table.canonical_for(FIELD, "SS316L") == "A"
        assert table.version == 1

    def test_idempotent_accept_keeps_version(self):
        table = MappingTable()
        table.accept(FIELD, "SS316L", "A")
        table.accept(FIELD, "SS316L", "A")
        assert table.version == 1

    def test_decided_proposal_is_final(self):
        table = MappingTable()
        proposal = MappingProposal.new(FIELD, "x", "y")
        decide_mapping(proposal, table, accept=True)
        with pytest.raises(MappingConflictError):
            decide_mapping(proposal, table, accept=False)

    def test_table_roundtrip(self):
        table = MappingTable()
        table.accept(FIELD, "SS316L", "A")
        again = MappingTable.from_dict(table.to_dict())
        assert again == table


class TestApply:
    def test_canonical_column_and_stats(self):
        doc, values = load_aliases()
        table = MappingTable()
        for proposal in propose_mappings(FIELD, values):
            decide_mapping(proposal, table, accept=True)
        column, stats = apply_mappings(values, FIELD, table)
        assert set(column) == {doc["canonical"]}
        assert stats.unique_before == len(doc["aliases"])
        assert stats.unique_after == 1
        assert stats.mapped == len(values)
        assert stats.unmapped_values == []
        assert stats.reduction_pct == pytest.approx(
            (len(doc["aliases"]) - 1) / len(doc["aliases"]) * 100.0
        )

    def test_unmapped_values_pass_through(self):
        table = MappingTable()
        table.accept(FIELD, "Cu", "Copper")
        column, stats = apply_mappings(["Cu", "Brass", None, " "], FIELD, table)
        assert column == ["Copper", "Brass", None, None]
        assert stats.unmapped_values == ["Brass"]
        assert stats.mapped == 1

    def test_empty_input(self):
        column, stats = apply_mappings([], FIELD, MappingTable())
        assert column == []
        assert stats.reduction_pct == 0.0


class TestReview:
    def test_advisory_notes_do_not_mutate(self):
        table = MappingTable()
        table.accept(FIELD, "a", "Copper")
        table.accept(FIELD, "b", "Cu metal")
        version = table.version

        class Client:
            def complete(self, prompt, kind="", article_hash=""):
                return LlmResponse(text=json.dumps([
                    {"values": ["Copper", "Cu metal"], "note": "same metal"}
                ]))

        notes = review_mappings(FIELD, table, Client())
        assert notes == [{"kind": "overlap", "values": ["Copper", "Cu metal"],
                          "note": "same metal"}]
        assert table.version == version

    def test_single_canonical_needs_no_review(self):
        table = MappingTable()
        table.accept(FIELD, "a", "Copper")
        called = []

        class Client:
            def complete(self, prompt, kind="", article_hash=""):
                called.append(kind)
                return LlmResponse(text="[]")

        assert review_mappings(FIELD, table, Client()) == []
        assert called == []
