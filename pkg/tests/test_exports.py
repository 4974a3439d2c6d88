"""Delimited exports: refusal rules, determinism, views, stats."""
import csv
import json

import pytest

from hugo.exports import (
    ExportError,
    dataset_stats,
    export_columns,
    paraphrase_fields,
    write_export,
)
from hugo.ingest import set_metadata_manual
from hugo.pipeline import export_pipeline_outputs
from hugo.postprocess.mappings import MappingProposal, ProposalSource
from hugo.schema import ArticleMetadata, Provenance

from conftest import make_record


def fix_missing_link(store, id_by_key):
    h = store.get_article(id_by_key["h"])
    set_metadata_manual(h, ArticleMetadata(title=h.metadata.title,
                                           doi="10.5024/csm.2023.0500"))
    store.set_metadata(h.article_id, h.metadata)


def export_args(store, config, **kw):
    args = dict(
        records=store.active_records(),
        articles=store.list_articles(),
        schema=config.schema,
        unit_rules=config.unit_rules,
        mapping_table=store.mapping_table(),
        elements=config.elements,
        nominal=config.nominal,
    )
    args.update(kw)
    return args


class TestRefusal:
    def test_unlinked_article_blocks_export_before_writing(
            self, pipeline_session, config, id_by_key, tmp_path):
        store, _ = pipeline_session
        out = tmp_path / "export"
        with pytest.raises(ExportError) as err:
            write_export(out, **export_args(store, config, view="normalized"))
        assert err.value.offenders == [id_by_key["h"]]
        assert not out.exists()

    def test_unknown_subset_rejected(self, pipeline_session, config, tmp_path):
        store, _ = pipeline_session
        with pytest.raises(ExportError):
            write_export(tmp_path, **export_args(store, config, subset="silver"))

    def test_full_run_export_propagates_refusal(self, fresh_pipeline, config, tmp_path):
        store, _result, _client = fresh_pipeline
        with pytest.raises(ExportError):
            export_pipeline_outputs(store, config, tmp_path / "out")


class TestNormalizedExport:
    @pytest.fixture()
    def exported(self, fresh_pipeline, config, id_by_key, tmp_path):
        store, _result, _client = fresh_pipeline
        fix_missing_link(store, id_by_key)
        out = tmp_path / "export"
        paths = write_export(out, **export_args(store, config, view="normalized"))
        return store, paths

    def test_artifacts_and_manifest(self, exported, config, id_by_key):
        store, paths = exported
        assert set(paths) == {"csv", "jsonl", "manifest"}
        manifest = json.loads(paths["manifest"].read_text())
        assert manifest["view"] == "normalized"
        assert manifest["subset"] == "all"
        assert manifest["schema_version"] == config.schema.version
        assert manifest["records"] == 23
        assert manifest["articles"] == 9  # every record-bearing article
        assert manifest["columns"] == export_columns(
            config.schema, "normalized", store.mapping_table(), config.elements)

    def test_paraphrase_review_targets_long_prose(self, exported):
        _store, paths = exported
        manifest = json.loads(paths["manifest"].read_text())
        entries = manifest["paraphrase_review"]
        assert entries, "fixture corpus plants one long description"
        assert {e["field"] for e in entries} == {"Powder_Condition_Description"}
        assert all(e["chars"] > 30 for e in entries)

    def test_csv_shape_and_ordering(self, exported, config):
        store, paths = exported
        with open(paths["csv"], newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        assert header == export_columns(config.schema, "normalized",
                                        store.mapping_table(), config.elements)
        assert len(body) == 23
        ids = [row[0] for row in body]
        assert ids == sorted(ids)

    def test_normalized_numeric_cells_are_canonical(self, exported, config, id_by_key):
        _store, paths = exported
        with open(paths["csv"], newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            by_id = {row[0]: dict(zip(header, row)) for row in reader}
        # ksi tensile strength lands in MPa in the normalized view
        j0 = by_id[f"{id_by_key['j']}:000"]
        assert float(j0["Deposit_Ultimate_Tensile_Strength_Value"]) == pytest.approx(65 * 6.8947573)
        assert j0["Deposit_Ultimate_Tensile_Strength_Value__unit"] == "MPa"
        # bound-only porosity keeps the bound, Fahrenheit converts exactly
        assert float(j0["Deposit_Porosity_Value"]) == pytest.approx(1.5)
        assert float(j0["Gas_Temperature_Value"]) == pytest.approx(400.0)
        assert j0["Gas_Temperature_Value__unit"] == "°C"
        # unconvertible unit: numeric cell stays blank, unit column keeps the text
        assert j0["Nozzle_Standoff_Distance_Value"] == ""
        assert j0["Nozzle_Standoff_Distance_Value__unit"] == "furlongs"
        # inline plus-minus splits into the uncertainty column
        b0 = by_id[f"{id_by_key['b']}:000"]
        assert float(b0["Deposit_Porosity_Value"]) == pytest.approx(2.5)
        assert float(b0["Deposit_Porosity_Value__uncertainty"]) == pytest.approx(0.3)
        # composition columns: imputed Ti-6Al-4V
        a0 = by_id[f"{id_by_key['a']}:000"]
        assert a0["Composition_Lineage"] == "imputed"
        assert float(a0["Composition_Wt_Ti"]) == pytest.approx(90.0)
        assert float(a0["Composition_Wt_Al"]) == pytest.approx(6.0)

    def test_jsonl_payload_carries_composition(self, exported, id_by_key):
        _store, paths = exported
        payloads = [json.loads(line) for line in paths["jsonl"].read_text().splitlines()]
        assert len(payloads) == 23
        a0 = next(p for p in payloads
                  if p["record"]["record_id"] == f"{id_by_key['a']}:000")
        assert a0["composition"]["lineage"] == "imputed"
        assert a0["composition"]["fractions"]["V"] == pytest.approx(4.0)
        assert a0["article"]["doi"]

    def test_canonical_column_consolidates_aliases(self, fresh_pipeline, config,
                                                   id_by_key, tmp_path):
        store, _result, _client = fresh_pipeline
        fix_missing_link(store, id_by_key)
        field = "Majority_Powder_Material"
        alias = next(r.value(field).raw for r in store.active_records()
                     if not r.value(field).is_empty)
        proposal = MappingProposal.new(field, alias, "Unified Name",
                                       source=ProposalSource.HUMAN)
        store.add_proposals([proposal])
        store.decide_proposal(proposal.proposal_id, True)
        paths = write_export(tmp_path / "out",
                             **export_args(store, config, view="normalized",
                                           mapping_table=store.mapping_table()))
        with open(paths["csv"], newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [dict(zip(header, row)) for row in reader]
        assert f"{field}__canonical" in header
        hits = [r for r in rows if r[field] == alias]
        assert hits and all(r[f"{field}__canonical"] == "Unified Name" for r in hits)
        payloads = [json.loads(line) for line in paths["jsonl"].read_text().splitlines()]
        assert any(p["canonical"].get(field) == "Unified Name" for p in payloads)
        manifest = json.loads(paths["manifest"].read_text())
        assert manifest["mapping_version"] == 1


class TestDeterminism:
    def test_same_store_exports_identical_bytes(self, fresh_pipeline, config,
                                                id_by_key, tmp_path):
        store, _result, _client = fresh_pipeline
        fix_missing_link(store, id_by_key)
        first = write_export(tmp_path / "one",
                             **export_args(store, config, view="normalized"))
        second = write_export(tmp_path / "two",
                              **export_args(store, config, view="normalized"))
        for name in ("csv", "jsonl", "manifest"):
            assert first[name].read_bytes() == second[name].read_bytes()


class TestGoldSubset:
    def test_only_human_records_exported(self, fresh_pipeline, config,
                                         id_by_key, tmp_path):
        store, _result, _client = fresh_pipeline
        fix_missing_link(store, id_by_key)
        b = id_by_key["b"]
        human = make_record(b, idx=900, provenance=Provenance.HUMAN,
                            Majority_Powder_Material="Copper",
                            Deposit_Porosity_Value=1.5)
        store.add_records([human])
        paths = write_export(tmp_path / "gold",
                             **export_args(store, config, subset="gold"))
        manifest = json.loads(paths["manifest"].read_text())
        assert manifest["subset"] == "gold"
        assert manifest["records"] == 1
        lines = paths["jsonl"].read_text().splitlines()
        assert json.loads(lines[0])["record"]["record_id"] == human.record_id


class TestParaphraseFields:
    def test_char_threshold(self, schema):
        short = make_record(Powder_Condition_Description="x" * 30)
        long = make_record(idx=1, Powder_Condition_Description="x" * 31)
        assert paraphrase_fields(short, schema) == []
        assert paraphrase_fields(long, schema) == ["Powder_Condition_Description"]

    def test_numeric_fields_never_flagged(self, schema):
        rec = make_record(Deposit_Porosity_Value="1" * 40)
        assert paraphrase_fields(rec, schema) == []


class TestDatasetStats:
    def test_fixture_counts(self, pipeline_session, config):
        store, _ = pipeline_session
        stats = dataset_stats(store.active_records(), config.schema,
                              n_articles=len(store.list_articles()))
        assert stats["articles"] == 10
        assert stats["records"]["total"] == 23
        assert stats["records"]["by_provenance"]["llm"] == 23
        metrics = stats["metrics"]
        assert metrics["porosity"]["total"] == 23
        assert metrics["microhardness"]["total"] == 20
        assert metrics["deposition_efficiency"]["total"] == 1
        # stored records are as-extracted; uncertainty splits out at export time
        assert metrics["porosity"]["with_uncertainty"] == 0
        assert metrics["porosity"]["uncertainty_fraction"] == 0.0

    def test_uncertainty_counted_from_value_or_companion(self, config):
        inline = make_record(idx=0, Deposit_Porosity_Value=2.5)
        inline.values["Deposit_Porosity_Value"].uncertainty = 0.3
        companion = make_record(idx=1, Deposit_Porosity_Value=3.1,
                                Deposit_Porosity_Uncertainty="0.2")
        bare = make_record(idx=2, Deposit_Porosity_Value=4.0)
        stats = dataset_stats([inline, companion, bare], config.schema)
        porosity = stats["metrics"]["porosity"]
        assert porosity["total"] == 3
        assert porosity["with_uncertainty"] == 2
        assert porosity["uncertainty_fraction"] == pytest.approx(2 / 3)

    def test_stats_file_from_full_export(self, fresh_pipeline, config,
                                         id_by_key, tmp_path):
        store, result, _client = fresh_pipeline
        fix_missing_link(store, id_by_key)
        paths = export_pipeline_outputs(store, config, tmp_path / "out",
                                        snapshot=result.snapshots[-1], result=result)
        assert set(paths) >= {"csv", "jsonl", "manifest", "stats", "summary"}
        stats = json.loads(paths["stats"].read_text())
        assert stats["records"]["total"] == 23
        summary = json.loads(paths["summary"].read_text())
        assert summary["ledger_consistent"] is True
        manifest = json.loads(paths["manifest"].read_text())
        assert manifest["snapshot_id"] == result.snapshots[-1].snapshot_id
