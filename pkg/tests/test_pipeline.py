"""End-to-end pipeline behavior on the fixture corpus."""
import math

import pytest

from hugo.hrm import FlagStage, Resolution, build_queue
from hugo.pipeline import run_pipeline, recheck_article
from hugo.schema import LabelStatus

from conftest import FIXTURES

STEP_NAMES = [
    "ingest",
    "initial_labeling",
    "completeness",
    "outliers",
    "coverage",
    "empty_result_removal",
    "mapping_application",
    "composition",
    "unit_normalization",
]


class TestRunShape:
    def test_ledger_and_counts(self, pipeline_session):
        _store, result = pipeline_session
        assert result.initial_records == 0
        assert result.final_records == 23
        assert result.ledger_consistent
        assert [s.step for s in result.summaries] == STEP_NAMES

    def test_snapshot_chain(self, pipeline_session):
        _store, result = pipeline_session
        assert [s.derivation for s in result.snapshots] == STEP_NAMES
        assert result.snapshots[0].parent_id is None
        for prev, cur in zip(result.snapshots, result.snapshots[1:]):
            assert cur.parent_id == prev.snapshot_id

    def test_label_statuses(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        statuses = {
            key: store.get_article(article_id).label_status
            for key, article_id in id_by_key.items()
        }
        flagged = {k for k, s in statuses.items() if s is LabelStatus.FLAGGED}
        assert flagged == {"c", "f"}
        assert all(s is LabelStatus.LLM_LABELED
                   for k, s in statuses.items() if k not in flagged)


class TestFlags:
    def by_article(self, store, id_by_key):
        key_of = {v: k for k, v in id_by_key.items()}
        out = {}
        for flag in store.list_flags(open_only=True):
            out.setdefault(key_of[flag.article_id], []).append(flag)
        return out

    def test_exactly_the_planted_findings(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        flags = self.by_article(store, id_by_key)
        shape = {k: sorted(f.stage.value for f in v) for k, v in flags.items()}
        assert shape == {
            "c": ["syntax"],
            "d": ["completeness"],
            "e": ["outlier"] * 4,
            "f": ["coverage"],
        }

    def test_completeness_detail_and_repairs(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        flag = self.by_article(store, id_by_key)["d"][0]
        d = id_by_key["d"]
        assert flag.detail["records"] == [
            {"record_id": f"{d}:002", "missing": ["Substrate_Preparation"],
             "extra": ["Weather_Notes"]}
        ]
        repairs = {r["record_id"]: r for r in flag.detail["repairs"]}
        assert repairs[f"{d}:000"]["realigned"] == {
            "Laser_PWR_Value": "Laser_Power_Value"
        }
        assert len(repairs[f"{d}:001"]["gate_fills"]) == 6
        assert all(f.startswith("HIP_") for f in repairs[f"{d}:001"]["gate_fills"])

    def test_realignment_persisted_to_store(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        rec = store.active_records(id_by_key["d"])[0]
        assert rec.value("Laser_Power_Value").raw
        assert "Laser_PWR_Value" not in rec.values

    def test_outlier_findings(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        e = id_by_key["e"]
        found = {
            (f.detail["pass"], f.detail["record_id"], f.detail.get("metric", ""))
            for f in self.by_article(store, id_by_key)["e"]
        }
        assert found == {
            ("domain", f"{e}:003", "porosity"),
            ("global_z", f"{e}:003", "porosity"),
            ("global_z", f"{e}:003", "microhardness"),
            ("local_class", f"{e}:002", ""),
        }

    def test_coverage_flag_arithmetic(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        flag = self.by_article(store, id_by_key)["f"][0]
        mean_freq = 7.25  # eight metrics, six populated corpus-wide
        expect_wev = ((mean_freq / 23) * 5 + (mean_freq / 1) * 4) / 2
        assert flag.detail["wev"] == pytest.approx(expect_wev)
        assert flag.detail["coverage"]["gaps"] == {
            "porosity": 5, "deposition_efficiency": 4,
        }
        stored = store.get_coverage(id_by_key["f"])
        assert stored["wev"] == pytest.approx(expect_wev)

    def test_low_gap_article_scores_but_does_not_flag(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        coverage = store.get_coverage(id_by_key["c"])
        assert coverage["ev"] == 2.0
        assert coverage["wev"] < 2.5
        assert self.by_article(store, id_by_key).get("c") == [
            f for f in store.list_flags(article_id=id_by_key["c"], open_only=True)
        ]

    def test_expected_counts_stored(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        expected = store.get_expected(id_by_key["f"])
        assert expected["expected_experiments"] == 8
        assert expected["expected_metrics"] == {
            "porosity": 8, "deposition_efficiency": 4,
        }

    def test_method_probe_marks_one_record(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        marked = [
            (r.record_id, r.nonstandard_method_flags)
            for r in store.active_records()
            if r.nonstandard_method_flags
        ]
        assert len(marked) == 1
        record_id, marks = marked[0]
        assert record_id == f"{id_by_key['g']}:000"
        assert marks[0]["field"] == "Deposit_Microhardness_Value"


class TestQueue:
    def test_review_order_and_context(self, pipeline_session, id_by_key):
        store, _ = pipeline_session
        articles = {a.article_id: a for a in store.list_articles()}
        queue = build_queue(
            store.list_flags(open_only=True),
            markdown_by_article={i: a.markdown for i, a in articles.items()},
            titles={i: a.metadata.title for i, a in articles.items()},
        )
        stages = [item.stage for item in queue]
        assert stages == [
            FlagStage.SYNTAX, FlagStage.COMPLETENESS,
            FlagStage.OUTLIER, FlagStage.OUTLIER, FlagStage.OUTLIER, FlagStage.OUTLIER,
            FlagStage.COVERAGE,
        ]
        assert all(item.title for item in queue)
        outlier_items = [i for i in queue if i.stage is FlagStage.OUTLIER]
        assert any(item.excerpt_offsets for item in outlier_items)


class TestRerun:
    def test_rerun_is_idempotent(self, fresh_pipeline, config):
        store, _first, client = fresh_pipeline
        before = {r.record_id for r in store.active_records()}
        again = run_pipeline(store, FIXTURES / "corpus", client, config)
        assert again.initial_records == 23
        assert again.final_records == 23
        assert again.ledger_consistent
        labeling = next(s for s in again.summaries if s.step == "initial_labeling")
        assert (labeling.added, labeling.removed) == (0, 0)
        assert len(store.list_flags(open_only=True)) == 7
        assert {r.record_id for r in store.active_records()} == before

    def test_fresh_runs_are_deterministic(self, fresh_pipeline, pipeline_session):
        """Two builds from empty stores mint identical snapshot chains."""
        _store, result, _client = fresh_pipeline
        _session_store, session_result = pipeline_session
        assert [s.snapshot_id for s in result.snapshots] == [
            s.snapshot_id for s in session_result.snapshots
        ]

    def test_resolved_flags_stay_resolved_across_reruns(self, fresh_pipeline, config):
        store, _first, client = fresh_pipeline
        flag = store.list_flags(stage="syntax", open_only=True)[0]
        store.resolve_flag(flag.flag_id, Resolution.EXCLUDED)
        run_pipeline(store, FIXTURES / "corpus", client, config)
        assert store.get_flag(flag.flag_id).resolution is Resolution.EXCLUDED
        assert len(store.list_flags(open_only=True)) == 6

    def test_recheck_article_adds_nothing_new(self, fresh_pipeline, config, id_by_key):
        store, _result, client = fresh_pipeline
        e = id_by_key["e"]
        before = {f.flag_id for f in store.list_flags(article_id=e)}
        open_now = recheck_article(store, e, client, config)
        assert {f.flag_id for f in open_now} <= before
        assert {f.flag_id for f in store.list_flags(article_id=e)} == before
