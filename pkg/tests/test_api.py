"""HTTP review service: auth, read routes, resolutions, relabeling, mappings."""
import pytest
from fastapi.testclient import TestClient

from hugo.api import TOKEN_ENV, create_app
from hugo.pipeline import PipelineConfig
from hugo.schema import Provenance

from conftest import build_pipeline_store


@pytest.fixture(scope="module")
def api_store(tmp_path_factory):
    config = PipelineConfig.load()
    db = tmp_path_factory.mktemp("api") / "review.db"
    store, result, _client = build_pipeline_store(db, config)
    return store, config


@pytest.fixture(scope="module")
def client(api_store):
    store, config = api_store
    return TestClient(create_app(store, config))


@pytest.fixture()
def mutable(fresh_pipeline, config):
    store, _result, _client = fresh_pipeline
    return TestClient(create_app(store, config)), store


def full_payload(schema, **overrides):
    payload = dict.fromkeys(schema.field_names, "")
    payload.update(overrides)
    return payload


class TestAuth:
    def test_open_when_no_token(self, client):
        assert client.get("/v1/queue").status_code == 200

    def test_token_guards_every_route(self, api_store):
        store, config = api_store
        guarded = TestClient(create_app(store, config, token="sekrit"))
        assert guarded.get("/v1/queue").status_code == 401
        bad = guarded.get("/v1/queue", headers={"Authorization": "Bearer wrong"})
        assert bad.status_code == 401
        ok = guarded.get("/v1/queue", headers={"Authorization": "Bearer sekrit"})
        assert ok.status_code == 200

    def test_token_from_environment(self, api_store, monkeypatch):
        store, config = api_store
        monkeypatch.setenv(TOKEN_ENV, "envtok")
        guarded = TestClient(create_app(store, config))
        assert guarded.get("/v1/stats").status_code == 401
        ok = guarded.get("/v1/stats", headers={"Authorization": "Bearer envtok"})
        assert ok.status_code == 200


class TestReadRoutes:
    def test_queue_lists_open_flags_in_triage_order(self, client, api_store):
        store, _config = api_store
        items = client.get("/v1/queue").json()["items"]
        open_ids = {f.flag_id for f in store.list_flags(open_only=True)}
        assert {it["flag_id"] for it in items} == open_ids
        assert len(items) == 7
        assert items[0]["stage"] == "syntax"
        stages = [it["stage"] for it in items]
        assert stages == sorted(
            stages, key=["syntax", "completeness", "outlier", "coverage"].index
        )
        for it in items:
            assert it["title"]
            assert isinstance(it["suggested_actions"], list)

    def test_articles_overview(self, client, id_by_key):
        articles = client.get("/v1/articles").json()["articles"]
        assert len(articles) == 10
        by_id = {a["article_id"]: a for a in articles}
        assert by_id[id_by_key["c"]]["label_status"] == "flagged"
        assert by_id[id_by_key["f"]]["label_status"] == "flagged"
        assert by_id[id_by_key["e"]]["open_flags"] == 4
        assert sum(a["records"] for a in articles) == 23

    def test_article_detail(self, client, id_by_key):
        body = client.get(f"/v1/articles/{id_by_key['d']}").json()
        assert body["article_id"] == id_by_key["d"]
        assert body["markdown"]
        assert len(body["records"]) == 3
        stages = {f["stage"] for f in body["flags"]}
        assert "completeness" in stages
        assert body["revision"] == 0
        assert body["coverage"] is None or "wev" in body["coverage"]

    def test_unknown_article_404(self, client):
        assert client.get("/v1/articles/feedfeedfeed").status_code == 404

    def test_flag_detail_roundtrip(self, client, api_store):
        store, _config = api_store
        flag = store.list_flags(open_only=True)[0]
        body = client.get(f"/v1/flags/{flag.flag_id}").json()
        assert body == flag.to_dict()
        assert client.get("/v1/flags/nope").status_code == 404

    def test_schema_route(self, client, schema):
        body = client.get("/v1/schema").json()
        assert body["version"] == schema.version
        assert len(body["fields"]) == len(schema.fields)
        by_name = {f["name"]: f for f in body["fields"]}
        porosity = by_name["Deposit_Porosity_Value"]
        assert porosity["kind"] == "numeric"
        assert porosity["target_metric"] is True
        assert porosity["metric_key"] == "porosity"
        assert by_name["Deposit_Microhardness_Value"]["unit_field"] == (
            "Deposit_Microhardness_Units"
        )

    def test_stats_route(self, client):
        body = client.get("/v1/stats").json()
        assert body["records"]["total"] == 23
        assert body["metrics"]["porosity"]["total"] == 23


class TestFlagResolution:
    def test_unknown_flag_404(self, mutable):
        api, _store = mutable
        resp = api.post("/v1/flags/abc123/resolution", json={"resolution": "excluded"})
        assert resp.status_code == 404

    def test_unknown_resolution_422(self, mutable, id_by_key):
        api, store = mutable
        flag = store.list_flags(article_id=id_by_key["e"], open_only=True)[0]
        resp = api.post(f"/v1/flags/{flag.flag_id}/resolution",
                        json={"resolution": "shred"})
        assert resp.status_code == 422

    def test_inspected_kept_marks_article_verified(self, mutable, id_by_key):
        api, store = mutable
        flag = next(f for f in store.list_flags(article_id=id_by_key["e"], open_only=True)
                    if f.stage.value == "outlier")
        resp = api.post(f"/v1/flags/{flag.flag_id}/resolution",
                        json={"resolution": "inspected_kept"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["flag"]["resolution"] == "inspected_kept"
        assert body["side_effects"] == {}
        article = store.get_article(id_by_key["e"])
        assert article.label_status.value == "human_verified"
        again = api.post(f"/v1/flags/{flag.flag_id}/resolution",
                         json={"resolution": "excluded"})
        assert again.status_code == 409

    def test_inspected_kept_rejected_outside_outlier_stage(self, mutable, id_by_key):
        api, store = mutable
        flag = store.list_flags(article_id=id_by_key["c"], open_only=True)[0]
        assert flag.stage.value == "syntax"
        resp = api.post(f"/v1/flags/{flag.flag_id}/resolution",
                        json={"resolution": "inspected_kept"})
        assert resp.status_code == 409

    def test_excluding_outlier_drops_one_record(self, mutable, id_by_key):
        api, store = mutable
        e = id_by_key["e"]
        flag = next(f for f in store.list_flags(article_id=e, open_only=True)
                    if f.detail.get("pass") == "domain")
        record_id = flag.detail["record_id"]
        before = {r.record_id for r in store.active_records(e)}
        resp = api.post(f"/v1/flags/{flag.flag_id}/resolution",
                        json={"resolution": "excluded"})
        assert resp.status_code == 200
        assert resp.json()["side_effects"]["deactivated_records"] == 1
        after = {r.record_id for r in store.active_records(e)}
        assert before - after == {record_id}
        assert store.get_article(e).label_status.value != "excluded"

    def test_excluding_syntax_flag_drops_whole_article(self, mutable, id_by_key):
        api, store = mutable
        c = id_by_key["c"]
        flag = store.list_flags(article_id=c, open_only=True)[0]
        n_active = len(store.active_records(c))
        resp = api.post(f"/v1/flags/{flag.flag_id}/resolution",
                        json={"resolution": "excluded"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["side_effects"]["deactivated_records"] == n_active
        assert body["side_effects"]["article_excluded"] is True
        assert store.active_records(c) == []
        assert store.get_article(c).label_status.value == "excluded"


class TestRelabel:
    def test_replaces_records_and_bumps_revision(self, mutable, schema, id_by_key):
        api, store = mutable
        b = id_by_key["b"]
        revision = store.article_revision(b)
        records = [
            full_payload(schema, Deposit_Porosity_Value="2.4",
                         Deposit_Porosity_Units="%"),
            full_payload(schema, Deposit_Microhardness_Value="148",
                         Deposit_Microhardness_Units="HV"),
        ]
        resp = api.post(f"/v1/articles/{b}/records",
                        json={"records": records, "expected_revision": revision})
        assert resp.status_code == 200
        body = resp.json()
        assert body["revision"] == revision + 1
        assert isinstance(body["open_flags"], list)
        active = store.active_records(b)
        assert [r.record_id for r in active] == [
            f"{b}:r{revision + 1}:000",
            f"{b}:r{revision + 1}:001",
        ]
        assert all(r.provenance is Provenance.HUMAN for r in active)
        assert store.get_article(b).label_status.value == "human_verified"

    def test_llm_provenance_rejected(self, mutable, schema, id_by_key):
        api, store = mutable
        b = id_by_key["b"]
        resp = api.post(
            f"/v1/articles/{b}/records",
            json={"records": [full_payload(schema, Deposit_Porosity_Value="1")],
                  "expected_revision": store.article_revision(b),
                  "provenance": "llm"},
        )
        assert resp.status_code == 422

    def test_body_shape_is_checked(self, mutable, schema, id_by_key):
        api, store = mutable
        b = id_by_key["b"]
        no_list = api.post(f"/v1/articles/{b}/records",
                           json={"records": "oops", "expected_revision": 1})
        assert no_list.status_code == 422
        no_rev = api.post(
            f"/v1/articles/{b}/records",
            json={"records": [full_payload(schema, Deposit_Porosity_Value="1")]},
        )
        assert no_rev.status_code == 422

    def test_noncompliant_record_reports_keys(self, mutable, schema, id_by_key):
        api, store = mutable
        b = id_by_key["b"]
        bad = full_payload(schema, Deposit_Porosity_Value="1")
        del bad["Substrate_Preparation"]
        bad["Weather_Notes"] = "sunny"
        resp = api.post(f"/v1/articles/{b}/records",
                        json={"records": [bad],
                              "expected_revision": store.article_revision(b)})
        assert resp.status_code == 422
        problems = resp.json()["detail"]["records"]
        assert problems == [{"index": 0, "missing": ["Substrate_Preparation"],
                             "extra": ["Weather_Notes"]}]

    def test_record_without_any_target_rejected(self, mutable, schema, id_by_key):
        api, store = mutable
        b = id_by_key["b"]
        resp = api.post(f"/v1/articles/{b}/records",
                        json={"records": [full_payload(schema)],
                              "expected_revision": store.article_revision(b)})
        assert resp.status_code == 422
        assert resp.json()["detail"]["records"][0]["index"] == 0

    def test_stale_revision_conflicts(self, mutable, schema, id_by_key):
        api, store = mutable
        b = id_by_key["b"]
        resp = api.post(
            f"/v1/articles/{b}/records",
            json={"records": [full_payload(schema, Deposit_Porosity_Value="1")],
                  "expected_revision": store.article_revision(b) + 5},
        )
        assert resp.status_code == 409

    def test_unknown_article_404(self, mutable, schema):
        api, _store = mutable
        resp = api.post("/v1/articles/feedfeedfeed/records",
                        json={"records": [], "expected_revision": 1})
        assert resp.status_code == 404


class TestMappings:
    def test_manual_proposal_then_accept(self, mutable):
        api, store = mutable
        created = api.post("/v1/mappings/proposals",
                           json={"field": "Majority_Powder_Material",
                                 "alias": "Cu powder", "canonical": "Copper"})
        assert created.status_code == 200
        proposal_id = created.json()["proposal_id"]
        decided = api.post(f"/v1/mappings/{proposal_id}/decision",
                           json={"accept": True})
        assert decided.status_code == 200
        assert decided.json()["mapping_version"] == 1
        table = api.get("/v1/mappings").json()
        assert table["version"] == 1
        assert table["accepted"]["Majority_Powder_Material"]["Cu powder"] == "Copper"

    def test_manual_proposal_requires_all_parts(self, mutable):
        api, _store = mutable
        resp = api.post("/v1/mappings/proposals",
                        json={"field": "Majority_Powder_Material", "alias": "Cu"})
        assert resp.status_code == 422

    def test_propose_from_observed_values(self, mutable):
        api, _store = mutable
        resp = api.post("/v1/mappings/propose",
                        json={"field": "Majority_Powder_Material"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["proposed"] >= 1
        assert body["new"] == body["proposed"]
        listed = api.get("/v1/mappings", params={"status": "proposed"}).json()
        assert len(listed["proposals"]) == body["proposed"]

    def test_propose_unknown_field_422(self, mutable):
        api, _store = mutable
        resp = api.post("/v1/mappings/propose", json={"field": "Weather_Notes"})
        assert resp.status_code == 422

    def test_decision_errors(self, mutable):
        api, _store = mutable
        assert api.post("/v1/mappings/zzz/decision",
                        json={"accept": True}).status_code == 404
        created = api.post("/v1/mappings/proposals",
                           json={"field": "Majority_Powder_Material",
                                 "alias": "Cu", "canonical": "Copper"})
        pid = created.json()["proposal_id"]
        no_verdict = api.post(f"/v1/mappings/{pid}/decision", json={})
        assert no_verdict.status_code == 422
        assert api.post(f"/v1/mappings/{pid}/decision",
                        json={"accept": False}).status_code == 200
        again = api.post(f"/v1/mappings/{pid}/decision", json={"accept": True})
        assert again.status_code == 409

    def test_conflicting_canonical_rejected(self, mutable):
        api, _store = mutable
        first = api.post("/v1/mappings/proposals",
                         json={"field": "Majority_Powder_Material",
                               "alias": "Cu", "canonical": "Copper"})
        api.post(f"/v1/mappings/{first.json()['proposal_id']}/decision",
                 json={"accept": True})
        second = api.post("/v1/mappings/proposals",
                          json={"field": "Majority_Powder_Material",
                                "alias": "Cu", "canonical": "Cuprum"})
        resp = api.post(f"/v1/mappings/{second.json()['proposal_id']}/decision",
                        json={"accept": True})
        assert resp.status_code == 409


class TestStaticUi:
    def test_static_dir_served_under_ui(self, api_store, tmp_path):
        store, config = api_store
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<h1>review queue</h1>")
        api = TestClient(create_app(store, config, static_dir=ui))
        resp = api.get("/ui/")
        assert resp.status_code == 200
        assert "review queue" in resp.text
