"""HTTP review service: queue, article inspection, relabeling, mappings.

All routes live under /v1 and speak plain JSON, so any client (the
bundled browser UI, curl, a script) can drive a review session. State
changes go through the same store methods the CLI uses; nothing here
bypasses the flag state machine or the record validator.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Optional

from fastapi import Body, Depends, FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from .hrm import FlagStage, FlagTransitionError, Resolution, build_queue
from .llm import LlmClient, NullLlmClient
from .pipeline import PipelineConfig, recheck_article
from .postprocess.mappings import (
    MappingConflictError,
    MappingProposal,
    ProposalSource,
    propose_mappings,
)
from .schema import (
    LabelStatus,
    Provenance,
    coerce_candidate,
    serialize_record,
    validate_record,
)
from .store import ConcurrentEditError, Store, StoreError

logger = logging.getLogger(__name__)

TOKEN_ENV = "HUGO_REVIEW_TOKEN"


def create_app(store: Store, config: Optional[PipelineConfig] = None,
               static_dir: Optional[str | Path] = None,
               token: Optional[str] = None,
               client: Optional[LlmClient] = None) -> FastAPI:
    """Build the service around an open store.

    ``token`` (or the HUGO_REVIEW_TOKEN env var) turns on bearer-token
    auth for every /v1 route. ``static_dir``, when given, is served at
    /ui for the bundled review front end.
    """
    if config is None:
        config = PipelineConfig.load()
    if token is None:
        token = os.environ.get(TOKEN_ENV, "")
    model_client: LlmClient = client if client is not None else NullLlmClient()

    app = FastAPI(
        title="labeling review service",
        version="1.0",
        description="Review queue, record relabeling, and vocabulary mappings "
        "for the extraction pipeline.",
    )
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def require_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    guarded = [Depends(require_auth)]
    schema = config.schema

    # -- read side -----------------------------------------------------------

    @app.get("/v1/queue", dependencies=guarded)
    def get_queue() -> dict[str, Any]:
        flags = store.list_flags(open_only=True)
        articles = store.list_articles()
        markdown = {a.article_id: a.markdown for a in articles}
        titles = {a.article_id: a.metadata.title for a in articles}
        items = build_queue(flags, markdown_by_article=markdown, titles=titles)
        return {"items": [it.to_dict() for it in items]}

    @app.get("/v1/articles", dependencies=guarded)
    def get_articles() -> dict[str, Any]:
        out = []
        for article in store.list_articles():
            records = store.active_records(article.article_id)
            open_flags = store.list_flags(article_id=article.article_id, open_only=True)
            out.append(
                {
                    "article_id": article.article_id,
                    "title": article.metadata.title,
                    "label_status": article.label_status.value,
                    "revision": store.article_revision(article.article_id),
                    "records": len(records),
                    "open_flags": len(open_flags),
                }
            )
        return {"articles": out}

    @app.get("/v1/articles/{article_id}", dependencies=guarded)
    def get_article(article_id: str) -> dict[str, Any]:
        article = store.get_article(article_id)
        if article is None:
            raise HTTPException(status_code=404, detail=f"unknown article {article_id}")
        records = store.active_records(article_id)
        flags = store.list_flags(article_id=article_id)
        return {
            "article_id": article_id,
            "title": article.metadata.title,
            "metadata": article.metadata.to_dict(),
            "label_status": article.label_status.value,
            "revision": store.article_revision(article_id),
            "markdown": article.markdown,
            "records": [serialize_record(r) for r in records],
            "flags": [f.to_dict() for f in flags],
            "coverage": store.get_coverage(article_id),
            "expected_counts": store.get_expected(article_id),
        }

    @app.get("/v1/flags/{flag_id}", dependencies=guarded)
    def get_flag(flag_id: str) -> dict[str, Any]:
        flag = store.get_flag(flag_id)
        if flag is None:
            raise HTTPException(status_code=404, detail=f"unknown flag {flag_id}")
        return flag.to_dict()

    @app.get("/v1/schema", dependencies=guarded)
    def get_schema() -> dict[str, Any]:
        return {
            "version": schema.version,
            "fields": [
                {
                    "name": spec.name,
                    "kind": spec.kind.value,
                    "unit_family": spec.unit_family,
                    "target_metric": spec.target_metric,
                    "metric_key": spec.metric_key,
                    "subprocess_group": spec.subprocess_group,
                    "gate": spec.gate,
                    "unit_field": spec.unit_field,
                    "uncertainty_field": spec.uncertainty_field,
                    "description": spec.description,
                }
                for spec in schema.fields
            ],
        }

    @app.get("/v1/stats", dependencies=guarded)
    def get_stats() -> dict[str, Any]:
        from .exports import dataset_stats

        records = store.active_records()
        return dataset_stats(records, schema, n_articles=len(store.list_articles()))

    # -- review actions --------------------------------------------------------

    @app.post("/v1/flags/{flag_id}/resolution", dependencies=guarded)
    def resolve_flag(flag_id: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        flag = store.get_flag(flag_id)
        if flag is None:
            raise HTTPException(status_code=404, detail=f"unknown flag {flag_id}")
        try:
            resolution = Resolution(str(body.get("resolution", "")))
        except ValueError:
            raise HTTPException(status_code=422,
                                detail=f"unknown resolution {body.get('resolution')!r}")
        try:
            flag = store.resolve_flag(flag_id, resolution)
        except FlagTransitionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        side_effects: dict[str, Any] = {}
        if resolution is Resolution.EXCLUDED:
            record_id = flag.detail.get("record_id")
            if flag.stage is FlagStage.OUTLIER and record_id:
                side_effects["deactivated_records"] = store.deactivate_records([record_id])
            else:
                side_effects["deactivated_records"] = store.deactivate_article_records(
                    flag.article_id
                )
                store.set_label_status(flag.article_id, LabelStatus.EXCLUDED)
                side_effects["article_excluded"] = True
        elif resolution is Resolution.INSPECTED_KEPT:
            store.set_label_status(flag.article_id, LabelStatus.HUMAN_VERIFIED)
        return {"flag": flag.to_dict(), "side_effects": side_effects}

    @app.post("/v1/articles/{article_id}/records", dependencies=guarded)
    def post_records(article_id: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        article = store.get_article(article_id)
        if article is None:
            raise HTTPException(status_code=404, detail=f"unknown article {article_id}")
        payloads = body.get("records")
        if not isinstance(payloads, list):
            raise HTTPException(status_code=422, detail="body needs a 'records' array")
        expected_revision = body.get("expected_revision")
        if expected_revision is None:
            raise HTTPException(status_code=422, detail="body needs 'expected_revision'")
        try:
            provenance = Provenance(str(body.get("provenance", "human")))
        except ValueError:
            raise HTTPException(status_code=422,
                                detail=f"unknown provenance {body.get('provenance')!r}")
        if provenance is Provenance.LLM:
            raise HTTPException(status_code=422,
                                detail="review submissions must be human or hybrid")

        revision = store.article_revision(article_id)
        next_rev = revision + 1
        records = []
        problems = []
        for idx, payload in enumerate(payloads):
            if not isinstance(payload, dict):
                problems.append({"index": idx, "error": "record must be an object"})
                continue
            record = coerce_candidate(payload, f"{article_id}:r{next_rev}:{idx:03d}",
                                      article_id, schema)
            record.provenance = provenance
            outcome = validate_record(record, schema)
            if outcome.status == "noncompliant":
                problems.append({"index": idx, "missing": outcome.missing,
                                 "extra": outcome.extra})
                continue
            if outcome.status == "empty_targets":
                problems.append({
                    "index": idx,
                    "error": "every target metric is empty; submit fewer records instead",
                })
                continue
            records.append(record)
        if problems:
            raise HTTPException(status_code=422, detail={"records": problems})

        try:
            summary = store.supersede(article_id, records, schema,
                                      expected_revision=int(expected_revision),
                                      step="review_relabel")
        except ConcurrentEditError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        store.set_label_status(article_id, LabelStatus.HUMAN_VERIFIED)
        open_flags = recheck_article(store, article_id, model_client, config)
        return {
            "revision": store.article_revision(article_id),
            "summary": summary.to_dict(),
            "open_flags": [f.to_dict() for f in open_flags],
        }

    # -- mappings ---------------------------------------------------------------

    @app.get("/v1/mappings", dependencies=guarded)
    def get_mappings(field: Optional[str] = None, status: Optional[str] = None) -> dict[str, Any]:
        table = store.mapping_table()
        proposals = store.list_proposals(field=field, status=status)
        return {
            "version": table.version,
            "accepted": table.accepted,
            "proposals": [p.to_dict() for p in proposals],
        }

    @app.post("/v1/mappings/proposals", dependencies=guarded)
    def add_proposal(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        field = str(body.get("field", "")).strip()
        alias = str(body.get("alias", "")).strip()
        canonical = str(body.get("canonical", "")).strip()
        if not field or not alias or not canonical:
            raise HTTPException(status_code=422, detail="field, alias, canonical all required")
        proposal = MappingProposal.new(field, alias, canonical, source=ProposalSource.HUMAN,
                                       note=str(body.get("note", "")))
        store.add_proposals([proposal])
        return proposal.to_dict()

    @app.post("/v1/mappings/propose", dependencies=guarded)
    def propose_for_field(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        field = str(body.get("field", "")).strip()
        if not field or field not in schema:
            raise HTTPException(status_code=422, detail=f"unknown field {field!r}")
        values = [r.value(field).raw for r in store.active_records()
                  if not r.value(field).is_empty]
        proposals = propose_mappings(field, values)
        added = store.add_proposals(proposals)
        return {"proposed": len(proposals), "new": added,
                "proposals": [p.to_dict() for p in proposals]}

    @app.post("/v1/mappings/{proposal_id}/decision", dependencies=guarded)
    def decide(proposal_id: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        if "accept" not in body:
            raise HTTPException(status_code=422, detail="body needs 'accept': true|false")
        corrected = body.get("corrected_canonical")
        try:
            proposal = store.decide_proposal(proposal_id, bool(body["accept"]),
                                             corrected_canonical=corrected)
        except StoreError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except MappingConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"proposal": proposal.to_dict(), "mapping_version": store.mapping_version}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
