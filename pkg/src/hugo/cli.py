"""Command-line front end for the labeling pipeline.

Every verb works against a store file, so a full run can be driven
step by step (ingest, extract, check, review, export) or in one shot
with ``run``. Model access comes from either a fixtures directory or
an OpenAI-compatible endpoint.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from . import api as api_mod
from .evaluation import corpus_report, score_article
from .exports import ExportError, dataset_stats, write_export
from .hrm import Resolution
from .ingest import FixtureRegistryClient, load_corpus, resolve_metadata, set_metadata_manual
from .llm import FixtureLlmClient, LlmClient, NullLlmClient, OpenAiCompatibleClient
from .pipeline import (
    PipelineConfig,
    recheck_article,
    run_pipeline,
    step_completeness,
    step_composition,
    step_coverage,
    step_initial_labeling,
    step_ingest,
    step_outliers,
    step_unit_normalization,
)
from .postprocess.mappings import apply_mappings, propose_mappings, review_mappings
from .reports import write_eval_report, write_stats_report
from .schema import (
    ArticleMetadata,
    LabelStatus,
    Provenance,
    coerce_candidate,
    parse_record,
    validate_record,
)
from .store import ConcurrentEditError, Store, StoreError

logger = logging.getLogger(__name__)


def _open_store(path: str, config: PipelineConfig) -> Store:
    return Store(path, schema_version=config.schema.version)


def _make_client(fixtures: Optional[str], base_url: Optional[str], model: Optional[str],
                 reasoning_effort: Optional[str]) -> Optional[LlmClient]:
    if fixtures:
        return FixtureLlmClient(fixtures)
    if base_url:
        if not model:
            raise click.UsageError("--model is required with --base-url")
        return OpenAiCompatibleClient(base_url=base_url, model=model,
                                      reasoning_effort=reasoning_effort)
    return None


def client_options(fn):
    fn = click.option("--fixtures", type=click.Path(exists=True, file_okay=False),
                      help="Directory of canned responses keyed by article hash.")(fn)
    fn = click.option("--base-url", help="OpenAI-compatible endpoint base URL.")(fn)
    fn = click.option("--model", help="Model name for --base-url.")(fn)
    fn = click.option("--reasoning-effort", help="Optional reasoning effort passthrough.")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.option("--schema", "schema_path", type=click.Path(exists=True, dir_okay=False),
              help="Alternate schema YAML (default: packaged).")
@click.pass_context
def main(ctx: click.Context, verbose: bool, schema_path: Optional[str]) -> None:
    """Hybrid labeling pipeline for cold-spray literature."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = PipelineConfig.load(schema_path=schema_path)


@main.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--store", "store_path", required=True, type=click.Path(dir_okay=False))
@click.option("--registry", type=click.Path(exists=True, dir_okay=False),
              help="JSON metadata registry for title linking.")
@click.pass_obj
def ingest(config: PipelineConfig, corpus_dir: str, store_path: str,
           registry: Optional[str]) -> None:
    """Load markdown articles into the store (idempotent by content)."""
    store = _open_store(store_path, config)
    articles = load_corpus(corpus_dir)
    new = 0
    linked = 0
    reg_client = FixtureRegistryClient(registry) if registry else None
    for article in articles:
        if reg_client is not None and not article.metadata.has_link:
            match = resolve_metadata(article, reg_client)
            if match.resolution == "auto_linked":
                linked += 1
            else:
                click.echo(f"{article.article_id}: metadata {match.resolution}, needs manual entry")
        _, created = store.upsert_article(article)
        new += int(created)
    click.echo(f"ingested {len(articles)} articles ({new} new, {linked} auto-linked)"
               f" into {store_path}")


@main.command()
@click.argument("article_id")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--title", default="")
@click.option("--doi", default="")
@click.option("--link", default="", help="Source link when no DOI exists.")
@click.option("--venue", default="")
@click.option("--year", type=int, default=None)
@click.pass_obj
def metadata(config: PipelineConfig, article_id: str, store_path: str, title: str,
             doi: str, link: str, venue: str, year: Optional[int]) -> None:
    """Set article metadata by hand; requires a DOI or a source link."""
    store = _open_store(store_path, config)
    article = store.get_article(article_id)
    if article is None:
        raise click.ClickException(f"unknown article {article_id}")
    meta = ArticleMetadata(title=title or article.metadata.title, doi=doi,
                           source_link=link, venue=venue, year=year)
    try:
        set_metadata_manual(article, meta)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    store.set_metadata(article_id, article.metadata)
    click.echo(f"metadata updated for {article_id}")


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@client_options
@click.pass_obj
def extract(config: PipelineConfig, store_path: str, fixtures: Optional[str],
            base_url: Optional[str], model: Optional[str],
            reasoning_effort: Optional[str]) -> None:
    """Label every unlabeled article with the model."""
    client = _make_client(fixtures, base_url, model, reasoning_effort)
    if client is None:
        raise click.UsageError("extract needs --fixtures or --base-url/--model")
    store = _open_store(store_path, config)
    summary = step_initial_labeling(store, client, config)
    click.echo(f"labeled {summary.articles} articles, {summary.added} records,"
               f" {summary.detail.get('syntax_flags', 0)} syntax flags")


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@client_options
@click.pass_obj
def check(config: PipelineConfig, store_path: str, fixtures: Optional[str],
          base_url: Optional[str], model: Optional[str],
          reasoning_effort: Optional[str]) -> None:
    """Run the completeness, outlier, and coverage checks."""
    client = _make_client(fixtures, base_url, model, reasoning_effort) or NullLlmClient()
    store = _open_store(store_path, config)
    s2 = step_completeness(store, config)
    s3 = step_outliers(store, config)
    s4 = step_coverage(store, client, config)
    click.echo(f"completeness: {s2.relabeled} records repaired,"
               f" {s2.detail.get('open_flags', 0)} flags")
    click.echo(f"outliers: {s3.detail.get('flags', 0)} flags")
    click.echo(f"coverage: {s4.articles} articles scored, {s4.detail.get('flags', 0)} flags")


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def queue(config: PipelineConfig, store_path: str) -> None:
    """Print the open review queue in triage order."""
    from .hrm import build_queue

    store = _open_store(store_path, config)
    articles = store.list_articles()
    items = build_queue(
        store.list_flags(open_only=True),
        markdown_by_article={a.article_id: a.markdown for a in articles},
        titles={a.article_id: a.metadata.title for a in articles},
    )
    if not items:
        click.echo("queue is empty")
        return
    for it in items:
        wev = f" wev={it.wev:.2f}" if it.wev is not None else ""
        click.echo(f"{it.flag_id}  {it.stage.value:<13} {it.article_id}{wev}  {it.title}")


@main.command()
@click.argument("flag_id")
@click.argument("resolution", type=click.Choice([r.value for r in Resolution if r.value != "open"]))
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def resolve(config: PipelineConfig, flag_id: str, resolution: str, store_path: str) -> None:
    """Resolve one flag (relabeled, excluded, inspected_kept, auto_repaired)."""
    store = _open_store(store_path, config)
    try:
        flag = store.resolve_flag(flag_id, Resolution(resolution))
    except (StoreError, ValueError) as exc:
        raise click.ClickException(str(exc))
    if Resolution(resolution) is Resolution.EXCLUDED:
        record_id = flag.detail.get("record_id")
        if record_id:
            n = store.deactivate_records([record_id])
        else:
            n = store.deactivate_article_records(flag.article_id)
            store.set_label_status(flag.article_id, LabelStatus.EXCLUDED)
        click.echo(f"excluded: {n} records deactivated")
    click.echo(f"flag {flag_id} resolved as {resolution}")


@main.command()
@click.argument("article_id")
@click.argument("records_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--provenance", type=click.Choice(["human", "hybrid"]), default="human")
@click.option("--expected-revision", type=int, default=None,
              help="Fail if the article moved past this revision.")
@client_options
@click.pass_obj
def relabel(config: PipelineConfig, article_id: str, records_file: str, store_path: str,
            provenance: str, expected_revision: Optional[int], fixtures: Optional[str],
            base_url: Optional[str], model: Optional[str],
            reasoning_effort: Optional[str]) -> None:
    """Replace an article's records from a JSON file and re-run checks."""
    store = _open_store(store_path, config)
    if store.get_article(article_id) is None:
        raise click.ClickException(f"unknown article {article_id}")
    with open(records_file, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    payloads = doc["records"] if isinstance(doc, dict) else doc
    revision = store.article_revision(article_id)
    next_rev = revision + 1
    records = []
    problems = []
    for idx, payload in enumerate(payloads):
        record = coerce_candidate(payload, f"{article_id}:r{next_rev}:{idx:03d}",
                                  article_id, config.schema)
        record.provenance = Provenance(provenance)
        outcome = validate_record(record, config.schema)
        if outcome.status == "noncompliant":
            problems.append(f"record {idx}: missing={outcome.missing} extra={outcome.extra}")
        elif outcome.status == "empty_targets":
            problems.append(f"record {idx}: every target metric is empty")
        else:
            records.append(record)
    if problems:
        raise click.ClickException("invalid records:\n  " + "\n  ".join(problems))
    try:
        summary = store.supersede(article_id, records, config.schema,
                                  expected_revision=expected_revision, step="review_relabel")
    except ConcurrentEditError as exc:
        raise click.ClickException(str(exc))
    store.set_label_status(article_id, LabelStatus.HUMAN_VERIFIED)
    client = _make_client(fixtures, base_url, model, reasoning_effort) or NullLlmClient()
    open_flags = recheck_article(store, article_id, client, config)
    click.echo(f"relabeled {article_id}: +{summary.added} ~{summary.relabeled}"
               f" -{summary.removed}; {len(open_flags)} open flags after recheck")


@main.group("map")
def map_group() -> None:
    """Vocabulary mapping workflow: propose, decide, review, apply."""


@map_group.command("propose")
@click.argument("field")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@client_options
@click.pass_obj
def map_propose(config: PipelineConfig, field: str, store_path: str, fixtures: Optional[str],
                base_url: Optional[str], model: Optional[str],
                reasoning_effort: Optional[str]) -> None:
    """Cluster a field's observed values into mapping proposals."""
    if field not in config.schema:
        raise click.ClickException(f"unknown field {field!r}")
    store = _open_store(store_path, config)
    client = _make_client(fixtures, base_url, model, reasoning_effort)
    values = [r.value(field).raw for r in store.active_records() if not r.value(field).is_empty]
    proposals = propose_mappings(field, values, llm_client=client)
    added = store.add_proposals(proposals)
    click.echo(f"{len(proposals)} proposals for {field} ({added} new)")
    for p in proposals:
        click.echo(f"  {p.proposal_id}  {p.alias!r} -> {p.canonical!r}  [{p.source.value}]")


@map_group.command("decide")
@click.argument("proposal_id")
@click.option("--accept/--reject", required=True)
@click.option("--canonical", default=None, help="Override the canonical form on accept.")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def map_decide(config: PipelineConfig, proposal_id: str, accept: bool,
               canonical: Optional[str], store_path: str) -> None:
    """Accept or prune one mapping proposal."""
    store = _open_store(store_path, config)
    try:
        proposal = store.decide_proposal(proposal_id, accept, corrected_canonical=canonical)
    except (StoreError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{proposal.proposal_id}: {proposal.status.value}"
               f" (mapping table v{store.mapping_version})")


@map_group.command("review")
@click.argument("field")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@client_options
@click.pass_obj
def map_review(config: PipelineConfig, field: str, store_path: str, fixtures: Optional[str],
               base_url: Optional[str], model: Optional[str],
               reasoning_effort: Optional[str]) -> None:
    """Advisory model pass over the accepted table (read-only)."""
    client = _make_client(fixtures, base_url, model, reasoning_effort)
    if client is None:
        raise click.UsageError("map review needs --fixtures or --base-url/--model")
    store = _open_store(store_path, config)
    notes = review_mappings(field, store.mapping_table(), client)
    if not notes:
        click.echo("no advisory notes")
    for note in notes:
        click.echo(f"  [{note.get('kind')}] {note.get('values')}: {note.get('note')}")


@map_group.command("apply")
@click.argument("field")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def map_apply(config: PipelineConfig, field: str, store_path: str) -> None:
    """Show the canonical column the accepted table yields for a field."""
    store = _open_store(store_path, config)
    records = store.active_records()
    values = [r.value(field).raw or None for r in records]
    column, stats = apply_mappings(values, field, store.mapping_table())
    click.echo(f"{field}: {stats.unique_before} unique values -> {stats.unique_after}"
               f" ({stats.reduction_pct:.1f}% reduction, {stats.mapped} cells mapped)")
    if stats.unmapped_values:
        click.echo("unmapped: " + ", ".join(repr(v) for v in stats.unmapped_values))
    for rec, canon in zip(records, column):
        if canon is not None and canon != (rec.value(field).raw or None):
            click.echo(f"  {rec.record_id}: {rec.value(field).raw!r} -> {canon!r}")


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def compose(config: PipelineConfig, store_path: str) -> None:
    """Derive powder composition vectors and summarize the outcome."""
    store = _open_store(store_path, config)
    summary = step_composition(store, config)
    d = summary.detail
    click.echo(f"{d.get('with_vector', 0)}/{d.get('records', 0)} records have a composition"
               f" vector (lineages: {d.get('lineages', {})}, {d.get('notes', 0)} notes)")


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def units(config: PipelineConfig, store_path: str) -> None:
    """Dry-run unit normalization over every numeric value."""
    store = _open_store(store_path, config)
    summary = step_unit_normalization(store, config)
    click.echo(f"convertible: {summary.detail.get('converted', 0)},"
               f" invalid: {summary.detail.get('invalid', 0)}")


@main.command("eval")
@click.option("--gold", "gold_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSONL of ground-truth records.")
@click.option("--candidates", "cand_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL of records to score.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_obj
def eval_cmd(config: PipelineConfig, gold_file: str, cand_file: str, out_dir: str) -> None:
    """Score candidate records against ground truth, with figures."""

    def _load(path: str):
        by_article: dict[str, list] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                payload = doc.get("record", doc)
                record = parse_record(payload)
                by_article.setdefault(record.article_id, []).append(record)
        return by_article

    gold = _load(gold_file)
    cands = _load(cand_file)
    scores = []
    for article_id in sorted(set(gold) | set(cands)):
        scores.append(
            score_article(gold.get(article_id, []), cands.get(article_id, []),
                          config.schema, article_id=article_id)
        )
    report = corpus_report(scores)
    paths = write_eval_report(out_dir, report)
    micro = report["micro"]
    click.echo(f"experiment precision {micro['experiment_precision']:.4f}"
               f" recall {micro['experiment_recall']:.4f}"
               f" over {report['articles']} articles"
               f" ({report['matched_records']}/{report['candidate_records']} matched)")
    click.echo("wrote " + ", ".join(str(p) for p in paths.values()))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--view", type=click.Choice(["raw", "normalized"]), default="normalized")
@click.option("--subset", type=click.Choice(["all", "gold"]), default="all")
@click.pass_obj
def export(config: PipelineConfig, store_path: str, out_dir: str, view: str, subset: str) -> None:
    """Write records.csv, records.jsonl, and manifest.json."""
    store = _open_store(store_path, config)
    snapshot = store.latest_snapshot()
    try:
        paths = write_export(
            out_dir, store.active_records(), store.list_articles(), config.schema,
            view=view, subset=subset, unit_rules=config.unit_rules,
            mapping_table=store.mapping_table(), elements=config.elements,
            nominal=config.nominal,
            snapshot_id=snapshot.snapshot_id if snapshot else None,
            schema_version=store.get_meta("schema_version") or config.schema.version,
        )
    except ExportError as exc:
        raise click.ClickException(str(exc))
    click.echo("wrote " + ", ".join(str(p) for p in paths.values()))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_obj
def stats(config: PipelineConfig, store_path: str, out_dir: str) -> None:
    """Dataset statistics tables plus figures."""
    store = _open_store(store_path, config)
    data = dataset_stats(store.active_records(), config.schema,
                         n_articles=len(store.list_articles()))
    paths = write_stats_report(out_dir, data)
    click.echo("wrote " + ", ".join(str(p) for p in paths.values()))


@main.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--store", "store_path", required=True, type=click.Path(dir_okay=False))
@click.option("--export-dir", type=click.Path(file_okay=False),
              help="Also export the final dataset here.")
@click.option("--registry", type=click.Path(exists=True, dir_okay=False))
@client_options
@click.pass_obj
def run(config: PipelineConfig, corpus_dir: str, store_path: str, export_dir: Optional[str],
        registry: Optional[str], fixtures: Optional[str], base_url: Optional[str],
        model: Optional[str], reasoning_effort: Optional[str]) -> None:
    """Full pipeline: ingest, label, check, derive, snapshot each step."""
    client = _make_client(fixtures, base_url, model, reasoning_effort)
    if client is None:
        raise click.UsageError("run needs --fixtures or --base-url/--model")
    store = _open_store(store_path, config)
    if registry:
        reg_client = FixtureRegistryClient(registry)
        step_ingest(store, corpus_dir)
        for article in store.list_articles():
            if not article.metadata.has_link:
                match = resolve_metadata(article, reg_client)
                if match.resolution == "auto_linked":
                    store.set_metadata(article.article_id, article.metadata)
    result = run_pipeline(store, corpus_dir, client, config=config, export_dir=export_dir)
    for summary in result.summaries:
        click.echo(f"  {summary.step:<22} +{summary.added:<4} ~{summary.relabeled:<4}"
                   f" -{summary.removed:<4} {summary.detail}")
    click.echo(f"final active records: {result.final_records}"
               f" (ledger {'consistent' if result.ledger_consistent else 'MISMATCH'})")
    if result.export_paths:
        click.echo("exported " + ", ".join(str(p) for p in result.export_paths.values()))
    if not result.ledger_consistent:
        sys.exit(1)


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8351)
@click.option("--static", "static_dir", type=click.Path(exists=True, file_okay=False),
              help="Directory with the built review UI, served at /ui.")
@click.option("--token", default=None, help="Require this bearer token on /v1 routes.")
@click.pass_obj
def serve(config: PipelineConfig, store_path: str, host: str, port: int,
          static_dir: Optional[str], token: Optional[str]) -> None:
    """Run the HTTP review service."""
    import uvicorn

    store = _open_store(store_path, config)
    app = api_mod.create_app(store, config=config, static_dir=static_dir, token=token)
    click.echo(f"review service on http://{host}:{port}/v1 (docs at /docs)")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
