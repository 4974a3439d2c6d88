"""Shared fixtures: the frozen corpus, a populated store, record builders."""

from __future__ import annotations

from itertools import permutations
from pathlib import Path

import pytest

from hugo.ingest import FixtureRegistryClient, content_hash, load_corpus, resolve_metadata
from hugo.llm import FixtureLlmClient
from hugo.pipeline import PipelineConfig, run_pipeline
from hugo.schema import ExperimentRecord, FieldValue, Provenance
from hugo.store import Store

FIXTURES = Path(__file__).parent / "fixtures"

# corpus file stem -> the one-letter key used throughout the tests
SLUG_KEYS = {
    "ti64_tensile": "a",
    "copper_microstructure": "b",
    "aero_repair": "c",
    "ss316l_optimisation": "d",
    "copper_wc17co": "e",
    "cp_ti_efficiency": "f",
    "in718_hardness": "g",
    "al6061_properties": "h",
    "alcu_cuw_blends": "i",
    "units_case_studies": "j",
}


@pytest.fixture(scope="session")
def config() -> PipelineConfig:
    return PipelineConfig.load()


@pytest.fixture(scope="session")
def schema(config):
    return config.schema


@pytest.fixture(scope="session")
def id_by_key() -> dict[str, str]:
    out = {}
    for path in sorted((FIXTURES / "corpus").glob("*.md")):
        out[SLUG_KEYS[path.stem]] = content_hash(path.read_text(encoding="utf-8"))[:12]
    return out


def build_pipeline_store(db_path: Path, config: PipelineConfig):
    """Ingest the fixture corpus, link metadata, and run every step once.

    The one ambiguous registry match is settled the way a reviewer would,
    by picking the journal listing; the unlisted article is left without
    a link on purpose (export refusal is part of the tests).
    """
    store = Store(db_path, schema_version=config.schema.version)
    registry = FixtureRegistryClient(FIXTURES / "registry.json")
    for article in load_corpus(FIXTURES / "corpus"):
        match = resolve_metadata(article, registry)
        store.upsert_article(article)
        if match.resolution == "ambiguous":
            chosen = next(md for _, md in match.candidates if md.doi.endswith(".0071"))
            store.set_metadata(article.article_id, chosen)
    client = FixtureLlmClient(FIXTURES / "llm")
    result = run_pipeline(store, FIXTURES / "corpus", client, config)
    return store, result, client


@pytest.fixture(scope="session")
def pipeline_session(config, tmp_path_factory):
    """One full pipeline run shared by read-only tests."""
    db = tmp_path_factory.mktemp("pipeline") / "work.db"
    store, result, _client = build_pipeline_store(db, config)
    yield store, result
    store.close()


@pytest.fixture()
def fresh_pipeline(config, tmp_path):
    """A private pipeline run for tests that mutate the store."""
    store, result, client = build_pipeline_store(tmp_path / "work.db", config)
    yield store, result, client
    store.close()


def make_record(article_id: str = "aaaaaaaaaaaa", idx: int = 0,
                provenance: Provenance = Provenance.LLM, **fields) -> ExperimentRecord:
    values = {name: FieldValue.from_raw(value) for name, value in fields.items()}
    return ExperimentRecord(
        record_id=f"{article_id}:{idx:03d}",
        article_id=article_id,
        provenance=provenance,
        values=values,
    )


def brute_force_assignment_total(matrix: list[list[float]]) -> float:
    """Exhaustive optimum of the assignment problem, for oracle checks."""
    rows, cols = len(matrix), len(matrix[0])
    if rows <= cols:
        return max(
            sum(matrix[i][perm[i]] for i in range(rows))
            for perm in permutations(range(cols), rows)
        )
    return max(
        sum(matrix[perm[j]][j] for j in range(cols))
        for perm in permutations(range(rows), cols)
    )
