"""Single-file transactional store for articles, records, flags, snapshots.

SQLite keeps everything in one file with real transactions, which is all
the scale this pipeline needs. Snapshots are immutable frozen record-id
sets with content-derived ids, so identical pipeline runs mint identical
snapshots. Raw model responses are append-only and byte-exact.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import sqlite3
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .evaluation import hungarian_match, similarity_matrix
from .hrm import FlagReport, Resolution, check_transition
from .llm import LlmResponse
from .postprocess.mappings import MappingProposal, MappingTable, ProposalStatus, decide_mapping
from .schema import (
    ArticleMetadata,
    ArticleRecord,
    ExperimentRecord,
    LabelStatus,
    Provenance,
    SchemaDefinition,
    parse_record,
    serialize_record,
)

logger = logging.getLogger(__name__)

_SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS articles (
    article_id TEXT PRIMARY KEY,
    content_hash TEXT UNIQUE NOT NULL,
    markdown TEXT NOT NULL,
    metadata TEXT NOT NULL,
    label_status TEXT NOT NULL,
    revision INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS records (
    record_id TEXT PRIMARY KEY,
    article_id TEXT NOT NULL REFERENCES articles(article_id),
    provenance TEXT NOT NULL,
    payload TEXT NOT NULL,
    active INTEGER NOT NULL DEFAULT 1,
    seq INTEGER
);
CREATE INDEX IF NOT EXISTS idx_records_article ON records(article_id, active);
CREATE TABLE IF NOT EXISTS raw_responses (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    article_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    model TEXT,
    finish_reason TEXT,
    params TEXT,
    text BLOB NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS flags (
    flag_id TEXT PRIMARY KEY,
    stage TEXT NOT NULL,
    article_id TEXT NOT NULL,
    detail TEXT NOT NULL,
    resolution TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS mapping_proposals (
    proposal_id TEXT PRIMARY KEY,
    field TEXT NOT NULL,
    alias TEXT NOT NULL,
    canonical TEXT NOT NULL,
    source TEXT NOT NULL,
    status TEXT NOT NULL,
    note TEXT
);
CREATE TABLE IF NOT EXISTS snapshots (
    snapshot_id TEXT PRIMARY KEY,
    parent_id TEXT,
    derivation TEXT NOT NULL,
    record_ids TEXT NOT NULL,
    summary TEXT,
    seq INTEGER
);
CREATE TABLE IF NOT EXISTS expected_counts (
    article_id TEXT PRIMARY KEY,
    payload TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS coverage_scores (
    article_id TEXT PRIMARY KEY,
    payload TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


@dataclass
class ChangeSummary:
    """One pipeline step's ledger row: what it added, touched, removed."""

    step: str
    articles: int = 0
    added: int = 0
    relabeled: int = 0
    removed: int = 0
    detail: dict[str, Any] = dc_field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "articles": self.articles,
            "added": self.added,
            "relabeled": self.relabeled,
            "removed": self.removed,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class Snapshot:
    snapshot_id: str
    parent_id: Optional[str]
    derivation: str
    record_ids: tuple[str, ...]
    summary: Optional[dict[str, Any]] = None


class StoreError(RuntimeError):
    pass


class ConcurrentEditError(StoreError):
    """Optimistic-concurrency check failed; reload and retry."""


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


class Store:
    """All pipeline state behind one SQLite file. Writes are serialized."""

    def __init__(self, path: str | Path, schema_version: str = "") -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._tx():
            self._conn.executescript(_SCHEMA_SQL)
        if schema_version:
            current = self.get_meta("schema_version")
            if current is None:
                self.set_meta("schema_version", schema_version)
            elif current != schema_version:
                raise StoreError(
                    f"store was created with schema version {current}, not {schema_version}"
                )

    def close(self) -> None:
        self._conn.close()

    @contextmanager
    def _tx(self):
        with self._lock:
            try:
                yield self._conn
                self._conn.commit()
            except BaseException:
                self._conn.rollback()
                raise

    # -- meta ---------------------------------------------------------------

    def get_meta(self, key: str, default: Optional[str] = None) -> Optional[str]:
        row = self._conn.execute("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return row["value"] if row else default

    def set_meta(self, key: str, value: str) -> None:
        with self._tx() as conn:
            conn.execute(
                "INSERT INTO meta(key, value) VALUES(?, ?) "
                "ON CONFLICT(key) DO UPDATE SET value = excluded.value",
                (key, value),
            )

    @property
    def mapping_version(self) -> int:
        return int(self.get_meta("mapping_version", "0") or 0)

    # -- articles -----------------------------------------------------------

    def upsert_article(self, article: ArticleRecord) -> tuple[str, bool]:
        """Insert an article; same content hash returns the existing id."""
        row = self._conn.execute(
            "SELECT article_id FROM articles WHERE content_hash = ?", (article.content_hash,)
        ).fetchone()
        if row:
            return row["article_id"], False
        with self._tx() as conn:
            conn.execute(
                "INSERT INTO articles(article_id, content_hash, markdown, metadata, label_status)"
                " VALUES(?, ?, ?, ?, ?)",
                (
                    article.article_id,
                    article.content_hash,
                    article.markdown,
                    json.dumps(article.metadata.to_dict(), ensure_ascii=False),
                    article.label_status.value,
                ),
            )
        return article.article_id, True

    def get_article(self, article_id: str) -> Optional[ArticleRecord]:
        row = self._conn.execute(
            "SELECT * FROM articles WHERE article_id = ?", (article_id,)
        ).fetchone()
        return self._article_from_row(row) if row else None

    def list_articles(self) -> list[ArticleRecord]:
        rows = self._conn.execute("SELECT * FROM articles ORDER BY article_id").fetchall()
        return [self._article_from_row(r) for r in rows]

    @staticmethod
    def _article_from_row(row: sqlite3.Row) -> ArticleRecord:
        return ArticleRecord(
            article_id=row["article_id"],
            content_hash=row["content_hash"],
            markdown=row["markdown"],
            metadata=ArticleMetadata.from_dict(json.loads(row["metadata"])),
            label_status=LabelStatus(row["label_status"]),
        )

    def article_revision(self, article_id: str) -> int:
        row = self._conn.execute(
            "SELECT revision FROM articles WHERE article_id = ?", (article_id,)
        ).fetchone()
        if row is None:
            raise StoreError(f"unknown article {article_id}")
        return int(row["revision"])

    def set_metadata(self, article_id: str, metadata: ArticleMetadata) -> None:
        with self._tx() as conn:
            cur = conn.execute(
                "UPDATE articles SET metadata = ? WHERE article_id = ?",
                (json.dumps(metadata.to_dict(), ensure_ascii=False), article_id),
            )
            if cur.rowcount == 0:
                raise StoreError(f"unknown article {article_id}")

    def set_label_status(self, article_id: str, status: LabelStatus) -> None:
        with self._tx() as conn:
            cur = conn.execute(
                "UPDATE articles SET label_status = ? WHERE article_id = ?",
                (status.value, article_id),
            )
            if cur.rowcount == 0:
                raise StoreError(f"unknown article {article_id}")

    # -- records ------------------------------------------------------------

    def add_records(self, records: Sequence[ExperimentRecord]) -> int:
        with self._tx() as conn:
            for rec in records:
                conn.execute(
                    "INSERT INTO records(record_id, article_id, provenance, payload, active)"
                    " VALUES(?, ?, ?, ?, 1)",
                    (
                        rec.record_id,
                        rec.article_id,
                        rec.provenance.value,
                        json.dumps(serialize_record(rec), ensure_ascii=False, sort_keys=True),
                    ),
                )
        return len(records)

    def active_records(self, article_id: Optional[str] = None) -> list[ExperimentRecord]:
        if article_id is None:
            rows = self._conn.execute(
                "SELECT payload FROM records WHERE active = 1 ORDER BY record_id"
            ).fetchall()
        else:
            rows = self._conn.execute(
                "SELECT payload FROM records WHERE active = 1 AND article_id = ?"
                " ORDER BY record_id",
                (article_id,),
            ).fetchall()
        return [parse_record(json.loads(r["payload"])) for r in rows]

    def update_record(self, record: ExperimentRecord) -> None:
        with self._tx() as conn:
            cur = conn.execute(
                "UPDATE records SET payload = ?, provenance = ? WHERE record_id = ?",
                (
                    json.dumps(serialize_record(record), ensure_ascii=False, sort_keys=True),
                    record.provenance.value,
                    record.record_id,
                ),
            )
            if cur.rowcount == 0:
                raise StoreError(f"unknown record {record.record_id}")

    def deactivate_article_records(self, article_id: str) -> int:
        with self._tx() as conn:
            cur = conn.execute(
                "UPDATE records SET active = 0 WHERE article_id = ? AND active = 1",
                (article_id,),
            )
            return cur.rowcount

    def deactivate_records(self, record_ids: Iterable[str]) -> int:
        count = 0
        with self._tx() as conn:
            for rid in record_ids:
                cur = conn.execute(
                    "UPDATE records SET active = 0 WHERE record_id = ? AND active = 1", (rid,)
                )
                count += cur.rowcount
        return count

    def supersede(self, article_id: str, new_records: Sequence[ExperimentRecord],
                  schema: SchemaDefinition, match_threshold: float = 0.75,
                  expected_revision: Optional[int] = None,
                  step: str = "supersede") -> ChangeSummary:
        """Atomically replace an article's active records.

        Old and new records are matched one-to-one by pair similarity;
        matched pairs count as relabeled, unmatched new ones as added,
        unmatched old ones as removed -- so added minus removed always
        equals the net change in the article's record count.
        """
        revision = self.article_revision(article_id)
        if expected_revision is not None and expected_revision != revision:
            raise ConcurrentEditError(
                f"article {article_id} is at revision {revision}, not {expected_revision}"
            )
        old = self.active_records(article_id)
        matched = 0
        if old and new_records:
            matrix = similarity_matrix(old, new_records, schema)
            pairs = hungarian_match(matrix)
            matched = sum(1 for i, j in pairs if matrix[i][j] >= match_threshold)
        summary = ChangeSummary(
            step=step,
            articles=1,
            added=len(new_records) - matched,
            relabeled=matched,
            removed=len(old) - matched,
        )
        with self._tx() as conn:
            conn.execute(
                "UPDATE records SET active = 0 WHERE article_id = ? AND active = 1",
                (article_id,),
            )
            for rec in new_records:
                conn.execute(
                    "INSERT OR REPLACE INTO records(record_id, article_id, provenance, payload,"
                    " active) VALUES(?, ?, ?, ?, 1)",
                    (
                        rec.record_id,
                        rec.article_id,
                        rec.provenance.value,
                        json.dumps(serialize_record(rec), ensure_ascii=False, sort_keys=True),
                    ),
                )
            conn.execute(
                "UPDATE articles SET revision = revision + 1 WHERE article_id = ?",
                (article_id,),
            )
        return summary

    # -- raw responses (append-only) -----------------------------------------

    def record_response(self, article_id: str, kind: str, response: LlmResponse) -> None:
        with self._tx() as conn:
            conn.execute(
                "INSERT INTO raw_responses(article_id, kind, model, finish_reason, params, text,"
                " created_at) VALUES(?, ?, ?, ?, ?, ?, ?)",
                (
                    article_id,
                    kind,
                    response.model,
                    response.finish_reason,
                    json.dumps(response.request_params, ensure_ascii=False, sort_keys=True),
                    response.text.encode("utf-8"),
                    _now(),
                ),
            )

    def responses_for(self, article_id: str, kind: Optional[str] = None) -> list[dict[str, Any]]:
        if kind is None:
            rows = self._conn.execute(
                "SELECT * FROM raw_responses WHERE article_id = ? ORDER BY seq", (article_id,)
            ).fetchall()
        else:
            rows = self._conn.execute(
                "SELECT * FROM raw_responses WHERE article_id = ? AND kind = ? ORDER BY seq",
                (article_id, kind),
            ).fetchall()
        return [
            {
                "seq": r["seq"],
                "kind": r["kind"],
                "model": r["model"],
                "finish_reason": r["finish_reason"],
                "params": json.loads(r["params"]) if r["params"] else {},
                "text": bytes(r["text"]).decode("utf-8"),
                "created_at": r["created_at"],
            }
            for r in rows
        ]

    # -- flags ----------------------------------------------------------------

    def add_flags(self, flags: Iterable[FlagReport]) -> int:
        count = 0
        with self._tx() as conn:
            for flag in flags:
                flag.created_at = flag.created_at or _now()
                conn.execute(
                    "INSERT OR IGNORE INTO flags(flag_id, stage, article_id, detail, resolution,"
                    " created_at) VALUES(?, ?, ?, ?, ?, ?)",
                    (
                        flag.flag_id,
                        flag.stage.value,
                        flag.article_id,
                        json.dumps(flag.detail, ensure_ascii=False, sort_keys=True),
                        flag.resolution.value,
                        flag.created_at,
                    ),
                )
                count += 1
        return count

    def get_flag(self, flag_id: str) -> Optional[FlagReport]:
        row = self._conn.execute("SELECT * FROM flags WHERE flag_id = ?", (flag_id,)).fetchone()
        return self._flag_from_row(row) if row else None

    def list_flags(self, article_id: Optional[str] = None, stage: Optional[str] = None,
                   open_only: bool = False) -> list[FlagReport]:
        clauses = []
        params: list[Any] = []
        if article_id:
            clauses.append("article_id = ?")
            params.append(article_id)
        if stage:
            clauses.append("stage = ?")
            params.append(stage)
        if open_only:
            clauses.append("resolution = 'open'")
        where = (" WHERE " + " AND ".join(clauses)) if clauses else ""
        rows = self._conn.execute(
            f"SELECT * FROM flags{where} ORDER BY created_at, flag_id", params
        ).fetchall()
        return [self._flag_from_row(r) for r in rows]

    @staticmethod
    def _flag_from_row(row: sqlite3.Row) -> FlagReport:
        from .hrm import FlagStage

        return FlagReport(
            flag_id=row["flag_id"],
            stage=FlagStage(row["stage"]),
            article_id=row["article_id"],
            detail=json.loads(row["detail"]),
            resolution=Resolution(row["resolution"]),
            created_at=row["created_at"],
        )

    def resolve_flag(self, flag_id: str, resolution: Resolution) -> FlagReport:
        flag = self.get_flag(flag_id)
        if flag is None:
            raise StoreError(f"unknown flag {flag_id}")
        check_transition(flag.stage, flag.resolution, resolution)
        with self._tx() as conn:
            conn.execute(
                "UPDATE flags SET resolution = ? WHERE flag_id = ?",
                (resolution.value, flag_id),
            )
        flag.resolution = resolution
        return flag

    # -- mapping proposals ------------------------------------------------------

    def add_proposals(self, proposals: Sequence[MappingProposal]) -> int:
        added = 0
        with self._tx() as conn:
            for p in proposals:
                cur = conn.execute(
                    "INSERT OR IGNORE INTO mapping_proposals(proposal_id, field, alias, canonical,"
                    " source, status, note) VALUES(?, ?, ?, ?, ?, ?, ?)",
                    (p.proposal_id, p.field, p.alias, p.canonical, p.source.value,
                     p.status.value, p.note),
                )
                added += cur.rowcount
        return added

    def get_proposal(self, proposal_id: str) -> Optional[MappingProposal]:
        row = self._conn.execute(
            "SELECT * FROM mapping_proposals WHERE proposal_id = ?", (proposal_id,)
        ).fetchone()
        return self._proposal_from_row(row) if row else None

    def list_proposals(self, field: Optional[str] = None,
                       status: Optional[str] = None) -> list[MappingProposal]:
        clauses = []
        params: list[Any] = []
        if field:
            clauses.append("field = ?")
            params.append(field)
        if status:
            clauses.append("status = ?")
            params.append(status)
        where = (" WHERE " + " AND ".join(clauses)) if clauses else ""
        rows = self._conn.execute(
            f"SELECT * FROM mapping_proposals{where} ORDER BY field, alias, proposal_id", params
        ).fetchall()
        return [self._proposal_from_row(r) for r in rows]

    @staticmethod
    def _proposal_from_row(row: sqlite3.Row) -> MappingProposal:
        return MappingProposal.from_dict(dict(row))

    def mapping_table(self) -> MappingTable:
        table = MappingTable(version=self.mapping_version)
        for p in self.list_proposals(status=ProposalStatus.ACCEPTED.value):
            table.accepted.setdefault(p.field, {})[p.alias] = p.canonical
        return table

    def decide_proposal(self, proposal_id: str, accept: bool,
                        corrected_canonical: Optional[str] = None) -> MappingProposal:
        proposal = self.get_proposal(proposal_id)
        if proposal is None:
            raise StoreError(f"unknown proposal {proposal_id}")
        table = self.mapping_table()
        decide_mapping(proposal, table, accept, corrected_canonical)
        with self._tx() as conn:
            conn.execute(
                "UPDATE mapping_proposals SET status = ?, canonical = ? WHERE proposal_id = ?",
                (proposal.status.value, proposal.canonical, proposal_id),
            )
        if accept:
            self.set_meta("mapping_version", str(table.version))
        return proposal

    # -- expected counts / coverage ------------------------------------------

    def set_expected(self, article_id: str, payload: dict[str, Any]) -> None:
        with self._tx() as conn:
            conn.execute(
                "INSERT INTO expected_counts(article_id, payload) VALUES(?, ?)"
                " ON CONFLICT(article_id) DO UPDATE SET payload = excluded.payload",
                (article_id, json.dumps(payload, ensure_ascii=False, sort_keys=True)),
            )

    def get_expected(self, article_id: str) -> Optional[dict[str, Any]]:
        row = self._conn.execute(
            "SELECT payload FROM expected_counts WHERE article_id = ?", (article_id,)
        ).fetchone()
        return json.loads(row["payload"]) if row else None

    def set_coverage(self, article_id: str, payload: dict[str, Any]) -> None:
        with self._tx() as conn:
            conn.execute(
                "INSERT INTO coverage_scores(article_id, payload) VALUES(?, ?)"
                " ON CONFLICT(article_id) DO UPDATE SET payload = excluded.payload",
                (article_id, json.dumps(payload, ensure_ascii=False, sort_keys=True)),
            )

    def get_coverage(self, article_id: str) -> Optional[dict[str, Any]]:
        row = self._conn.execute(
            "SELECT payload FROM coverage_scores WHERE article_id = ?", (article_id,)
        ).fetchone()
        return json.loads(row["payload"]) if row else None

    # -- snapshots --------------------------------------------------------------

    def create_snapshot(self, derivation: str, record_ids: Sequence[str],
                        parent_id: Optional[str] = None,
                        summary: Optional[ChangeSummary] = None) -> Snapshot:
        """Freeze a record-id set under a content-derived id.

        The id hashes the derivation label, parent, sorted record ids, and
        the schema/mapping versions, so re-running the same step over the
        same state returns the already-stored snapshot.
        """
        ids = tuple(sorted(record_ids))
        basis = "\x00".join(
            [
                derivation,
                parent_id or "",
                ",".join(ids),
                self.get_meta("schema_version", "") or "",
                str(self.mapping_version),
            ]
        )
        snapshot_id = "s" + hashlib.sha256(basis.encode("utf-8")).hexdigest()[:16]
        existing = self.get_snapshot(snapshot_id)
        if existing is not None:
            return existing
        seq_row = self._conn.execute("SELECT COALESCE(MAX(seq), 0) + 1 AS n FROM snapshots").fetchone()
        with self._tx() as conn:
            conn.execute(
                "INSERT INTO snapshots(snapshot_id, parent_id, derivation, record_ids, summary,"
                " seq) VALUES(?, ?, ?, ?, ?, ?)",
                (
                    snapshot_id,
                    parent_id,
                    derivation,
                    json.dumps(list(ids)),
                    json.dumps(summary.to_dict(), ensure_ascii=False, sort_keys=True)
                    if summary
                    else None,
                    seq_row["n"],
                ),
            )
        return Snapshot(snapshot_id=snapshot_id, parent_id=parent_id, derivation=derivation,
                        record_ids=ids, summary=summary.to_dict() if summary else None)

    def get_snapshot(self, snapshot_id: str) -> Optional[Snapshot]:
        row = self._conn.execute(
            "SELECT * FROM snapshots WHERE snapshot_id = ?", (snapshot_id,)
        ).fetchone()
        return self._snapshot_from_row(row) if row else None

    def list_snapshots(self) -> list[Snapshot]:
        rows = self._conn.execute("SELECT * FROM snapshots ORDER BY seq").fetchall()
        return [self._snapshot_from_row(r) for r in rows]

    def latest_snapshot(self) -> Optional[Snapshot]:
        row = self._conn.execute("SELECT * FROM snapshots ORDER BY seq DESC LIMIT 1").fetchone()
        return self._snapshot_from_row(row) if row else None

    @staticmethod
    def _snapshot_from_row(row: sqlite3.Row) -> Snapshot:
        return Snapshot(
            snapshot_id=row["snapshot_id"],
            parent_id=row["parent_id"],
            derivation=row["derivation"],
            record_ids=tuple(json.loads(row["record_ids"])),
            summary=json.loads(row["summary"]) if row["summary"] else None,
        )

    def records_in(self, snapshot: Snapshot) -> list[ExperimentRecord]:
        out = []
        for rid in snapshot.record_ids:
            row = self._conn.execute(
                "SELECT payload FROM records WHERE record_id = ?", (rid,)
            ).fetchone()
            if row is None:
                raise StoreError(f"snapshot {snapshot.snapshot_id} references missing record {rid}")
            out.append(parse_record(json.loads(row["payload"])))
        return out
