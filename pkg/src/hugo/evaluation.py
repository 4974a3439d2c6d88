"""Extraction quality scoring against ground-truth records.

Records are matched one-to-one by maximizing total pairwise similarity
with an O(n^3) assignment solver; matched pairs then feed experiment-level
precision/recall and field-level agreement metrics. Corpus aggregation
reports micro (pooled counts) and macro (mean of per-article scores)
averages, labeled as such.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

from .hrm import string_similarity
from .schema import ExperimentRecord, FieldKind, FieldValue, SchemaDefinition

logger = logging.getLogger(__name__)

MATCH_THRESHOLD = 0.75
FIELD_TEXT_THRESHOLD = 0.9
FIELD_NUMERIC_REL_TOL = 0.01


def _key_similarity(a: FieldValue, b: FieldValue, kind: FieldKind) -> Optional[float]:
    """Similarity of one field pair, or None when both sides are empty."""
    if a.is_empty and b.is_empty:
        return None
    if a.is_empty or b.is_empty:
        return 0.0
    if kind is FieldKind.NUMERIC and a.numeric is not None and b.numeric is not None:
        if a.numeric == 0.0 and b.numeric == 0.0:
            return 1.0
        return max(0.0, 1.0 - abs(a.numeric - b.numeric) / max(abs(a.numeric), abs(b.numeric)))
    if kind is FieldKind.BOOLEAN:
        return 1.0 if a.as_bool() == b.as_bool() else 0.0
    return string_similarity(a.raw or "", b.raw or "")


def pair_similarity(a: ExperimentRecord, b: ExperimentRecord,
                    schema: SchemaDefinition) -> float:
    """Mean per-field similarity over the fields where either side has a
    value. Two records that are empty everywhere count as identical."""
    total = 0.0
    contributing = 0
    for spec in schema.fields:
        sim = _key_similarity(a.value(spec.name), b.value(spec.name), spec.kind)
        if sim is None:
            continue
        total += sim
        contributing += 1
    if contributing == 0:
        return 1.0
    return total / contributing


def similarity_matrix(gold: Sequence[ExperimentRecord], candidates: Sequence[ExperimentRecord],
                      schema: SchemaDefinition) -> list[list[float]]:
    return [[pair_similarity(g, c, schema) for c in candidates] for g in gold]


def hungarian_match(matrix: Sequence[Sequence[float]]) -> list[tuple[int, int]]:
    """Optimal one-to-one assignment maximizing total similarity.

    Potentials-based shortest augmenting path solver, O(n^3). Rectangular
    matrices are padded internally with zero-similarity cells; pairs
    involving padding are dropped from the result, so the returned pairs
    cover min(rows, cols) real cells.
    """
    n_rows = len(matrix)
    n_cols = len(matrix[0]) if n_rows else 0
    if n_rows == 0 or n_cols == 0:
        return []
    n = max(n_rows, n_cols)
    # maximize similarity == minimize negated cost on a padded square matrix
    cost = [[0.0] * n for _ in range(n)]
    for i in range(n_rows):
        row = matrix[i]
        for j in range(n_cols):
            cost[i][j] = -row[j]

    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    assigned_row = [0] * (n + 1)  # assigned_row[col] = row occupying col (1-based)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        assigned_row[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = assigned_row[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[assigned_row[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if assigned_row[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            assigned_row[j0] = assigned_row[j1]
            j0 = j1

    pairs = []
    for j in range(1, n + 1):
        i = assigned_row[j]
        if 1 <= i <= n_rows and j <= n_cols:
            pairs.append((i - 1, j - 1))
    pairs.sort()
    return pairs


def _field_agreement(a: FieldValue, b: FieldValue, kind: FieldKind) -> bool:
    if a.is_empty and b.is_empty:
        return True
    if a.is_empty or b.is_empty:
        return False
    if kind is FieldKind.NUMERIC and a.numeric is not None and b.numeric is not None:
        if a.numeric == 0.0 and b.numeric == 0.0:
            return True
        return abs(a.numeric - b.numeric) <= FIELD_NUMERIC_REL_TOL * max(abs(a.numeric), abs(b.numeric))
    if kind is FieldKind.BOOLEAN:
        return a.as_bool() == b.as_bool()
    return string_similarity(a.raw or "", b.raw or "") >= FIELD_TEXT_THRESHOLD


@dataclass
class ArticleScore:
    article_id: str
    gold_count: int
    candidate_count: int
    matched: int
    precision: Optional[float]
    recall: Optional[float]
    field_accuracy: Optional[float]
    field_precision: Optional[float]
    field_recall: Optional[float]
    pairs: list[dict] = dc_field(default_factory=list)
    note: str = ""
    # pooled field counts for micro averaging
    field_correct: int = 0
    field_total: int = 0
    field_nonempty_candidate: int = 0
    field_nonempty_gold: int = 0
    field_agree_candidate: int = 0
    field_agree_gold: int = 0

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "gold_count": self.gold_count,
            "candidate_count": self.candidate_count,
            "matched": self.matched,
            "precision": self.precision,
            "recall": self.recall,
            "field_accuracy": self.field_accuracy,
            "field_precision": self.field_precision,
            "field_recall": self.field_recall,
            "pairs": self.pairs,
            "note": self.note,
        }


def score_article(gold: Sequence[ExperimentRecord], candidates: Sequence[ExperimentRecord],
                  schema: SchemaDefinition, match_threshold: float = MATCH_THRESHOLD,
                  article_id: str = "") -> ArticleScore:
    """Match candidates to ground truth and score both levels.

    Experiment precision = matched / candidates, recall = matched / gold,
    where a match is an assigned pair at or above ``match_threshold``.
    Field metrics run over matched pairs only: accuracy over all schema
    fields (empty agreeing with empty), precision/recall over the non-empty
    sides. Degenerate denominators come back as an explicit 0.0 with a
    note, never NaN.
    """
    matrix = similarity_matrix(gold, candidates, schema)
    assignment = hungarian_match(matrix)
    matched_pairs = [(i, j) for i, j in assignment if matrix[i][j] >= match_threshold]

    note = ""
    if not candidates:
        note = f"no candidate records (gold has {len(gold)})"
    elif not gold:
        note = f"no gold records (candidates have {len(candidates)})"

    score = ArticleScore(
        article_id=article_id,
        gold_count=len(gold),
        candidate_count=len(candidates),
        matched=len(matched_pairs),
        precision=(len(matched_pairs) / len(candidates)) if candidates else 0.0,
        recall=(len(matched_pairs) / len(gold)) if gold else 0.0,
        field_accuracy=None,
        field_precision=None,
        field_recall=None,
        note=note,
    )

    for i, j in matched_pairs:
        g, c = gold[i], candidates[j]
        pair_detail = {"gold": g.record_id, "candidate": c.record_id,
                       "similarity": matrix[i][j]}
        score.pairs.append(pair_detail)
        for spec in schema.fields:
            gv, cv = g.value(spec.name), c.value(spec.name)
            agree = _field_agreement(gv, cv, spec.kind)
            score.field_total += 1
            if agree:
                score.field_correct += 1
            if not cv.is_empty:
                score.field_nonempty_candidate += 1
                if agree:
                    score.field_agree_candidate += 1
            if not gv.is_empty:
                score.field_nonempty_gold += 1
                if agree:
                    score.field_agree_gold += 1

    if score.field_total:
        score.field_accuracy = score.field_correct / score.field_total
    if score.field_nonempty_candidate:
        score.field_precision = score.field_agree_candidate / score.field_nonempty_candidate
    if score.field_nonempty_gold:
        score.field_recall = score.field_agree_gold / score.field_nonempty_gold
    return score


def corpus_report(scores: Sequence[ArticleScore]) -> dict:
    """Micro and macro aggregates over per-article scores, labeled.

    Micro pools raw counts before dividing; macro averages the per-article
    ratios (articles whose ratio is undefined are skipped for that macro
    entry). The two genuinely differ on skewed corpora, so both ship.
    """
    total_gold = sum(s.gold_count for s in scores)
    total_cand = sum(s.candidate_count for s in scores)
    total_matched = sum(s.matched for s in scores)
    field_total = sum(s.field_total for s in scores)
    field_correct = sum(s.field_correct for s in scores)
    ne_cand = sum(s.field_nonempty_candidate for s in scores)
    ag_cand = sum(s.field_agree_candidate for s in scores)
    ne_gold = sum(s.field_nonempty_gold for s in scores)
    ag_gold = sum(s.field_agree_gold for s in scores)

    def _mean(values: list[float]) -> Optional[float]:
        return sum(values) / len(values) if values else None

    micro = {
        "experiment_precision": (total_matched / total_cand) if total_cand else 0.0,
        "experiment_recall": (total_matched / total_gold) if total_gold else 0.0,
        "field_accuracy": (field_correct / field_total) if field_total else None,
        "field_precision": (ag_cand / ne_cand) if ne_cand else None,
        "field_recall": (ag_gold / ne_gold) if ne_gold else None,
    }
    macro = {
        "experiment_precision": _mean([s.precision for s in scores if s.precision is not None]),
        "experiment_recall": _mean([s.recall for s in scores if s.recall is not None]),
        "field_accuracy": _mean([s.field_accuracy for s in scores if s.field_accuracy is not None]),
        "field_precision": _mean([s.field_precision for s in scores if s.field_precision is not None]),
        "field_recall": _mean([s.field_recall for s in scores if s.field_recall is not None]),
    }
    return {
        "articles": len(scores),
        "gold_records": total_gold,
        "candidate_records": total_cand,
        "matched_records": total_matched,
        "micro": micro,
        "macro": macro,
        "per_article": [s.to_dict() for s in scores],
    }
