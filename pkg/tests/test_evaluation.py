"""Record matching and agreement scoring."""
import json

import pytest

from hugo.evaluation import (
    corpus_report,
    hungarian_match,
    pair_similarity,
    score_article,
    similarity_matrix,
)
from hugo.schema import parse_record

from conftest import FIXTURES, brute_force_assignment_total, make_record


def load_eval_fixture():
    def load(name):
        by_article = {}
        for line in (FIXTURES / "eval" / name).read_text().splitlines():
            if not line.strip():
                continue
            record = parse_record(json.loads(line)["record"])
            by_article.setdefault(record.article_id, []).append(record)
        return by_article

    return load("gold.jsonl"), load("candidates.jsonl")


class TestPairSimilarity:
    def test_identical_records(self, schema):
        a = make_record(Majority_Powder_Material="Copper", Deposit_Porosity_Value=2.5)
        b = make_record(idx=1, Majority_Powder_Material="Copper",
                        Deposit_Porosity_Value=2.5)
        assert pair_similarity(a, b, schema) == 1.0

    def test_fully_empty_records_count_as_identical(self, schema):
        assert pair_similarity(make_record(), make_record(idx=1), schema) == 1.0

    def test_one_sided_value_scores_zero_for_that_field(self, schema):
        a = make_record(Majority_Powder_Material="Copper")
        b = make_record(idx=1)
        assert pair_similarity(a, b, schema) == 0.0

    def test_numeric_fields_use_relative_distance(self, schema):
        a = make_record(Deposit_Microhardness_Value=100.0)
        b = make_record(idx=1, Deposit_Microhardness_Value=101.0)
        assert pair_similarity(a, b, schema) == pytest.approx(1.0 - 1.0 / 101.0)

    def test_mixed_fields_average(self, schema):
        a = make_record(Majority_Powder_Material="Copper",
                        Deposit_Porosity_Value=2.0)
        b = make_record(idx=1, Majority_Powder_Material="Copper",
                        Deposit_Porosity_Value=4.0)
        # text pair 1.0, numeric pair 0.5
        assert pair_similarity(a, b, schema) == pytest.approx(0.75)

    def test_boolean_fields_match_by_truth_value(self, schema):
        a = make_record(HIP_Used=True)
        b = make_record(idx=1, HIP_Used="true")
        c = make_record(idx=2, HIP_Used=False)
        assert pair_similarity(a, b, schema) == 1.0
        assert pair_similarity(a, c, schema) == 0.0


class TestHungarian:
    def test_known_small_assignment(self):
        matrix = [
            [0.9, 0.1, 0.2],
            [0.2, 0.8, 0.3],
            [0.3, 0.4, 0.7],
        ]
        assert hungarian_match(matrix) == [(0, 0), (1, 1), (2, 2)]

    def test_cross_assignment_beats_greedy(self):
        # greedy grabs (0,0)=0.9 forcing (1,1)=0.1; optimum crosses
        matrix = [
            [0.9, 0.85],
            [0.8, 0.1],
        ]
        assert hungarian_match(matrix) == [(0, 1), (1, 0)]

    def test_rectangular_padding_dropped(self):
        wide = [[0.1, 0.9, 0.5]]
        assert hungarian_match(wide) == [(0, 1)]
        tall = [[0.1], [0.9], [0.5]]
        assert hungarian_match(tall) == [(1, 0)]

    def test_matches_brute_force_total(self):
        import random

        rng = random.Random(7)
        for _ in range(40):
            rows = rng.randint(1, 5)
            cols = rng.randint(1, 5)
            matrix = [[rng.random() for _ in range(cols)] for _ in range(rows)]
            pairs = hungarian_match(matrix)
            total = sum(matrix[i][j] for i, j in pairs)
            assert total == pytest.approx(brute_force_assignment_total(matrix), abs=1e-9)
            assert len(pairs) == min(rows, cols)
            assert pairs == sorted(pairs)


class TestScoreArticle:
    def test_perfect_extraction(self, schema):
        gold = [make_record(idx=i, Majority_Powder_Material="Cu",
                            Deposit_Porosity_Value=float(i + 1)) for i in range(3)]
        cands = [make_record(idx=10 + i, Majority_Powder_Material="Cu",
                             Deposit_Porosity_Value=float(i + 1)) for i in range(3)]
        score = score_article(gold, cands, schema, article_id="art")
        assert (score.precision, score.recall) == (1.0, 1.0)
        assert score.matched == 3
        assert score.field_accuracy == 1.0
        assert score.field_precision == 1.0
        assert score.field_recall == 1.0

    def test_low_similarity_pairs_do_not_match(self, schema):
        gold = [make_record(Majority_Powder_Material="Copper",
                            Deposit_Porosity_Value=2.0)]
        cands = [make_record(idx=1, Majority_Powder_Material="Zinc oxide",
                             Deposit_Yield_Strength_Value=700.0)]
        score = score_article(gold, cands, schema)
        assert score.matched == 0
        assert score.precision == 0.0 and score.recall == 0.0
        assert score.field_accuracy is None

    def test_empty_candidate_side_notes_zero(self, schema):
        gold = [make_record()]
        score = score_article(gold, [], schema)
        assert score.precision == 0.0
        assert score.recall == 0.0
        assert "no candidate records" in score.note

    def test_field_metrics_count_one_sided_values(self, schema):
        # three agreeing fields and one gold-only field: similarity 0.75
        # sits exactly on the inclusive match threshold
        gold = [make_record(Majority_Powder_Material="Cu",
                            Deposit_Porosity_Value=2.0,
                            Deposit_Microhardness_Value=300.0,
                            Nozzle_Type="de Laval")]
        cands = [make_record(idx=1, Majority_Powder_Material="Cu",
                             Deposit_Porosity_Value=2.0,
                             Deposit_Microhardness_Value=300.0)]
        score = score_article(gold, cands, schema)
        assert score.matched == 1
        assert score.pairs[0]["similarity"] == pytest.approx(0.75)
        # candidate side fully agrees; gold has one extra non-empty field
        assert score.field_precision == 1.0
        assert score.field_recall == pytest.approx(3 / 4)


class TestCorpusReport:
    def test_fixture_corpus_counts(self, schema):
        gold_by, cand_by = load_eval_fixture()
        scores = [
            score_article(gold_by.get(a, []), cand_by.get(a, []), schema, article_id=a)
            for a in sorted(set(gold_by) | set(cand_by))
        ]
        report = corpus_report(scores)
        assert report["articles"] == 20
        assert report["gold_records"] == 80
        assert report["candidate_records"] == 77
        assert report["matched_records"] == 69
        assert report["micro"]["experiment_precision"] == pytest.approx(69 / 77)
        assert report["micro"]["experiment_recall"] == pytest.approx(69 / 80)

    def test_micro_pools_before_dividing(self, schema):
        a = score_article([make_record()], [], schema, article_id="a")
        gold = [make_record(idx=i, Deposit_Porosity_Value=1.0 * i + 1) for i in range(4)]
        b = score_article(gold, gold, schema, article_id="b")
        report = corpus_report([a, b])
        assert report["micro"]["experiment_recall"] == pytest.approx(4 / 5)
        assert report["macro"]["experiment_recall"] == pytest.approx((0.0 + 1.0) / 2)

    def test_report_is_json_serializable(self, schema):
        gold_by, cand_by = load_eval_fixture()
        article = sorted(gold_by)[0]
        score = score_article(gold_by[article], cand_by.get(article, []), schema,
                              article_id=article)
        json.dumps(corpus_report([score]))
