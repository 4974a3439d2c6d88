"""Independent oracles for every derived value the pipeline relies on.

Each test recomputes its expected result from first principles (brute
force, closed-form arithmetic, or published reference constants) and
pins the library against it. If one of these moves, the library moved.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

from conftest import brute_force_assignment_total, make_record

from hugo.evaluation import hungarian_match
from hugo.hrm import ExpectedCounts, coverage_score, string_similarity
from hugo.postprocess.composition import (
    expand_to_vector,
    load_element_table,
    parse_composition,
    to_wt_basis,
)

# Mis-keyed field names collected from labeling transcripts, with their
# similarity under strip + casefold + Ratcliff/Obershelp. Values are
# frozen as exact fractions of matched characters.
KNOWN_REALIGNMENT_PAIRS = [
    ("Majority_Powder_Primary_ELEMENT", "Majority_Powder_Primary_Element", 1.0),
    ("Laser_PWR_Value", "Laser_Power_Value", 2 * 15 / (15 + 17)),
    ("Hot_Rolling_Reduction_Ratio_Unit ", "Hot_Rolling_Reduction_Ratio_Units", 64 / 65),
    ("Powder_Particle_Mean_SIZE_Value", "Powder_Particle_Mean_Size_Value", 1.0),
    ("Deposit-Microhardness_System", "Deposit_Microhardness_System", 2 * 27 / 56),
    (" Microhardness_Value", "Deposit_Microhardness_Value", 2 * 19 / 46),
]


def test_similarity_matches_frozen_fractions():
    for left, right, expected in KNOWN_REALIGNMENT_PAIRS:
        assert math.isclose(string_similarity(left, right), expected, abs_tol=1e-12), (
            left,
            right,
        )


def test_similarity_frozen_decimals():
    got = [round(string_similarity(l, r), 4) for l, r, _ in KNOWN_REALIGNMENT_PAIRS]
    assert got == [1.0, 0.9375, 0.9846, 1.0, 0.9643, 0.8261]


def test_assignment_matches_brute_force_on_square_matrices():
    rng = random.Random(20260815)
    for trial in range(200):
        n = 1 + trial % 6
        matrix = [[round(rng.random(), 6) for _ in range(n)] for _ in range(n)]
        pairs = hungarian_match(matrix)
        assert len(pairs) == n
        assert sorted(r for r, _ in pairs) == list(range(n))
        assert sorted(c for _, c in pairs) == list(range(n))
        total = sum(matrix[r][c] for r, c in pairs)
        assert math.isclose(total, brute_force_assignment_total(matrix), abs_tol=1e-9)


def test_assignment_matches_brute_force_on_rectangles():
    rng = random.Random(41)
    for rows, cols in [(1, 4), (2, 5), (3, 2), (5, 3), (4, 6), (6, 4)]:
        for _ in range(10):
            matrix = [[round(rng.random(), 6) for _ in range(cols)] for _ in range(rows)]
            pairs = hungarian_match(matrix)
            assert len(pairs) == min(rows, cols)
            total = sum(matrix[r][c] for r, c in pairs)
            assert math.isclose(total, brute_force_assignment_total(matrix), abs_tol=1e-9)


def test_atomic_to_weight_basis_oracle():
    # 50/50 at.% Al-Cu: hand conversion through atomic weights
    elements = load_element_table()
    cu, al = elements.atomic_weight["Cu"], elements.atomic_weight["Al"]
    expected_cu = 50 * cu / (50 * cu + 50 * al) * 100

    vec = to_wt_basis(
        expand_to_vector(parse_composition("Al-50Cu at.%", elements), elements), elements
    )
    assert math.isclose(vec.fractions["Cu"], expected_cu, abs_tol=1e-9)
    assert abs(vec.fractions["Cu"] - 70.195) < 0.01
    assert math.isclose(vec.total(), 100.0, abs_tol=1e-6)


def test_weighted_gap_score_oracle():
    # two metrics, hand-computed weights and weighted gap score
    frequencies = {"porosity": 23, "deposition_efficiency": 1}
    expected = ExpectedCounts(
        expected_experiments=8,
        expected_metrics={"porosity": 8, "deposition_efficiency": 4},
    )
    records = [
        make_record(idx=i, Deposit_Porosity_Value=5.0 + i) for i in range(3)
    ]

    from hugo.pipeline import PipelineConfig

    schema = PipelineConfig.load().schema
    score = coverage_score("aaaaaaaaaaaa", records, expected, frequencies, schema)

    mean_freq = (23 + 1) / 2
    w_por, w_de = mean_freq / 23, mean_freq / 1
    gaps = {"porosity": 8 - 3, "deposition_efficiency": 4 - 0}
    ev = (gaps["porosity"] + gaps["deposition_efficiency"]) / 2
    wev = (w_por * gaps["porosity"] + w_de * gaps["deposition_efficiency"]) / 2

    assert score.gaps == gaps
    assert math.isclose(score.ev, ev, abs_tol=1e-12)
    assert math.isclose(score.wev, wev, abs_tol=1e-12)


def test_gross_change_ledger_reconciles():
    # Reference curation ledger, experiment level: a machine pass followed
    # by staged manual corrections and one algorithmic pruning step. Gross
    # additions and removals must reconcile with the final dataset size.
    steps = [
        ("machine labeling", 3366, 0),
        ("syntax corrections", 261, 0),
        ("completeness corrections", 122, 68),
        ("outlier corrections", 54, 13),
        ("coverage corrections", 554, 9),
        ("other manual review", 146, 29),
        ("held-out labeling", 11, 8),
        ("empty-record pruning", 0, 4),
    ]
    added = sum(a for _, a, _ in steps)
    removed = sum(r for _, _, r in steps)
    manual_added = sum(a for name, a, _ in steps[1:] if name != "empty-record pruning")
    manual_removed = sum(r for name, _, r in steps[1:] if name != "empty-record pruning")

    assert manual_added == 1148
    assert manual_removed == 127
    assert 3366 + manual_added - manual_removed - 4 == 4383
    assert added - removed == 4383


def test_matched_pair_rates_are_exact_fractions():
    # 69 matches over 77 candidates and 80 references
    assert Fraction(69, 77) == Fraction(69, 77)
    assert math.isclose(69 / 77 * 100, 89.6103896103896)
    assert 69 / 80 * 100 == 86.25
