"""Acceptance gate: the headline behaviors, each at its stated tolerance.

Every test prints one PASS line on success; a failure reads as the
criterion number plus the assertion that broke.
"""
import filecmp
import random
import time

import pytest

from hugo.evaluation import corpus_report, hungarian_match, score_article
from hugo.hrm import (
    ExpectedCounts,
    coverage_score,
    realign_record,
    stage3_outliers,
    stage4_coverage,
    string_similarity,
)
from hugo.ingest import set_metadata_manual
from hugo.pipeline import export_pipeline_outputs
from hugo.postprocess.composition import (
    blend,
    expand_to_vector,
    parse_composition,
    to_wt_basis,
)
from hugo.postprocess.units import (
    load_unit_rules,
    normalize_hardness,
    normalize_record,
    normalize_value,
)
from hugo.schema import ArticleMetadata, FieldValue, Validity, blank_record, parse_record

from conftest import FIXTURES, build_pipeline_store, brute_force_assignment_total, make_record

# Published field-variant pairs with their reported similarity scores.
# The fifth row is the documented exception: its reported 0.98 rounds a
# ratio that computes to 54/56, so it carries a band instead of a point.
REFERENCE_PAIRS = [
    ("Majority_Powder_Primary_ELEMENT", "Majority_Powder_Primary_Element", 1.00),
    ("Laser_PWR_Value", "Laser_Power_Value", 0.94),
    ("Hot_Rolling_Reduction_Ratio_Unit ", "Hot_Rolling_Reduction_Ratio_Units", 0.98),
    ("Powder_Particle_Mean_SIZE_Value", "Powder_Particle_Mean_Size_Value", 1.00),
    ("Deposit-Microhardness_System", "Deposit_Microhardness_System", 0.98),
    (" Microhardness_Value", "Deposit_Microhardness_Value", 0.83),
]
REFERENCE_FRACTIONS = [1.0, 30 / 32, 64 / 65, 1.0, 54 / 56, 38 / 46]

# (variant key, schema key) pairs straddling the 0.8 realignment threshold.
REALIGN_HIGH = [
    ("Laser_PWR_Value", "Laser_Power_Value"),
    ("Deposit_Porosity_Vale", "Deposit_Porosity_Value"),
    ("Powder_Particle_Mean_SIZE_Value", "Powder_Particle_Mean_Size_Value"),
    ("Deposit-Microhardness_System", "Deposit_Microhardness_System"),
    ("Substrate_Material ", "Substrate_Material"),
    ("Gas_Temperature_Vlaue", "Gas_Temperature_Value"),
    ("Deposit_Elastic_Modulus_Valu", "Deposit_Elastic_Modulus_Value"),
    ("Nozzle_Traverse_Sped_Value", "Nozzle_Traverse_Speed_Value"),
    ("Process_Gass", "Process_Gas"),
    ("Experiment_Lable", "Experiment_Label"),
    ("Gas_Press_Val", "Gas_Pressure_Value"),
    ("Process_Gas_Type", "Process_Gas"),
    ("Sub_Material", "Substrate_Material"),  # scores exactly 0.8000
]
REALIGN_LOW = [
    ("Weather_Notes", "Substrate_Preparation"),
    ("Comment", "Experiment_Label"),
    ("Misc_1", "Process_Gas"),
    ("Operator_Name", "Substrate_Material"),
    ("Power", "Laser_Power_Value"),
    ("Notes_Field", "Deposit_Porosity_Value"),
    ("Humidity", "Gas_Temperature_Value"),
    ("Chamber", "Nozzle_Type"),
    ("Color", "Deposit_Elongation_Value"),
    ("Pressure_Setting_Dial", "Gas_Pressure_Value"),
    ("Spray_Angl", "Spray_Angle_Value"),
    ("Powder_Feed_Rt", "Powder_Feed_Rate_Value"),
]


def test_c01_similarity_reference_pairs():
    start = time.perf_counter()
    scores = [string_similarity(a, b) for a, b, _ in REFERENCE_PAIRS]
    elapsed = time.perf_counter() - start
    for (a, b, published), got, fraction in zip(REFERENCE_PAIRS, scores,
                                                REFERENCE_FRACTIONS):
        assert got == pytest.approx(fraction), (a, b)
        assert abs(got - published) <= 0.03, (a, b, got, published)
    # the exception row lands inside its documented band
    assert 0.96 <= scores[4] <= 0.98
    assert elapsed < 1.0
    print(f"PASS c01 similarity pairs: {['%.4f' % s for s in scores]}"
          f" all within 0.03 in {elapsed * 1000:.1f} ms")


def test_c02_realignment_threshold_routing(schema):
    checked = 0
    for variant, true_key in REALIGN_HIGH:
        assert string_similarity(variant, true_key) >= 0.8, (variant, true_key)
        record = blank_record("acc:000", "a" * 12, schema)
        record.values[variant] = record.values.pop(true_key)
        record.values[variant] = FieldValue.from_raw("7.7")
        result = realign_record(record, schema)
        assert result.realigned == {variant: true_key}
        assert record.values[true_key].raw == "7.7"
        assert result.compliant
        checked += 1
    for variant, true_key in REALIGN_LOW:
        assert string_similarity(variant, true_key) < 0.8, (variant, true_key)
        record = blank_record("acc:001", "a" * 12, schema)
        record.values[variant] = record.values.pop(true_key)
        record.values[variant] = FieldValue.from_raw("7.7")
        result = realign_record(record, schema)
        assert result.realigned == {}
        assert result.missing == [true_key]
        assert result.extra == [variant]
        checked += 1
    assert checked >= 20
    print(f"PASS c02 realignment threshold: {len(REALIGN_HIGH)} pairs >= 0.8"
          f" repaired, {len(REALIGN_LOW)} pairs < 0.8 routed to review")


def test_c03_expectation_gap_worked_example(schema):
    expected = ExpectedCounts(expected_experiments=8,
                              expected_metrics={"porosity": 8})
    records = [make_record(idx=i, Deposit_Porosity_Value=1.0 + i) for i in range(3)]
    score = coverage_score("a" * 12, records, expected, {"porosity": 10}, schema)
    assert score.ev == 5.0
    fallback = coverage_score(
        "a" * 12, records, ExpectedCounts(expected_experiments=8), {}, schema
    )
    assert fallback.ev == 5.0
    print("PASS c03 expectation gap: expected 8 / extracted 3 -> EV = 5.000 exactly")


def test_c04_rarity_weighting_and_thresholds(schema):
    freqs = {"yield_strength": 506, "microhardness": 2980}

    def article(metric, gap):
        expected = ExpectedCounts(expected_experiments=gap,
                                  expected_metrics={metric: gap})
        return coverage_score("a" * 12, [], expected, freqs, schema)

    ys, micro = article("yield_strength", 1), article("microhardness", 1)
    assert ys.ev == micro.ev == 1.0
    assert ys.wev > micro.wev

    cases = {
        "ys_gap1": ("yield_strength", 1),     # wev ~ 3.44
        "ys_gap2": ("yield_strength", 2),     # wev ~ 6.89
        "micro_gap2": ("microhardness", 2),   # wev ~ 1.17
    }
    flagged = {}
    for threshold in (1.0, 2.5, 5.0):
        flagged[threshold] = set()
        for name, (metric, gap) in cases.items():
            expected = ExpectedCounts(expected_experiments=gap,
                                      expected_metrics={metric: gap})
            _score, flag = stage4_coverage("a" * 12, [], expected, freqs, schema,
                                           threshold=threshold)
            if flag is not None:
                flagged[threshold].add(name)
    assert flagged[5.0] <= flagged[2.5] <= flagged[1.0]
    assert flagged[1.0] == {"ys_gap1", "ys_gap2", "micro_gap2"}
    assert flagged[2.5] == {"ys_gap1", "ys_gap2"}
    assert flagged[5.0] == {"ys_gap2"}
    print(f"PASS c04 rarity weighting: wEV(YS)={ys.wev:.3f} >"
          f" wEV(micro)={micro.wev:.3f}; flag sets shrink monotonically"
          f" over T in (1, 2.5, 5)")


def test_c05_outlier_flagging_suite(schema):
    rng = random.Random(42)
    values = [rng.gauss(300.0, 10.0) for _ in range(100)] + [3000.0]
    records = [make_record(idx=i, Deposit_Microhardness_Value=v)
               for i, v in enumerate(values)]
    injected = records[-1].record_id

    def by_pass(flags):
        out = {}
        for flag in flags:
            out.setdefault(flag.detail["pass"], set()).add(flag.detail["record_id"])
        return out

    global_flags = by_pass(stage3_outliers(records, schema))
    assert global_flags.get("global_z") == {injected}
    assert global_flags.get("domain") is None

    # one material class, mean 4.7% elongation, plus an implausible 60.3%
    clean = [4.2, 4.5, 4.6, 4.7, 4.8, 4.9, 5.2]
    local_records = [
        make_record(idx=i, Deposit_Elongation_Value=v,
                    Majority_Powder_Material="Aluminum",
                    Majority_Powder_Primary_Element="Al")
        for i, v in enumerate(clean + [60.3])
    ]
    local_injected = local_records[-1].record_id
    local_flags = by_pass(stage3_outliers(local_records, schema))
    assert local_flags.get("local_class") == {local_injected}
    assert local_flags.get("global_z") is None
    assert local_flags.get("domain") is None

    scaled = [make_record(idx=i, Deposit_Microhardness_Value=v * 10.0)
              for i, v in enumerate(values)]
    scaled_flags = by_pass(stage3_outliers(scaled, schema))
    assert scaled_flags.get("global_z") == global_flags.get("global_z")
    print("PASS c05 outliers: injected global point flagged exactly,"
          " 60.3% elongation flagged locally, global set invariant under x10")


def test_c06_assignment_matches_brute_force():
    rng = random.Random(20260815)
    start = time.perf_counter()
    for _ in range(200):
        rows, cols = rng.randint(1, 6), rng.randint(1, 6)
        # dyadic-rational cells make both totals exact in float arithmetic
        matrix = [[rng.randint(0, 64) / 64.0 for _ in range(cols)]
                  for _ in range(rows)]
        pairs = hungarian_match(matrix)
        total = sum(matrix[r][c] for r, c in pairs)
        assert total == brute_force_assignment_total(matrix)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(f"PASS c06 assignment: optimal on 200 random matrices (n <= 6)"
          f" in {elapsed:.2f} s")


def test_c07_precision_recall_arithmetic(config):
    def load(name):
        import json

        by_article = {}
        for line in (FIXTURES / "eval" / name).read_text().splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            record = parse_record(doc.get("record", doc))
            by_article.setdefault(record.article_id, []).append(record)
        return by_article

    gold, cands = load("gold.jsonl"), load("candidates.jsonl")
    scores = [
        score_article(gold.get(a, []), cands.get(a, []), config.schema, article_id=a)
        for a in sorted(set(gold) | set(cands))
    ]
    report = corpus_report(scores)
    assert report["gold_records"] == 80
    assert report["candidate_records"] == 77
    assert report["matched_records"] == 69
    precision = 100.0 * report["micro"]["experiment_precision"]
    recall = 100.0 * report["micro"]["experiment_recall"]
    assert abs(precision - 89.61) <= 0.01
    assert abs(recall - 86.25) <= 0.01
    print(f"PASS c07 scoring arithmetic: precision {precision:.2f}%"
          f" recall {recall:.2f}% from 80/77/69 counts")


def test_c08_composition_suite(config):
    elements = config.elements
    ti64 = expand_to_vector(parse_composition("Ti-6Al-4V", elements), elements)
    assert ti64.fractions == {"Ti": 90.0, "Al": 6.0, "V": 4.0}
    assert ti64.basis == "wt"

    alcu = parse_composition("Al-50Cu at.%", elements)
    assert alcu.basis == "at"
    wt = to_wt_basis(expand_to_vector(alcu, elements), elements)
    assert wt.fractions["Cu"] == pytest.approx(70.19, abs=0.01)
    for vector in (ti64, wt):
        assert sum(vector.fractions.values()) == pytest.approx(100.0, abs=1e-6)

    cu = expand_to_vector(parse_composition("Cu", elements), elements)
    al = expand_to_vector(parse_composition("Al", elements), elements)
    mixed = blend([cu, al], [0.25, 0.75], elements)
    assert mixed.fractions == {"Cu": 25.0, "Al": 75.0}
    print(f"PASS c08 composition: Ti-6Al-4V -> (90, 6, 4) wt%,"
          f" 50/50 at% Al-Cu -> Cu {wt.fractions['Cu']:.2f} wt%,"
          " 0.25/0.75 blend exact")


def test_c09_unit_suite(schema):
    rules = load_unit_rules()
    assert normalize_value("≥1%", "percent", rules).numeric == 1.0
    assert normalize_value("1–5%", "percent", rules).numeric == 3.0
    strength = normalize_value("0.45 GPa", "strength", rules)
    assert (strength.numeric, strength.unit) == (450.0, "MPa")

    hardness, load = normalize_hardness("320 HV0.3", rules)
    assert (hardness.numeric, hardness.unit, load) == (320.0, "HV", 0.3)
    record = make_record(idx=0, Deposit_Microhardness_Value="320 HV0.3",
                         Deposit_Microhardness_Test_Load_Value="0.5")
    normalized = normalize_record(record, schema, rules)
    assert normalized.value("Deposit_Microhardness_Test_Load_Value").raw == "0.5"

    filled = normalize_record(
        make_record(idx=1, Deposit_Microhardness_Value="320 HV0.3"), schema, rules
    )
    assert filled.value("Deposit_Microhardness_Test_Load_Value").numeric == 0.3

    unknown = normalize_value("5 furlong", "length_mm", rules)
    assert unknown.validity is Validity.INVALID
    assert unknown.numeric is None
    print("PASS c09 units: bound, range, GPa->MPa, HV load (no overwrite),"
          " unknown-unit invalid all exact")


def test_c10_pipeline_determinism(config, id_by_key, tmp_path):
    start = time.perf_counter()

    def full_run(tag):
        store, result, _client = build_pipeline_store(tmp_path / f"{tag}.db", config)
        article = store.get_article(id_by_key["h"])
        set_metadata_manual(article, ArticleMetadata(title=article.metadata.title,
                                                     doi="10.5024/csm.2023.0500"))
        store.set_metadata(article.article_id, article.metadata)
        paths = export_pipeline_outputs(store, config, tmp_path / tag,
                                        snapshot=result.snapshots[-1], result=result)
        return result, paths

    first, paths_a = full_run("one")
    second, paths_b = full_run("two")
    elapsed = time.perf_counter() - start

    assert [s.to_dict() for s in first.summaries] == [s.to_dict() for s in second.summaries]
    identical = []
    for key in sorted(paths_a):
        assert filecmp.cmp(paths_a[key], paths_b[key], shallow=False), key
        identical.append(paths_a[key].name)
    assert elapsed < 60.0
    print(f"PASS c10 determinism: two fresh runs byte-identical"
          f" ({', '.join(identical)}) in {elapsed:.1f} s")


def test_c11_ledger_reconciliation(pipeline_session):
    store, result = pipeline_session
    net = sum(summary.added - summary.removed for summary in result.summaries)
    assert result.initial_records == 0
    assert net == result.final_records == 23
    assert result.ledger_consistent
    snapshot = store.latest_snapshot()
    assert len(store.records_in(snapshot)) == 23
    print(f"PASS c11 ledger: sum(added) - sum(removed) = {net}"
          f" = final snapshot count")
