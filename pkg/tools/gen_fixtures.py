#!/usr/bin/env python3
"""Regenerate the frozen test fixtures under tests/fixtures/.

Everything here is deterministic: no RNG, no timestamps, fixed orderings.
Running the script twice produces byte-identical files.

After writing the files the script runs a self-check: the full pipeline is
executed over the generated corpus in a temporary store and the exact flag,
queue, repair, unit, composition, mapping, ledger, and evaluation outcomes
the test suite relies on are asserted. Fixture drift fails here first, not
in some far-away test.
"""

from __future__ import annotations

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

from hugo.evaluation import corpus_report, score_article
from hugo.exports import ExportError, derive_composition, write_export
from hugo.hrm import build_queue, string_similarity
from hugo.ingest import (
    FixtureRegistryClient,
    content_hash,
    load_corpus,
    resolve_metadata,
    set_metadata_manual,
)
from hugo.llm import FixtureLlmClient
from hugo.pipeline import PipelineConfig, run_pipeline
from hugo.postprocess.mappings import propose_mappings
from hugo.postprocess.units import normalize_record
from hugo.schema import (
    ArticleMetadata,
    FieldValue,
    load_schema,
    parse_record,
    serialize_record,
)
from hugo.store import Store

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"

MAPPING_FIELD = "Majority_Powder_Material"
MAPPING_CANONICAL = "316L stainless steel"

# Raw alias spellings of one material as they show up across articles, with
# observation counts. All of them sit within the 0.85 clustering threshold
# of the most frequent spelling, so they consolidate into a single cluster.
MATERIAL_ALIASES: list[tuple[str, int]] = [
    ("316L stainless steel", 12),
    ("316L Stainless Steel", 3),
    ("316 L stainless steel", 2),
    ("316L stainless-steel", 2),
    ("AISI 316L stainless steel", 2),
    ("316L stainless steels", 1),
    ("316L stainless steel ", 1),
    ("SS316L stainless steel", 1),
    ("Type 316L stainless steel", 1),
    ("316L stainless steel powder", 1),
    ("316L  stainless steel", 1),
    ("316L stianless steel", 1),
    ("316-L stainless steel", 1),
    ("316L stainless steel (SS)", 1),
    ("316L stainless Steel.", 1),
    ("316L stainlesss steel", 1),
    ("316L stainles steel", 1),
    ("316L Stainless-Steel", 1),
    ("316L stainless steel SS", 1),
]


# --------------------------------------------------------------------------
# corpus definition


def blank_payload(schema) -> dict[str, str]:
    return {f.name: ("false" if f.gate else "") for f in schema.fields}


def payload(schema, overrides: dict[str, str], drop: tuple[str, ...] = ()) -> dict[str, str]:
    out = blank_payload(schema)
    for key in drop:
        out.pop(key)
    out.update(overrides)
    return out


def plain_extract(records: list[dict]) -> str:
    return json.dumps(records, ensure_ascii=False, indent=1)


def chatty_extract(records: list[dict]) -> str:
    return (
        "Sure. I read the article carefully and found the experiments below.\n\n"
        "```json\n" + json.dumps(records, ensure_ascii=False, indent=1) + "\n```\n\n"
        "Both coatings were sprayed with nitrogen; let me know if anything "
        "needs a second pass."
    )


def article_specs(schema) -> list[dict]:
    """The ten-article fixture corpus, fully specified."""

    def rec(overrides: dict[str, str], drop: tuple[str, ...] = ()) -> dict[str, str]:
        return payload(schema, overrides, drop)

    specs: list[dict] = []

    # a: clean three-experiment article, every expected count satisfied
    specs.append(
        {
            "key": "a",
            "slug": "ti64_tensile",
            "title": "Porosity and tensile behaviour of cold sprayed Ti-6Al-4V deposits",
            "doi": "10.5024/csm.2018.0117",
            "year": 2018,
            "venue": "Journal of Thermal Spray Technology",
            "authors": ["R. Okafor", "M. Lindqvist"],
            "markdown": """# Porosity and tensile behaviour of cold sprayed Ti-6Al-4V deposits

Gas-atomized Ti-6Al-4V powder (mean size 29 um) was deposited with nitrogen
at 950 C and 4.0 MPa onto Ti-6Al-4V plates. Three parameter sets were
studied, labelled N2-950-low, N2-950-mid and N2-950-high. Deposition
efficiency was recorded for the first condition only.

| Condition | Porosity (%) | Hardness (HV) | UTS (MPa) | YS (MPa) |
|---|---|---|---|---|
| N2-950-low | 3.2 | 330 | 850 | 780 |
| N2-950-mid | 2.8 | 345 | 890 | 820 |
| N2-950-high | 5.0 | 360 | 910 | - |

Elongation of 12.5 % was measured for the high-velocity condition and a
deposition efficiency of 45 % for the low one. Yield strength was not
measurable for N2-950-high because the specimen failed in the grips.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "N2-950-low",
                        "Majority_Powder_Material": "Ti-6Al-4V",
                        "Majority_Powder_Primary_Element": "Ti",
                        "Powder_Production_Method": "gas atomization",
                        "Powder_Condition_Description": "gas atomized, sieved to -45 +15 um before spraying",
                        "Powder_Particle_Mean_Size_Value": "29",
                        "Powder_Particle_Mean_Size_Units": "µm",
                        "Process_Gas": "Nitrogen",
                        "Gas_Temperature_Value": "950",
                        "Gas_Temperature_Units": "°C",
                        "Gas_Pressure_Value": "4.0",
                        "Gas_Pressure_Units": "MPa",
                        "Substrate_Material": "Ti-6Al-4V plate",
                        "Deposit_Porosity_Value": "3.2",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "330",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Ultimate_Tensile_Strength_Value": "850",
                        "Deposit_Ultimate_Tensile_Strength_Units": "MPa",
                        "Deposit_Yield_Strength_Value": "780",
                        "Deposit_Yield_Strength_Units": "MPa",
                        "Deposit_Deposition_Efficiency_Value": "45",
                        "Deposit_Deposition_Efficiency_Units": "%",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "N2-950-mid",
                        "Majority_Powder_Material": "Ti-6Al-4V",
                        "Majority_Powder_Primary_Element": "Ti",
                        "Process_Gas": "Nitrogen",
                        "Gas_Temperature_Value": "950",
                        "Gas_Temperature_Units": "°C",
                        "Deposit_Porosity_Value": "2.8",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "345",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Ultimate_Tensile_Strength_Value": "890",
                        "Deposit_Ultimate_Tensile_Strength_Units": "MPa",
                        "Deposit_Yield_Strength_Value": "820",
                        "Deposit_Yield_Strength_Units": "MPa",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "N2-950-high",
                        "Majority_Powder_Material": "Ti-6Al-4V",
                        "Majority_Powder_Primary_Element": "Ti",
                        "Process_Gas": "Nitrogen",
                        "Gas_Temperature_Value": "950",
                        "Gas_Temperature_Units": "°C",
                        "Deposit_Porosity_Value": "5.0",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "360",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Ultimate_Tensile_Strength_Value": "910",
                        "Deposit_Ultimate_Tensile_Strength_Units": "MPa",
                        "Deposit_Elongation_Value": "12.5",
                        "Deposit_Elongation_Units": "%",
                    }
                ),
            ],
            "counts": {
                "experiments": 3,
                "metrics": {
                    "porosity": 3,
                    "microhardness": 3,
                    "ultimate_tensile_strength": 3,
                    "yield_strength": 2,
                    "elongation": 1,
                    "deposition_efficiency": 1,
                },
            },
            "extract": plain_extract,
        }
    )

    # b: chatty response wrapped in a fenced block; uncertainty and a
    # Vickers load suffix exercise value parsing
    specs.append(
        {
            "key": "b",
            "slug": "copper_microstructure",
            "title": "Microstructure of high-pressure cold sprayed copper coatings",
            "doi": "10.5024/csm.2016.0042",
            "year": 2016,
            "venue": "Surface and Coatings Technology",
            "authors": ["T. Hargreaves"],
            "markdown": """# Microstructure of high-pressure cold sprayed copper coatings

Two copper coatings (CS-Cu-1, CS-Cu-2) were sprayed with nitrogen at 4.5
MPa. Porosity of CS-Cu-1 was 2.5 +/- 0.3 % by image analysis; CS-Cu-2
reached 3.1 %. Microhardness was 140 HV0.3 for CS-Cu-1 and 150 +/- 5 HV
for CS-Cu-2.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "CS-Cu-1",
                        "Majority_Powder_Material": "Copper",
                        "Majority_Powder_Primary_Element": "Cu",
                        "Process_Gas": "Nitrogen",
                        "Gas_Pressure_Value": "4.5",
                        "Gas_Pressure_Units": "MPa",
                        "Deposit_Porosity_Value": "2.5 ± 0.3",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "140",
                        "Deposit_Microhardness_Units": "HV0.3",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "CS-Cu-2",
                        "Majority_Powder_Material": "Copper",
                        "Majority_Powder_Primary_Element": "Cu",
                        "Process_Gas": "Nitrogen",
                        "Gas_Pressure_Value": "4.5",
                        "Gas_Pressure_Units": "MPa",
                        "Deposit_Porosity_Value": "3.1",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "150 ± 5",
                        "Deposit_Microhardness_Units": "HV",
                    }
                ),
            ],
            "counts": {"experiments": 2, "metrics": {"porosity": 2, "microhardness": 2}},
            "extract": chatty_extract,
        }
    )

    # c: the model response was cut off mid-payload -> syntax flag, no records
    specs.append(
        {
            "key": "c",
            "slug": "aero_repair",
            "title": "Cold spray repair of aluminium aerospace components",
            "doi": "10.5024/csm.2020.0201",
            "year": 2020,
            "venue": "Journal of Thermal Spray Technology",
            "authors": ["S. Brandt", "K. Osei", "L. Moreau"],
            "markdown": """# Cold spray repair of aluminium aerospace components

Two repair trials on AA7075 skin panels are described. Porosity of both
repairs stayed below 4 % and adhesion exceeded the acceptance threshold.
Full parameter listings are given in the supplement.
""",
            "records": [],
            "counts": {"experiments": 2, "metrics": {"porosity": 2}},
            "extract_literal": {
                "text": '[\n {"Experiment_Label": "Repair-1", "Majority_Powder_Material": "Al 7075", "Deposit_Porosity_Va',
                "finish_reason": "length",
            },
        }
    )

    # d: one mis-keyed field (realigns), one gate-false omission (fills),
    # one unfixable record -> a single open completeness flag
    specs.append(
        {
            "key": "d",
            "slug": "ss316l_optimisation",
            "title": "Process optimisation for cold sprayed 316L stainless steel",
            "doi": "10.5024/csm.2019.0088",
            "year": 2019,
            "venue": "Surface and Coatings Technology",
            "authors": ["A. Petrov", "J. Tanaka"],
            "markdown": """# Process optimisation for cold sprayed 316L stainless steel

Three deposits were produced: one with laser assistance at 2.5 kW
(316L-L1) and two conventional ones (316L-N1, 316L-N2). Porosity was 4.1,
3.9 and 4.5 % with hardness 280, 295 and 310 HV respectively. No hot
isostatic pressing was applied to 316L-N1.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "316L-L1",
                        "Majority_Powder_Material": "316L",
                        "Majority_Powder_Primary_Element": "Fe",
                        "Process_Gas": "Nitrogen",
                        "Laser_Assist_Used": "true",
                        "Laser_PWR_Value": "2.5",
                        "Laser_Power_Units": "kW",
                        "Deposit_Porosity_Value": "4.1",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "280",
                        "Deposit_Microhardness_Units": "HV",
                    },
                    drop=("Laser_Power_Value",),
                ),
                rec(
                    {
                        "Experiment_Label": "316L-N1",
                        "Majority_Powder_Material": "316L",
                        "Majority_Powder_Primary_Element": "Fe",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "3.9",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "295",
                        "Deposit_Microhardness_Units": "HV",
                    },
                    drop=(
                        "HIP_Temperature_Value",
                        "HIP_Temperature_Units",
                        "HIP_Pressure_Value",
                        "HIP_Pressure_Units",
                        "HIP_Duration_Value",
                        "HIP_Duration_Units",
                    ),
                ),
                rec(
                    {
                        "Experiment_Label": "316L-N2",
                        "Majority_Powder_Material": "AISI 316L",
                        "Majority_Powder_Primary_Element": "Fe",
                        "Process_Gas": "Nitrogen",
                        "Weather_Notes": "clear day, low humidity in the lab",
                        "Deposit_Porosity_Value": "4.5",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "310",
                        "Deposit_Microhardness_Units": "HV",
                    },
                    drop=("Substrate_Preparation",),
                ),
            ],
            "counts": {"experiments": 3, "metrics": {"porosity": 3, "microhardness": 3}},
            "extract": plain_extract,
        }
    )

    # e: statistical outliers. The WC-17Co row carries a misprinted porosity
    # (120 %) and an implausible hardness; one copper row sits far from its
    # material-class peers.
    specs.append(
        {
            "key": "e",
            "slug": "copper_wc17co",
            "title": "Comparative study of copper and WC-17Co cold spray deposits",
            "doi": "10.5024/csm.2017.0153",
            "year": 2017,
            "venue": "Journal of Thermal Spray Technology",
            "authors": ["N. Duarte", "P. Whitfield"],
            "markdown": """# Comparative study of copper and WC-17Co cold spray deposits

Three copper deposits and one WC-17Co cermet deposit were compared.

| Deposit | Porosity (%) | Microhardness (HV) |
|---|---|---|
| Cu-A | 2.2 | 145 |
| Cu-B | 2.8 | 152 |
| Cu-C | 8.0 | 160 |
| WC-1 | 120 | 4900 |

Values are reproduced exactly as printed in the source; the WC-1 porosity
row appears to carry a typographical error.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "Cu-A",
                        "Majority_Powder_Material": "Copper",
                        "Majority_Powder_Primary_Element": "Cu",
                        "Process_Gas": "Helium",
                        "Deposit_Porosity_Value": "2.2",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "145",
                        "Deposit_Microhardness_Units": "HV",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "Cu-B",
                        "Majority_Powder_Material": "Copper",
                        "Majority_Powder_Primary_Element": "Cu",
                        "Process_Gas": "Helium",
                        "Deposit_Porosity_Value": "2.8",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "152",
                        "Deposit_Microhardness_Units": "HV",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "Cu-C",
                        "Majority_Powder_Material": "Copper",
                        "Majority_Powder_Primary_Element": "Cu",
                        "Process_Gas": "Helium",
                        "Deposit_Porosity_Value": "8.0",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "160",
                        "Deposit_Microhardness_Units": "HV",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "WC-1",
                        "Majority_Powder_Material": "WC-17Co",
                        "Majority_Powder_Primary_Element": "W",
                        "Process_Gas": "Helium",
                        "Deposit_Porosity_Value": "120",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "4900",
                        "Deposit_Microhardness_Units": "HV",
                    }
                ),
            ],
            "counts": {"experiments": 4, "metrics": {"porosity": 4, "microhardness": 4}},
            "extract": plain_extract,
        }
    )

    # f: the text promises eight experiments with deposition efficiency for
    # four of them, but only three porosity-only records were extracted
    specs.append(
        {
            "key": "f",
            "slug": "cp_ti_efficiency",
            "title": "Deposition efficiency of cold sprayed titanium coatings",
            "doi": "10.5024/csm.2021.0009",
            "year": 2021,
            "venue": "Additive Manufacturing Letters",
            "authors": ["E. Svendsen"],
            "markdown": """# Deposition efficiency of cold sprayed titanium coatings

Eight spray experiments were run on commercially pure titanium powder,
varying gas temperature and standoff. Porosity was measured for every
experiment and deposition efficiency for four of them. Only the first
three porosity values (6.1, 5.5 and 4.8 %) are tabulated in the main
text; the remainder, and all deposition efficiency data, appear in an
image-only appendix table.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "Ti-1",
                        "Majority_Powder_Material": "CP titanium",
                        "Majority_Powder_Primary_Element": "Ti",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "6.1",
                        "Deposit_Porosity_Units": "%",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "Ti-2",
                        "Majority_Powder_Material": "CP titanium",
                        "Majority_Powder_Primary_Element": "Ti",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "5.5",
                        "Deposit_Porosity_Units": "%",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "Ti-3",
                        "Majority_Powder_Material": "CP titanium",
                        "Majority_Powder_Primary_Element": "Ti",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "4.8",
                        "Deposit_Porosity_Units": "%",
                    }
                ),
            ],
            "counts": {
                "experiments": 8,
                "metrics": {"porosity": 8, "deposition_efficiency": 4},
            },
            "extract": plain_extract,
        }
    )

    # g: two registry entries tie above the auto-link bar -> ambiguous;
    # the methods probe marks one hardness value as non-standard
    specs.append(
        {
            "key": "g",
            "slug": "in718_hardness",
            "title": "Microhardness evolution in cold sprayed Inconel 718 deposits",
            "doi": "10.5024/csm.2015.0071",
            "year": 2015,
            "venue": "Journal of Thermal Spray Technology",
            "authors": ["V. Rao", "C. Bellini"],
            "markdown": """# Microhardness evolution in cold sprayed Inconel 718 deposits

As-sprayed (718-AS) and heat-treated (718-HT) IN718 deposits were
compared. Hardness of the as-sprayed deposit was followed by in situ
micro-indentation during deposition, a non-standard procedure. Porosity
was 1.8 and 2.1 %, hardness 420 and 430 HV. Tensile strength of 1050 MPa
was obtained as-sprayed; the heat-treated deposit yielded at 980 MPa.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "718-AS",
                        "Majority_Powder_Material": "IN718",
                        "Majority_Powder_Primary_Element": "Ni",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "1.8",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "420",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Ultimate_Tensile_Strength_Value": "1050",
                        "Deposit_Ultimate_Tensile_Strength_Units": "MPa",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "718-HT",
                        "Majority_Powder_Material": "IN718",
                        "Majority_Powder_Primary_Element": "Ni",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "2.1",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "430",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Yield_Strength_Value": "980",
                        "Deposit_Yield_Strength_Units": "MPa",
                    }
                ),
            ],
            "counts": {
                "experiments": 2,
                "metrics": {
                    "porosity": 2,
                    "microhardness": 2,
                    "ultimate_tensile_strength": 1,
                    "yield_strength": 1,
                },
            },
            "methods": [
                {
                    "property": "microhardness",
                    "procedure": "in situ micro-indentation during deposition",
                    "records": [0],
                }
            ],
            "extract": plain_extract,
        }
    )

    # h: absent from the registry and carries no DOI of its own, so exports
    # must refuse until metadata is entered manually
    specs.append(
        {
            "key": "h",
            "slug": "al6061_properties",
            "title": "Mechanical properties of cold sprayed Al 6061 coatings",
            "doi": None,
            "year": None,
            "venue": "",
            "authors": [],
            "markdown": """# Mechanical properties of cold sprayed Al 6061 coatings

Al 6061 coatings were deposited at two traverse speeds (A-1, A-2).
Porosity was 7.2 and 6.8 %, hardness 95 and 105 HV. The slower pass gave
8.4 % elongation; an elastic modulus of 69 GPa was measured for A-2 by
resonance.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "A-1",
                        "Majority_Powder_Material": "Al 6061",
                        "Majority_Powder_Primary_Element": "Al",
                        "Process_Gas": "Air",
                        "Deposit_Porosity_Value": "7.2",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "95",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Elongation_Value": "8.4",
                        "Deposit_Elongation_Units": "%",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "A-2",
                        "Majority_Powder_Material": "Al 6061",
                        "Majority_Powder_Primary_Element": "Al",
                        "Process_Gas": "Air",
                        "Deposit_Porosity_Value": "6.8",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "105",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Elastic_Modulus_Value": "69",
                        "Deposit_Elastic_Modulus_Units": "GPa",
                    }
                ),
            ],
            "counts": {
                "experiments": 2,
                "metrics": {
                    "porosity": 2,
                    "microhardness": 2,
                    "elongation": 1,
                    "elastic_modulus": 1,
                },
            },
            "extract": plain_extract,
        }
    )

    # i: composition handling. One record reports an atomic-percent alloy
    # designation, the other a two-component blend with a mixing ratio.
    specs.append(
        {
            "key": "i",
            "slug": "alcu_cuw_blends",
            "title": "Cold spraying of Al-Cu alloy and Cu-W blended powders",
            "doi": "10.5024/csm.2022.0134",
            "year": 2022,
            "venue": "Surface and Coatings Technology",
            "authors": ["H. Nkemelu", "D. Farkas"],
            "markdown": """# Cold spraying of Al-Cu alloy and Cu-W blended powders

Two feedstocks were sprayed: a pre-alloyed Al-50Cu at.% powder (AlCu-1)
and a mechanically mixed Cu-W blend at an 80:20 mass ratio (CuW-1).
Porosity was 3.4 and 2.9 %, hardness 180 and 170 HV. The Al-Cu deposit
showed an elastic modulus of 110 GPa.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "AlCu-1",
                        "Majority_Powder_Material": "Al-Cu alloy",
                        "Majority_Powder_Primary_Element": "Al",
                        "Majority_Powder_Composition": "Al-50Cu at.%",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "3.4",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "180",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Elastic_Modulus_Value": "110",
                        "Deposit_Elastic_Modulus_Units": "GPa",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "CuW-1",
                        "Majority_Powder_Material": "Cu-W blend",
                        "Majority_Powder_Primary_Element": "Cu",
                        "Majority_Powder_Composition": "Cu",
                        "Secondary_Powder_Material": "Tungsten",
                        "Secondary_Powder_Primary_Element": "W",
                        "Secondary_Powder_Composition": "W",
                        "Powder_Blend_Ratio": "80:20",
                        "Powder_Blend_Method": "mechanical mixing",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "2.9",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "170",
                        "Deposit_Microhardness_Units": "HV",
                    }
                ),
            ],
            "counts": {
                "experiments": 2,
                "metrics": {"porosity": 2, "microhardness": 2, "elastic_modulus": 1},
            },
            "extract": plain_extract,
        }
    )

    # j: the unit zoo. Imperial and SI-adjacent units, a range, an
    # inequality, a thousands separator, a non-convertible hardness scale,
    # and one unit nothing can convert.
    specs.append(
        {
            "key": "j",
            "slug": "units_case_studies",
            "title": "Property measurements of cold sprayed copper and Ti-6Al-4V deposits",
            "doi": "10.5024/csm.2014.0026",
            "year": 2014,
            "venue": "Journal of Materials Processing",
            "authors": ["W. Almeida"],
            "markdown": """# Property measurements of cold sprayed copper and Ti-6Al-4V deposits

A US-built system sprayed copper at a gas temperature of 752 F with the
substrate held at 573 K, traversing at 3000 mm/min. The deposit grew to
1.5 cm thickness from 45 um powder; the datasheet lists the standoff as
3 furlongs, an obvious transcription error kept here verbatim. Porosity
stayed below 1.5 % and tensile strength reached 65 ksi. Hardness was 45
HRC, with a nanoindentation hardness of 5.2 GPa.

A second, European campaign deposited Ti-6Al-4V: porosity 4-6 %,
hardness 350 HV and a tensile strength of 1,200 MPa.
""",
            "records": [
                rec(
                    {
                        "Experiment_Label": "Cu-US",
                        "Majority_Powder_Material": "Copper",
                        "Majority_Powder_Primary_Element": "Cu",
                        "Process_Gas": "Helium",
                        "Gas_Temperature_Value": "752",
                        "Gas_Temperature_Units": "°F",
                        "Substrate_Preheat_Temperature_Value": "573 K",
                        "Nozzle_Traverse_Speed_Value": "3000",
                        "Nozzle_Traverse_Speed_Units": "mm/min",
                        "Nozzle_Standoff_Distance_Value": "3 furlongs",
                        "Deposit_Thickness_Value": "1.5",
                        "Deposit_Thickness_Units": "cm",
                        "Powder_Particle_Mean_Size_Value": "45",
                        "Powder_Particle_Mean_Size_Units": "µm",
                        "Deposit_Porosity_Value": "<1.5",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "45",
                        "Deposit_Microhardness_Units": "HRC",
                        "Deposit_Ultimate_Tensile_Strength_Value": "65",
                        "Deposit_Ultimate_Tensile_Strength_Units": "ksi",
                        "Deposit_Nanohardness_Value": "5.2",
                        "Deposit_Nanohardness_Units": "GPa",
                    }
                ),
                rec(
                    {
                        "Experiment_Label": "Ti64-EU",
                        "Majority_Powder_Material": "Ti-6Al-4V",
                        "Majority_Powder_Primary_Element": "Ti",
                        "Process_Gas": "Nitrogen",
                        "Deposit_Porosity_Value": "4–6",
                        "Deposit_Porosity_Units": "%",
                        "Deposit_Microhardness_Value": "350",
                        "Deposit_Microhardness_Units": "HV",
                        "Deposit_Ultimate_Tensile_Strength_Value": "1,200",
                        "Deposit_Ultimate_Tensile_Strength_Units": "MPa",
                    }
                ),
            ],
            "counts": {
                "experiments": 2,
                "metrics": {
                    "porosity": 2,
                    "microhardness": 2,
                    "ultimate_tensile_strength": 2,
                    "nanohardness": 1,
                },
            },
            "extract": plain_extract,
        }
    )

    return specs


def registry_entries(specs: list[dict]) -> list[dict]:
    entries: list[dict] = []
    for spec in specs:
        if spec["key"] == "h":
            continue  # deliberately unlisted
        entries.append(
            {
                "title": spec["title"],
                "authors": spec["authors"],
                "venue": spec["venue"],
                "year": spec["year"],
                "doi": spec["doi"],
                "source_link": "",
            }
        )
        if spec["key"] == "g":
            # near-duplicate listing (conference reprint) that ties the
            # journal entry above the auto-link threshold
            entries.append(
                {
                    "title": "Microhardness evolution in cold-sprayed Inconel 718 deposits",
                    "authors": spec["authors"],
                    "venue": "Proceedings of the International Thermal Spray Conference",
                    "year": 2015,
                    "doi": "10.5024/csm.2015.0072",
                    "source_link": "",
                }
            )
    entries.append(
        {
            "title": "Wire arc additive manufacturing of duplex steel flanges",
            "authors": ["G. Meloni"],
            "venue": "Welding in the World",
            "year": 2013,
            "doi": "10.5024/csm.2013.0003",
            "source_link": "",
        }
    )
    return entries


# --------------------------------------------------------------------------
# evaluation fixture: a synthetic scored corpus with exact tallies
# 80 gold records, 77 candidate records, 69 matched pairs


def _eval_record(record_id: str, article_id: str, fields: dict[str, object]) -> dict:
    values = {name: FieldValue.from_raw(v).to_dict() for name, v in fields.items()}
    return {
        "record_id": record_id,
        "article_id": article_id,
        "provenance": "llm" if ":c" in record_id else "human",
        "values": values,
        "nonstandard_method_flags": [],
    }


def _matched_pair(aid: str, k: int) -> tuple[dict, dict]:
    base = {
        "Experiment_Label": f"run {k}",
        "Majority_Powder_Material": "Copper",
        "Deposit_Porosity_Value": round(2.0 + 0.3 * k, 2),
        "Deposit_Microhardness_Value": 120 + 5 * k,
        "Gas_Temperature_Value": 400 + 10 * k,
    }
    cand = dict(base)
    if k % 5 == 0:
        # 5 % numeric drift: outside field agreement, inside pair matching
        cand["Deposit_Porosity_Value"] = round(base["Deposit_Porosity_Value"] * 1.05, 4)
    if k % 7 == 0:
        cand["Experiment_Label"] = f"run {k} (repeat)"
    gold = _eval_record(f"{aid}:g{k:02d}", aid, base)
    candidate = _eval_record(f"{aid}:c{k:02d}", aid, cand)
    return gold, candidate


def _missed_gold(aid: str, m: int) -> dict:
    return _eval_record(
        f"{aid}:g{90 + m}",
        aid,
        {
            "Experiment_Label": f"supplementary condition {m}",
            "Majority_Powder_Material": "Tantalum",
            "Deposit_Porosity_Value": 90.0 + m,
            "Deposit_Microhardness_Value": 4000 + 50 * m,
            "Gas_Temperature_Value": 1100 + 13 * m,
        },
    )


def _ghost_candidate(aid: str, h: int) -> dict:
    return _eval_record(
        f"{aid}:c{90 + h}",
        aid,
        {
            "Experiment_Label": f"phantom row {h}",
            "Majority_Powder_Material": "Zinc",
            "Deposit_Yield_Strength_Value": 600 + h,
            "Deposit_Elongation_Value": round(3.0 + 0.1 * h, 2),
        },
    )


def eval_fixture() -> tuple[list[dict], list[dict]]:
    gold: list[dict] = []
    cand: list[dict] = []
    # (article count, matched pairs, missed gold, ghost candidates)
    layout = [(13, 3, 0, 0), (5, 4, 1, 0), (1, 6, 2, 3), (1, 4, 4, 5)]
    idx = 0
    for n_articles, n_matched, n_missed, n_ghosts in layout:
        for _ in range(n_articles):
            idx += 1
            aid = f"ev{idx:02d}"
            for k in range(1, n_matched + 1):
                g, c = _matched_pair(aid, k)
                gold.append(g)
                cand.append(c)
            for m in range(1, n_missed + 1):
                gold.append(_missed_gold(aid, m))
            for h in range(1, n_ghosts + 1):
                cand.append(_ghost_candidate(aid, h))
    return gold, cand


# --------------------------------------------------------------------------
# writers


def write_corpus(specs: list[dict]) -> dict[str, str]:
    corpus_dir = FIXTURES / "corpus"
    llm_dir = FIXTURES / "llm"
    for d in (corpus_dir, llm_dir):
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)

    id_by_key: dict[str, str] = {}
    for spec in specs:
        markdown = spec["markdown"]
        (corpus_dir / f"{spec['slug']}.md").write_text(markdown, encoding="utf-8")
        digest = content_hash(markdown)
        id_by_key[spec["key"]] = digest[:12]

        if "extract_literal" in spec:
            extract_entry: object = spec["extract_literal"]
        else:
            extract_entry = spec["extract"](spec["records"])
        doc = {
            "extract": extract_entry,
            "counts": json.dumps(spec["counts"], ensure_ascii=False),
            "methods": json.dumps(spec.get("methods", []), ensure_ascii=False),
        }
        with open(llm_dir / f"{digest}.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, ensure_ascii=False, indent=1)
            fh.write("\n")

    with open(FIXTURES / "registry.json", "w", encoding="utf-8") as fh:
        json.dump({"entries": registry_entries(specs)}, fh, ensure_ascii=False, indent=1)
        fh.write("\n")

    with open(FIXTURES / "material_aliases.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "field": MAPPING_FIELD,
                "canonical": MAPPING_CANONICAL,
                "aliases": [{"value": v, "count": n} for v, n in MATERIAL_ALIASES],
            },
            fh,
            ensure_ascii=False,
            indent=1,
        )
        fh.write("\n")
    return id_by_key


def write_eval() -> None:
    eval_dir = FIXTURES / "eval"
    if eval_dir.exists():
        shutil.rmtree(eval_dir)
    eval_dir.mkdir(parents=True)
    gold, cand = eval_fixture()
    for name, rows in (("gold.jsonl", gold), ("candidates.jsonl", cand)):
        with open(eval_dir / name, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps({"record": row}, ensure_ascii=False, sort_keys=True))
                fh.write("\n")


# --------------------------------------------------------------------------
# self-check


class CheckFailure(AssertionError):
    pass


def need(condition: bool, label: str) -> None:
    if not condition:
        raise CheckFailure(label)
    print(f"  ok: {label}")


def check_aliases() -> None:
    values: list[str] = []
    for value, count in MATERIAL_ALIASES:
        values.extend([value] * count)
    seed = MATERIAL_ALIASES[0][0]
    for value, _ in MATERIAL_ALIASES[1:]:
        sim = string_similarity(seed, value)
        if sim < 0.85:
            raise CheckFailure(f"alias {value!r} scores {sim:.4f} < 0.85 against the seed")
    proposals = propose_mappings(MAPPING_FIELD, values)
    need(len(proposals) == len(MATERIAL_ALIASES), "every alias got a proposal")
    need(
        {p.canonical for p in proposals} == {MAPPING_CANONICAL},
        "aliases consolidate into one cluster with the expected canonical",
    )


def check_eval(schema) -> None:
    def load(path: Path) -> dict[str, list]:
        grouped: dict[str, list] = {}
        for line in path.read_text(encoding="utf-8").splitlines():
            rec = parse_record(json.loads(line)["record"])
            grouped.setdefault(rec.article_id, []).append(rec)
        return grouped

    gold = load(FIXTURES / "eval" / "gold.jsonl")
    cand = load(FIXTURES / "eval" / "candidates.jsonl")
    scores = [
        score_article(gold.get(aid, []), cand.get(aid, []), schema, article_id=aid)
        for aid in sorted(set(gold) | set(cand))
    ]
    report = corpus_report(scores)
    need(report["gold_records"] == 80, "evaluation fixture holds 80 gold records")
    need(report["candidate_records"] == 77, "evaluation fixture holds 77 candidate records")
    need(report["matched_records"] == 69, "evaluation fixture matches 69 pairs")
    need(
        math.isclose(report["micro"]["experiment_precision"], 69 / 77),
        "micro experiment precision is 69/77",
    )
    need(
        math.isclose(report["micro"]["experiment_recall"], 69 / 80),
        "micro experiment recall is 69/80",
    )


def check_pipeline(specs: list[dict], id_by_key: dict[str, str]) -> None:
    config = PipelineConfig.load()
    schema = config.schema
    key_of = {aid: key for key, aid in id_by_key.items()}

    with tempfile.TemporaryDirectory() as td:
        store = Store(Path(td) / "work.db")
        registry = FixtureRegistryClient(FIXTURES / "registry.json")
        articles = load_corpus(FIXTURES / "corpus")
        need(len(articles) == 10, "corpus loads ten articles")

        matches = {}
        for article in articles:
            match = resolve_metadata(article, registry)
            matches[key_of[article.article_id]] = match
            store.upsert_article(article)
        need(matches["g"].resolution == "ambiguous", "registry linking: article g is ambiguous")
        need(matches["h"].resolution == "no_match", "registry linking: article h has no match")
        need(
            all(matches[k].resolution == "auto_linked" for k in "abcdefij"),
            "registry linking: the other eight auto-link",
        )
        # a reviewer settles the tie by picking the journal listing
        journal = next(
            md for _, md in matches["g"].candidates if md.doi == "10.5024/csm.2015.0071"
        )
        store.set_metadata(id_by_key["g"], journal)

        client = FixtureLlmClient(FIXTURES / "llm")
        result = run_pipeline(store, FIXTURES / "corpus", client, config)

        need(result.final_records == 23, "pipeline lands on 23 active records")
        need(result.ledger_consistent, "step ledger sums to the final record count")
        removal = next(s for s in result.summaries if s.step == "empty_result_removal")
        need(removal.removed == 0, "no record is empty of target metrics")
        need(len(result.snapshots) == len(result.summaries) == 9, "one snapshot per step")

        a_id, c_id, d_id, e_id, f_id, g_id, h_id, j_id = (
            id_by_key[k] for k in "acdefghj"
        )
        statuses = {key_of[a.article_id]: a.label_status.value for a in store.list_articles()}
        need(statuses["c"] == "flagged" and statuses["f"] == "flagged",
             "truncated and under-covered articles are flagged")
        need(statuses["a"] == "llm_labeled", "clean articles stay llm_labeled")

        # -- flags ---------------------------------------------------------
        open_flags = store.list_flags(open_only=True)
        by_stage_article = sorted((f.stage.value, key_of[f.article_id]) for f in open_flags)
        need(
            by_stage_article
            == [
                ("completeness", "d"),
                ("coverage", "f"),
                ("outlier", "e"),
                ("outlier", "e"),
                ("outlier", "e"),
                ("outlier", "e"),
                ("syntax", "c"),
            ],
            "exactly seven open flags, on the intended articles",
        )

        d_flag = store.list_flags(article_id=d_id, stage="completeness")[0]
        need(
            d_flag.detail["records"]
            == [
                {
                    "record_id": f"{d_id}:002",
                    "missing": ["Substrate_Preparation"],
                    "extra": ["Weather_Notes"],
                }
            ],
            "completeness flag pins the unfixable record with its key diff",
        )
        repairs = {r["record_id"]: r for r in d_flag.detail["repairs"]}
        need(
            repairs[f"{d_id}:000"]["realigned"] == {"Laser_PWR_Value": "Laser_Power_Value"},
            "mis-keyed laser power realigned by similarity",
        )
        need(
            sorted(repairs[f"{d_id}:001"]["gate_fills"])
            == [
                "HIP_Duration_Units",
                "HIP_Duration_Value",
                "HIP_Pressure_Units",
                "HIP_Pressure_Value",
                "HIP_Temperature_Units",
                "HIP_Temperature_Value",
            ],
            "gate-false HIP parameters filled as explicitly empty",
        )
        d0 = next(r for r in store.active_records(d_id) if r.record_id.endswith(":000"))
        need(
            "Laser_PWR_Value" not in d0.values and d0.value("Laser_Power_Value").raw == "2.5",
            "realignment persisted into the stored record",
        )

        outlier = {
            (f.detail["pass"], key_of[f.article_id], f.detail["record_id"].split(":")[1],
             f.detail.get("metric", ""))
            for f in store.list_flags(stage="outlier")
        }
        need(
            outlier
            == {
                ("domain", "e", "003", "porosity"),
                ("global_z", "e", "003", "porosity"),
                ("global_z", "e", "003", "microhardness"),
                ("local_class", "e", "002", ""),
            },
            "outlier passes flag exactly the planted anomalies",
        )

        f_flag = store.list_flags(article_id=f_id, stage="coverage")[0]
        wev = f_flag.detail["wev"]
        expected_wev = ((7.25 / 23) * 5 + (7.25 / 1) * 4) / 2
        need(math.isclose(wev, expected_wev, rel_tol=1e-9),
             f"coverage gap scores wEV {expected_wev:.4f}")
        c_cov = store.get_coverage(c_id)
        need(c_cov is not None and c_cov["wev"] < 2.5 and c_cov["ev"] == 2.0,
             "truncated article scores a coverage gap below the flag bar")
        expected_f = store.get_expected(f_id)
        need(
            expected_f["expected_metrics"] == {"porosity": 8, "deposition_efficiency": 4},
            "expected counts stored as estimated",
        )

        g0 = next(r for r in store.active_records(g_id) if r.record_id.endswith(":000"))
        need(
            g0.nonstandard_method_flags
            == [{"field": "Deposit_Microhardness_Value",
                 "procedure": "in situ micro-indentation during deposition"}],
            "methods probe mark persisted on the stored record",
        )

        # -- queue ---------------------------------------------------------
        markdown = {a.article_id: a.markdown for a in store.list_articles()}
        titles = {a.article_id: a.metadata.title for a in store.list_articles()}
        queue = build_queue(open_flags, markdown, titles)
        need(
            [q.stage.value for q in queue]
            == ["syntax", "completeness", "outlier", "outlier", "outlier", "outlier", "coverage"],
            "review queue orders stages cheapest-check first",
        )
        need(queue[0].article_id == c_id and queue[-1].article_id == f_id,
             "queue starts at the syntax flag and ends at the coverage flag")
        need(
            all(q.excerpt_offsets for q in queue if q.stage.value == "outlier"
                and q.detail.get("value") is not None),
            "outlier queue items carry markdown excerpt offsets",
        )

        # -- units ---------------------------------------------------------
        rules = config.unit_rules
        b0, b1 = store.active_records(id_by_key["b"])
        nb0 = normalize_record(b0, schema, rules)
        need(
            math.isclose(nb0.value("Deposit_Porosity_Value").numeric, 2.5)
            and math.isclose(nb0.value("Deposit_Porosity_Value").uncertainty, 0.3),
            "plus-minus porosity parses value and uncertainty",
        )
        need(
            math.isclose(nb0.value("Deposit_Microhardness_Test_Load_Value").numeric, 0.3)
            and nb0.value("Deposit_Microhardness_Test_Load_Units").raw == "kgf",
            "Vickers load suffix fills the empty test-load fields",
        )
        nb1 = normalize_record(b1, schema, rules)
        need(math.isclose(nb1.value("Deposit_Microhardness_Value").uncertainty, 5.0),
             "hardness uncertainty survives normalization")

        j0, j1 = store.active_records(j_id)
        nj0 = normalize_record(j0, schema, rules)
        val = nj0.value
        need(math.isclose(val("Deposit_Ultimate_Tensile_Strength_Value").numeric,
                          65 * 6.8947573), "ksi converts to MPa")
        need(math.isclose(val("Gas_Temperature_Value").numeric, 400.0, abs_tol=1e-9),
             "Fahrenheit converts to Celsius")
        need(math.isclose(val("Substrate_Preheat_Temperature_Value").numeric, 299.85),
             "Kelvin converts to Celsius")
        need(math.isclose(val("Nozzle_Traverse_Speed_Value").numeric, 50.0),
             "mm/min converts to mm/s")
        need(math.isclose(val("Deposit_Thickness_Value").numeric, 15.0),
             "cm converts to mm")
        need(math.isclose(val("Deposit_Porosity_Value").numeric, 1.5),
             "inequality bound keeps the bound value")
        need(val("Deposit_Microhardness_Value").unit == "HRC"
             and math.isclose(val("Deposit_Microhardness_Value").numeric, 45.0),
             "HRC stays on its own scale, unconverted")
        need(math.isclose(val("Deposit_Nanohardness_Value").numeric,
                          5.2 * 101.97162129779283), "GPa nanohardness converts to HV")
        need(val("Nozzle_Standoff_Distance_Value").validity.value == "invalid",
             "unknown unit marks the value invalid, raw preserved")
        nj1 = normalize_record(j1, schema, rules)
        need(math.isclose(nj1.value("Deposit_Porosity_Value").numeric, 5.0),
             "range reports its midpoint")
        need(math.isclose(nj1.value("Deposit_Ultimate_Tensile_Strength_Value").numeric, 1200.0),
             "thousands separator is ignored")

        # -- compositions ---------------------------------------------------
        elements, nominal = config.elements, config.nominal
        a0 = store.active_records(a_id)[0]
        out = derive_composition(a0, elements, nominal)
        need(out.lineage == "imputed"
             and math.isclose(out.vector.fractions["Ti"], 90.0)
             and math.isclose(out.vector.fractions["Al"], 6.0)
             and math.isclose(out.vector.fractions["V"], 4.0),
             "nominal Ti-6Al-4V imputed at 90/6/4 wt")
        i0, i1 = store.active_records(id_by_key["i"])
        out0 = derive_composition(i0, elements, nominal)
        cu = elements.atomic_weight["Cu"]
        al = elements.atomic_weight["Al"]
        expected_cu = 50 * cu / (50 * cu + 50 * al) * 100
        need(out0.lineage == "reported"
             and math.isclose(out0.vector.fractions["Cu"], expected_cu)
             and abs(out0.vector.fractions["Cu"] - 70.195) < 0.01,
             "atomic-percent designation converts to the weight basis")
        out1 = derive_composition(i1, elements, nominal)
        need(out1.lineage == "blended"
             and math.isclose(out1.vector.fractions["Cu"], 80.0)
             and math.isclose(out1.vector.fractions["W"], 20.0),
             "80:20 blend mixes element vectors by mass")
        need(math.isclose(out1.vector.total(), 100.0, abs_tol=1e-6),
             "blended vector sums to 100")
        e3 = store.active_records(e_id)[3]
        out3 = derive_composition(e3, elements, nominal)
        need(out3.vector is None and any("no nominal composition" in n for n in out3.notes),
             "unknown material yields no vector, with a note")

        # -- exports ---------------------------------------------------------
        records = store.active_records()
        all_articles = store.list_articles()
        try:
            write_export(Path(td) / "x1", records, all_articles, schema)
            raise CheckFailure("export ran despite a linkless article")
        except ExportError as exc:
            need(exc.offenders == [h_id], "export refuses and names the linkless article")
        h_article = store.get_article(h_id)
        set_metadata_manual(
            h_article,
            ArticleMetadata(title=h_article.metadata.title, doi="10.5024/csm.2023.0500"),
        )
        store.set_metadata(h_id, h_article.metadata)
        paths = write_export(
            Path(td) / "x2", records, store.list_articles(), schema,
            view="normalized", subset="all", unit_rules=rules,
            mapping_table=store.mapping_table(), elements=elements, nominal=nominal,
        )
        manifest = json.loads(paths["manifest"].read_text(encoding="utf-8"))
        need(manifest["records"] == 23 and manifest["articles"] == 9,
             "normalized export covers every record-bearing article")
        need(
            any(p["field"] == "Powder_Condition_Description"
                for p in manifest["paraphrase_review"]),
            "long free-text answers are listed for paraphrase review",
        )

        # -- idempotent re-run ------------------------------------------------
        rerun = run_pipeline(store, FIXTURES / "corpus", client, config)
        need(rerun.final_records == 23
             and sum(s.added for s in rerun.summaries) == 0
             and rerun.ledger_consistent,
             "second run adds nothing and keeps the ledger consistent")
        need(len(store.list_flags(open_only=True)) == 7,
             "re-running stages never duplicates flags")


def main() -> int:
    schema = load_schema()
    specs = article_specs(schema)
    id_by_key = write_corpus(specs)
    write_eval()
    n_records = sum(len(s["records"]) for s in specs)
    print(f"wrote {len(specs)} articles ({n_records} records), "
          f"registry, aliases, eval fixture -> {FIXTURES}")

    print("self-check: alias clustering")
    check_aliases()
    print("self-check: evaluation fixture")
    check_eval(schema)
    print("self-check: pipeline behaviour")
    check_pipeline(specs, id_by_key)
    print("all fixture checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
