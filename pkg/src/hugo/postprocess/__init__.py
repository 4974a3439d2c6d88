"""Post-extraction consolidation: units, compositions, categorical mappings."""

from .composition import (
    CompositionError,
    CompositionVector,
    ElementTable,
    Lineage,
    NominalCompositionTable,
    blend,
    expand_to_vector,
    impute_known_composition,
    parse_composition,
    to_wt_basis,
)
from .mappings import (
    ApplyStats,
    MappingConflictError,
    MappingProposal,
    MappingTable,
    apply_mappings,
    decide_mapping,
    propose_mappings,
    review_mappings,
)
from .units import (
    ParsedQuantity,
    UnitRules,
    load_unit_rules,
    normalize_hardness,
    normalize_record,
    normalize_value,
    parse_quantity,
)

__all__ = [
    "ApplyStats",
    "CompositionError",
    "CompositionVector",
    "ElementTable",
    "Lineage",
    "MappingConflictError",
    "MappingProposal",
    "MappingTable",
    "NominalCompositionTable",
    "ParsedQuantity",
    "UnitRules",
    "apply_mappings",
    "blend",
    "decide_mapping",
    "expand_to_vector",
    "impute_known_composition",
    "load_unit_rules",
    "normalize_hardness",
    "normalize_record",
    "normalize_value",
    "parse_composition",
    "parse_quantity",
    "propose_mappings",
    "review_mappings",
    "to_wt_basis",
]
