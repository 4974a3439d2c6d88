"""Hybrid machine/human labeling pipeline for cold-spray literature.

The package turns markdown articles into schema-validated experiment
records: model-driven extraction, staged risk checks with a human review
queue, vocabulary and unit normalization, and versioned dataset exports.
"""

from .schema import (
    ExperimentRecord,
    FieldValue,
    SchemaDefinition,
    load_schema,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentRecord",
    "FieldValue",
    "SchemaDefinition",
    "load_schema",
    "__version__",
]
