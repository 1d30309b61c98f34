"""Protograph-based Raptor-like (PBRL) rate-compatible LDPC code families."""

from pbrl.protograph import (
    PbrlFamily,
    Protomatrix,
    RatePoint,
    ValidationReport,
    assemble,
    rate_ladder,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "PbrlFamily",
    "Protomatrix",
    "RatePoint",
    "ValidationReport",
    "assemble",
    "rate_ladder",
    "validate",
    "__version__",
]
