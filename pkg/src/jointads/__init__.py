"""Online revenue-maximising mechanisms for two buyers of a shared good."""

from .mechanism import (
    InvariantViolation,
    Mechanism,
    OrthogonalGraph,
    Valuation,
    as_rational,
    influence_region,
    intrinsic_weight,
    validate_orthogonal,
)

__all__ = [
    "InvariantViolation",
    "Mechanism",
    "OrthogonalGraph",
    "Valuation",
    "as_rational",
    "influence_region",
    "intrinsic_weight",
    "validate_orthogonal",
]
__version__ = "0.1.0"
