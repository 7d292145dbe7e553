"""fairlot: claims-based randomized allocation of scarce resources.

Weighted lotteries that respect individual claims, systemic-exclusion
metrics, simulation harnesses for the utility/exclusion tradeoff, and
uncertainty-aware randomization over predicted claims.
"""

from .core import (
    AllocationResult,
    ClaimProfile,
    ComplianceReport,
    ConfigurationError,
    FairlotError,
    LotteryConfig,
    Mechanism,
    SelectionWeights,
    StructuralError,
    UtilityGroundTruth,
    ValidationError,
    canonical_sort,
    check_bf_compliance,
    resolve_k,
)
from .lottery import (
    SelectionTrace,
    allocate,
    bf_lottery,
    bf_weights,
    iterative_weighted_selection,
    partial_bf_lottery,
    top_k,
    unweighted_lottery,
)
from .metrics import (
    EnsembleOutcomes,
    FrontierPoint,
    UnsupportedMetricError,
    expected_ser,
    expected_utility,
    frontier,
    ser,
    utility,
)
from .rng import GENERATOR_VERSION, RandomSource

__version__ = "0.1.0"

__all__ = [
    "AllocationResult",
    "ClaimProfile",
    "ComplianceReport",
    "ConfigurationError",
    "EnsembleOutcomes",
    "FairlotError",
    "FrontierPoint",
    "GENERATOR_VERSION",
    "LotteryConfig",
    "Mechanism",
    "RandomSource",
    "SelectionTrace",
    "SelectionWeights",
    "StructuralError",
    "UnsupportedMetricError",
    "UtilityGroundTruth",
    "ValidationError",
    "allocate",
    "bf_lottery",
    "bf_weights",
    "canonical_sort",
    "check_bf_compliance",
    "expected_ser",
    "expected_utility",
    "frontier",
    "iterative_weighted_selection",
    "partial_bf_lottery",
    "resolve_k",
    "ser",
    "top_k",
    "unweighted_lottery",
    "utility",
]
