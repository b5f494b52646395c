"""Fair facility partitions: solver, oracle and reporting bindings."""

from ._fairpart import (
    ConfigError,
    DimensionMismatch,
    Error,
    Instance,
    ParseError,
    Partition,
    Problem,
    SolveResult,
    Weights,
    closed_facilities,
    lp_primal,
    percentile_nearest_rank,
    set_evaluation_workers,
    verify_instance,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionMismatch",
    "Error",
    "Instance",
    "ParseError",
    "Partition",
    "Problem",
    "SolveResult",
    "Weights",
    "closed_facilities",
    "lp_primal",
    "percentile_nearest_rank",
    "set_evaluation_workers",
    "verify_instance",
]
