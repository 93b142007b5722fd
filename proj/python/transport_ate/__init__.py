"""One-step estimators of the transported average treatment effect."""

from ._core import (
    ArgumentError,
    ConvergenceError,
    Dataset,
    FoldError,
    InferenceError,
    ParseError,
    PreconditionError,
    SchemaError,
    TransportError,
    ValidationError,
    efficiency_bounds,
    eif_inference,
    estimate,
    load_csv,
    pseudo_outcome_T,
    pseudo_outcome_U,
    sample_dgm,
    simulate,
    true_value,
)

__all__ = [
    "ArgumentError",
    "ConvergenceError",
    "Dataset",
    "FoldError",
    "InferenceError",
    "ParseError",
    "PreconditionError",
    "SchemaError",
    "TransportError",
    "ValidationError",
    "efficiency_bounds",
    "eif_inference",
    "estimate",
    "load_csv",
    "pseudo_outcome_T",
    "pseudo_outcome_U",
    "sample_dgm",
    "simulate",
    "true_value",
]
