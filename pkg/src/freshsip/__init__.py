"""Verification of ReLU networks by symbolic interval propagation with fresh
variables and input-splitting branch and bound."""

from .exceptions import (
    AllDegenerate,
    BudgetExceeded,
    DimensionMismatch,
    EmptyObjective,
    FreshSIPError,
    MalformedHeader,
    ModeMismatch,
    NumericParse,
    ParseError,
    UnboundedInput,
    ZeroWidth,
)
from .model_io import (
    Hyperrectangle,
    MaxViolation,
    Network,
    Normalization,
    PolytopeAvoid,
    VerificationProblem,
    load_nnet,
    load_property,
    parse_nnet,
    parse_property,
    serialize_nnet,
    serialize_property,
    serialize_result,
)
from .optimizer import SolverConfig, VerdictReport, solve
from .relaxation import FreshVarConfig, PassResult, forward_pass
from .symbolic import ConcreteBounds, SymbolicIntervalFV

__version__ = "0.1.0"

__all__ = [
    "AllDegenerate",
    "BudgetExceeded",
    "ConcreteBounds",
    "DimensionMismatch",
    "EmptyObjective",
    "FreshSIPError",
    "FreshVarConfig",
    "Hyperrectangle",
    "MalformedHeader",
    "MaxViolation",
    "ModeMismatch",
    "Network",
    "Normalization",
    "NumericParse",
    "ParseError",
    "PassResult",
    "PolytopeAvoid",
    "SolverConfig",
    "SymbolicIntervalFV",
    "UnboundedInput",
    "VerdictReport",
    "VerificationProblem",
    "ZeroWidth",
    "forward_pass",
    "load_nnet",
    "load_property",
    "parse_nnet",
    "parse_property",
    "serialize_nnet",
    "serialize_property",
    "serialize_result",
    "solve",
]
