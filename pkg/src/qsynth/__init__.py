"""qsynth: correct-by-construction quantized controllers for discrete-time
linear hybrid systems, MILP-backed, with buck DC-DC converters built in."""

__version__ = "0.1.0"

from .estimator import QuantizedControllerSynthesizer
from .milp import MilpProblem, MilpResult, MilpSolver
from .models import (
    BuckParams,
    Dtlhs,
    build_model,
    coefficients,
    load_model_file,
    multi_buck,
    multi_buck_robust,
    single_buck,
    single_buck_robust,
)
from .predicates import (
    Constraint,
    GuardedConstraint,
    LinearExpression,
    Predicate,
    VariableDecl,
    evaluate,
    to_conjunctive,
)
from .quantize import QuantSchema, schema_for
from .synthesis import Controller, RegionSpec, default_region_spec, synthesize

__all__ = [
    "QuantizedControllerSynthesizer",
    "MilpProblem", "MilpResult", "MilpSolver",
    "BuckParams", "Dtlhs", "build_model", "coefficients",
    "load_model_file", "multi_buck", "multi_buck_robust",
    "single_buck", "single_buck_robust",
    "Constraint", "GuardedConstraint", "LinearExpression", "Predicate",
    "VariableDecl", "evaluate", "to_conjunctive",
    "QuantSchema", "schema_for",
    "Controller", "RegionSpec", "default_region_spec", "synthesize",
]
