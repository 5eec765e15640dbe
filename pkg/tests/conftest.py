import numpy as np
import pytest

from qsynth.abstraction import build_abstraction
from qsynth.milp import MilpSolver
from qsynth.models import model_from_dict, single_buck
from qsynth.quantize import schema_for

TOY_SHIFT = {
    "name": "toy-shift",
    "variables": [
        {"name": "x", "role": "state", "kind": "real", "lower": 0, "upper": 4,
         "next_lower": -1, "next_upper": 5},
        {"name": "u", "role": "input", "kind": "boolean"},
    ],
    "constraints": [
        {"terms": {"x'": 1, "x": -1, "u": -2}, "sense": "==", "rhs": -1},
    ],
}

# x' = 0.5 x + u: contraction with equilibria at 0 (u=0) and 2 (u=1)
TOY_CONTRACT = {
    "name": "toy-contract",
    "variables": [
        {"name": "x", "role": "state", "kind": "real", "lower": 0, "upper": 4,
         "next_lower": 0, "next_upper": 3},
        {"name": "u", "role": "input", "kind": "boolean"},
    ],
    "constraints": [
        {"terms": {"x'": 1, "x": -0.5, "u": -1}, "sense": "==", "rhs": 0},
    ],
}

# double integrator flavor: x' = x + 0.5 v, v' = v + u - 0.5
TOY_2D = {
    "name": "toy-2d",
    "variables": [
        {"name": "x", "role": "state", "kind": "real", "lower": 0, "upper": 4,
         "next_lower": -1, "next_upper": 5},
        {"name": "v", "role": "state", "kind": "real", "lower": -1, "upper": 1,
         "next_lower": -1.5, "next_upper": 1.5},
        {"name": "u", "role": "input", "kind": "boolean"},
    ],
    "constraints": [
        {"terms": {"x'": 1, "x": -1, "v": -0.5}, "sense": "==", "rhs": 0},
        {"terms": {"v'": 1, "v": -1, "u": -1}, "sense": "==", "rhs": -0.5},
    ],
}


def toy_dynamics(doc):
    if doc is TOY_SHIFT:
        return lambda x, a: np.array([x[0] + 2 * a[0] - 1.0])
    if doc is TOY_CONTRACT:
        return lambda x, a: np.array([0.5 * x[0] + a[0]])
    if doc is TOY_2D:
        return lambda x, a: np.array([x[0] + 0.5 * x[1], x[1] + a[0] - 0.5])
    raise KeyError(doc["name"])


@pytest.fixture(scope="session")
def toy_model():
    return model_from_dict(TOY_SHIFT)


@pytest.fixture(scope="session")
def solver():
    return MilpSolver()


@pytest.fixture(scope="session")
def toy_abstraction_exact(toy_model):
    solver = MilpSolver()
    schema = schema_for(toy_model, 2)
    abstraction, stats = build_abstraction(
        toy_model, schema, solver, variant="minimum", successor_mode="exact"
    )
    return abstraction, stats, solver


@pytest.fixture(scope="session")
def buck_b4(solver):
    model = single_buck()
    schema = schema_for(model, 4)
    abstraction, stats = build_abstraction(model, schema, solver, variant="minimum")
    return model, schema, abstraction, stats
