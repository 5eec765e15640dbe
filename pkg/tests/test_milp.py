import math

import numpy as np
import pytest

from qsynth.milp import (
    BUDGET,
    FEASIBLE,
    INFEASIBLE,
    OPTIMAL,
    MilpProblem,
    MilpSolver,
    MilpStats,
    to_lp_string,
    write_lp_file,
)
from qsynth.predicates import (
    Predicate,
    boolean,
    c_ge,
    c_le,
    guarded,
    integer,
    linear,
    predicate,
    real,
    to_conjunctive,
)

from .oracles import brute_force_milp, random_milp


@pytest.fixture(params=["highs-core", "linprog"])
def any_solver(request):
    try:
        return MilpSolver(backend=request.param)
    except RuntimeError:
        pytest.skip("incremental HiGHS core unavailable")


def test_single_constraint_optimum(any_solver):
    p = MilpProblem(
        (real("x", 0, 10),),
        predicate([c_le(linear({"x": 1}), 3)]),
        linear({"x": 1}), "max",
    )
    r = any_solver.solve(p)
    assert r.status == OPTIMAL
    assert r.value == pytest.approx(3.0, abs=1e-9)
    assert r.witness["x"] == pytest.approx(3.0, abs=1e-9)


def test_contradictory_constraints(any_solver):
    p = MilpProblem(
        (real("x", 0, 10),),
        predicate([c_le(linear({"x": 1}), 0), c_ge(linear({"x": 1}), 1)]),
    )
    assert any_solver.feasible(p).status == INFEASIBLE


def test_boolean_knapsack(any_solver):
    # enumerating the four boolean points gives optimum 3 at (1, 0)
    p = MilpProblem(
        (boolean("a"), boolean("b")),
        predicate([c_le(linear({"a": 1, "b": 1}), 1)]),
        linear({"a": 3, "b": 2}), "max",
    )
    r = any_solver.solve(p)
    assert r.status == OPTIMAL
    assert r.value == pytest.approx(3.0)
    assert r.witness == {"a": 1.0, "b": 0.0}


def test_guard_fixed_infeasible(any_solver):
    decls = (boolean("y"), real("x", 6, 10))
    pred = predicate([
        guarded("y", c_le(linear({"x": 1}), 5)),
        c_ge(linear({"y": 1}), 1),
    ])
    p = MilpProblem(decls, to_conjunctive(pred, decls))
    assert any_solver.feasible(p).status == INFEASIBLE


def test_empty_constraints_feasible(any_solver):
    p = MilpProblem((real("x", -1, 2),), Predicate((), ()))
    r = any_solver.feasible(p)
    assert r.status == FEASIBLE
    assert -1 - 1e-9 <= r.witness["x"] <= 2 + 1e-9


def test_point_box_witness(any_solver):
    p = MilpProblem(
        (real("x", 2, 2), real("y", -3, -3)),
        predicate([c_le(linear({"x": 1, "y": 1}), 0)]),
    )
    r = any_solver.feasible(p)
    assert r.status == FEASIBLE
    assert r.witness == {"x": 2.0, "y": -3.0}


def test_guarded_problem_rejected():
    decls = (boolean("y"), real("x", 0, 1))
    pred = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
    with pytest.raises(ValueError, match="conjunctive"):
        MilpProblem(decls, pred)


def test_unbounded_decl_rejected():
    from qsynth.predicates import VariableDecl

    with pytest.raises(ValueError, match="unbounded"):
        MilpProblem((VariableDecl("x", "real"),), Predicate((), ()))


def test_budget_exhaustion_status():
    solver = MilpSolver(node_budget=2)
    decls = tuple(boolean(f"b{i}") for i in range(8))
    terms = {d.name: 2.0 for d in decls}
    pred = predicate([c_le(linear(terms), 7.0)])  # forces branching
    p = MilpProblem(decls, pred, linear({d.name: 1.0 for d in decls}), "max")
    r = solver.solve(p)
    assert r.status == BUDGET


def test_witness_integrality_exact():
    solver = MilpSolver()
    rng = np.random.default_rng(3)
    for _ in range(40):
        prob = random_milp(rng)
        r = solver.solve(prob)
        if r.witness is None:
            continue
        for d in prob.decls:
            v = r.witness[d.name]
            assert d.lower - 1e-7 <= v <= d.upper + 1e-7
            if d.is_discrete:
                assert v == int(v)
        for c in prob.constraints.plain:
            assert c.lhs.evaluate(r.witness) <= c.rhs + 1e-7


def test_oracle_agreement_small_batch():
    solver = MilpSolver()
    rng = np.random.default_rng(11)
    for i in range(60):
        prob = random_milp(rng)
        status, value = brute_force_milp(prob)
        r = solver.solve(prob)
        assert r.status == status, f"case {i}: {r.status} != oracle {status}"
        if status == "optimal":
            assert r.value == pytest.approx(value, abs=1e-6, rel=1e-6)


def test_monotonicity_adding_constraints():
    solver = MilpSolver()
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 25:
        prob = random_milp(rng)
        if prob.objective is None or prob.direction != "max":
            continue
        r1 = solver.solve(prob)
        if r1.status != OPTIMAL:
            continue
        extra = predicate([c_le(linear({prob.decls[0].name: 1.0}),
                                float(rng.integers(-2, 4)))])
        tightened = MilpProblem(
            prob.decls, prob.constraints.conjoin(extra), prob.objective, "max"
        )
        r2 = solver.solve(tightened)
        if r2.status == OPTIMAL:
            assert r2.value <= r1.value + 1e-7
        checked += 1


def test_determinism_same_problem():
    rng = np.random.default_rng(9)
    prob = random_milp(rng)
    a = MilpSolver().solve(prob)
    b = MilpSolver().solve(prob)
    assert a.status == b.status
    assert a.witness == b.witness
    assert a.value == b.value


def test_stats_accounting():
    solver = MilpSolver()
    assert all(row["num"] == 0 for row in solver.stats_snapshot().values())
    p1 = MilpProblem((real("x", 0, 1),), Predicate((), ()), query_kind=1)
    solver.solve(p1)
    solver.solve(p1)
    p2 = MilpProblem((real("x", 0, 1),), Predicate((), ()), query_kind=3)
    solver.solve(p2)
    snap = solver.stats_snapshot()
    assert snap[1]["num"] == 2
    assert snap[3]["num"] == 1
    assert snap[2]["num"] == 0
    for row in snap.values():
        if row["num"]:
            assert row["avg"] == pytest.approx(row["time"] / row["num"])
    solver.reset_stats()
    assert all(row["num"] == 0 for row in solver.stats_snapshot().values())


def test_stats_merge_snapshot():
    a, b = MilpStats(), MilpStats()
    a.record(1, 0.5)
    b.record(1, 1.0)
    b.record(2, 0.25)
    a.merge_snapshot(b.snapshot())
    snap = a.snapshot()
    assert snap[1] == {"num": 2, "time": 1.5, "avg": 0.75}
    assert snap[2]["num"] == 1


def test_session_reuse_bounds():
    solver = MilpSolver()
    decls = (real("x", 0, 10), boolean("y"))
    sess = solver.session(decls, predicate([c_le(linear({"x": 1, "y": 4}), 8)]))
    obj = np.array([1.0, 0.0])
    for ylo, expect in ((1.0, 4.0), (0.0, 8.0)):
        lo = sess.base_lo.copy()
        hi = sess.base_hi.copy()
        lo[1] = ylo
        status, x, val, _ = sess.solve_arrays(lo, hi, obj, True, kind=2)
        assert status == OPTIMAL
        assert val == pytest.approx(expect)


def test_lp_export_format(tmp_path):
    p = MilpProblem(
        (real("x'", 0, 10), boolean("y"), integer("k", -2, 5)),
        predicate([c_le(linear({"x'": 1, "y": 5}, 1.0), 11)]),
        linear({"x'": 1}), "max",
    )
    text = to_lp_string(p)
    assert text.startswith("Maximize")
    assert "x_p" in text and "'" not in text
    assert "c0: + 1 x_p + 5 y <= 10" in text
    assert "Binary" in text and "General" in text and text.rstrip().endswith("End")
    path = tmp_path / "prob.lp"
    write_lp_file(p, path)
    assert path.read_text() == text
