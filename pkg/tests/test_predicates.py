import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsynth.predicates import (
    CMP_TOL,
    Constraint,
    GuardedConstraint,
    InfeasiblePredicateError,
    LinearExpression,
    Predicate,
    VariableDecl,
    boolean,
    bound_box,
    c_eq,
    c_ge,
    c_le,
    check_valuation,
    evaluate,
    guarded,
    integer,
    linear,
    predicate,
    prime,
    prime_name,
    real,
    to_conjunctive,
)

from .oracles import grid_satisfy, integer_grid, random_guarded_predicate


class TestEvaluate:
    def test_boundary_of_le(self):
        p = predicate([c_le(linear({"x": 1}), 5)])
        assert evaluate(p, {"x": 5})

    def test_guard_disabled(self):
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
        assert evaluate(p, {"y": 0, "x": 9})

    def test_guard_enabled_body_violated(self):
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
        assert not evaluate(p, {"y": 1, "x": 9})

    def test_negated_guard(self):
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5), negated=True)])
        assert evaluate(p, {"y": 1, "x": 9})
        assert not evaluate(p, {"y": 0, "x": 9})

    def test_missing_variable_named(self):
        p = predicate([c_le(linear({"x": 1}), 5)])
        with pytest.raises(KeyError, match="'x'"):
            evaluate(p, {"y": 1})

    def test_equality_desugaring(self):
        lhs = linear({"x": 1, "y": -2})
        pair = c_eq(lhs, 3)
        p = Predicate(pair, ())
        for x, y in [(3, 0), (5, 1), (4, 0)]:
            v = {"x": x, "y": y}
            assert evaluate(p, v) == (abs(lhs.evaluate(v) - 3) <= CMP_TOL)


class TestToConjunctive:
    def test_big_m_rewrite(self):
        decls = (real("x", -10, 10), boolean("y"))
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
        conj = to_conjunctive(p, decls)
        assert not conj.guarded
        (c,) = conj.plain
        # M = max(x) - 5 = 5: x + 5y <= 10
        assert c.lhs.terms == {"x": 1.0, "y": 5.0}
        assert c.rhs == 10.0

    def test_big_m_clamped_at_zero(self):
        decls = (real("x", 0, 3), boolean("y"))
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
        (c,) = to_conjunctive(p, decls).plain
        assert c.lhs.terms == {"x": 1.0}
        assert c.rhs == 5.0

    def test_identity_without_guards(self):
        p = predicate([c_le(linear({"x": 1}), 5)])
        assert to_conjunctive(p, (real("x", 0, 1),)) is p

    def test_unbounded_rejected(self):
        decls = (VariableDecl("x", "real"), boolean("y"))
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
        with pytest.raises(ValueError, match="unbounded|finite"):
            to_conjunctive(p, decls)

    def test_negated_guard_rewrite(self):
        decls = (real("x", -10, 10), boolean("y"))
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5), negated=True)])
        (c,) = to_conjunctive(p, decls).plain
        # active when y = 0: x - M y <= 5 with M = 5
        assert c.lhs.terms == {"x": 1.0, "y": -5.0}
        assert c.rhs == 5.0

    def test_exhaustive_equivalence_example(self):
        decls = (integer("x", -10, 10), boolean("y"))
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
        conj = to_conjunctive(p, decls)
        pts = integer_grid(decls)
        assert np.array_equal(grid_satisfy(p, decls, pts), grid_satisfy(conj, decls, pts))

    def test_random_equivalence_batch(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            p, decls = random_guarded_predicate(rng)
            conj = to_conjunctive(p, decls)
            assert not conj.guarded
            pts = integer_grid(decls)
            assert np.array_equal(
                grid_satisfy(p, decls, pts), grid_satisfy(conj, decls, pts)
            ), f"inequivalent rewrite for {p}"


class TestBoundBox:
    def test_interval_intersection(self):
        decls = (real("x", -10, 10),)
        p = predicate([c_le(linear({"x": 1}), 5)])
        assert bound_box(p, decls)["x"] == (-10.0, 5.0)

    def test_infeasible_interval(self):
        decls = (real("x", -10, 10),)
        p = predicate([c_le(linear({"x": 1}), 5), c_ge(linear({"x": 1}), 7)])
        with pytest.raises(InfeasiblePredicateError):
            bound_box(p, decls)

    def test_unconstrained_variable(self):
        decls = (real("x", -2, 3),)
        assert bound_box(Predicate((), ()), decls)["x"] == (-2.0, 3.0)

    def test_guarded_constraints_do_not_tighten(self):
        decls = (real("x", -10, 10), boolean("y"))
        p = predicate([guarded("y", c_le(linear({"x": 1}), 5))])
        assert bound_box(p, decls)["x"] == (-10.0, 10.0)


class TestPrime:
    def test_pure_renaming(self):
        p = predicate([c_le(linear({"x": 1}), 5)])
        q = prime(p, ["x"])
        assert q.plain[0].lhs.terms == {"x'": 1.0}

    def test_untouched_variables(self):
        p = predicate([c_le(linear({"x": 1, "u": 1}), 1)])
        q = prime(p, ["x"])
        assert q.plain[0].lhs.terms == {"x'": 1.0, "u": 1.0}

    def test_empty_is_identity(self):
        p = predicate([c_le(linear({"x": 1}), 5)])
        assert prime(p, []) is p

    def test_collision_rejected(self):
        p = predicate([c_le(linear({"x": 1, "x'": 1}), 5)])
        with pytest.raises(ValueError, match="collides"):
            prime(p, ["x"])

    def test_prime_unprime_roundtrip(self):
        p = predicate([c_le(linear({"x": 2, "u": 1}, 0.5), 5)])
        q = prime(p, ["x"])
        back = Predicate(
            tuple(c.renamed({"x'": "x"}) for c in q.plain),
            tuple(g.renamed({"x'": "x"}) for g in q.guarded),
        )
        assert back == p


class TestDecls:
    def test_boolean_bounds_forced(self):
        d = boolean("b")
        assert (d.lower, d.upper) == (0.0, 1.0)

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            real("x", 2, 1)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            VariableDecl("x", "complex")

    def test_check_valuation(self):
        decls = (integer("k", 0, 3), real("x", -1, 1))
        check_valuation(decls, {"k": 2, "x": 0.5})
        with pytest.raises(ValueError, match="not integral"):
            check_valuation(decls, {"k": 1.5, "x": 0})
        with pytest.raises(ValueError, match="outside"):
            check_valuation(decls, {"k": 1, "x": 4})
        with pytest.raises(KeyError):
            check_valuation(decls, {"k": 1})


@given(st.integers(-20, 20), st.integers(0, 1), st.integers(-10, 10))
@settings(max_examples=60, deadline=None)
def test_guard_semantics_match_disjunction(x, y, rhs):
    """y -> C(x) is (y = 0) or C(x), for all integer points."""
    g = GuardedConstraint("y", c_le(linear({"x": 1}), rhs))
    v = {"x": float(x), "y": float(y)}
    assert g.holds(v) == ((y == 0) or (x <= rhs))


@given(st.integers(-20, 20), st.integers(-10, 10))
@settings(max_examples=60, deadline=None)
def test_equality_pair_is_equality(x, rhs):
    both = Predicate(c_eq(linear({"x": 1}), rhs), ())
    assert evaluate(both, {"x": float(x)}) == (x == rhs)


def test_zero_coefficients_dropped():
    e = linear({"x": 0.0, "y": 2.0})
    assert e.terms == {"y": 2.0}
    assert e.variables() == {"y"}
