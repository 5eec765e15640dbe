"""Linear predicates over typed, bounded variables.

The building blocks are linear constraints ``L(X) <= b`` and guarded
constraints ``y -> L(X) <= b`` (semantically ``(y = 0) or L(X) <= b``), kept
in conjunction. Every variable carries finite declared bounds, which is what
makes the big-M rewrite of guarded constraints into plain conjunctive form
exact over the declared box.

Equalities and ``>=`` constraints are sugar: ``L = b`` stands for the pair
``L <= b`` and ``-L <= -b``, and ``L >= b`` for ``-L <= -b``. Strict
inequalities are not supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

#: Default comparison tolerance for constraint satisfaction checks.
CMP_TOL = 1e-9

VALID_KINDS = ("real", "integer", "boolean")


class InfeasiblePredicateError(ValueError):
    """A predicate forces an empty interval on some variable."""


@dataclass(frozen=True)
class VariableDecl:
    """A typed variable with finite bounds."""

    name: str
    kind: str = "real"
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r} for {self.name!r}")
        if self.kind == "boolean":
            if not (self.lower == 0.0 and self.upper == 1.0):
                object.__setattr__(self, "lower", 0.0)
                object.__setattr__(self, "upper", 1.0)
        if self.lower > self.upper:
            raise ValueError(f"{self.name!r}: lower bound {self.lower} exceeds upper {self.upper}")

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("integer", "boolean")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)


def boolean(name: str) -> VariableDecl:
    return VariableDecl(name, "boolean", 0.0, 1.0)


def real(name: str, lower: float, upper: float) -> VariableDecl:
    return VariableDecl(name, "real", lower, upper)


def integer(name: str, lower: float, upper: float) -> VariableDecl:
    return VariableDecl(name, "integer", lower, upper)


@dataclass(frozen=True)
class LinearExpression:
    """Sum of coefficient-weighted variables plus a constant."""

    terms: Mapping[str, float] = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self):
        cleaned = {v: float(c) for v, c in self.terms.items() if c != 0.0}
        object.__setattr__(self, "terms", cleaned)

    def evaluate(self, valuation: Mapping[str, float]) -> float:
        total = self.constant
        for var, coef in self.terms.items():
            try:
                total += coef * valuation[var]
            except KeyError:
                raise KeyError(f"valuation missing variable {var!r}") from None
        return total

    def negated(self) -> "LinearExpression":
        return LinearExpression({v: -c for v, c in self.terms.items()}, -self.constant)

    def renamed(self, mapping: Mapping[str, str]) -> "LinearExpression":
        return LinearExpression(
            {mapping.get(v, v): c for v, c in self.terms.items()}, self.constant
        )

    def variables(self) -> set[str]:
        return set(self.terms)


def linear(terms: Mapping[str, float], constant: float = 0.0) -> LinearExpression:
    return LinearExpression(dict(terms), constant)


@dataclass(frozen=True)
class Constraint:
    """Canonical linear constraint ``lhs <= rhs``."""

    lhs: LinearExpression
    rhs: float

    def holds(self, valuation: Mapping[str, float], tol: float = CMP_TOL) -> bool:
        return self.lhs.evaluate(valuation) <= self.rhs + tol

    def renamed(self, mapping: Mapping[str, str]) -> "Constraint":
        return Constraint(self.lhs.renamed(mapping), self.rhs)

    def variables(self) -> set[str]:
        return self.lhs.variables()


def c_le(expr: LinearExpression, rhs: float) -> Constraint:
    return Constraint(expr, float(rhs))


def c_ge(expr: LinearExpression, rhs: float) -> Constraint:
    # L >= b  desugars to  -L <= -b
    return Constraint(expr.negated(), -float(rhs))


def c_eq(expr: LinearExpression, rhs: float) -> tuple[Constraint, Constraint]:
    # L = b  desugars to  (L <= b) and (-L <= -b)
    return (c_le(expr, rhs), c_ge(expr, rhs))


@dataclass(frozen=True)
class GuardedConstraint:
    """``guard -> body`` (positive) or ``not guard -> body`` (negated)."""

    guard: str
    body: Constraint
    negated: bool = False

    def active(self, valuation: Mapping[str, float]) -> bool:
        try:
            value = valuation[self.guard]
        except KeyError:
            raise KeyError(f"valuation missing variable {self.guard!r}") from None
        enabled = value >= 0.5
        return (not enabled) if self.negated else enabled

    def holds(self, valuation: Mapping[str, float], tol: float = CMP_TOL) -> bool:
        return (not self.active(valuation)) or self.body.holds(valuation, tol)

    def renamed(self, mapping: Mapping[str, str]) -> "GuardedConstraint":
        return GuardedConstraint(
            mapping.get(self.guard, self.guard), self.body.renamed(mapping), self.negated
        )

    def variables(self) -> set[str]:
        return {self.guard} | self.body.variables()


def guarded(guard: str, body: Constraint | Iterable[Constraint], negated: bool = False):
    """Wrap one constraint (or a desugared pair) under a guard."""
    if isinstance(body, Constraint):
        return GuardedConstraint(guard, body, negated)
    return tuple(GuardedConstraint(guard, c, negated) for c in body)


@dataclass(frozen=True)
class Predicate:
    """Conjunction of plain and guarded linear constraints."""

    plain: tuple[Constraint, ...] = ()
    guarded: tuple[GuardedConstraint, ...] = ()

    def variables(self) -> set[str]:
        out: set[str] = set()
        for c in self.plain:
            out |= c.variables()
        for g in self.guarded:
            out |= g.variables()
        return out

    def conjoin(self, other: "Predicate") -> "Predicate":
        return Predicate(self.plain + other.plain, self.guarded + other.guarded)

    def is_conjunctive(self) -> bool:
        return not self.guarded


def predicate(items: Iterable[Constraint | GuardedConstraint]) -> Predicate:
    plain: list[Constraint] = []
    guards: list[GuardedConstraint] = []
    for item in items:
        if isinstance(item, Constraint):
            plain.append(item)
        elif isinstance(item, GuardedConstraint):
            guards.append(item)
        else:
            raise TypeError(f"not a constraint: {item!r}")
    return Predicate(tuple(plain), tuple(guards))


def evaluate(pred: Predicate, valuation: Mapping[str, float], tol: float = CMP_TOL) -> bool:
    """True iff the valuation satisfies every plain and guarded constraint.

    A guarded constraint is satisfied when its guard is off under its
    polarity, or when its body holds. Raises ``KeyError`` naming the first
    variable the valuation does not assign.
    """
    return all(c.holds(valuation, tol) for c in pred.plain) and all(
        g.holds(valuation, tol) for g in pred.guarded
    )


def bound_box(
    pred: Predicate, decls: Iterable[VariableDecl]
) -> dict[str, tuple[float, float]]:
    """Tightest per-variable interval from declared bounds and the
    single-variable plain constraints of the predicate.

    Guarded constraints are conditional and never tighten the box. Raises
    :class:`InfeasiblePredicateError` when some interval comes out empty.
    """
    box = {d.name: (d.lower, d.upper) for d in decls}
    for c in pred.plain:
        terms = c.lhs.terms
        if len(terms) != 1:
            continue
        (var, coef), = terms.items()
        if var not in box:
            continue
        bound = (c.rhs - c.lhs.constant) / coef
        lo, hi = box[var]
        if coef > 0:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
        box[var] = (lo, hi)
    for var, (lo, hi) in box.items():
        if lo > hi + CMP_TOL:
            raise InfeasiblePredicateError(
                f"empty interval for {var!r}: [{lo}, {hi}]"
            )
    return box


def _interval_max(expr: LinearExpression, box: Mapping[str, tuple[float, float]]) -> float:
    """Max of a linear expression over a box, by interval arithmetic."""
    total = expr.constant
    for var, coef in expr.terms.items():
        if var not in box:
            raise ValueError(f"variable {var!r} has no declaration")
        lo, hi = box[var]
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"variable {var!r} is unbounded; guarded rewrite needs finite bounds")
        total += coef * (hi if coef > 0 else lo)
    return total


def to_conjunctive(pred: Predicate, decls: Iterable[VariableDecl]) -> Predicate:
    """Rewrite guarded constraints into plain big-M form over the declared box.

    Each ``y -> L(X) <= b`` becomes ``L(X) + M*y <= b + M`` with
    ``M = max(0, max_box L(X) - b)``, and each ``not-y -> L(X) <= b`` becomes
    ``L(X) - M*y <= b``. The result is equivalent to the input over the box.
    """
    if pred.is_conjunctive():
        return pred
    box = bound_box(pred, decls)
    rewritten: list[Constraint] = list(pred.plain)
    for g in pred.guarded:
        big_m = max(0.0, _interval_max(g.body.lhs, box) - g.body.rhs)
        terms = dict(g.body.lhs.terms)
        if g.negated:
            # active when y = 0: L - M*y <= b
            terms[g.guard] = terms.get(g.guard, 0.0) - big_m
            rewritten.append(
                Constraint(LinearExpression(terms, g.body.lhs.constant), g.body.rhs)
            )
        else:
            # active when y = 1: L + M*y <= b + M
            terms[g.guard] = terms.get(g.guard, 0.0) + big_m
            rewritten.append(
                Constraint(LinearExpression(terms, g.body.lhs.constant), g.body.rhs + big_m)
            )
    return Predicate(tuple(rewritten), ())


def prime_name(name: str) -> str:
    return name + "'"


def prime(pred: Predicate, variables: Iterable[str]) -> Predicate:
    """Rename each listed variable ``x`` to ``x'`` throughout the predicate."""
    targets = list(variables)
    mapping = {v: prime_name(v) for v in targets}
    if not mapping:
        return pred
    present = pred.variables()
    for old, new in mapping.items():
        if new in present and new not in mapping:
            raise ValueError(f"primed name {new!r} collides with an existing variable")
    return Predicate(
        tuple(c.renamed(mapping) for c in pred.plain),
        tuple(g.renamed(mapping) for g in pred.guarded),
    )


def check_valuation(
    decls: Iterable[VariableDecl],
    valuation: Mapping[str, float],
    tol: float = CMP_TOL,
) -> None:
    """Validate domain membership and integrality of a valuation."""
    for d in decls:
        if d.name not in valuation:
            raise KeyError(f"valuation missing variable {d.name!r}")
        v = valuation[d.name]
        if v < d.lower - tol or v > d.upper + tol:
            raise ValueError(f"{d.name!r} = {v} outside [{d.lower}, {d.upper}]")
        if d.is_discrete and abs(v - round(v)) > tol:
            raise ValueError(f"{d.name!r} = {v} not integral")
