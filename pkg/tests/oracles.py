"""Independent oracles used by the unit and acceptance suites.

Everything here deliberately avoids the code paths under test: predicate
equivalence via exhaustive grid enumeration (vectorized), MILP verdicts via
integer-grid enumeration with interior-point leaf LPs, and abstraction
transitions via dense-grid image sampling of the raw affine dynamics.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from qsynth.predicates import (
    Constraint,
    GuardedConstraint,
    LinearExpression,
    Predicate,
    VariableDecl,
    boolean,
    integer,
    linear,
    real,
)
from qsynth.milp import MilpProblem


# ---------------------------------------------------------------------------
# Predicate equivalence by exhaustive enumeration


def integer_grid(decls):
    axes = [np.arange(int(d.lower), int(d.upper) + 1, dtype=float) for d in decls]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)  # (n_points, n_vars)


def grid_satisfy(pred: Predicate, decls, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vectorized satisfaction of a (guarded) predicate on grid points."""
    col = {d.name: j for j, d in enumerate(decls)}
    ok = np.ones(len(points), dtype=bool)
    for c in pred.plain:
        lhs = np.full(len(points), c.lhs.constant)
        for var, coef in c.lhs.terms.items():
            lhs += coef * points[:, col[var]]
        ok &= lhs <= c.rhs + tol
    for g in pred.guarded:
        active = points[:, col[g.guard]] >= 0.5
        if g.negated:
            active = ~active
        lhs = np.full(len(points), g.body.lhs.constant)
        for var, coef in g.body.lhs.terms.items():
            lhs += coef * points[:, col[var]]
        ok &= ~active | (lhs <= g.body.rhs + tol)
    return ok


def random_guarded_predicate(rng: np.random.Generator, max_vars=6, max_grid=11,
                             max_points=20000):
    """A random bounded guarded predicate over integer-grid variables."""
    while True:
        n_vars = int(rng.integers(1, max_vars + 1))
        sizes = rng.integers(2, max_grid + 1, size=n_vars)
        if np.prod(sizes.astype(float)) <= max_points:
            break
    decls = []
    for i, size in enumerate(sizes):
        lo = int(rng.integers(-5, 3))
        decls.append(integer(f"v{i}", lo, lo + int(size) - 1))
    bools = [d.name for d in decls if rng.random() < 0.5] or [decls[0].name]
    # guards must be boolean variables; re-declare chosen ones as booleans
    for i, d in enumerate(decls):
        if d.name in bools:
            decls[i] = boolean(d.name)

    def random_constraint():
        k = int(rng.integers(1, min(3, len(decls)) + 1))
        vars_ = rng.choice([d.name for d in decls], size=k, replace=False)
        terms = {v: float(rng.integers(-4, 5)) or 1.0 for v in vars_}
        rhs = float(rng.integers(-8, 9))
        return Constraint(linear(terms), rhs)

    plain = tuple(random_constraint() for _ in range(int(rng.integers(0, 3))))
    guarded = tuple(
        GuardedConstraint(str(rng.choice(bools)), random_constraint(), bool(rng.random() < 0.4))
        for _ in range(int(rng.integers(1, 4)))
    )
    return Predicate(plain, guarded), tuple(decls)


# ---------------------------------------------------------------------------
# MILP brute force


def random_milp(rng: np.random.Generator, query_kind: int = 1) -> MilpProblem:
    n_int = int(rng.integers(0, 5))
    n_real = int(rng.integers(0 if n_int else 1, 4))
    decls = []
    for i in range(n_int):
        lo = int(rng.integers(-4, 2))
        decls.append(integer(f"k{i}", lo, lo + int(rng.integers(1, 8))))
    for i in range(n_real):
        lo = float(rng.integers(-5, 1))
        decls.append(real(f"x{i}", lo, lo + float(rng.integers(2, 9))))
    names = [d.name for d in decls]
    n_cons = int(rng.integers(1, 5))
    plain = []
    for _ in range(n_cons):
        k = int(rng.integers(1, len(names) + 1))
        vars_ = rng.choice(names, size=k, replace=False)
        terms = {v: float(rng.integers(-3, 4)) for v in vars_}
        terms = {v: c for v, c in terms.items() if c} or {vars_[0]: 1.0}
        plain.append(Constraint(linear(terms), float(rng.integers(-6, 10))))
    objective = None
    direction = "min"
    if rng.random() < 0.7:
        terms = {v: float(rng.integers(-3, 4)) for v in names}
        objective = linear({v: c for v, c in terms.items() if c})
        direction = "max" if rng.random() < 0.5 else "min"
    return MilpProblem(tuple(decls), Predicate(tuple(plain), ()), objective, direction, query_kind)


def brute_force_milp(prob: MilpProblem, tol: float = 1e-9):
    """(status, value) by integer-grid enumeration; continuous leaves solved
    with interior-point LPs (a different algorithm family from the solver
    under test)."""
    from scipy.optimize import linprog

    ints = [d for d in prob.decls if d.is_discrete]
    reals = [d for d in prob.decls if not d.is_discrete]
    col = {d.name: j for j, d in enumerate(prob.decls)}
    rows = []
    rhs = []
    for c in prob.constraints.plain:
        row = np.zeros(len(prob.decls))
        for var, coef in c.lhs.terms.items():
            row[col[var]] = coef
        rows.append(row)
        rhs.append(c.rhs - c.lhs.constant)
    a = np.array(rows)
    b = np.array(rhs)
    obj = np.zeros(len(prob.decls))
    if prob.objective is not None:
        for var, coef in prob.objective.terms.items():
            obj[col[var]] = coef
    sign = -1.0 if prob.direction == "max" else 1.0

    if not reals:
        points = integer_grid(prob.decls) if ints else np.zeros((1, 0))
        feas = np.ones(len(points), dtype=bool)
        if len(a):
            feas = (points @ a.T <= b + tol).all(axis=1)
        if not feas.any():
            return "infeasible", None
        if prob.objective is None:
            return "feasible", None
        values = points[feas] @ obj
        best = values.max() if prob.direction == "max" else values.min()
        return "optimal", float(best) + prob.objective.constant

    int_cols = [col[d.name] for d in ints]
    real_cols = [col[d.name] for d in reals]
    grids = [np.arange(int(d.lower), int(d.upper) + 1) for d in ints]
    best = None
    feasible = False
    for assignment in itertools.product(*grids) if grids else [()]:
        fixed = np.zeros(len(prob.decls))
        for j, v in zip(int_cols, assignment):
            fixed[j] = v
        if len(a):
            b_res = b - a[:, int_cols] @ np.array(assignment, dtype=float) if int_cols else b
            a_real = a[:, real_cols]
        else:
            b_res = b
            a_real = np.zeros((0, len(real_cols)))
        bounds = [(d.lower, d.upper) for d in reals]
        c_real = obj[real_cols] * sign
        res = linprog(c_real, A_ub=a_real if len(a) else None,
                      b_ub=b_res if len(a) else None, bounds=bounds,
                      method="highs-ipm")
        if res.status == 2:
            continue
        if res.status != 0:
            raise RuntimeError(f"oracle LP failed: {res.message}")
        feasible = True
        if prob.objective is None:
            return "feasible", None
        value = obj[int_cols] @ np.array(assignment, dtype=float) if int_cols else 0.0
        value += obj[real_cols] @ res.x
        if best is None or (value > best if prob.direction == "max" else value < best):
            best = float(value)
    if not feasible:
        return "infeasible", None
    if prob.objective is None:
        return "feasible", None
    return "optimal", best + prob.objective.constant


# ---------------------------------------------------------------------------
# Dense-grid abstraction oracle for affine toy systems


def grid_abstraction(dynamics, schema, actions, next_bounds, substeps: int = 101):
    """Transitions {(cell_idx, action_idx): successor set} by sampling each
    cell on a dense grid (step <= width/substeps) and quantizing the exact
    affine image; -1 marks images outside the safety rectangle."""
    transitions = {}
    axes_cache = {}
    for cell in schema.cells():
        cidx = schema.linear_index(cell)
        axes = []
        for (lo, hi), top in zip(schema.cell_box(cell), schema.is_top(cell)):
            pts = lo + (hi - lo) * np.arange(substeps) / substeps
            if top:
                pts = np.append(pts, hi)
            axes.append(pts)
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        for aidx, action in enumerate(actions):
            images = np.apply_along_axis(lambda x: dynamics(x, action), 1, points)
            succ = set()
            for img in images:
                outside = any(
                    v < lo or v > hi for v, lo, hi in zip(img, schema.lows, schema.highs)
                )
                if outside:
                    succ.add(-1)
                else:
                    succ.add(schema.linear_index(schema.quantize(img)))
            if succ:
                transitions[(cidx, aidx)] = tuple(sorted(succ))
    return transitions
