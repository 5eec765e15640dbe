"""Bounded mixed-integer linear programming oracle.

Feasibility and optimization queries over conjunctive predicates, solved by
deterministic branch-and-bound: best-bound node selection, most-fractional
branching with lowest-index tie-breaking, and an explicit per-query node
budget that surfaces as a distinguished ``budget`` status instead of a guess.

The LP relaxations run on HiGHS. The default engine reuses one incremental
HiGHS model per problem structure (bounds and objective mutate between
solves, which keeps warm-start dual simplex in play); a fallback engine goes
through the public ``scipy.optimize.linprog`` interface when the incremental
core is unavailable. Both engines sit behind the same two-method interface
and are covered by the same oracle tests.

Integral witnesses are exact: when a relaxation comes back integral within
tolerance, the integer variables are pinned to their rounded values and the
LP is re-solved, so returned witnesses carry exact 0/1 (or integer) entries
and repaired continuous values.
"""

from __future__ import annotations

import heapq
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csc_matrix

from .predicates import (
    CMP_TOL,
    Constraint,
    LinearExpression,
    Predicate,
    VariableDecl,
)

QUERY_KINDS = (1, 2, 3, 4, 5)

#: Result statuses. ``optimal`` and ``feasible`` carry a witness.
OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
BUDGET = "budget"


class MilpNumericalError(RuntimeError):
    """The LP engine gave up (cycling, unboundedness on a bounded box, ...)."""


@dataclass(frozen=True)
class MilpProblem:
    """A bounded MILP: declarations, conjunctive constraints, optional objective."""

    decls: tuple[VariableDecl, ...]
    constraints: Predicate
    objective: LinearExpression | None = None
    direction: str = "min"
    query_kind: int = 1

    def __post_init__(self):
        if self.constraints.guarded:
            raise ValueError("MilpProblem requires a conjunctive predicate; normalize guards upstream")
        if self.direction not in ("min", "max"):
            raise ValueError(f"direction must be min or max, got {self.direction!r}")
        if self.query_kind not in QUERY_KINDS:
            raise ValueError(f"query_kind must be in {QUERY_KINDS}")
        for d in self.decls:
            if not d.bounded:
                raise ValueError(f"variable {d.name!r} is unbounded")
        declared = {d.name for d in self.decls}
        missing = self.constraints.variables() - declared
        if self.objective is not None:
            missing |= self.objective.variables() - declared
        if missing:
            raise ValueError(f"undeclared variables: {sorted(missing)}")


@dataclass(frozen=True)
class MilpResult:
    status: str
    value: float | None = None
    witness: dict[str, float] | None = None
    nodes: int = 0


class MilpStats:
    """Per-query-kind counters: number of solves and total wall time.

    Safe to update from concurrent callers within a process; across worker
    processes, per-worker instances are merged.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._num = {k: 0 for k in QUERY_KINDS}
        self._time = {k: 0.0 for k in QUERY_KINDS}

    def record(self, kind: int, seconds: float) -> None:
        with self._lock:
            self._num[kind] += 1
            self._time[kind] += seconds

    def merge(self, other: "MilpStats") -> None:
        self.merge_snapshot(other.snapshot())

    def merge_snapshot(self, snap: Mapping[int, Mapping[str, float]]) -> None:
        with self._lock:
            for kind, row in snap.items():
                self._num[kind] += int(row["num"])
                self._time[kind] += row["time"]

    def snapshot(self) -> dict[int, dict[str, float]]:
        with self._lock:
            out = {}
            for k in QUERY_KINDS:
                num, total = self._num[k], self._time[k]
                out[k] = {"num": num, "time": total, "avg": total / num if num else 0.0}
            return out

    def reset(self) -> None:
        with self._lock:
            self._num = {k: 0 for k in QUERY_KINDS}
            self._time = {k: 0.0 for k in QUERY_KINDS}


# ---------------------------------------------------------------------------
# LP engines


def _try_highs_core():
    try:
        from scipy.optimize._highspy import _core  # vendored highspy

        _core._Highs  # noqa: B018
        return _core
    except Exception:
        return None


class _HighsEngine:
    """Incremental HiGHS model: bounds/objective mutate between solves."""

    def __init__(self, core, acsc: csc_matrix, row_upper: np.ndarray, feas_tol: float):
        self._core = core
        n_row, n_col = acsc.shape
        self.n_col = n_col
        lp = core.HighsLp()
        lp.num_col_ = n_col
        lp.num_row_ = n_row
        lp.col_cost_ = np.zeros(n_col)
        lp.col_lower_ = np.full(n_col, -math.inf)
        lp.col_upper_ = np.full(n_col, math.inf)
        lp.row_lower_ = np.full(n_row, -math.inf)
        lp.row_upper_ = row_upper.astype(float)
        lp.a_matrix_.format_ = core.MatrixFormat.kColwise
        lp.a_matrix_.start_ = acsc.indptr
        lp.a_matrix_.index_ = acsc.indices
        lp.a_matrix_.value_ = acsc.data
        lp.sense_ = core.ObjSense.kMinimize
        h = core._Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("primal_feasibility_tolerance", feas_tol)
        h.setOptionValue("dual_feasibility_tolerance", feas_tol)
        if h.passModel(lp) != core.HighsStatus.kOk:
            raise MilpNumericalError("HiGHS rejected the model")
        self._h = h
        self._col_idx = np.arange(n_col, dtype=np.int32)
        self._row_upper = row_upper.astype(float)
        self._maximize = False
        self._obj = np.zeros(n_col)

    def set_row_upper(self, row_upper: np.ndarray) -> None:
        changed = np.nonzero(row_upper != self._row_upper)[0]
        for r in changed:
            self._h.changeRowBounds(int(r), -math.inf, float(row_upper[r]))
        self._row_upper = row_upper.copy()

    def set_objective(self, obj: np.ndarray, maximize: bool) -> None:
        if maximize != self._maximize:
            sense = self._core.ObjSense.kMaximize if maximize else self._core.ObjSense.kMinimize
            self._h.changeObjectiveSense(sense)
            self._maximize = maximize
        if not np.array_equal(obj, self._obj):
            self._h.changeColsCost(self.n_col, self._col_idx, obj.astype(float))
            self._obj = obj.copy()

    def solve(self, col_lo: np.ndarray, col_hi: np.ndarray):
        h = self._h
        h.changeColsBounds(self.n_col, self._col_idx, col_lo, col_hi)
        h.run()
        status = h.getModelStatus()
        core = self._core
        if status not in (core.HighsModelStatus.kOptimal, core.HighsModelStatus.kInfeasible):
            # a stale warm basis occasionally strands the solve; retry cold
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
        if status == core.HighsModelStatus.kOptimal:
            sol = h.getSolution()
            x = np.asarray(sol.col_value)
            st, val = h.getInfoValue("objective_function_value")
            return OPTIMAL, x, float(val)
        if status == core.HighsModelStatus.kInfeasible:
            return INFEASIBLE, None, None
        raise MilpNumericalError(f"HiGHS status {h.modelStatusToString(status)}")


class _LinprogEngine:
    """Cold-start fallback through ``scipy.optimize.linprog``."""

    def __init__(self, acsc: csc_matrix, row_upper: np.ndarray, feas_tol: float):
        self._a = acsc
        self._row_upper = row_upper.astype(float)
        self._obj = np.zeros(acsc.shape[1])
        self._maximize = False
        self.n_col = acsc.shape[1]

    def set_row_upper(self, row_upper: np.ndarray) -> None:
        self._row_upper = row_upper.copy()

    def set_objective(self, obj: np.ndarray, maximize: bool) -> None:
        self._obj = obj.copy()
        self._maximize = maximize

    def solve(self, col_lo: np.ndarray, col_hi: np.ndarray):
        from scipy.optimize import linprog

        c = -self._obj if self._maximize else self._obj
        a_ub = self._a if self._a.shape[0] else None
        b_ub = self._row_upper if self._a.shape[0] else None
        res = linprog(
            c,
            A_ub=a_ub,
            b_ub=b_ub,
            bounds=np.column_stack([col_lo, col_hi]),
            method="highs",
        )
        if res.status == 0:
            val = float(res.fun)
            return OPTIMAL, np.asarray(res.x), -val if self._maximize else val
        if res.status == 2:
            return INFEASIBLE, None, None
        raise MilpNumericalError(f"linprog status {res.status}: {res.message}")


# ---------------------------------------------------------------------------
# Branch and bound


@dataclass
class _Node:
    bound: float  # LP relaxation value, in maximize terms
    x: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


class MilpSession:
    """One compiled problem structure, solvable many times with mutated
    bounds, row uppers, and objectives. Not thread-safe; use one per worker.
    """

    def __init__(self, solver: "MilpSolver", decls: Sequence[VariableDecl], constraints: Predicate):
        if constraints.guarded:
            raise ValueError("session requires a conjunctive predicate")
        self.solver = solver
        self.decls = tuple(decls)
        self.names = [d.name for d in self.decls]
        self.col = {n: j for j, n in enumerate(self.names)}
        if len(self.col) != len(self.names):
            raise ValueError("duplicate variable declarations")
        n = len(self.names)
        self.int_cols = np.array([j for j, d in enumerate(self.decls) if d.is_discrete], dtype=int)
        self.base_lo = np.array([d.lower for d in self.decls])
        self.base_hi = np.array([d.upper for d in self.decls])
        if not (np.isfinite(self.base_lo).all() and np.isfinite(self.base_hi).all()):
            unbounded = [d.name for d in self.decls if not d.bounded]
            raise ValueError(f"unbounded variables: {unbounded}")

        # Single-variable constraints fold into the base column bounds; only
        # genuinely multi-variable rows enter the LP matrix. Callers must pass
        # per-solve bounds that are within the base box. row_of_constraint maps
        # each input constraint to its LP row (-1 when folded away).
        rows, cols, vals, uppers = [], [], [], []
        self.row_of_constraint: list[int] = []
        for c in constraints.plain:
            if len(c.lhs.terms) == 1:
                (var, coef), = c.lhs.terms.items()
                j = self.col[var]
                bound = (c.rhs - c.lhs.constant) / coef
                if coef > 0:
                    self.base_hi[j] = min(self.base_hi[j], bound)
                else:
                    self.base_lo[j] = max(self.base_lo[j], bound)
                self.row_of_constraint.append(-1)
                continue
            i = len(uppers)
            self.row_of_constraint.append(i)
            for var, coef in c.lhs.terms.items():
                rows.append(i)
                cols.append(self.col[var])
                vals.append(coef)
            uppers.append(c.rhs - c.lhs.constant)
        self.n_rows = len(uppers)
        acsc = csc_matrix(
            (np.array(vals), (np.array(rows, dtype=int), np.array(cols, dtype=int))),
            shape=(self.n_rows, n),
        ) if self.n_rows else csc_matrix((0, n))
        self.base_row_upper = np.array(uppers) if uppers else np.zeros(0)

        if solver.backend_core is not None:
            self.engine = _HighsEngine(solver.backend_core, acsc, self.base_row_upper, solver.feas_tol)
        else:
            self.engine = _LinprogEngine(acsc, self.base_row_upper, solver.feas_tol)

    # -- hot-path solve over raw arrays --------------------------------

    def solve_arrays(
        self,
        col_lo: np.ndarray,
        col_hi: np.ndarray,
        obj: np.ndarray | None,
        maximize: bool,
        kind: int,
        row_upper: np.ndarray | None = None,
        budget: int | None = None,
        first_feasible: bool = False,
    ) -> tuple[str, np.ndarray | None, float | None, int]:
        """Branch-and-bound solve. Returns (status, x, value, lp_count)."""
        t0 = time.perf_counter()
        try:
            out = self._bnb(col_lo, col_hi, obj, maximize, row_upper, budget, first_feasible)
        finally:
            self.solver.stats.record(kind, time.perf_counter() - t0)
        return out

    def _bnb(self, col_lo, col_hi, obj, maximize, row_upper, budget, first_feasible):
        engine = self.engine
        engine.set_row_upper(self.base_row_upper if row_upper is None else row_upper)
        zero_obj = obj is None
        if zero_obj:
            obj = np.zeros(len(self.names))
            first_feasible = True
        engine.set_objective(obj, maximize)
        budget = self.solver.node_budget if budget is None else budget
        int_cols = self.int_cols
        int_tol = self.solver.int_tol
        sign = 1.0 if maximize else -1.0  # node bounds kept in maximize terms

        nodes = 0
        status, x, val = engine.solve(col_lo, col_hi)
        nodes += 1
        if status == INFEASIBLE:
            return INFEASIBLE, None, None, nodes

        best_x = None
        best_val = -math.inf
        counter = 0
        heap: list[tuple[float, int, _Node]] = []
        heapq.heappush(heap, (-sign * val, counter, _Node(sign * val, x, col_lo, col_hi)))

        while heap:
            _, _, node = heapq.heappop(heap)
            if node.bound <= best_val + self._prune_tol(best_val):
                continue
            if not len(int_cols):
                best_val, best_x = node.bound, node.x
                break
            frac = np.abs(node.x[int_cols] - np.round(node.x[int_cols]))
            if frac.max() <= int_tol:
                ok, rx, rval = self._repair(node, sign)
                nodes += 1
                if ok and rval > best_val:
                    best_val, best_x = rval, rx
                    if first_feasible:
                        break
                    continue
                if ok:
                    continue
                # tolerance artifact: integral relaxation but infeasible when
                # pinned; split the lowest-index unfixed integer domain
                j = self._unfixed_int(node)
                if j is None:
                    continue
                mid = math.floor((node.lo[j] + node.hi[j]) / 2.0)
                children = ((node.lo[j], mid), (mid + 1.0, node.hi[j]))
            else:
                scores = np.minimum(frac, 1.0 - frac)
                scores = np.where(frac > int_tol, scores, -1.0)
                j = int(int_cols[int(np.argmax(scores))])
                xj = node.x[j]
                children = ((node.lo[j], math.floor(xj)), (math.ceil(xj), node.hi[j]))

            for lo_j, hi_j in children:
                if lo_j > hi_j:
                    continue
                if nodes >= budget:
                    return BUDGET, best_x, (best_val if best_x is not None else None), nodes
                lo = node.lo.copy()
                hi = node.hi.copy()
                lo[j], hi[j] = lo_j, hi_j
                status, x, val = engine.solve(lo, hi)
                nodes += 1
                if status == INFEASIBLE:
                    continue
                bound = min(node.bound, sign * val)
                if bound <= best_val + self._prune_tol(best_val):
                    continue
                counter += 1
                heapq.heappush(heap, (-bound, counter, _Node(bound, x, lo, hi)))

        if best_x is None:
            return INFEASIBLE, None, None, nodes
        status = FEASIBLE if zero_obj else OPTIMAL
        return status, best_x, sign * best_val, nodes

    def _prune_tol(self, best_val: float) -> float:
        if best_val == -math.inf:
            return 0.0
        return 1e-9 * max(1.0, abs(best_val))

    def _unfixed_int(self, node: _Node):
        for j in self.int_cols:
            if node.lo[j] < node.hi[j]:
                return int(j)
        return None

    def _repair(self, node: _Node, sign: float):
        """Pin integers to rounded values and re-solve for an exact witness."""
        lo = node.lo.copy()
        hi = node.hi.copy()
        pinned = np.round(node.x[self.int_cols])
        lo[self.int_cols] = pinned
        hi[self.int_cols] = pinned
        status, x, val = self.engine.solve(lo, hi)
        if status == INFEASIBLE:
            return False, None, None
        x = x.copy()
        x[self.int_cols] = pinned + 0.0  # drop negative zeros
        return True, x, sign * val


class MilpSolver:
    """Shared entry point: one-shot solves, reusable sessions, statistics."""

    def __init__(
        self,
        backend: str = "auto",
        int_tol: float = 1e-6,
        feas_tol: float = 1e-7,
        node_budget: int = 1_000_000,
    ):
        if backend not in ("auto", "highs-core", "linprog"):
            raise ValueError(f"unknown backend {backend!r}")
        core = _try_highs_core() if backend in ("auto", "highs-core") else None
        if backend == "highs-core" and core is None:
            raise RuntimeError("incremental HiGHS core unavailable in this scipy build")
        self.backend_core = core
        self.backend_name = "highs-core" if core is not None else "linprog"
        self.int_tol = int_tol
        self.feas_tol = feas_tol
        self.node_budget = int(node_budget)
        self.stats = MilpStats()

    def session(self, decls: Sequence[VariableDecl], constraints: Predicate) -> MilpSession:
        return MilpSession(self, decls, constraints)

    def solve(self, prob: MilpProblem, budget: int | None = None) -> MilpResult:
        sess = self.session(prob.decls, prob.constraints)
        if prob.objective is None:
            obj, maximize, const = None, False, 0.0
        else:
            obj = np.zeros(len(sess.names))
            for var, coef in prob.objective.terms.items():
                obj[sess.col[var]] = coef
            maximize = prob.direction == "max"
            const = prob.objective.constant
        status, x, val, nodes = sess.solve_arrays(
            sess.base_lo.copy(), sess.base_hi.copy(), obj, maximize, prob.query_kind, budget=budget
        )
        if x is None:
            return MilpResult(status, nodes=nodes)
        witness = {n: float(x[j]) for j, n in enumerate(sess.names)}
        value = None if prob.objective is None else val + const
        return MilpResult(status, value=value, witness=witness, nodes=nodes)

    def feasible(self, prob: MilpProblem, budget: int | None = None) -> MilpResult:
        if prob.objective is not None:
            prob = MilpProblem(prob.decls, prob.constraints, None, "min", prob.query_kind)
        return self.solve(prob, budget=budget)

    def stats_snapshot(self) -> dict[int, dict[str, float]]:
        return self.stats.snapshot()

    def reset_stats(self) -> None:
        self.stats.reset()


# ---------------------------------------------------------------------------
# LP-format export (development cross-checking with external solvers)


def _lp_name(name: str) -> str:
    return name.replace("'", "_p")


def _lp_terms(expr: LinearExpression) -> str:
    parts = []
    for var in sorted(expr.terms):
        coef = expr.terms[var]
        sign = "+" if coef >= 0 else "-"
        parts.append(f"{sign} {abs(coef):.17g} {_lp_name(var)}")
    if not parts:
        return "0"
    return " ".join(parts).lstrip("+ ")


def to_lp_string(prob: MilpProblem) -> str:
    """Render the problem in CPLEX LP file format."""
    lines = []
    if prob.objective is not None:
        lines.append("Maximize" if prob.direction == "max" else "Minimize")
        lines.append(f" obj: {_lp_terms(prob.objective)}")
    else:
        lines.append("Minimize")
        lines.append(" obj: 0")
    lines.append("Subject To")
    for i, c in enumerate(prob.constraints.plain):
        rhs = c.rhs - c.lhs.constant
        lines.append(f" c{i}: {_lp_terms(c.lhs)} <= {rhs:.17g}")
    lines.append("Bounds")
    for d in prob.decls:
        lines.append(f" {d.lower:.17g} <= {_lp_name(d.name)} <= {d.upper:.17g}")
    generals = [d.name for d in prob.decls if d.kind == "integer"]
    binaries = [d.name for d in prob.decls if d.kind == "boolean"]
    if generals:
        lines.append("General")
        lines.append(" " + " ".join(_lp_name(n) for n in generals))
    if binaries:
        lines.append("Binary")
        lines.append(" " + " ".join(_lp_name(n) for n in binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp_file(prob: MilpProblem, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_lp_string(prob))
