"""Finite control abstraction of a DTLHS over quantized cells and actions.

Every fact about the abstraction is established by a MILP query against the
transition predicate. The five query kinds, reported in the per-kind solver
statistics:

  1. cell admissibility: does the cell contain any outgoing dynamics point;
  2. successor extremes: min/max of each next-state variable over a cell
     under a fixed action (the bounding box of the one-step image);
  3. self-loop / exact successor membership: is there a transition from the
     half-open cell into a half-open cell (strictness handled exactly by
     maximizing a common slack on the open faces);
  4. self-loop eliminability: is there an equilibrium point inside the cell
     under the action (loops with no equilibrium are dropped in the minimum
     variant);
  5. region membership precomputation for goal/initial regions.

Successor sets come in two modes: ``box`` (default) takes every cell the
image bounding box touches, a sound over-approximation; ``exact`` re-checks
each candidate cell with a kind-3 feasibility query, which is affordable on
small instances and is what cross-checks against dense-grid enumeration.

Budget exhaustion in any query resolves toward the sound side (admissible,
wider boxes, loops present, loops kept) and flags the abstraction so that
synthesis reports Unk rather than Sol claims it cannot back.
"""

from __future__ import annotations

import itertools
import logging
import math
import resource
import time
from dataclasses import dataclass, field

import numpy as np

from .milp import BUDGET, FEASIBLE, INFEASIBLE, OPTIMAL, MilpSolver
from .models import Dtlhs
from .predicates import (
    Constraint,
    Predicate,
    VariableDecl,
    c_le,
    linear,
    prime_name,
    real,
    to_conjunctive,
)
from .quantize import Cell, QuantAction, QuantSchema, enumerate_actions

log = logging.getLogger("qsynth")

#: Successor sentinel for transitions that leave the state safety rectangle.
UNSAFE = -1

#: Strictness threshold on the open-face slack optimum: positive slack above
#: this counts as a genuine interior point rather than boundary grazing.
STRICT_TOL = 1e-8


@dataclass
class AbstractionStats:
    """Build statistics in the shape of the reported tables."""

    arcs: int = 0
    max_loops: int = 0
    kept_loops: int = 0
    cpu_seconds: float = 0.0
    mem_bytes: int = 0
    admissible_cells: int = 0
    budget_exhausted: bool = False

    @property
    def loop_frac(self) -> float:
        return self.kept_loops / self.max_loops if self.max_loops else 0.0


@dataclass
class ControlAbstraction:
    """Labeled transition system over cells and boolean action vectors.

    ``transitions`` maps (cell linear index, action index) to a sorted tuple
    of successor cell linear indices, with :data:`UNSAFE` for the sink; pairs
    with no transition are absent.
    """

    model_name: str
    schema: QuantSchema
    actions: tuple[QuantAction, ...]
    variant: str
    successor_mode: str
    admissible: np.ndarray
    transitions: dict[tuple[int, int], tuple[int, ...]]
    eliminated_loops: frozenset[tuple[int, int]] = frozenset()
    budget_exhausted: bool = False

    def successors(self, cell_idx: int, action_idx: int) -> tuple[int, ...]:
        return self.transitions.get((cell_idx, action_idx), ())


class QueryEngine:
    """Shared MILP machinery for all abstraction queries on one model.

    Compiles the transition predicate once (with helper rows for open-face
    strictness and equilibrium pinning) and mutates bounds per query.
    """

    def __init__(self, model: Dtlhs, schema: QuantSchema, solver: MilpSolver):
        self.model = model
        self.schema = schema
        self.solver = solver
        self.state_names = model.state_names
        if tuple(schema.names) != self.state_names:
            raise ValueError("schema variables do not match the model state")
        self.actions = enumerate_actions(model)

        conj = to_conjunctive(model.n, model.decls)
        slack_cap = min(schema.widths) / 2.0
        t = real("__slack", 0.0, slack_cap)
        helpers: list[Constraint] = []
        for name in self.state_names:
            pn = prime_name(name)
            helpers.append(c_le(linear({name: 1.0, "__slack": 1.0}), math.inf))
            helpers.append(c_le(linear({pn: 1.0, "__slack": 1.0}), math.inf))
            helpers.append(c_le(linear({pn: 1.0, name: -1.0}), math.inf))
            helpers.append(c_le(linear({name: 1.0, pn: -1.0}), math.inf))
        template = Predicate(conj.plain + tuple(helpers), ())
        self.sess = solver.session(model.decls + (t,), template)

        sess = self.sess
        col = sess.col
        self.x_cols = np.array([col[n] for n in self.state_names])
        self.xp_cols = np.array([col[prime_name(n)] for n in self.state_names])
        self.u_cols = np.array([col[d.name] for d in model.u])
        self.t_col = col["__slack"]
        self.slack_cap = slack_cap
        base = len(conj.plain)
        rows = sess.row_of_constraint
        self.row_x_open = [rows[base + 4 * i] for i in range(len(self.state_names))]
        self.row_xp_open = [rows[base + 4 * i + 1] for i in range(len(self.state_names))]
        self.row_eq_fwd = [rows[base + 4 * i + 2] for i in range(len(self.state_names))]
        self.row_eq_bwd = [rows[base + 4 * i + 3] for i in range(len(self.state_names))]

        self.base_lo = sess.base_lo.copy()
        self.base_hi = sess.base_hi.copy()
        self.base_lo[self.t_col] = 0.0
        self.base_hi[self.t_col] = 0.0
        self.base_rows = sess.base_row_upper.copy()
        self.budget_hit = False

    # -- bound patching helpers -----------------------------------------

    def _bounds(self, cell: Cell, action: QuantAction | None):
        lo = self.base_lo.copy()
        hi = self.base_hi.copy()
        box = self.schema.cell_box(cell)
        for j, (a, b) in zip(self.x_cols, box):
            lo[j], hi[j] = a, b
        if action is not None:
            for j, bit in zip(self.u_cols, action):
                lo[j] = hi[j] = float(bit)
        return lo, hi

    def _open_rows(self, rows: np.ndarray, row_ids, cell: Cell) -> None:
        box = self.schema.cell_box(cell)
        top = self.schema.is_top(cell)
        for r, (_, b), closed in zip(row_ids, box, top):
            rows[r] = math.inf if closed else b

    # -- queries ---------------------------------------------------------

    def is_admissible(self, cell: Cell) -> bool:
        """Kind 1: the cell has at least one outgoing dynamics point."""
        lo, hi = self._bounds(cell, None)
        status, *_ = self.sess.solve_arrays(lo, hi, None, False, kind=1, first_feasible=True)
        if status == BUDGET:
            self.budget_hit = True
            return True
        return status == FEASIBLE

    def successor_box(self, cell: Cell, action: QuantAction):
        """Kind 2: per-coordinate extremes of the one-step image, or None if
        the action admits no transition in the cell."""
        lo, hi = self._bounds(cell, action)
        mins, maxs = [], []
        for pos, j in enumerate(self.xp_cols):
            obj = np.zeros(len(self.base_lo))
            obj[j] = 1.0
            for maximize, sink in ((False, mins), (True, maxs)):
                status, _, val, _ = self.sess.solve_arrays(lo, hi, obj, maximize, kind=2)
                if status == INFEASIBLE:
                    return None
                if status == BUDGET:
                    self.budget_hit = True
                    d = self.model.xp[pos]
                    val = d.upper if maximize else d.lower
                sink.append(val)
        return np.array(mins), np.array(maxs)

    def _strict_feasible(self, lo, hi, rows, kind: int, budget_default: bool) -> bool:
        """Maximize the open-face slack; positive optimum means an interior
        point exists (boundary grazing alone does not count)."""
        lo[self.t_col], hi[self.t_col] = 0.0, self.slack_cap
        obj = np.zeros(len(self.base_lo))
        obj[self.t_col] = 1.0
        status, _, val, _ = self.sess.solve_arrays(lo, hi, obj, True, kind=kind, row_upper=rows)
        if status == BUDGET:
            self.budget_hit = True
            return budget_default
        if status == INFEASIBLE:
            return False
        return val > STRICT_TOL or all(math.isinf(rows[r]) for r in self._last_open_rows)

    def transition_into(self, cell: Cell, action: QuantAction, target: Cell,
                        kind: int = 3, budget_default: bool = True) -> bool:
        """Kind 3: is there a concrete transition from (half-open) ``cell``
        into (half-open) ``target`` under the action? ``target == cell`` is
        the self-loop query."""
        lo, hi = self._bounds(cell, action)
        tbox = self.schema.cell_box(target)
        for j, (a, b) in zip(self.xp_cols, tbox):
            lo[j], hi[j] = a, b
        rows = self.base_rows.copy()
        self._open_rows(rows, self.row_x_open, cell)
        self._open_rows(rows, self.row_xp_open, target)
        self._last_open_rows = self.row_x_open + self.row_xp_open
        return self._strict_feasible(lo, hi, rows, kind, budget_default)

    def self_loop(self, cell: Cell, action: QuantAction) -> bool:
        return self.transition_into(cell, action, cell, kind=3, budget_default=True)

    def eliminable(self, cell: Cell, action: QuantAction) -> bool:
        """Kind 4: True when no equilibrium point (x' = x) lies inside the
        cell under the action; such loops are dropped in the minimum
        variant. Budget exhaustion keeps the loop."""
        lo, hi = self._bounds(cell, action)
        rows = self.base_rows.copy()
        self._open_rows(rows, self.row_x_open, cell)
        for r in self.row_eq_fwd + self.row_eq_bwd:
            rows[r] = 0.0
        self._last_open_rows = self.row_x_open
        has_equilibrium = self._strict_feasible(lo, hi, rows, kind=4, budget_default=True)
        return not has_equilibrium


def _box_candidates(schema: QuantSchema, mins: np.ndarray, maxs: np.ndarray):
    """Cells the closed image box touches, honoring half-open cell faces,
    plus whether the box leaves the safety rectangle."""
    unsafe = False
    ranges = []
    for i, (lo, hi, k, w) in enumerate(zip(schema.lows, schema.highs, schema.counts, schema.widths)):
        m, mx = mins[i], maxs[i]
        if m < lo or mx > hi:
            unsafe = True
        m_c, mx_c = max(m, lo), min(mx, hi)
        if m_c > mx_c:
            return [], unsafe  # image entirely outside in this coordinate
        k_lo = min(int((m_c - lo) / w), k - 1)
        k_hi = min(int((mx_c - lo) / w), k - 1)
        ranges.append(range(k_lo, k_hi + 1))
    return list(itertools.product(*ranges)), unsafe


def build_abstraction(
    model: Dtlhs,
    schema: QuantSchema,
    solver: MilpSolver,
    variant: str = "minimum",
    successor_mode: str = "box",
    jobs: int = 1,
) -> tuple[ControlAbstraction, AbstractionStats]:
    """Build the control abstraction by exhaustive (cell, action) queries.

    The maximum variant keeps every self-loop the kind-3 query admits; the
    minimum variant additionally runs kind-4 eliminability and drops loops
    with no equilibrium. The (cell, action) space partitions across worker
    processes when ``jobs`` > 1; assembly is deterministic either way.
    """
    if variant not in ("maximum", "minimum"):
        raise ValueError(f"variant must be maximum or minimum, got {variant!r}")
    if successor_mode not in ("box", "exact"):
        raise ValueError(f"successor_mode must be box or exact, got {successor_mode!r}")
    t0 = time.perf_counter()
    n_cells = schema.cell_count

    if jobs > 1:
        chunks = _split_ranges(n_cells, jobs)
        args = [(model, schema, solver_args(solver), variant, successor_mode, c) for c in chunks]
        import multiprocessing as mp

        with mp.get_context("fork").Pool(jobs) as pool:
            parts = pool.map(_build_chunk_star, args)
    else:
        parts = [_build_chunk(model, schema, solver, variant, successor_mode, range(n_cells))]

    admissible = np.zeros(n_cells, dtype=bool)
    transitions: dict[tuple[int, int], tuple[int, ...]] = {}
    eliminated: set[tuple[int, int]] = set()
    max_loops = kept_loops = 0
    budget = False
    for part in parts:
        admissible[part["cells"]] = part["admissible"]
        transitions.update(part["transitions"])
        eliminated.update(part["eliminated"])
        max_loops += part["max_loops"]
        kept_loops += part["kept_loops"]
        budget |= part["budget"]
        if part["stats"] is not None:
            solver.stats.merge_snapshot(part["stats"])

    arcs = sum(len(s) for s in transitions.values())
    stats = AbstractionStats(
        arcs=arcs,
        max_loops=max_loops,
        kept_loops=kept_loops,
        cpu_seconds=time.perf_counter() - t0,
        mem_bytes=resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024,
        admissible_cells=int(admissible.sum()),
        budget_exhausted=budget,
    )
    abstraction = ControlAbstraction(
        model_name=model.name,
        schema=schema,
        actions=enumerate_actions(model),
        variant=variant,
        successor_mode=successor_mode,
        admissible=admissible,
        transitions=transitions,
        eliminated_loops=frozenset(eliminated),
        budget_exhausted=budget,
    )
    return abstraction, stats


def solver_args(solver: MilpSolver) -> dict:
    return {
        "backend": "auto",
        "int_tol": solver.int_tol,
        "feas_tol": solver.feas_tol,
        "node_budget": solver.node_budget,
    }


def _split_ranges(n: int, parts: int) -> list[range]:
    step = (n + parts - 1) // parts
    return [range(i, min(i + step, n)) for i in range(0, n, step)]


def _build_chunk_star(args):
    model, schema, sargs, variant, mode, cells = args
    worker_solver = MilpSolver(**sargs)
    part = _build_chunk(model, schema, worker_solver, variant, mode, cells)
    part["stats"] = worker_solver.stats.snapshot()
    return part


def _build_chunk(model, schema, solver, variant, successor_mode, cell_range):
    eng = QueryEngine(model, schema, solver)
    actions = eng.actions
    admissible = np.zeros(len(cell_range), dtype=bool)
    transitions: dict[tuple[int, int], tuple[int, ...]] = {}
    eliminated: set[tuple[int, int]] = set()
    max_loops = kept_loops = 0

    for pos, cidx in enumerate(cell_range):
        cell = schema.cell_of_index(cidx)
        if not eng.is_admissible(cell):
            continue
        admissible[pos] = True
        for aidx, action in enumerate(actions):
            box = eng.successor_box(cell, action)
            if box is None:
                continue
            mins, maxs = box
            candidates, unsafe = _box_candidates(schema, mins, maxs)
            succ: list[int] = []
            loop_present = False
            for cand in candidates:
                if cand == cell:
                    loop_present = eng.self_loop(cell, action)
                    if loop_present:
                        max_loops += 1
                        if variant == "minimum" and eng.eliminable(cell, action):
                            eliminated.add((cidx, aidx))
                        else:
                            kept_loops += 1
                            succ.append(cidx)
                    continue
                if successor_mode == "exact" and not eng.transition_into(cell, action, cand):
                    continue
                succ.append(schema.linear_index(cand))
            if unsafe:
                succ.append(UNSAFE)
            if succ:
                transitions[(cidx, aidx)] = tuple(sorted(succ))
    return {
        "cells": np.array(list(cell_range), dtype=int),
        "admissible": admissible,
        "transitions": transitions,
        "eliminated": eliminated,
        "max_loops": max_loops,
        "kept_loops": kept_loops,
        "budget": eng.budget_hit,
        "stats": None,
    }


# ---------------------------------------------------------------------------
# Region membership (MILP kind 5)


class RegionTester:
    """Classifies cells against a conjunctive region predicate over the
    state variables, via kind-5 queries."""

    def __init__(self, schema: QuantSchema, region: Predicate, solver: MilpSolver,
                 state_decls: tuple[VariableDecl, ...]):
        if region.guarded:
            raise ValueError("region predicates must be conjunctive")
        names = set(schema.names)
        extra = region.variables() - names
        if extra:
            raise ValueError(f"region constrains non-state variables: {sorted(extra)}")
        self.schema = schema
        self.faces = region.plain
        self.solver = solver
        decls = tuple(state_decls)
        # one unconstrained session for face optimization, one with the
        # region rows for intersection feasibility
        self.opt_sess = solver.session(decls, Predicate((), ()))
        self.feas_sess = solver.session(decls, Predicate(self.faces, ()))
        self.col = self.opt_sess.col
        self.n = len(decls)

    def _cell_bounds(self, sess, cell: Cell):
        lo = sess.base_lo.copy()
        hi = sess.base_hi.copy()
        for name, (a, b) in zip(self.schema.names, self.schema.cell_box(cell)):
            j = sess.col[name]
            lo[j] = max(lo[j], a)
            hi[j] = min(hi[j], b)
        return lo, hi

    def cell_inside(self, cell: Cell) -> bool:
        """True when the closed cell box lies inside every region face."""
        for face in self.faces:
            obj = np.zeros(self.n)
            for var, coef in face.lhs.terms.items():
                obj[self.col[var]] = coef
            lo, hi = self._cell_bounds(self.opt_sess, cell)
            status, _, val, _ = self.opt_sess.solve_arrays(lo, hi, obj, True, kind=5)
            if status == BUDGET:
                return False  # conservative: do not claim goal membership
            if val + face.lhs.constant > face.rhs + 1e-9:
                return False
        return True

    def cell_intersects(self, cell: Cell) -> bool:
        """True when some point of the cell satisfies the region."""
        lo, hi = self._cell_bounds(self.feas_sess, cell)
        status, *_ = self.feas_sess.solve_arrays(lo, hi, None, False, kind=5, first_feasible=True)
        return status in (FEASIBLE, BUDGET)  # conservative: budget counts as overlap


def write_abstraction_csv(abstraction: ControlAbstraction, path) -> None:
    """Dump rows (cell indices, action bits, successor | UNSAFE, self_loop)."""
    schema = abstraction.schema
    with open(path, "w") as fh:
        dims = ",".join(f"cell_{n}" for n in schema.names)
        fh.write(f"{dims},action,successor,self_loop\n")
        for (cidx, aidx), succ in sorted(abstraction.transitions.items()):
            cell = schema.cell_of_index(cidx)
            cell_s = ",".join(str(k) for k in cell)
            bits = "".join(str(b) for b in abstraction.actions[aidx])
            for s in succ:
                name = "UNSAFE" if s == UNSAFE else str(s)
                fh.write(f"{cell_s},{bits},{name},{1 if s == cidx else 0}\n")
