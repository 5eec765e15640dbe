"""Controller synthesis on a control abstraction.

Backward least fixpoint from the goal cells over the minimum abstraction:
W starts as the cells inside the goal region, and a cell joins W at rank
k+1 when some action sends every abstract successor into cells of rank <= k
with no unsafe successor. Enabled actions at non-goal cells are the
progress certificates (entire successor set strictly below the cell's own
rank), so any enabled choice strictly decreases the worst-case rank each
step and the goal is reached within the starting rank. Goal cells enable
every action that keeps successors inside W; when coarse quantization
leaves a goal cell with no such holding action, the cell stays in the
controllable region (the liveness obligation is already met on entry) but
compiles to the fault path, so the loop halts safely rather than guess.

The outcome trichotomy: Sol when every initial-region cell is controllable;
NoSol only when an exact-mode abstraction (no bounding-box slack, no budget
exhaustion) has no controller, or when no cell fits inside the goal at this
quantization; Unk otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .abstraction import UNSAFE, ControlAbstraction, RegionTester
from .milp import MilpSolver
from .models import Dtlhs
from .predicates import Predicate, c_ge, c_le, linear, predicate
from .quantize import QuantAction, QuantSchema, action_bits_string

SOL, NOSOL, UNK = "Sol", "NoSol", "Unk"


@dataclass(frozen=True)
class RegionSpec:
    """Goal and initial regions as conjunctive predicates over state variables."""

    goal: Predicate
    initial: Predicate = Predicate((), ())

    def __post_init__(self):
        if self.goal.guarded or self.initial.guarded:
            raise ValueError("region predicates must be conjunctive")


def default_region_spec(model: Dtlhs, v_ref: float = 5.0, goal_eps: float = 0.5) -> RegionSpec:
    """Goal |v_O - v_ref| <= eps with i_L free; initial region = the whole
    safety rectangle (an empty conjunction)."""
    if "v_O" not in model.state_names:
        raise ValueError("default goal needs a v_O state variable; pass an explicit RegionSpec")
    goal = predicate([
        c_le(linear({"v_O": 1.0}), v_ref + goal_eps),
        c_ge(linear({"v_O": 1.0}), v_ref - goal_eps),
    ])
    return RegionSpec(goal=goal)


@dataclass
class Controller:
    """Most-permissive live controller over the quantized cells."""

    model_name: str
    schema: QuantSchema
    actions: tuple[QuantAction, ...]
    enabled: dict[int, tuple[int, ...]]
    chosen: dict[int, int]
    rank: np.ndarray
    goal_cells: np.ndarray
    outcome: str
    diagnostic: str = ""
    budget_exhausted: bool = False

    @property
    def controllable(self) -> np.ndarray:
        return self.rank >= 0

    @property
    def controllable_count(self) -> int:
        return int((self.rank >= 0).sum())

    @property
    def max_rank(self) -> int:
        return int(self.rank.max(initial=0))

    def action_bits(self, cell_idx: int) -> QuantAction | None:
        aidx = self.chosen.get(cell_idx)
        return None if aidx is None else self.actions[aidx]


def steps_to_goal(controller: Controller, cell_idx: int) -> int:
    """Fixpoint rank of a controllable cell: worst-case abstract steps to goal."""
    r = int(controller.rank[cell_idx])
    if r < 0:
        raise ValueError(f"cell {cell_idx} is not controllable")
    return r


def _reach_fixpoint(abstraction: ControlAbstraction, goal_mask: np.ndarray):
    """Layered backward fixpoint. Returns (rank array, per-pair data)."""
    n_cells = abstraction.schema.cell_count
    pair_cell: list[int] = []
    pair_action: list[int] = []
    pair_succ: list[tuple[int, ...]] = []
    preds: dict[int, list[int]] = {}
    for (cidx, aidx), succ in abstraction.transitions.items():
        if UNSAFE in succ:
            continue
        pid = len(pair_cell)
        pair_cell.append(cidx)
        pair_action.append(aidx)
        pair_succ.append(succ)
        for s in succ:
            preds.setdefault(s, []).append(pid)

    remaining = np.array([len(s) for s in pair_succ], dtype=int)
    rank = np.full(n_cells, -1, dtype=int)
    wave = [int(c) for c in np.nonzero(goal_mask)[0]]
    rank[goal_mask] = 0
    level = 0
    while wave:
        level += 1
        fired: list[int] = []
        for s in wave:
            for pid in preds.get(s, ()):
                remaining[pid] -= 1
                if remaining[pid] == 0:
                    c = pair_cell[pid]
                    if rank[c] < 0:
                        rank[c] = level
                        fired.append(c)
        wave = fired
    return rank, pair_cell, pair_action, pair_succ


def synthesize(
    abstraction: ControlAbstraction,
    model: Dtlhs,
    spec: RegionSpec,
    solver: MilpSolver,
) -> Controller:
    """Compute the controllable region, enabled actions, ranks, and outcome."""
    schema = abstraction.schema
    n_cells = schema.cell_count

    goal_tester = RegionTester(schema, spec.goal, solver, model.x)
    init_tester = RegionTester(schema, spec.initial, solver, model.x)
    goal_mask = np.zeros(n_cells, dtype=bool)
    init_mask = np.zeros(n_cells, dtype=bool)
    for idx in range(n_cells):
        cell = schema.cell_of_index(idx)
        if abstraction.admissible[idx]:
            goal_mask[idx] = goal_tester.cell_inside(cell)
        init_mask[idx] = init_tester.cell_intersects(cell)

    base = dict(
        model_name=abstraction.model_name,
        schema=schema,
        actions=abstraction.actions,
        budget_exhausted=abstraction.budget_exhausted,
    )
    if not goal_mask.any():
        return Controller(
            enabled={}, chosen={}, rank=np.full(n_cells, -1, dtype=int),
            goal_cells=goal_mask, outcome=NOSOL,
            diagnostic="goal finer than quantization: no cell lies inside the goal region",
            **base,
        )

    rank, pair_cell, pair_action, pair_succ = _reach_fixpoint(abstraction, goal_mask)
    in_w = rank >= 0
    enabled: dict[int, set[int]] = {}
    for pid, c in enumerate(pair_cell):
        if rank[c] < 0:
            continue
        succ = pair_succ[pid]
        if not all(in_w[s] for s in succ):
            continue
        maxr = max(int(rank[s]) for s in succ)
        if goal_mask[c] or maxr < rank[c]:
            enabled.setdefault(c, set()).add(pair_action[pid])

    enabled_t = {c: tuple(sorted(a)) for c, a in enabled.items()}
    chosen = {c: acts[0] for c, acts in enabled_t.items()}
    controllable = in_w

    covered = bool(np.all(controllable[init_mask]))
    if covered:
        outcome = SOL
        diagnostic = ""
    elif abstraction.successor_mode == "exact" and not abstraction.budget_exhausted:
        outcome = NOSOL
        diagnostic = "exact-mode abstraction admits no controller covering the initial region"
    else:
        outcome = UNK
        diagnostic = "initial region not fully covered by the controllable region"

    return Controller(
        enabled=enabled_t, chosen=chosen, rank=rank,
        goal_cells=goal_mask, outcome=outcome, diagnostic=diagnostic,
        **base,
    )


def classify_outcome(controller: Controller) -> str:
    return controller.outcome


# ---------------------------------------------------------------------------
# Artifact I/O


def write_controller_csv(controller: Controller, path, header: dict | None = None) -> None:
    schema = controller.schema
    with open(path, "w") as fh:
        fh.write("# qsynth-controller v1\n")
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {value}\n")
        fh.write(f"# outcome: {controller.outcome}\n")
        fh.write(f"# max_rank: {controller.max_rank}\n")
        dims = ",".join(f"cell_{n}" for n in schema.names)
        fh.write(f"{dims},action,rank\n")
        for cidx in sorted(controller.chosen):
            cell = schema.cell_of_index(cidx)
            bits = action_bits_string(controller.actions[controller.chosen[cidx]])
            fh.write(
                ",".join(str(k) for k in cell)
                + f",{bits},{int(controller.rank[cidx])}\n"
            )


def read_controller_csv(path) -> tuple[dict, list[tuple[tuple[int, ...], str, int]]]:
    """Parse a controller CSV into (metadata, rows of (cell, bits, rank))."""
    meta: dict[str, str] = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                if ":" in line:
                    key, value = line[2:].split(":", 1)
                    meta[key.strip()] = value.strip()
                continue
            if line.startswith("#") or not line:
                continue
            if line.startswith("cell_"):
                continue
            parts = line.split(",")
            cell = tuple(int(v) for v in parts[:-2])
            rows.append((cell, parts[-2], int(parts[-1])))
    return meta, rows


def controller_from_csv(path, schema: QuantSchema, actions: tuple[QuantAction, ...]) -> tuple[dict, Controller]:
    """Rebuild a table controller (chosen actions and ranks) from a CSV dump."""
    meta, rows = read_controller_csv(path)
    n_cells = schema.cell_count
    rank = np.full(n_cells, -1, dtype=int)
    chosen: dict[int, int] = {}
    action_index = {a: i for i, a in enumerate(actions)}
    for cell, bits, r in rows:
        idx = schema.linear_index(cell)
        action = tuple(int(ch) for ch in bits)
        chosen[idx] = action_index[action]
        rank[idx] = r
    goal = rank == 0
    return meta, Controller(
        model_name=meta.get("model", "?"),
        schema=schema,
        actions=actions,
        enabled={c: (a,) for c, a in chosen.items()},
        chosen=chosen,
        rank=rank,
        goal_cells=goal,
        outcome=meta.get("outcome", UNK),
    )


def write_region_csv(controller: Controller, path, header: dict | None = None) -> None:
    """Cell boxes with the controllable flag: the controlled-region data."""
    schema = controller.schema
    with open(path, "w") as fh:
        fh.write("# qsynth-region v1\n")
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {value}\n")
        dims = ",".join(f"cell_{n}" for n in schema.names)
        boxes = ",".join(f"lo_{n},hi_{n}" for n in schema.names)
        fh.write(f"{dims},{boxes},controllable,rank\n")
        controllable = controller.controllable
        for idx in range(schema.cell_count):
            cell = schema.cell_of_index(idx)
            box = schema.cell_box(cell)
            cells = ",".join(str(k) for k in cell)
            edges = ",".join(f"{a:.12g},{b:.12g}" for a, b in box)
            fh.write(f"{cells},{edges},{int(controllable[idx])},{int(controller.rank[idx])}\n")
