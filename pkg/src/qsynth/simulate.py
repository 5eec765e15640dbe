"""Closed-loop simulation of a DTLHS under a synthesized controller.

Each sampling period mirrors the control loop: quantize the state (out of
range is the fault path), test the controllable region, look up the control
law, DA-convert the action, then resolve the plant step. Auxiliary
variables resolve by switching-mode enumeration: every assignment of the
boolean mode bits turns the transition predicate into a linear system over
the remaining variables, and the modes whose guard inequalities hold are the
consistent ones. Generically exactly one mode survives; ties at mode
boundaries pick the lowest mode index with a logged warning.

Robust controllers are validated against the plant they actually face: the
nominal-form model instantiated with load/supply values drawn uniformly
inside the configured tolerance intervals, held per trial (default) or
redrawn each step (stress mode).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .milp import FEASIBLE, MilpSolver
from .models import Dtlhs, nominal_instance, nominal_supplies
from .predicates import evaluate, prime_name, to_conjunctive
from .quantize import OutOfRangeError, QuantSchema
from .synthesis import Controller, RegionSpec

log = logging.getLogger("qsynth")

NOMINAL = "nominal"
PER_TRIAL = "per-trial"
PER_STEP = "per-step"


@dataclass(frozen=True)
class SimConfig:
    steps: int = 1000
    initial: tuple[float, ...] = (0.0, 0.0)
    disturbance: str = NOMINAL
    seed: int = 0

    def __post_init__(self):
        if self.disturbance not in (NOMINAL, PER_TRIAL, PER_STEP):
            raise ValueError(f"unknown disturbance mode {self.disturbance!r}")


@dataclass
class SimStep:
    state: tuple[float, ...]
    cell: tuple[int, ...] | None
    action: tuple[int, ...] | None
    modes: tuple[int, ...] | None
    load: float
    supplies: tuple[float, ...]
    in_goal: bool
    fault: bool


@dataclass
class SimTrace:
    steps: list[SimStep] = field(default_factory=list)
    fault: bool = False
    safety_violation: bool = False
    first_goal_step: int | None = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)


class ModeResolver:
    """Resolves (y, x') for given (x, u) on one concrete model instance by
    enumerating boolean mode assignments and solving each mode's linear
    system as a feasibility LP."""

    def __init__(self, model: Dtlhs, solver: MilpSolver | None = None):
        self.model = model
        self.solver = solver or MilpSolver()
        conj = to_conjunctive(model.n, model.decls)
        self.sess = self.solver.session(model.decls, conj)
        self.state_cols = [self.sess.col[n] for n in model.state_names]
        self.xp_cols = [self.sess.col[prime_name(n)] for n in model.state_names]
        self.u_cols = [self.sess.col[d.name] for d in model.u]
        self.mode_names = model.mode_bits
        self.mode_cols = [self.sess.col[n] for n in self.mode_names]
        # other boolean auxiliaries (e.g. sign flags) stay free in the LP;
        # buck-family nominal models have none
        self.modes = list(itertools.product((0, 1), repeat=len(self.mode_cols)))

    def resolve(self, x, u) -> tuple[dict[str, float], tuple[float, ...], tuple[int, ...]]:
        """Return (full valuation, next state, mode bits) for the consistent
        mode. Raises RuntimeError when no mode is consistent."""
        consistent = []
        for mode in self.modes:
            lo = self.sess.base_lo.copy()
            hi = self.sess.base_hi.copy()
            for j, v in zip(self.state_cols, x):
                lo[j] = hi[j] = float(v)
            for j, v in zip(self.u_cols, u):
                lo[j] = hi[j] = float(v)
            for j, v in zip(self.mode_cols, mode):
                lo[j] = hi[j] = float(v)
            status, w, _, _ = self.sess.solve_arrays(lo, hi, None, False, kind=1, first_feasible=True)
            if status == FEASIBLE:
                consistent.append((mode, w))
        if not consistent:
            raise RuntimeError(
                f"no consistent switching mode for state {tuple(x)} input {tuple(u)}"
            )
        if len(consistent) > 1:
            log.warning("multiple consistent modes at x=%s u=%s: %s (taking lowest)",
                        tuple(x), tuple(u), [m for m, _ in consistent])
        mode, w = consistent[0]
        valuation = {n: float(w[j]) for n, j in self.sess.col.items()}
        xp = tuple(float(w[j]) for j in self.xp_cols)
        return valuation, xp, mode


def resolve_step(model: Dtlhs, x, u, solver: MilpSolver | None = None):
    """One-shot resolution: (valuation, next state, mode bits)."""
    return ModeResolver(model, solver).resolve(x, u)


def _draw_instance(model: Dtlhs, rng: np.random.Generator):
    p = model.meta["params"]
    r = rng.uniform(p.R * (1.0 - p.rho_R), p.R * (1.0 + p.rho_R))
    supplies = [rng.uniform(v * (1.0 - p.rho_V), v * (1.0 + p.rho_V)) for v in nominal_supplies(model)]
    return nominal_instance(model, r, supplies), r, tuple(supplies)


def _nominal_plant(model: Dtlhs):
    if model.meta.get("family"):
        nominal = nominal_instance(model, model.meta["params"].R, nominal_supplies(model))
        return nominal, model.meta["params"].R, tuple(nominal_supplies(model))
    return model, float("nan"), ()


def run(
    model: Dtlhs,
    controller: Controller,
    cfg: SimConfig,
    spec: RegionSpec | None = None,
    schema: QuantSchema | None = None,
) -> SimTrace:
    """Simulate the closed loop from cfg.initial for cfg.steps periods.

    Stops early on a fault (state out of range or outside the controllable
    region). ``spec`` supplies the goal predicate for the in_goal flag.
    """
    schema = schema or controller.schema
    rng = np.random.default_rng(cfg.seed)
    trace = SimTrace()

    if cfg.disturbance == NOMINAL or "family" not in model.meta:
        plant, load, supplies = _nominal_plant(model)
        resolver = ModeResolver(plant)
    else:
        plant, load, supplies = _draw_instance(model, rng)
        resolver = ModeResolver(plant)

    x = tuple(float(v) for v in cfg.initial)
    goal = spec.goal if spec is not None else None
    state_names = model.state_names

    for step in range(cfg.steps):
        if cfg.disturbance == PER_STEP and "family" in model.meta:
            plant, load, supplies = _draw_instance(model, rng)
            resolver = ModeResolver(plant)
        in_goal = False
        if goal is not None:
            in_goal = evaluate(goal, dict(zip(state_names, x)))
            if in_goal and trace.first_goal_step is None:
                trace.first_goal_step = step
        try:
            cell = schema.quantize(x)
        except OutOfRangeError:
            trace.steps.append(SimStep(x, None, None, None, load, supplies, in_goal, True))
            trace.fault = True
            trace.safety_violation = True
            return trace
        idx = schema.linear_index(cell)
        action = controller.action_bits(idx)
        if action is None:
            trace.steps.append(SimStep(x, cell, None, None, load, supplies, in_goal, True))
            trace.fault = True
            return trace
        _, xp, mode = resolver.resolve(x, action)
        trace.steps.append(SimStep(x, cell, action, mode, load, supplies, in_goal, False))
        x = xp
    return trace


@dataclass
class MonteCarloSummary:
    trials: int
    safety_violations: int
    faults: int
    goal_reached: int
    max_steps_to_goal: int | None

    @property
    def goal_reach_rate(self) -> float:
        return self.goal_reached / self.trials if self.trials else 0.0

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "safety_violations": self.safety_violations,
            "faults": self.faults,
            "goal_reached": self.goal_reached,
            "goal_reach_rate": self.goal_reach_rate,
            "max_steps_to_goal": self.max_steps_to_goal,
        }


def sample_controllable_state(controller: Controller, rng: np.random.Generator):
    """Uniform cell among controllable cells, then uniform point in its box."""
    idxs = np.nonzero(controller.controllable)[0]
    if not len(idxs):
        raise ValueError("controller has no controllable cells")
    idx = int(rng.choice(idxs))
    cell = controller.schema.cell_of_index(idx)
    box = controller.schema.cell_box(cell)
    return tuple(float(rng.uniform(a, b)) for a, b in box)


def monte_carlo(
    model: Dtlhs,
    controller: Controller,
    spec: RegionSpec,
    trials: int,
    cfg: SimConfig,
    random_initial: bool = True,
) -> MonteCarloSummary:
    """Aggregate closed-loop runs across seeds and parameter draws."""
    rng = np.random.default_rng(cfg.seed)
    violations = faults = reached = 0
    max_reach: int | None = None
    for trial in range(trials):
        initial = sample_controllable_state(controller, rng) if random_initial else cfg.initial
        tcfg = replace(cfg, initial=initial, seed=cfg.seed + 7919 * (trial + 1))
        trace = run(model, controller, tcfg, spec)
        violations += int(trace.safety_violation)
        faults += int(trace.fault)
        if trace.first_goal_step is not None:
            reached += 1
            if max_reach is None or trace.first_goal_step > max_reach:
                max_reach = trace.first_goal_step
    return MonteCarloSummary(trials, violations, faults, reached, max_reach)


def write_trace_csv(trace: SimTrace, path, state_names, header: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write("# qsynth-trace v1\n")
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {value}\n")
        names = ",".join(state_names)
        cells = ",".join(f"cell_{n}" for n in state_names)
        fh.write(f"step,{names},{cells},action,modes,R,supplies,in_goal,fault\n")
        for i, s in enumerate(trace.steps):
            state = ",".join(f"{v:.12g}" for v in s.state)
            cell = ",".join("" if s.cell is None else str(k) for k in (s.cell or [None] * len(state_names)))
            action = "" if s.action is None else "".join(str(b) for b in s.action)
            modes = "" if s.modes is None else "".join(str(b) for b in s.modes)
            supplies = ";".join(f"{v:.12g}" for v in s.supplies)
            fh.write(
                f"{i},{state},{cell},{action},{modes},{s.load:.12g},{supplies},"
                f"{int(s.in_goal)},{int(s.fault)}\n"
            )
