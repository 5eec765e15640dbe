"""Scikit-learn style front door for the synthesis pipeline.

``QuantizedControllerSynthesizer`` is a BaseEstimator: parameters are set at
construction (and via ``set_params``), ``fit`` runs model construction,
abstraction, synthesis, and code generation, and ``predict`` evaluates the
compiled control law on an array of plant states. This is what composes
with the wider ecosystem; the underlying modules remain importable on their
own.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .abstraction import build_abstraction
from .codegen import FAULT, compile_tree, interpret
from .milp import MilpSolver
from .models import BuckParams, Dtlhs, build_model
from .quantize import OutOfRangeError, schema_for
from .synthesis import default_region_spec, synthesize


def validate_states(X, n_vars: int) -> np.ndarray:
    """Coerce to a finite (n_samples, n_state_vars) float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_vars:
        raise ValueError(f"expected state array of shape (n, {n_vars}), got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("states must be finite")
    return X


class QuantizedControllerSynthesizer(BaseEstimator):
    """Synthesizes a quantized feedback controller for a hybrid-system model.

    Parameters
    ----------
    model : str or Dtlhs
        Builtin name (``buck``, ``buck-robust``, ``multibuck:N``,
        ``multibuck-robust:N``), a ``file:PATH`` reference, or a model object.
    bits : int
        AD bits per state variable.
    goal_vref, goal_eps : float
        Goal region |v_O - goal_vref| <= goal_eps (built-in buck models).
    variant : str
        ``minimum`` (self-loops without equilibria pruned; enables liveness)
        or ``maximum``.
    successor_mode : str
        ``box`` bounding-box successors (default) or ``exact``.
    node_budget : int
        Branch-and-bound node budget per MILP query.
    backend : str
        ``auto``, ``highs-core``, or ``linprog``.
    jobs : int
        Worker processes for the abstraction build.
    seed : int
        Recorded for downstream simulation; synthesis itself is deterministic.

    Attributes (after fit)
    ----------------------
    model_, schema_, abstraction_, abstraction_stats_, controller_, tree_,
    milp_stats_ : pipeline artifacts. ``controller_.outcome`` is the
    Sol/NoSol/Unk verdict.
    """

    def __init__(
        self,
        model: str | Dtlhs = "buck",
        bits: int = 6,
        goal_vref: float = 5.0,
        goal_eps: float = 0.5,
        variant: str = "minimum",
        successor_mode: str = "box",
        node_budget: int = 1_000_000,
        backend: str = "auto",
        jobs: int = 1,
        seed: int = 0,
        params: BuckParams | None = None,
        region_spec=None,
    ):
        self.model = model
        self.bits = bits
        self.goal_vref = goal_vref
        self.goal_eps = goal_eps
        self.variant = variant
        self.successor_mode = successor_mode
        self.node_budget = node_budget
        self.backend = backend
        self.jobs = jobs
        self.seed = seed
        self.params = params
        self.region_spec = region_spec

    def fit(self, X=None, y=None):
        """Run the synthesis pipeline. X and y are ignored (the plant model
        is a parameter, not data); present for estimator-API compatibility."""
        if isinstance(self.model, Dtlhs):
            model = self.model
        else:
            model = build_model(self.model, self.params)
        solver = MilpSolver(backend=self.backend, node_budget=self.node_budget)
        schema = schema_for(model, self.bits)
        abstraction, stats = build_abstraction(
            model, schema, solver,
            variant=self.variant, successor_mode=self.successor_mode, jobs=self.jobs,
        )
        spec = self.region_spec or default_region_spec(model, self.goal_vref, self.goal_eps)
        controller = synthesize(abstraction, model, spec, solver)
        self.model_ = model
        self.schema_ = schema
        self.solver_ = solver
        self.abstraction_ = abstraction
        self.abstraction_stats_ = stats
        self.region_spec_ = spec
        self.controller_ = controller
        self.tree_ = compile_tree(controller, schema)
        self.milp_stats_ = solver.stats_snapshot()
        return self

    def _check_fitted(self):
        if not hasattr(self, "controller_"):
            raise RuntimeError("not fitted; call fit() first")

    def predict(self, X) -> np.ndarray:
        """Packed action bits for each state row; -1 where the control law
        faults (out of range or uncontrollable cell)."""
        self._check_fitted()
        X = validate_states(X, len(self.schema_.names))
        out = np.empty(len(X), dtype=int)
        for i, row in enumerate(X):
            try:
                cell = self.schema_.quantize(row)
            except OutOfRangeError:
                out[i] = FAULT
                continue
            out[i] = interpret(self.tree_, cell)
        return out

    def controllable(self, X) -> np.ndarray:
        """Boolean mask: rows whose cell is in the controllable region."""
        return self.predict(X) != FAULT

    def score(self, X=None, y=None) -> float:
        """Fraction of cells that are controllable (region coverage)."""
        self._check_fitted()
        return float(self.controller_.controllable.mean())
