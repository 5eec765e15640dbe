"""Discrete-time linear hybrid system models.

A model is a tuple of present-state, input, and auxiliary variables plus a
conjunctive (guarded) transition predicate over those variables and the
primed next-state copies. The built-in families are the single-input and
multi-input buck DC-DC converters, each in a nominal form and a robust form
whose transition predicate soundly envelopes every load/supply value inside
the configured tolerance intervals.

State is (i_L, v_O): inductor current and output voltage. Switching elements
(MOSFET switch(es) and diode(s)) enter through guarded constitutive
constraints over auxiliary currents/voltages and boolean mode bits.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

from .predicates import (
    Constraint,
    GuardedConstraint,
    Predicate,
    VariableDecl,
    boolean,
    c_eq,
    c_ge,
    c_le,
    guarded,
    linear,
    predicate,
    prime_name,
    real,
)

CURRENT_BOUND = 1e3
VOLTAGE_BOUND = 1e7


@dataclass(frozen=True)
class BuckParams:
    """Circuit constants. Defaults follow the experimental setup: T = 1e-6 s,
    L = 2e-4 H, r_L = r_C = 0.1 ohm, R = 5 ohm, C = 5e-5 F, supply 15 V,
    25% load/supply tolerances, ideal switch (R_on = 0) and 1e4 ohm off
    resistance."""

    T: float = 1e-6
    L: float = 2e-4
    C: float = 5e-5
    R: float = 5.0
    r_L: float = 0.1
    r_C: float = 0.1
    Vin: float = 15.0
    R_on: float = 0.0
    R_off: float = 1e4
    rho_R: float = 0.25
    rho_V: float = 0.25

    def __post_init__(self):
        for name in ("T", "L", "C", "R", "r_L", "r_C", "Vin", "R_off"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.R_on < 0:
            raise ValueError("R_on must be nonnegative")
        for name in ("rho_R", "rho_V"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")


@dataclass(frozen=True)
class DynamicsCoefficients:
    """Continuous-time rates of the averaged converter dynamics."""

    a11: float
    a12: float
    a13: float
    a21: float
    a22: float
    a23: float


def coefficients(p: BuckParams, R: float) -> DynamicsCoefficients:
    """Dynamics coefficients for load value R. a21 and a22 are nondecreasing
    in R, a23 is nonincreasing, which is what the robust envelope exploits."""
    if R <= 0:
        raise ValueError("load R must be positive")
    rc, rl, L, C = p.r_C, p.r_L, p.L, p.C
    return DynamicsCoefficients(
        a11=-rl / L,
        a12=-1.0 / L,
        a13=-1.0 / L,
        a21=R / (rc + R) * (-rc * rl / L + 1.0 / C),
        a22=-1.0 / (rc + R) * (rc * R / L + 1.0 / C),
        a23=-(1.0 / L) * (rc * R / (rc + R)),
    )


@dataclass(frozen=True)
class Dtlhs:
    """A bounded discrete-time linear hybrid system."""

    name: str
    x: tuple[VariableDecl, ...]
    u: tuple[VariableDecl, ...]
    y: tuple[VariableDecl, ...]
    xp: tuple[VariableDecl, ...]
    n: Predicate
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [d.name for group in (self.x, self.u, self.y, self.xp) for d in group]
        if len(set(names)) != len(names):
            raise ValueError("state/input/auxiliary/next variable names must be disjoint")
        expected = tuple(prime_name(d.name) for d in self.x)
        if tuple(d.name for d in self.xp) != expected:
            raise ValueError("next-state declarations must be the primed state variables, in order")
        unbounded = [d.name for group in (self.x, self.u, self.y, self.xp) for d in group if not d.bounded]
        if unbounded:
            raise ValueError(f"transition predicate is not bounded; unbounded: {unbounded}")
        undeclared = self.n.variables() - set(names)
        if undeclared:
            raise ValueError(f"predicate references undeclared variables: {sorted(undeclared)}")

    @property
    def decls(self) -> tuple[VariableDecl, ...]:
        return self.x + self.u + self.y + self.xp

    @property
    def state_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.x)

    @property
    def bool_inputs(self) -> tuple[VariableDecl, ...]:
        return tuple(d for d in self.u if d.kind == "boolean")

    @property
    def mode_bits(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.y if d.kind == "boolean")

    def state_box(self) -> list[tuple[float, float]]:
        return [(d.lower, d.upper) for d in self.x]


def _interval(coeffs: dict[str, float], boxes: dict[str, tuple[float, float]]) -> tuple[float, float]:
    lo = hi = 0.0
    for var, c in coeffs.items():
        a, b = boxes[var]
        lo += min(c * a, c * b)
        hi += max(c * a, c * b)
    return lo, hi


def _safety_rows(decl: VariableDecl) -> tuple[Constraint, Constraint]:
    return (
        c_le(linear({decl.name: 1.0}), decl.upper),
        c_ge(linear({decl.name: 1.0}), decl.lower),
    )


def _dynamics_il(p: BuckParams, a: DynamicsCoefficients) -> tuple[Constraint, Constraint]:
    # i_L' = (1 + T a11) i_L + T a12 v_O + T a13 v_D
    expr = linear({
        prime_name("i_L"): 1.0,
        "i_L": -(1.0 + p.T * a.a11),
        "v_O": -p.T * a.a12,
        "v_D": -p.T * a.a13,
    })
    return c_eq(expr, 0.0)


def _dynamics_vo(p: BuckParams, a: DynamicsCoefficients) -> tuple[Constraint, Constraint]:
    # v_O' = T a21 i_L + (1 + T a22) v_O + T a23 v_D
    expr = linear({
        prime_name("v_O"): 1.0,
        "i_L": -p.T * a.a21,
        "v_O": -(1.0 + p.T * a.a22),
        "v_D": -p.T * a.a23,
    })
    return c_eq(expr, 0.0)


#: Octant flag names and the sign pattern (i_L, v_O, v_D) each one asserts.
OCTANTS: tuple[tuple[str, tuple[int, int, int]], ...] = (
    ("z_ppp", (+1, +1, +1)),
    ("z_ppn", (+1, +1, -1)),
    ("z_pnp", (+1, -1, +1)),
    ("z_pnn", (+1, -1, -1)),
    ("z_npp", (-1, +1, +1)),
    ("z_npn", (-1, +1, -1)),
    ("z_nnp", (-1, -1, +1)),
    ("z_nnn", (-1, -1, -1)),
)

_SIGN_FLAGS = (("z_il", "i_L"), ("z_vo", "v_O"), ("z_vd", "v_D"))


def envelope_coefficients(p: BuckParams, signs: tuple[int, int, int]) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Per-octant (a21, a22, a23) choices for the upper and lower envelope of
    the next output voltage, with the load anywhere in [R(1-rho), R(1+rho)].

    a21 and a22 are nondecreasing in R, a23 nonincreasing, so the coefficient
    maximizing each term only depends on the sign of the multiplying state:
    the upper row takes a21, a22 at R(1+rho) for nonnegative i_L, v_O (at
    R(1-rho) otherwise) and a23 at R(1-rho) for nonnegative v_D (at R(1+rho)
    otherwise); the lower row mirrors the choices.
    """
    hi = coefficients(p, p.R * (1.0 + p.rho_R))
    lo = coefficients(p, p.R * (1.0 - p.rho_R))
    s1, s2, s3 = signs
    upper = (
        (hi.a21 if s1 > 0 else lo.a21),
        (hi.a22 if s2 > 0 else lo.a22),
        (lo.a23 if s3 > 0 else hi.a23),
    )
    lower = (
        (lo.a21 if s1 > 0 else hi.a21),
        (lo.a22 if s2 > 0 else hi.a22),
        (hi.a23 if s3 > 0 else lo.a23),
    )
    return upper, lower


def _robust_vo_system(p: BuckParams) -> tuple[list[VariableDecl], list]:
    """Sign-octant envelope replacing the exact v_O' update (robust load).

    Adds 11 boolean auxiliaries: three sign flags linked to the signs of
    i_L, v_O, v_D, and eight octant flags of which the one matching the sign
    flags is forced on; each octant flag guards an upper/lower envelope pair
    on v_O'. At zero load tolerance the pairs collapse to the nominal update.
    """
    decls = [boolean(name) for name, _ in _SIGN_FLAGS] + [boolean(name) for name, _ in OCTANTS]
    items: list = []
    for flag, var in _SIGN_FLAGS:
        items.append(guarded(flag, c_ge(linear({var: 1.0}), 0.0)))
        items.append(guarded(flag, c_le(linear({var: 1.0}), 0.0), negated=True))
    for flag, signs in OCTANTS:
        # not-flag -> "some sign flag differs from this pattern":
        # sum of matching-complement indicators >= 1
        terms = {}
        n_pos = 0
        for (sign_flag, _), s in zip(_SIGN_FLAGS, signs):
            if s > 0:
                terms[sign_flag] = -1.0
                n_pos += 1
            else:
                terms[sign_flag] = 1.0
        items.append(guarded(flag, c_ge(linear(terms), 1.0 - n_pos), negated=True))
    vop = prime_name("v_O")
    for flag, signs in OCTANTS:
        (u1, u2, u3), (l1, l2, l3) = envelope_coefficients(p, signs)
        upper = linear({vop: 1.0, "i_L": -p.T * u1, "v_O": -(1.0 + p.T * u2), "v_D": -p.T * u3})
        lower = linear({vop: 1.0, "i_L": -p.T * l1, "v_O": -(1.0 + p.T * l2), "v_D": -p.T * l3})
        items.append(guarded(flag, c_le(upper, 0.0)))
        items.append(guarded(flag, c_ge(lower, 0.0)))
    return decls, items


def _flatten(items) -> list:
    out = []
    for item in items:
        if isinstance(item, (Constraint, GuardedConstraint)):
            out.append(item)
        else:
            out.extend(item)
    return out


def _buck_states() -> tuple[VariableDecl, VariableDecl]:
    return real("i_L", -4.0, 4.0), real("v_O", -1.0, 7.0)


def _next_state_decls(p: BuckParams, robust_vo: bool) -> tuple[VariableDecl, VariableDecl]:
    """Primed state bounds wide enough to contain every one-step image.

    For the robust form the envelope rows mix per-term coefficient choices,
    so each term is bounded over its own coefficient interval before summing.
    """
    boxes = {"i_L": (-4.0, 4.0), "v_O": (-1.0, 7.0), "v_D": (-VOLTAGE_BOUND, VOLTAGE_BOUND)}
    a = coefficients(p, p.R)
    il_lo, il_hi = _interval(
        {"i_L": 1.0 + p.T * a.a11, "v_O": p.T * a.a12, "v_D": p.T * a.a13}, boxes
    )
    if robust_vo:
        am = coefficients(p, p.R * (1.0 - p.rho_R))
        aM = coefficients(p, p.R * (1.0 + p.rho_R))
        coef_pairs = {
            "i_L": (p.T * am.a21, p.T * aM.a21),
            "v_O": (1.0 + p.T * am.a22, 1.0 + p.T * aM.a22),
            "v_D": (p.T * am.a23, p.T * aM.a23),
        }
        vo_lo = vo_hi = 0.0
        for var, (c1, c2) in coef_pairs.items():
            lo1, hi1 = _interval({var: c1}, boxes)
            lo2, hi2 = _interval({var: c2}, boxes)
            vo_lo += min(lo1, lo2)
            vo_hi += max(hi1, hi2)
    else:
        vo_lo, vo_hi = _interval(
            {"i_L": p.T * a.a21, "v_O": 1.0 + p.T * a.a22, "v_D": p.T * a.a23}, boxes
        )
    return (
        real(prime_name("i_L"), il_lo, il_hi),
        real(prime_name("v_O"), vo_lo, vo_hi),
    )


def single_buck(p: BuckParams | None = None) -> Dtlhs:
    """Single-input buck converter: one switch u, one freewheeling diode."""
    p = p or BuckParams()
    a = coefficients(p, p.R)
    il, vo = _buck_states()
    aux_r = [
        real("i_u", -CURRENT_BOUND, CURRENT_BOUND),
        real("v_u", -VOLTAGE_BOUND, VOLTAGE_BOUND),
        real("i_D", -CURRENT_BOUND, CURRENT_BOUND),
        real("v_D", -VOLTAGE_BOUND, VOLTAGE_BOUND),
    ]
    items = [
        _dynamics_il(p, a),
        _dynamics_vo(p, a),
        # switching-element constitutive constraints
        guarded("q", c_eq(linear({"v_D": 1.0, "i_D": -p.R_on}), 0.0)),
        guarded("q", c_ge(linear({"i_D": 1.0}), 0.0)),
        guarded("u", c_eq(linear({"v_u": 1.0, "i_u": -p.R_on}), 0.0)),
        guarded("q", c_eq(linear({"v_D": 1.0, "i_D": -p.R_off}), 0.0), negated=True),
        guarded("q", c_le(linear({"v_D": 1.0}), 0.0), negated=True),
        guarded("u", c_eq(linear({"v_u": 1.0, "i_u": -p.R_off}), 0.0), negated=True),
        c_eq(linear({"v_D": 1.0, "v_u": -1.0}), -p.Vin),
        c_eq(linear({"i_D": 1.0, "i_L": -1.0, "i_u": 1.0}), 0.0),
    ]
    for d in (il, vo, *aux_r):
        items.append(_safety_rows(d))
    return Dtlhs(
        name="buck",
        x=(il, vo),
        u=(boolean("u"),),
        y=(*aux_r, boolean("q")),
        xp=_next_state_decls(p, robust_vo=False),
        n=predicate(_flatten(items)),
        meta={"family": "buck", "params": p},
    )


def single_buck_robust(p: BuckParams | None = None) -> Dtlhs:
    """Single-input buck robust to load and supply tolerances.

    The supply equality becomes the interval pair
    ``v_u - Vin(1+rho) <= v_D <= v_u - Vin(1-rho)`` and the exact v_O' update
    is replaced by the sign-octant envelope system.
    """
    p = p or BuckParams()
    a = coefficients(p, p.R)
    il, vo = _buck_states()
    aux_r = [
        real("i_u", -CURRENT_BOUND, CURRENT_BOUND),
        real("v_u", -VOLTAGE_BOUND, VOLTAGE_BOUND),
        real("i_D", -CURRENT_BOUND, CURRENT_BOUND),
        real("v_D", -VOLTAGE_BOUND, VOLTAGE_BOUND),
    ]
    z_decls, z_items = _robust_vo_system(p)
    items = [
        _dynamics_il(p, a),
        guarded("q", c_eq(linear({"v_D": 1.0, "i_D": -p.R_on}), 0.0)),
        guarded("q", c_ge(linear({"i_D": 1.0}), 0.0)),
        guarded("u", c_eq(linear({"v_u": 1.0, "i_u": -p.R_on}), 0.0)),
        guarded("q", c_eq(linear({"v_D": 1.0, "i_D": -p.R_off}), 0.0), negated=True),
        guarded("q", c_le(linear({"v_D": 1.0}), 0.0), negated=True),
        guarded("u", c_eq(linear({"v_u": 1.0, "i_u": -p.R_off}), 0.0), negated=True),
        c_le(linear({"v_D": 1.0, "v_u": -1.0}), -p.Vin * (1.0 - p.rho_V)),
        c_ge(linear({"v_D": 1.0, "v_u": -1.0}), -p.Vin * (1.0 + p.rho_V)),
        c_eq(linear({"i_D": 1.0, "i_L": -1.0, "i_u": 1.0}), 0.0),
        *z_items,
    ]
    for d in (il, vo, *aux_r):
        items.append(_safety_rows(d))
    return Dtlhs(
        name="buck-robust",
        x=(il, vo),
        u=(boolean("u"),),
        y=(*aux_r, boolean("q"), *z_decls),
        xp=_next_state_decls(p, robust_vo=True),
        n=predicate(_flatten(items)),
        meta={"family": "buck-robust", "params": p},
    )


def default_supplies(n: int) -> list[float]:
    return [10.0 * i for i in range(1, n + 1)]


def _multi_names(n: int):
    switches = [f"u{j}" for j in range(1, n + 1)]
    sw_currents = [f"i_u{j}" for j in range(1, n + 1)]
    sw_voltages = [f"v_u{j}" for j in range(1, n + 1)]
    diode_voltages = [f"v_D{i}" for i in range(1, n)]
    modes = [f"q{i}" for i in range(n)]
    return switches, sw_currents, sw_voltages, diode_voltages, modes


def _multi_buck_items(p: BuckParams, n: int, supplies: list[float], robust: bool):
    switches, sw_currents, sw_voltages, diode_voltages, modes = _multi_names(n)
    items = [
        # freewheeling diode D_0 (current i_D, voltage v_D)
        guarded("q0", c_eq(linear({"v_D": 1.0, "i_D": -p.R_on}), 0.0)),
        guarded("q0", c_ge(linear({"i_D": 1.0}), 0.0)),
        guarded("q0", c_eq(linear({"v_D": 1.0, "i_D": -p.R_off}), 0.0), negated=True),
        guarded("q0", c_le(linear({"v_D": 1.0}), 0.0), negated=True),
    ]
    # branch diodes D_1..D_{n-1} share the branch current with their switch
    for i in range(1, n):
        vd, iu, q = diode_voltages[i - 1], sw_currents[i - 1], modes[i]
        items += [
            guarded(q, c_eq(linear({vd: 1.0, iu: -p.R_on}), 0.0)),
            guarded(q, c_ge(linear({iu: 1.0}), 0.0)),
            guarded(q, c_eq(linear({vd: 1.0, iu: -p.R_off}), 0.0), negated=True),
            guarded(q, c_le(linear({vd: 1.0}), 0.0), negated=True),
        ]
    for j in range(n):
        u, vu, iu = switches[j], sw_voltages[j], sw_currents[j]
        items += [
            guarded(u, c_eq(linear({vu: 1.0, iu: -p.R_on}), 0.0)),
            guarded(u, c_eq(linear({vu: 1.0, iu: -p.R_off}), 0.0), negated=True),
        ]
    # KCL at the inductor node
    kcl = {"i_L": 1.0, "i_D": -1.0}
    kcl.update({iu: -1.0 for iu in sw_currents})
    items.append(c_eq(linear(kcl), 0.0))
    # supply loops; the highest-voltage branch has no series diode
    for i in range(1, n):
        expr = linear({"v_D": 1.0, sw_voltages[i - 1]: -1.0, diode_voltages[i - 1]: -1.0})
        if robust:
            items.append(c_le(expr, -supplies[i - 1] * (1.0 - p.rho_V)))
            items.append(c_ge(expr, -supplies[i - 1] * (1.0 + p.rho_V)))
        else:
            items.append(c_eq(expr, -supplies[i - 1]))
    expr = linear({"v_D": 1.0, sw_voltages[n - 1]: -1.0})
    if robust:
        items.append(c_le(expr, -supplies[n - 1] * (1.0 - p.rho_V)))
        items.append(c_ge(expr, -supplies[n - 1] * (1.0 + p.rho_V)))
    else:
        items.append(c_eq(expr, -supplies[n - 1]))
    return items


def _multi_buck_build(p: BuckParams | None, n: int, supplies, robust: bool) -> Dtlhs:
    p = p or BuckParams()
    if n < 1:
        raise ValueError("n must be at least 1")
    supplies = list(supplies) if supplies is not None else default_supplies(n)
    if len(supplies) != n:
        raise ValueError(f"expected {n} supply voltages, got {len(supplies)}")
    if any(b <= a for a, b in itertools.pairwise(supplies)):
        raise ValueError("supply voltages must be strictly increasing")
    switches, sw_currents, sw_voltages, diode_voltages, modes = _multi_names(n)
    a = coefficients(p, p.R)
    il, vo = _buck_states()
    aux_r = [real("v_D", -VOLTAGE_BOUND, VOLTAGE_BOUND)]
    aux_r += [real(v, -VOLTAGE_BOUND, VOLTAGE_BOUND) for v in diode_voltages]
    aux_r += [real("i_D", -CURRENT_BOUND, CURRENT_BOUND)]
    aux_r += [real(c, -CURRENT_BOUND, CURRENT_BOUND) for c in sw_currents]
    aux_r += [real(v, -VOLTAGE_BOUND, VOLTAGE_BOUND) for v in sw_voltages]

    items = [_dynamics_il(p, a)]
    if robust:
        z_decls, z_items = _robust_vo_system(p)
        items += z_items
    else:
        z_decls = []
        items.append(_dynamics_vo(p, a))
    items += _multi_buck_items(p, n, supplies, robust)
    for d in (il, vo, *aux_r):
        items.append(_safety_rows(d))

    family = "multibuck-robust" if robust else "multibuck"
    return Dtlhs(
        name=f"{family}:{n}",
        x=(il, vo),
        u=tuple(boolean(u) for u in switches),
        y=(*aux_r, *(boolean(q) for q in modes), *z_decls),
        xp=_next_state_decls(p, robust_vo=robust),
        n=predicate(_flatten(items)),
        meta={"family": family, "params": p, "n_inputs": n, "supplies": supplies},
    )


def multi_buck(p: BuckParams | None = None, n: int = 2, supplies=None) -> Dtlhs:
    """n-input buck: n switches with distinct supplies, n diodes."""
    return _multi_buck_build(p, n, supplies, robust=False)


def multi_buck_robust(p: BuckParams | None = None, n: int = 2, supplies=None) -> Dtlhs:
    """n-input buck with supply-interval pairs and the robust-load envelope."""
    return _multi_buck_build(p, n, supplies, robust=True)


def nominal_instance(model: Dtlhs, R: float, supplies) -> Dtlhs:
    """Nominal-form model of the same family with concrete parameter draws.

    Used by the simulator to materialize the plant the controller actually
    faces: the robust families map to their nominal counterparts evaluated at
    the drawn load/supply values.
    """
    meta = model.meta
    if "family" not in meta:
        raise ValueError(f"model {model.name!r} has no parameter family; cannot redraw parameters")
    p: BuckParams = meta["params"]
    p_drawn = replace(p, R=R, rho_R=0.0, rho_V=0.0)
    family = meta["family"]
    if family in ("buck", "buck-robust"):
        (vin,) = supplies
        return single_buck(replace(p_drawn, Vin=vin))
    return multi_buck(p_drawn, meta["n_inputs"], supplies)


def nominal_supplies(model: Dtlhs) -> list[float]:
    meta = model.meta
    if meta["family"] in ("buck", "buck-robust"):
        return [meta["params"].Vin]
    return list(meta["supplies"])


# ---------------------------------------------------------------------------
# Model files: JSON documents declaring variables and constraints


def model_to_dict(model: Dtlhs) -> dict:
    def decl_row(d: VariableDecl, role: str, nxt: VariableDecl | None = None) -> dict:
        row = {"name": d.name, "role": role, "kind": d.kind}
        if d.kind != "boolean":
            row["lower"] = d.lower
            row["upper"] = d.upper
        if nxt is not None:
            row["next_lower"] = nxt.lower
            row["next_upper"] = nxt.upper
        return row

    variables = [decl_row(d, "state", nx) for d, nx in zip(model.x, model.xp)]
    variables += [decl_row(d, "input") for d in model.u]
    variables += [decl_row(d, "aux") for d in model.y]

    def constraint_row(c: Constraint, g: GuardedConstraint | None = None) -> dict:
        row = {"terms": dict(c.lhs.terms), "sense": "<=", "rhs": c.rhs - c.lhs.constant}
        if g is not None:
            row["guard"] = g.guard
            if g.negated:
                row["guard_negated"] = True
        return row

    constraints = [constraint_row(c) for c in model.n.plain]
    constraints += [constraint_row(g.body, g) for g in model.n.guarded]
    return {"name": model.name, "variables": variables, "constraints": constraints}


def model_from_dict(doc: dict) -> Dtlhs:
    """Build a DTLHS from its JSON document form.

    State variables may carry ``next_lower``/``next_upper`` for the primed
    copies (defaulting to their own bounds); constraints are coefficient maps
    with a sense in {"<=", ">=", "=="} and an optional boolean guard.
    """
    x, u, y, xp = [], [], [], []
    for row in doc["variables"]:
        kind = row.get("kind", "real")
        if kind == "boolean":
            d = boolean(row["name"])
        else:
            d = VariableDecl(row["name"], kind, float(row["lower"]), float(row["upper"]))
        role = row.get("role", "aux")
        if role == "state":
            x.append(d)
            xp.append(
                VariableDecl(
                    prime_name(d.name),
                    "real" if kind == "boolean" else kind,
                    float(row.get("next_lower", d.lower)),
                    float(row.get("next_upper", d.upper)),
                )
            )
        elif role == "input":
            u.append(d)
        elif role == "aux":
            y.append(d)
        else:
            raise ValueError(f"unknown variable role {role!r}")

    items = []
    for row in doc["constraints"]:
        expr = linear({k: float(v) for k, v in row["terms"].items()})
        sense = row.get("sense", "<=")
        rhs = float(row["rhs"])
        if sense == "<=":
            body = (c_le(expr, rhs),)
        elif sense == ">=":
            body = (c_ge(expr, rhs),)
        elif sense == "==":
            body = c_eq(expr, rhs)
        else:
            raise ValueError(f"unknown sense {sense!r}")
        if "guard" in row:
            items.append(guarded(row["guard"], body, negated=bool(row.get("guard_negated", False))))
        else:
            items.append(body)
    return Dtlhs(
        name=doc.get("name", "model"),
        x=tuple(x),
        u=tuple(u),
        y=tuple(y),
        xp=tuple(xp),
        n=predicate(_flatten(items)),
    )


def load_model_file(path) -> Dtlhs:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model_file(model: Dtlhs, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


BUILTIN_MODELS = ("buck", "buck-robust", "multibuck:N", "multibuck-robust:N")


def build_model(spec: str, params: BuckParams | None = None, supplies=None) -> Dtlhs:
    """Resolve a CLI model name (builtin or ``file:PATH``) to a DTLHS."""
    if spec == "buck":
        return single_buck(params)
    if spec == "buck-robust":
        return single_buck_robust(params)
    for prefix, builder in (("multibuck-robust:", multi_buck_robust), ("multibuck:", multi_buck)):
        if spec.startswith(prefix):
            try:
                n = int(spec[len(prefix):])
            except ValueError:
                raise ValueError(f"bad input count in model name {spec!r}") from None
            return builder(params, n, supplies)
    if spec.startswith("file:"):
        return load_model_file(spec[5:])
    raise ValueError(
        f"unknown model {spec!r}; expected one of {', '.join(BUILTIN_MODELS)} or file:PATH"
    )
