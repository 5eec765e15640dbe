"""Command-line front end: synth, simulate, region, models.

Every run persists its configuration (config.json) and stamps artifacts
with the configuration hash, so identical configurations reproduce
byte-identical CSVs and the simulator refuses controllers synthesized under
a different configuration. Set QSYNTH_LOG=DEBUG|INFO|WARNING for verbosity.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from . import __version__
from .abstraction import build_abstraction, write_abstraction_csv
from .codegen import compile_tree, emit_source, max_depth
from .estimator import QuantizedControllerSynthesizer
from .milp import MilpSolver
from .models import BUILTIN_MODELS, BuckParams, build_model
from .quantize import enumerate_actions, schema_for
from .simulate import NOMINAL, SimConfig, monte_carlo, run, write_trace_csv
from .synthesis import (
    NOSOL,
    controller_from_csv,
    default_region_spec,
    synthesize,
    write_controller_csv,
    write_region_csv,
)

log = logging.getLogger("qsynth")


def _setup_logging():
    level = os.environ.get("QSYNTH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines the synthesized artifacts."""

    model: str
    bits: int = 6
    goal_vref: float = 5.0
    goal_eps: float = 0.5
    variant: str = "minimum"
    successor_mode: str = "box"
    budget_nodes: int = 1_000_000
    seed: int = 0
    jobs: int = 1
    backend: str = "auto"

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be at least 1")
        if self.variant not in ("minimum", "maximum"):
            raise ValueError("variant must be minimum or maximum")
        if self.successor_mode not in ("box", "exact"):
            raise ValueError("successor mode must be box or exact")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _resolve_model_name(model: str, inputs: int | None) -> str:
    if inputs is not None and model in ("multibuck", "multibuck-robust"):
        return f"{model}:{inputs}"
    return model


def _header(cfg: RunConfig) -> dict:
    return {
        "config_hash": cfg.config_hash,
        "model": cfg.model,
        "bits": cfg.bits,
        "goal_vref": cfg.goal_vref,
        "goal_eps": cfg.goal_eps,
        "variant": cfg.variant,
        "successor_mode": cfg.successor_mode,
    }


@click.group()
@click.version_option(__version__)
def main():
    """Quantized controller synthesis for discrete-time linear hybrid systems."""
    _setup_logging()


@main.command()
def models():
    """List built-in model names."""
    for name in BUILTIN_MODELS:
        click.echo(name)
    click.echo("file:PATH (JSON model document)")


_shared = [
    click.option("--model", required=True, help="builtin name, multibuck[:N], or file:PATH"),
    click.option("--bits", "-b", default=6, show_default=True, help="AD bits per state variable"),
    click.option("--inputs", "-n", type=int, default=None, help="input count for multibuck models"),
    click.option("--goal-vref", default=5.0, show_default=True),
    click.option("--goal-eps", default=0.5, show_default=True),
    click.option("--variant", type=click.Choice(["minimum", "maximum"]), default="minimum", show_default=True),
    click.option("--successor-mode", type=click.Choice(["box", "exact"]), default="box", show_default=True),
    click.option("--budget-nodes", default=1_000_000, show_default=True, help="MILP node budget per query"),
    click.option("--seed", default=0, show_default=True),
    click.option("--jobs", "-j", default=1, show_default=True, help="worker processes for the abstraction build"),
    click.option("--out", "-o", default="out", show_default=True, help="output directory"),
]


def shared_options(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


@main.command()
@shared_options
def synth(model, bits, inputs, goal_vref, goal_eps, variant, successor_mode,
          budget_nodes, seed, jobs, out):
    """Build the control abstraction, synthesize a controller, emit artifacts.

    Writes config.json, abstraction_stats.txt, milp_stats.txt,
    controller.csv, region.csv, abstraction.csv and the C-like control-law
    source. Exits nonzero when no cell fits the goal (NoSol diagnostic);
    an Unk outcome still exits zero with mu recorded in the report.
    """
    cfg = RunConfig(
        model=_resolve_model_name(model, inputs), bits=bits, goal_vref=goal_vref,
        goal_eps=goal_eps, variant=variant, successor_mode=successor_mode,
        budget_nodes=budget_nodes, seed=seed, jobs=jobs,
    )
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        plant = build_model(cfg.model)
    except ValueError as exc:
        raise click.UsageError(str(exc))

    est = QuantizedControllerSynthesizer(
        model=plant, bits=cfg.bits, goal_vref=cfg.goal_vref, goal_eps=cfg.goal_eps,
        variant=cfg.variant, successor_mode=cfg.successor_mode,
        node_budget=cfg.budget_nodes, jobs=cfg.jobs, seed=cfg.seed, backend=cfg.backend,
    )
    est.fit()
    controller = est.controller_
    stats = est.abstraction_stats_
    source = emit_source(est.tree_, _header(cfg))
    k_size = len(source.splitlines())

    (outdir / "config.json").write_text(cfg.canonical_json() + "\n")
    header = _header(cfg)
    write_controller_csv(controller, outdir / "controller.csv", header)
    write_region_csv(controller, outdir / "region.csv", header)
    write_abstraction_csv(est.abstraction_, outdir / "abstraction.csv")
    source_name = f"{cfg.model.replace(':', '_')}_{cfg.bits}bits_controller.c"
    (outdir / source_name).write_text(source)

    with open(outdir / "abstraction_stats.txt", "w") as fh:
        dim = ("n", cfg.model.split(":")[1]) if ":" in cfg.model else ("b", cfg.bits)
        fh.write(f"{dim[0]}: {dim[1]}\n")
        fh.write(f"Arcs: {stats.arcs}\n")
        fh.write(f"MaxLoops: {stats.max_loops}\n")
        fh.write(f"LoopFrac: {stats.loop_frac:.5f}\n")
        fh.write(f"CPU: {stats.cpu_seconds:.3f}\n")
        fh.write(f"MEM: {stats.mem_bytes}\n")
        fh.write(f"|K|: {k_size}\n")
        fh.write(f"mu: {controller.outcome}\n")
        fh.write("# CPU seconds / MEM bytes measured locally;"
                 " not comparable to other hardware\n")
        fh.write(f"admissible_cells: {stats.admissible_cells}\n")
        fh.write(f"controllable_cells: {controller.controllable_count}\n")
        fh.write(f"controllable_fraction: {controller.controllable_count / controller.schema.cell_count:.6f}\n")
        fh.write(f"max_rank: {controller.max_rank}\n")
        fh.write(f"tree_depth: {max_depth(est.tree_)}\n")
        fh.write(f"backend: {est.solver_.backend_name}\n")

    with open(outdir / "milp_stats.txt", "w") as fh:
        fh.write("MILP,Num,Avg,Time\n")
        for kind, row in sorted(est.milp_stats_.items()):
            fh.write(f"{kind},{row['num']},{row['avg']:.3g},{row['time']:.3g}\n")

    click.echo(f"mu: {controller.outcome}  controllable cells: "
               f"{controller.controllable_count}/{controller.schema.cell_count}")
    if controller.diagnostic:
        click.echo(f"note: {controller.diagnostic}")
    if controller.outcome == NOSOL and not controller.goal_cells.any():
        raise SystemExit(2)


def _load_controller(controller_path: Path):
    """Rebuild the model, schema, spec, and controller table from a CSV."""
    from .synthesis import read_controller_csv

    meta, _ = read_controller_csv(controller_path)
    required = ("config_hash", "model", "bits", "goal_vref", "goal_eps", "variant", "successor_mode")
    missing = [k for k in required if k not in meta]
    if missing:
        raise click.ClickException(f"controller file lacks header keys: {missing}")
    cfg = RunConfig(
        model=meta["model"], bits=int(meta["bits"]), goal_vref=float(meta["goal_vref"]),
        goal_eps=float(meta["goal_eps"]), variant=meta["variant"],
        successor_mode=meta["successor_mode"],
    )
    plant = build_model(cfg.model)
    schema = schema_for(plant, cfg.bits)
    actions = enumerate_actions(plant)
    meta, controller = controller_from_csv(controller_path, schema, actions)
    spec = default_region_spec(plant, cfg.goal_vref, cfg.goal_eps)
    return cfg, plant, schema, spec, controller, meta


@main.command()
@click.option("--controller", "controller_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--steps", default=1000, show_default=True)
@click.option("--initial", default="0,0", show_default=True, help="comma-separated initial state")
@click.option("--disturbance", type=click.Choice(["nominal", "per-trial", "per-step"]),
              default="nominal", show_default=True)
@click.option("--trials", default=1, show_default=True, help=">1 runs a Monte-Carlo batch")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "-o", default="out", show_default=True)
@click.option("--expect-hash", default=None, help="refuse to run unless the controller carries this config hash")
def simulate(controller_path, steps, initial, disturbance, trials, seed, out, expect_hash):
    """Closed-loop simulation under a synthesized controller.

    Exits nonzero iff any trajectory violates the state safety bounds.
    """
    cfg, plant, schema, spec, controller, meta = _load_controller(controller_path)
    if meta["config_hash"] != cfg.config_hash:
        raise click.ClickException(
            f"controller hash {meta['config_hash']} does not match its header "
            f"configuration (expected {cfg.config_hash}); refusing to run"
        )
    if expect_hash is not None and meta["config_hash"] != expect_hash:
        raise click.ClickException(
            f"controller hash {meta['config_hash']} != --expect-hash {expect_hash}; refusing to run"
        )
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    x0 = tuple(float(v) for v in initial.split(","))
    sim_cfg = SimConfig(steps=steps, initial=x0, disturbance=disturbance, seed=seed)

    if trials > 1:
        summary = monte_carlo(plant, controller, spec, trials, sim_cfg)
        with open(outdir / "mc_summary.txt", "w") as fh:
            for key, value in summary.as_dict().items():
                fh.write(f"{key}: {value}\n")
        click.echo(json.dumps(summary.as_dict()))
        raise SystemExit(1 if summary.safety_violations else 0)

    trace = run(plant, controller, sim_cfg, spec)
    write_trace_csv(trace, outdir / "trace.csv", schema.names,
                    {"config_hash": meta["config_hash"], "seed": seed, "steps": steps,
                     "disturbance": disturbance})
    with open(outdir / "sim_summary.txt", "w") as fh:
        fh.write(f"steps: {trace.n_steps}\n")
        fh.write(f"fault: {int(trace.fault)}\n")
        fh.write(f"safety_violation: {int(trace.safety_violation)}\n")
        fh.write(f"first_goal_step: {trace.first_goal_step}\n")
    click.echo(f"steps: {trace.n_steps} fault: {trace.fault} "
               f"violation: {trace.safety_violation} first_goal: {trace.first_goal_step}")
    raise SystemExit(1 if trace.safety_violation else 0)


@main.command()
@click.option("--controller", "controller_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "-o", default="out", show_default=True)
def region(controller_path, out):
    """Dump the controlled-region CSV (cell boxes + controllable flag)."""
    cfg, plant, schema, spec, controller, meta = _load_controller(controller_path)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_region_csv(controller, outdir / "region.csv", dict(meta))
    click.echo(str(outdir / "region.csv"))


if __name__ == "__main__":
    main()
