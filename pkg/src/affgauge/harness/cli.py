"""Command line entry point: ``affgauge verify|decompose|evolve|sample``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from ..connections import LoweredConnection
from ..errors import ConfigurationError, ContractViolation
from ..evolution import (GradientField, estimate_density_momentum, estimate_density_position,
                         integrate_gradient_line, propagator_sum, write_ensemble_csv, write_summary_json)
from ..sectors import SectorConfig, decompose_strong, decompose_weak_em
from .checks import exit_code, run_checks
from .report import FORMATS, _plain, emit_report
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_LOAD = 0, 1, 2


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except (ScenarioError, ConfigurationError, ContractViolation) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_LOAD)


def _coords(text: str, dim: int) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError as err:
        raise click.BadParameter(f"coordinates must be numbers: {text!r}") from err
    if v.shape != (dim,):
        raise click.BadParameter(f"expected {dim} coordinates, got {v.size}")
    return v


def _dump(obj) -> None:
    click.echo(json.dumps(_plain(obj), indent=2, sort_keys=True))


@click.group()
def main():
    """Residual checks for frame-stack geometries."""


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--filter", "pattern", default=None, help="Glob over check ids or kinds.")
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="text", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the scenario sampling seed.")
@click.option("--parallel", is_flag=True, help="Run checks concurrently; report order is unchanged.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None, help="Write the report here.")
@click.option("--timings", is_flag=True, help="Include wall times (not part of the determinism contract).")
def verify(scenario, pattern, fmt, seed, parallel, output, timings):
    """Run the checks of SCENARIO; exit 1 if any fails."""
    sc = _load(scenario)
    reports = run_checks(sc, pattern, seed=seed, parallel=parallel)
    meta = {"name": sc.name, "seed": sc.sampling.seed if seed is None else seed}
    try:
        text = emit_report(reports, fmt, output, timings, meta)
    except OSError as err:
        click.echo(f"error: cannot write report: {err}", err=True)
        sys.exit(EXIT_LOAD)
    if output is None:
        click.echo(text, nl=False)
    sys.exit(exit_code(reports))


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--sector", type=click.Choice(["weak_em", "strong"]), required=True)
@click.option("--point", default=None, help="Evaluation point; defaults to the first sample point.")
def decompose(scenario, sector, point):
    """Print the named potentials and charges of a sector at one point."""
    sc = _load(scenario)
    p = _coords(point, sc.dim) if point else sc.sampling.draw(sc.dim, count=1)[0]
    gl = LoweredConnection(sc.connection(), sc.metric()).jet(p[None], 0).value
    rho = sc.charges.get("rho")
    r = rho.jet(p[None], 0).value if rho is not None and rho.rank == 2 else None
    try:
        if sector == "weak_em":
            dec = decompose_weak_em(gl, rho=r)
        else:
            dec = decompose_strong(gl, sc.sector or SectorConfig("strong"), rho=r)
    except (ConfigurationError, ContractViolation, IndexError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_LOAD)
    _dump({"point": p, "potentials": {k: v[0] for k, v in dec.potentials.items()},
           "charges": {k: v[0] for k, v in dec.charges.items()}})


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--charge", required=True)
@click.option("--start", required=True, help="Start coordinates, space or comma separated.")
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--step", type=float, default=1e-2, show_default=True)
def evolve(scenario, charge, start, steps, step):
    """Integrate the gradient line of CHARGE and print its summary."""
    sc = _load(scenario)
    try:
        driver = sc.driver(charge)
    except ConfigurationError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_LOAD)
    try:
        line = integrate_gradient_line(GradientField(driver), _coords(start, sc.dim), step, steps, driver=driver)
    except (ContractViolation, ArithmeticError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_FAIL)
    _dump({"start": line.start, "end": line.end, "samples": len(line), "x0_end": line.x0[-1],
           "elementary_action": line.accumulated_action, "truncated": line.truncated})


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--ensemble", required=True)
@click.option("--charge", default=None)
@click.option("--start", default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for summary.json and members.csv.")
def sample(scenario, ensemble, charge, start, out_dir):
    """Estimate W and Z (and the propagator if a target is set) for an ensemble."""
    sc = _load(scenario)
    try:
        ens, extra = sc.ensemble(ensemble)
        driver = sc.driver(charge or next(iter(sc.charges)))
    except (ConfigurationError, StopIteration) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_LOAD)
    a = _coords(start, sc.dim) if start else np.asarray(extra.get("start", np.zeros(sc.dim)), dtype=float)
    t, step = float(extra.get("t", 0.2)), float(extra.get("step", 1e-2))
    frame = sc.stack().composite_frame() if sc.stacks else None
    summary = {
        "ensemble": ensemble, "seed": ens.seed, "members": ens.sample_count,
        "W": estimate_density_position(driver, frame, ens, a, t, step).to_dict(),
        "Z": estimate_density_momentum(driver, ens, a, t, step).to_dict(),
    }
    records = []
    if "target" in extra:
        res = propagator_sum(driver, frame, ens, a, np.asarray(extra["target"], dtype=float),
                             tuple(extra.get("window", (0.0, t))), float(extra.get("ball", 0.05)), step)
        summary["propagator"] = {"value": res.value, "accepted": res.accepted, "total": res.total,
                                 "undefined": res.undefined}
        records = res.records
    if out_dir:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_summary_json(d / "summary.json", summary)
        if records:
            write_ensemble_csv(d / "members.csv", records)
    _dump(summary)


if __name__ == "__main__":
    main()
