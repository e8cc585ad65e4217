"""Check kinds runnable from a scenario, and the runner that turns them into reports."""

from __future__ import annotations

import fnmatch
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import expr as ex
from ..connections import (GaugeConnection, LoweredConnection, verify_coordinate_transformation_law,
                           verify_frame_transformation_law)
from ..curvature import CurvatureTensor, verify_curvature_covariance
from ..errors import ConfigurationError
from ..evolution import (GradientField, UnitField, UnsupportedSignatureError, affine_action, build_gamma_set,
                         d_rho_along_path, dirac_residual, endpoint_convergence, energy_momentum_residual,
                         estimate_density_momentum, estimate_density_position, gradient_field,
                         heisenberg_schrodinger_check, integrate_gradient_line, lorentz_force,
                         momentum_velocity_residual, propagator_sum)
from ..fields import ExprField, UPPER
from ..frames import InversionSpec, ReferenceSystemStack, ScenarioState, apply_cpt
from ..randomized import random_coordinate_map, random_frame
from ..sectors import (SectorConfig, ckm_mixing_residual, classify_charges, decompose_strong, gluon_check,
                       lepton_evolution_residual, pmns_mixing_residual, verify_weak_em_field_strengths)
from .scenario import CheckSpec, Scenario

STATUSES = ("pass", "fail", "skipped", "estimated")


@dataclass
class CheckReport:
    id: str
    kind: str
    status: str
    residual: float | None = None
    tolerance: float | None = None
    estimate: float | None = None
    stderr: float | None = None
    samples: int = 0
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "pass" and not (self.residual is not None and self.residual <= self.tolerance):
            raise ValueError("a passing report needs residual <= tolerance")


@dataclass
class CheckContext:
    scenario: Scenario
    spec: CheckSpec
    seed: int
    tol: float

    @property
    def params(self) -> dict:
        return self.spec.params

    def param(self, key, default=None):
        return self.spec.params.get(key, default)

    def points(self, salt: int = 0, count: int | None = None) -> np.ndarray:
        return self.scenario.sampling.draw(self.scenario.dim, self.seed + salt, count or self.param("points"))

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def sector(self) -> SectorConfig:
        if self.scenario.sector is None:
            raise ConfigurationError(f"check {self.spec.id!r} needs a [sector] table")
        return self.scenario.sector

    def start(self) -> np.ndarray:
        s = self.param("start")
        if s is None:
            s = np.full(self.scenario.dim, 0.5 * (self.scenario.sampling.low + self.scenario.sampling.high))
        return np.asarray(s, dtype=float)

    def line(self, driver):
        return integrate_gradient_line(GradientField(driver), self.start(), float(self.param("step", 1e-2)),
                                       int(self.param("steps", 50)), driver=driver)


@dataclass
class Outcome:
    """What a check function returns; the runner turns it into a report."""

    residual: float | None = None
    samples: int = 0
    diagnostics: dict = field(default_factory=dict)
    skipped: str | None = None
    estimate: float | None = None
    stderr: float | None = None


CheckFn = Callable[[CheckContext], Outcome]
CHECKS: dict[str, CheckFn] = {}


def check(kind: str):
    def register(fn: CheckFn) -> CheckFn:
        CHECKS[kind] = fn
        return fn
    return register


# -- transformation laws --------------------------------------------------------------
@check("coordinate_law")
def _coordinate_law(ctx: CheckContext) -> Outcome:
    conn = ctx.scenario.connection()
    trials = int(ctx.param("trials", 3))
    worst, n = 0.0, 0
    for t in range(trials):
        cmap = random_coordinate_map(conn.dim, ctx.rng(t), float(ctx.param("amplitude", 0.08)))
        pts = ctx.points(t)
        worst = max(worst, verify_coordinate_transformation_law(conn, cmap, pts))
        n += len(pts)
    return Outcome(worst, n, {"trials": trials})


@check("frame_law")
def _frame_law(ctx: CheckContext) -> Outcome:
    stack = ctx.scenario.stack(ctx.param("stack"))
    trials = int(ctx.param("trials", 3))
    worst, n = 0.0, 0
    for t in range(trials):
        k = random_frame(stack.dim, ctx.rng(t), float(ctx.param("amplitude", 0.15)))
        pts = ctx.points(t)
        worst = max(worst, verify_frame_transformation_law(stack, k, pts))
        n += len(pts)
    return Outcome(worst, n, {"trials": trials})


@check("curvature_covariance")
def _curvature_covariance(ctx: CheckContext) -> Outcome:
    how = ctx.param("transformation", "coordinate")
    trials = int(ctx.param("trials", 2))
    worst, n = 0.0, 0
    for t in range(trials):
        pts = ctx.points(t)
        if how == "frame":
            conn = GaugeConnection(ctx.scenario.stack(ctx.param("stack")))
            tr = random_frame(conn.dim, ctx.rng(t), float(ctx.param("amplitude", 0.15)))
        elif how == "coordinate":
            conn = ctx.scenario.connection()
            tr = random_coordinate_map(conn.dim, ctx.rng(t), float(ctx.param("amplitude", 0.08)))
        else:
            raise ConfigurationError(f"transformation must be 'frame' or 'coordinate', not {how!r}")
        worst = max(worst, verify_curvature_covariance(conn, tr, pts))
        n += len(pts)
    return Outcome(worst, n, {"transformation": how, "trials": trials})


@check("pure_gauge_flatness")
def _pure_gauge_flatness(ctx: CheckContext) -> Outcome:
    frames = int(ctx.param("random_frames", 0))
    if frames:
        outers = [random_frame(ctx.scenario.dim, ctx.rng(t), float(ctx.param("amplitude", 0.15)))
                  for t in range(frames)]
    else:
        outers = [ctx.scenario.stack(ctx.param("stack")).outer]
    worst, n = 0.0, 0
    for t, outer in enumerate(outers):
        pts = ctx.points(t)
        K = CurvatureTensor(GaugeConnection(ReferenceSystemStack(outer))).jet(pts, 0).value
        worst = max(worst, float(np.abs(K).max()))
        n += len(pts)
    return Outcome(worst, n, {"frames": len(outers)})


# -- sectors --------------------------------------------------------------------------
@check("field_strengths")
def _field_strengths(ctx: CheckContext) -> Outcome:
    rep = verify_weak_em_field_strengths(ctx.scenario.stack(ctx.param("stack")), ctx.points(), ctx.sector())
    diag = {"per_identity": rep.residual, "max_strength": rep.max_strength}
    floor = float(ctx.param("min_strength", 0.0))
    if rep.max_strength < floor:
        return Outcome(float("inf"), rep.npoints, {**diag, "reason": f"field strengths below {floor:g}"})
    return Outcome(rep.max_residual, rep.npoints, diag)


def _line_outcome(rep, n: int) -> Outcome:
    if rep.skipped:
        return Outcome(skipped=rep.skipped, samples=n)
    return Outcome(rep.max_residual, n, {"per_line": rep.residual, "lhs_scale": rep.lhs_scale})


def _sector_inputs(ctx: CheckContext):
    sc = ctx.scenario
    return ctx.sector(), sc.connection(), sc.metric(), sc.charge(ctx.param("charge", "rho")), ctx.points()


@check("lepton_lines")
def _lepton_lines(ctx: CheckContext) -> Outcome:
    cfg, conn, metric, rho, pts = _sector_inputs(ctx)
    rep = lepton_evolution_residual(conn, metric, rho, pts, cfg, float(ctx.param("condition_tol", 1e-8)))
    return _line_outcome(rep, len(pts))


@check("pmns_lines")
def _pmns_lines(ctx: CheckContext) -> Outcome:
    cfg, conn, metric, rho, pts = _sector_inputs(ctx)
    return _line_outcome(pmns_mixing_residual(cfg, conn, metric, rho, pts, float(ctx.param("condition_tol", 1e-8))),
                         len(pts))


@check("ckm_lines")
def _ckm_lines(ctx: CheckContext) -> Outcome:
    cfg, conn, metric, rho, pts = _sector_inputs(ctx)
    return _line_outcome(ckm_mixing_residual(cfg, conn, metric, rho, pts, float(ctx.param("condition_tol", 1e-8))),
                         len(pts))


@check("gluon_assembly")
def _gluon_assembly(ctx: CheckContext) -> Outcome:
    cfg = ctx.sector()
    pts = ctx.points()
    gl = LoweredConnection(ctx.scenario.connection(), ctx.scenario.metric()).jet(pts, 0).value
    rep = gluon_check(decompose_strong(gl, cfg), gl, float(ctx.param("condition_tol", 1e-8)))
    if rep.skipped:
        return Outcome(skipped=rep.skipped, samples=len(pts))
    corrected = bool(ctx.param("corrected", False))
    return Outcome(rep.corrected if corrected else rep.literal, len(pts),
                   {"literal": rep.literal, "corrected": rep.corrected, "trace": rep.trace,
                    "per_component": rep.per_component})


@check("confinement")
def _confinement(ctx: CheckContext) -> Outcome:
    """Two vanishing down-type charges must force the third to vanish."""
    configs = int(ctx.param("configs", 100))
    rng = ctx.rng()
    names = ("d1", "d2", "d3")
    failures = 0
    for i in range(configs):
        zero = [names[j] for j in rng.choice(3, size=2, replace=False)]
        q = {k: rng.normal(size=2) for k in ("u1", "u2", "u3")}
        q.update({k: np.zeros(2) for k in names})
        other = (set(names) - set(zero)).pop()
        q[other] = rng.normal(size=2)  # a configuration that claims the third is nonzero
        c = classify_charges(q)
        if not (c.inconsistent and np.array_equal(c.derived.get(other), np.zeros(2))):
            failures += 1
        q[other] = np.zeros(2)
        c = classify_charges(q)
        if c.inconsistent or not all(np.array_equal(v, np.zeros_like(v)) for v in c.derived.values()):
            failures += 1
    return Outcome(float(failures), configs, {"failures": failures})


# -- evolution ------------------------------------------------------------------------
def _driver(ctx: CheckContext):
    return ctx.scenario.driver(ctx.param("charge", next(iter(ctx.scenario.charges), None)))


@check("energy_momentum")
def _energy_momentum(ctx: CheckContext) -> Outcome:
    driver = _driver(ctx)
    pts = ctx.points()
    grad, zero = gradient_field(driver, pts)
    pts, grad = pts[~zero], grad[~zero]
    if not len(pts):
        return Outcome(skipped="gradient vanishes at every sample")
    eps = grad / np.linalg.norm(grad, axis=1, keepdims=True)
    on = energy_momentum_residual(driver, pts, eps)
    off_dir = ctx.rng(1).normal(size=pts.shape)
    off_dir /= np.linalg.norm(off_dir, axis=1, keepdims=True)
    off = energy_momentum_residual(driver, pts, off_dir)
    return Outcome(float(on.max()), len(pts), {"off_gradient_median": float(np.median(off)),
                                               "vanishing_gradient": int(zero.sum())})


@check("momentum_velocity")
def _momentum_velocity(ctx: CheckContext) -> Outcome:
    driver = _driver(ctx)
    line = ctx.line(driver)
    diag = {"truncated": line.truncated}
    if ctx.param("convergence", False):
        rep = endpoint_convergence(GradientField(driver), ctx.start(), float(ctx.param("length", 0.2)),
                                   float(ctx.param("step", 1e-2)) * 4)
        diag["order"] = rep.order
        if rep.order < float(ctx.param("min_order", 3.5)):
            return Outcome(float("inf"), len(line), {**diag, "reason": "endpoint convergence order too low"})
    return Outcome(momentum_velocity_residual(driver, line), len(line), diag)


@check("gamma_algebra")
def _gamma_algebra(ctx: CheckContext) -> Outcome:
    pts = ctx.points(count=int(ctx.param("points", 8)))
    G = ctx.scenario.metric().g_jet(pts, 0).value
    try:
        sets = [build_gamma_set(g) for g in G]
    except UnsupportedSignatureError as err:
        return Outcome(skipped=str(err), samples=len(pts))
    return Outcome(max(s.anticommutator_residual() for s in sets), len(pts), {"size": sets[0].size})


@check("dirac")
def _dirac(ctx: CheckContext) -> Outcome:
    driver = _driver(ctx)
    rep = dirac_residual(driver, ctx.line(driver))
    if rep.skipped:
        return Outcome(skipped=rep.skipped)
    return Outcome(rep.squared, rep.samples, {"linear_min_sign": rep.linear})


@check("action_identity")
def _action_identity(ctx: CheckContext) -> Outcome:
    driver = _driver(ctx)
    line = ctx.line(driver)
    rep = affine_action(driver, line, gammas=True)
    if rep.full is None:
        return Outcome(skipped=rep.note, samples=len(line))
    return Outcome(abs(rep.full - 2.0 * rep.elementary), len(line),
                   {"full": rep.full, "elementary": rep.elementary, "ratio": rep.ratio})


@check("lorentz_force")
def _lorentz_force(ctx: CheckContext) -> Outcome:
    pts = ctx.points(count=int(ctx.param("points", 20)))
    rep = lorentz_force(_driver(ctx), pts)
    form = ctx.param("form", "full")
    res = rep.residual if form == "full" else rep.residual_torsion_free
    return Outcome(res, len(pts), {"form": form, "torsion_term": rep.torsion_size,
                                   "torsion_free_residual": rep.residual_torsion_free})


@check("heisenberg")
def _heisenberg(ctx: CheckContext) -> Outcome:
    dim = ctx.scenario.dim
    xs = ctx.param("x_field", ["1"] + ["0"] * (dim - 1))
    X = ExprField(np.asarray([ex.lift(e) for e in xs], dtype=object), dim, (UPPER,))
    f = ExprField.scalar(ex.lift(ctx.param("observable", "x1")), dim)
    H = UnitField(GradientField(_driver(ctx)))
    rep = heisenberg_schrodinger_check(X, H, f, ctx.start(), float(ctx.param("step", 1e-2)),
                                       int(ctx.param("steps", 30)))
    return Outcome(max(rep.heisenberg, rep.schrodinger), rep.samples,
                   {"heisenberg": rep.heisenberg, "schrodinger": rep.schrodinger, "bracket_scale": rep.bracket_scale})


# -- ensembles ------------------------------------------------------------------------
def _flattening_frame(ctx: CheckContext):
    return ctx.scenario.stack(ctx.param("stack")).composite_frame() if ctx.scenario.stacks else None


def _estimate(est) -> Outcome:
    if est.undefined:
        return Outcome(skipped=est.undefined, samples=est.samples)
    return Outcome(estimate=est.value, stderr=est.stderr, samples=est.samples, diagnostics=est.to_dict())


@check("density_position")
def _density_position(ctx: CheckContext) -> Outcome:
    ens, extra = ctx.scenario.ensemble(ctx.param("ensemble"))
    est = estimate_density_position(_driver(ctx), _flattening_frame(ctx), ens, ctx.start(),
                                    float(ctx.param("t", extra.get("t", 0.2))), float(ctx.param("step", 1e-2)))
    return _estimate(est)


@check("density_momentum")
def _density_momentum(ctx: CheckContext) -> Outcome:
    ens, extra = ctx.scenario.ensemble(ctx.param("ensemble"))
    est = estimate_density_momentum(_driver(ctx), ens, ctx.start(), float(ctx.param("t", extra.get("t", 0.2))),
                                    float(ctx.param("step", 1e-2)), ctx.param("section_radius"))
    return _estimate(est)


@check("propagator")
def _propagator(ctx: CheckContext) -> Outcome:
    ens, extra = ctx.scenario.ensemble(ctx.param("ensemble"))
    res = propagator_sum(_driver(ctx), _flattening_frame(ctx), ens, ctx.start(), np.asarray(ctx.param("target")),
                         tuple(ctx.param("window", extra.get("window", (0.0, 0.3)))),
                         float(ctx.param("ball", extra.get("ball", 0.05))), float(ctx.param("step", 1e-2)),
                         float(ctx.param("action_factor", 1.0)))
    if res.undefined:
        return Outcome(skipped=res.undefined, samples=res.total)
    return Outcome(estimate=abs(res.value), samples=res.total,
                   diagnostics={"re": res.value.real, "im": res.value.imag, "accepted": res.accepted})


# -- inversions -----------------------------------------------------------------------
@check("cpt")
def _cpt(ctx: CheckContext) -> Outcome:
    sc = ctx.scenario
    name = ctx.param("charge", next(iter(sc.charges), None))
    stack = ctx.param("stack", next(iter(sc.stacks), None))
    if stack is None:
        raise ConfigurationError("the cpt check needs a stack")
    weights = sc.driver(name).weights if sc.charge(name).rank else None
    a = np.asarray(ctx.param("from", [-0.3] * sc.dim), dtype=float)
    b = np.asarray(ctx.param("to", [0.4] * sc.dim), dtype=float)
    path = a + np.linspace(0.0, 1.0, int(ctx.param("samples", 41)))[:, None] * (b - a)
    state = ScenarioState(sc.stacks, sc.charges)
    cpt = InversionSpec.cpt(sc.signature)
    base = d_rho_along_path(state, name, stack, path, weights)
    flipped = d_rho_along_path(apply_cpt(cpt, state), name, stack, path, weights)
    involution = apply_cpt(cpt, apply_cpt(cpt, state)) == state
    diag = {"d_rho": base, "d_rho_cpt": flipped, "involution": involution}
    if not involution:
        return Outcome(float("inf"), len(path), {**diag, "reason": "CPT applied twice changed the state"})
    return Outcome(abs(flipped - base), len(path), diag)


# -- runner ---------------------------------------------------------------------------
def _finite(x: float | None) -> bool:
    return x is not None and np.isfinite(x)


def run_check(scenario: Scenario, spec: CheckSpec, seed: int | None = None) -> CheckReport:
    tol = scenario.tolerance(spec)
    ctx = CheckContext(scenario, spec, scenario.sampling.seed if seed is None else seed, tol)
    t0 = time.perf_counter()
    try:
        out = CHECKS[spec.kind](ctx)
    except Exception as err:  # a failing check never aborts the run
        return CheckReport(spec.id, spec.kind, "fail", tolerance=tol, wall_time=time.perf_counter() - t0,
                           diagnostics={"error": f"{type(err).__name__}: {err}",
                                        "where": traceback.format_exc(limit=-1).strip().splitlines()[-1]})
    wall = time.perf_counter() - t0
    common = dict(tolerance=tol, samples=out.samples, wall_time=wall, diagnostics=out.diagnostics)
    if out.skipped:
        return CheckReport(spec.id, spec.kind, "skipped", **{**common, "diagnostics": {**out.diagnostics,
                                                                                       "reason": out.skipped}})
    if out.estimate is not None:
        return CheckReport(spec.id, spec.kind, "estimated", estimate=out.estimate, stderr=out.stderr, **common)
    ok = _finite(out.residual) and out.residual <= tol
    return CheckReport(spec.id, spec.kind, "pass" if ok else "fail", residual=out.residual, **common)


def select(scenario: Scenario, pattern: str | None) -> list[CheckSpec]:
    if not pattern:
        return list(scenario.checks)
    return [c for c in scenario.checks if fnmatch.fnmatchcase(c.id, pattern) or fnmatch.fnmatchcase(c.kind, pattern)]


def run_checks(scenario: Scenario, filter: str | None = None, seed: int | None = None,
               parallel: bool = False, workers: int | None = None) -> list[CheckReport]:
    """Reports in scenario order; with ``parallel`` each check runs in its own worker."""
    specs = select(scenario, filter)
    if not parallel or len(specs) < 2:
        return [run_check(scenario, s, seed) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_check(scenario, s, seed), specs))


def exit_code(reports: list[CheckReport]) -> int:
    return 1 if any(r.status == "fail" for r in reports) else 0
