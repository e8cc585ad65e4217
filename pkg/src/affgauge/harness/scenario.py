"""TOML scenario files: parsing, validation and construction of the numeric objects."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .. import expr as ex
from ..connections import (ChristoffelConnection, ConnectionField, GaugeConnection, HolonomicConnection,
                           ZeroConnection)
from ..errors import ConfigurationError, ContractViolation, SingularityError
from ..evolution import ChargeDriver, EnsembleSpec
from ..fields import LOWER, ExprField, SpaceSignature, TensorField, box_corners, sample_points
from ..frames import FrameField, MetricField, ReferenceSystemStack
from ..sectors import Generator, SectorConfig, build_sector_frame, conforming_scenario
from ..sectors.builders import rotation_block

TOLERANCE_ENV = "AFFGAUGE_TOL"
DEFAULT_TOLERANCE = 1e-6
CONNECTION_KINDS = ("holonomic", "gauge", "christoffel", "zero", "conforming")


class ScenarioError(ConfigurationError):
    """Load or validation failure; ``location`` is ``(line, column)`` for parse errors."""

    def __init__(self, message: str, location: tuple[int, int] | None = None):
        super().__init__(message)
        self.location = location


def default_tolerance() -> float:
    raw = os.environ.get(TOLERANCE_ENV)
    if raw is None:
        return DEFAULT_TOLERANCE
    try:
        value = float(raw)
    except ValueError as err:
        raise ScenarioError(f"{TOLERANCE_ENV}={raw!r} is not a number") from err
    if not value > 0:
        raise ScenarioError(f"{TOLERANCE_ENV} must be positive")
    return value


@dataclass
class Sampling:
    seed: int = 0
    points: int = 50
    low: float = -1.0
    high: float = 1.0

    def draw(self, dim: int, seed: int | None = None, count: int | None = None) -> np.ndarray:
        return sample_points(dim, count or self.points, self.seed if seed is None else seed, self.low, self.high)


@dataclass
class CheckSpec:
    id: str
    kind: str
    params: dict = field(default_factory=dict)
    tol: float | None = None


@dataclass
class Scenario:
    name: str
    signature: SpaceSignature
    stacks: dict[str, ReferenceSystemStack] = field(default_factory=dict)
    sector: SectorConfig | None = None
    charges: dict[str, TensorField] = field(default_factory=dict)
    drivers: dict[str, dict] = field(default_factory=dict)
    checks: list[CheckSpec] = field(default_factory=list)
    sampling: Sampling = field(default_factory=Sampling)
    tolerances: dict[str, float] = field(default_factory=dict)
    connection_spec: dict = field(default_factory=dict)
    ensembles: dict[str, dict] = field(default_factory=dict)
    metric_override: MetricField | None = None
    conforming: object = None
    source: str = ""

    @property
    def dim(self) -> int:
        return self.signature.total_dim

    def tolerance(self, check: CheckSpec) -> float:
        if check.tol is not None:
            return check.tol
        return self.tolerances.get(check.id, self.tolerances.get("default", default_tolerance()))

    def stack(self, name: str | None = None) -> ReferenceSystemStack:
        name = name or self.connection_spec.get("stack") or next(iter(self.stacks), None)
        if name not in self.stacks:
            raise ConfigurationError(f"unknown stack {name!r}")
        return self.stacks[name]

    def metric(self) -> MetricField:
        if self.metric_override is not None:
            return self.metric_override
        if self.conforming is not None:
            return self.conforming.metric
        if self.stacks:
            return self.stack().metric()
        return MetricField(ExprField.constant(np.eye(self.dim), (LOWER, LOWER)))

    def connection(self) -> ConnectionField:
        kind = self.connection_spec.get("kind", "holonomic" if self.stacks else "zero")
        if kind == "conforming":
            if self.conforming is None:
                raise ConfigurationError("a conforming connection needs [sector] construct = \"conforming\"")
            return self.conforming.connection
        if kind == "zero":
            return ZeroConnection(self.dim)
        if kind == "christoffel":
            return ChristoffelConnection(self.metric())
        stack = self.stack()
        return GaugeConnection(stack) if kind == "gauge" else HolonomicConnection(stack, self.metric())

    def charge(self, name: str) -> TensorField:
        if name not in self.charges:
            raise ConfigurationError(f"unknown charge {name!r}")
        return self.charges[name]

    def driver(self, name: str) -> ChargeDriver:
        rho = self.charge(name)
        spec = self.drivers.get(name, {})
        conn, metric = self.connection(), self.metric()
        if rho.rank == 0:
            return ChargeDriver(rho, conn, metric, label=name)
        if spec.get("functional") == "sum":
            return ChargeDriver.summed(rho, conn, metric)
        comp = spec.get("component")
        if comp is None:
            raise ConfigurationError(f"charge {name!r} is rank 2: declare driver.component or functional = \"sum\"")
        return ChargeDriver.component(rho, int(comp[0]), int(comp[1]), conn, metric)

    def ensemble(self, name: str) -> tuple[EnsembleSpec, dict]:
        if name not in self.ensembles:
            raise ConfigurationError(f"unknown ensemble {name!r}")
        e = dict(self.ensembles[name])
        T = np.asarray(e.pop("center", np.eye(self.dim).tolist()), dtype=float)
        spec = EnsembleSpec(T, float(e.pop("radius")), int(e.pop("samples")), int(e.pop("seed", self.sampling.seed)),
                            bool(e.pop("det_constraint", False)))
        return spec, e


# -- parsing ---------------------------------------------------------------------------
def _expr_matrix(rows, dim: int, what: str) -> np.ndarray:
    try:
        arr = np.empty((dim, dim), dtype=object)
        if len(rows) != dim or any(len(r) != dim for r in rows):
            raise ScenarioError(f"{what} must be a {dim}x{dim} matrix")
        for i, row in enumerate(rows):
            for j, cell in enumerate(row):
                arr[i, j] = ex.parse(cell) if isinstance(cell, str) else ex.lift(cell)
        return arr
    except (ValueError, ContractViolation) as err:
        raise ScenarioError(f"{what}: {err}") from err


def _frame(spec, dim: int, label: str) -> FrameField:
    if spec == "identity":
        return FrameField.identity(dim, label)
    return FrameField.from_exprs(_expr_matrix(spec, dim, label), label=label)


def _check_invertible(stack: ReferenceSystemStack, name: str, sampling: Sampling) -> None:
    center = np.full((1, stack.dim), 0.5 * (sampling.low + sampling.high))
    pts = np.vstack([center, box_corners(stack.dim, sampling.low, sampling.high),
                     sampling.draw(stack.dim, count=max(sampling.points, 16))])
    b = stack.composite_frame().b_jet(pts, 0).value
    det = np.linalg.det(b)
    bad = np.flatnonzero(np.abs(det) < 1e-10)
    if bad.size:
        p = pts[bad[0]].round(6).tolist()
        raise ScenarioError(f"stack {name!r}: frame is not invertible at point {p} (det = {det[bad[0]]:.3e})")


def _stack(name: str, spec: dict, dim: int, sector: SectorConfig | None, sampling: Sampling) -> ReferenceSystemStack:
    try:
        if "generator" in spec:
            g = spec["generator"]
            if sector is None:
                raise ScenarioError(f"stack {name!r}: a generator needs a [sector] table")
            gen = Generator(rotations=[tuple(r) for r in g.get("rotations", [])], scale=g.get("scale", 1.0),
                            matrix=g.get("matrix"), inner_rotations=[tuple(r) for r in g.get("inner_rotations", [])],
                            inner_scale=g.get("inner_scale", 1.0))
            stack = build_sector_frame(sector, gen, seed=sampling.seed)
        elif "rotations" in spec:
            rot = rotation_block(dim, [tuple(r) for r in spec["rotations"]])
            outer = FrameField.from_exprs(rot, label=f"{name}:outer", inverse_rows=rot.T)
            stack = ReferenceSystemStack(outer, None, label=name)
        else:
            outer = _frame(spec.get("outer", "identity"), dim, f"{name}:outer")
            inner = _frame(spec["inner"], dim, f"{name}:inner").as_inner() if "inner" in spec else None
            stack = ReferenceSystemStack(outer, inner, label=name)
    except SingularityError as err:
        raise ScenarioError(f"stack {name!r}: {err}") from err
    except ContractViolation as err:
        raise ScenarioError(f"stack {name!r}: {err}") from err
    _check_invertible(stack, name, sampling)
    return stack


def _charge(name: str, spec: dict, dim: int) -> TensorField:
    try:
        if "expr" in spec:
            return ExprField.scalar(ex.parse(spec["expr"]), dim)
        if "components" in spec:
            return ExprField(_expr_matrix(spec["components"], dim, f"charge {name!r}"), dim, (LOWER, LOWER))
    except (ValueError, ContractViolation) as err:
        raise ScenarioError(f"charge {name!r}: {err}") from err
    raise ScenarioError(f"charge {name!r} needs 'expr' (scalar) or 'components' (rank 2)")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        loc = getattr(err, "lineno", None), getattr(err, "colno", None)
        raise ScenarioError(f"{source}: {err}", loc if loc[0] is not None else None) from err
    return build_scenario(doc, source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text(), str(path))


def build_scenario(doc: dict, source: str = "<dict>") -> Scenario:
    head = doc.get("scenario", {})
    if "dim" not in head:
        raise ScenarioError("[scenario] needs dim")
    try:
        sig = SpaceSignature(int(head["dim"]), int(head.get("external_dim", min(3, int(head["dim"])))))
    except ContractViolation as err:
        raise ScenarioError(str(err)) from err
    dim = sig.total_dim
    smp = doc.get("sampling", {})
    sampling = Sampling(int(smp.get("seed", 0)), int(smp.get("points", 50)), float(smp.get("low", -1.0)),
                        float(smp.get("high", 1.0)))
    sc = Scenario(head.get("name", Path(source).stem), sig, sampling=sampling, source=source)
    if "sector" in doc:
        s = doc["sector"]
        try:
            kwargs = {"conditions": tuple(s.get("conditions", ()))}
            if "mixing" in s:
                kwargs["mixing"] = {**SectorConfig(s["name"]).mixing, **s["mixing"]}
            if "rst" in s:
                kwargs["rst"] = np.asarray(s["rst"], dtype=float)
            sc.sector = SectorConfig(s["name"], **kwargs)
        except (KeyError, ConfigurationError) as err:
            raise ScenarioError(f"[sector]: {err}") from err
        if sc.sector.dim != dim:
            raise ScenarioError(f"sector {sc.sector.sector!r} needs dim {sc.sector.dim}, scenario has {dim}")
        if s.get("construct") == "conforming":
            sc.conforming = conforming_scenario(sc.sector, int(s.get("seed", 0)))
            sc.charges["rho"] = sc.conforming.charge
    for name, spec in doc.get("stacks", {}).items():
        sc.stacks[name] = _stack(name, spec, dim, sc.sector, sampling)
    if "metric" in doc:
        m = doc["metric"]
        sc.metric_override = MetricField(ExprField(_expr_matrix(m["components"], dim, "metric"), dim, (LOWER, LOWER)))
    for name, spec in doc.get("charges", {}).items():
        sc.charges[name] = _charge(name, spec, dim)
        if "driver" in spec:
            sc.drivers[name] = dict(spec["driver"])
    sc.connection_spec = dict(doc.get("connection", {}))
    kind = sc.connection_spec.get("kind")
    if kind is not None and kind not in CONNECTION_KINDS:
        raise ScenarioError(f"unknown connection kind {kind!r}")
    if "stack" in sc.connection_spec and sc.connection_spec["stack"] not in sc.stacks:
        raise ScenarioError(f"connection refers to unknown stack {sc.connection_spec['stack']!r}")
    sc.tolerances = {k: float(v) for k, v in doc.get("tolerances", {}).items()}
    sc.ensembles = {k: dict(v) for k, v in doc.get("ensembles", {}).items()}
    seen = set()
    for raw in doc.get("checks", []):
        if "id" not in raw or "kind" not in raw:
            raise ScenarioError("every [[checks]] entry needs id and kind")
        if raw["id"] in seen:
            raise ScenarioError(f"duplicate check id {raw['id']!r}")
        seen.add(raw["id"])
        sc.checks.append(CheckSpec(raw["id"], raw["kind"], dict(raw.get("params", {})), raw.get("tol")))
    _validate_references(sc)
    return sc


def _validate_references(sc: Scenario) -> None:
    from .checks import CHECKS

    for c in sc.checks:
        if c.kind not in CHECKS:
            raise ScenarioError(f"check {c.id!r}: unknown kind {c.kind!r}")
        for key in ("charge", "stack", "ensemble"):
            ref = c.params.get(key)
            table = {"charge": sc.charges, "stack": sc.stacks, "ensemble": sc.ensembles}[key]
            if ref is not None and ref not in table:
                raise ScenarioError(f"check {c.id!r}: unknown {key} {ref!r}")
