"""Monte-Carlo estimators of the position/momentum densities and the propagator sum.

Each ensemble member is a constant frame ``N_i = T + radius * R_i`` near the
center transformation ``T``.  Its charge is the pull-back of the driver's
charge under ``x -> a + N_i (x - a)``, and its gradient line is traced from
``a`` under the scenario metric.  The "flattened" line of the same member
follows ``B(x) H_i(x)`` (the direction expressed in the orthonormal frame),
normalized.  Volume ratios of endpoint clouds use the product of the top
``D - 1`` singular values of the centered cloud.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, ContractViolation
from ..frames import FrameField
from .charges import ChargeDriver
from .lines import DEFAULT_STEP, rk4_flow, unit_rows

DEGENERATE = 1e-12
BOOTSTRAP = 200


@dataclass
class EnsembleSpec:
    center_transformation: np.ndarray
    neighborhood_radius: float
    sample_count: int
    seed: int
    det_constraint: bool = False

    def __post_init__(self):
        self.center_transformation = np.asarray(self.center_transformation, dtype=float)
        T = self.center_transformation
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ConfigurationError("center transformation must be a square matrix")
        if abs(np.linalg.det(T)) < DEGENERATE:
            raise ConfigurationError("center transformation is singular")
        if self.sample_count < 2:
            raise ConfigurationError("an ensemble needs at least two members")
        if not self.neighborhood_radius > 0:
            raise ConfigurationError("neighborhood radius must be positive")

    @property
    def dim(self) -> int:
        return self.center_transformation.shape[0]

    def member_seed(self, i: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seed, i])

    def member(self, i: int) -> np.ndarray:
        """Transformation of member ``i``, drawn from its own seed."""
        T = self.center_transformation
        rng = np.random.default_rng(self.member_seed(i))
        target = np.linalg.det(T)
        while True:
            N = T + self.neighborhood_radius * rng.uniform(-1.0, 1.0, T.shape)
            d = np.linalg.det(N)
            if abs(d) < DEGENERATE or (self.det_constraint and np.sign(d) != np.sign(target)):
                continue
            if self.det_constraint:
                N = N * (target / d) ** (1.0 / self.dim)
            return N

    def members(self) -> np.ndarray:
        return np.stack([self.member(i) for i in range(self.sample_count)])


# -- member fields --------------------------------------------------------------------
def member_momentum(driver: ChargeDriver, Ns: np.ndarray, anchor: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``p_Q`` of each member's pulled-back charge at its own point ``X[i]``."""
    Y = anchor + np.einsum("mab,mb->ma", Ns, X - anchor)
    rj = driver.charge.jet(Y, 1)
    if driver.charge.rank == 0:
        return np.einsum("zc,zcp->zp", rj.grad().value, Ns)
    r0 = np.einsum("zam,zab,zbn->zmn", Ns, rj.value, Ns)
    d = np.einsum("zam,zabc,zbn,zcp->zmnp", Ns, rj.grad().value, Ns, Ns, optimize=True)
    g = driver.conn.jet(X, 0).value
    cov = d - np.einsum("zhmp,zhn->zmnp", g, r0) - np.einsum("zhnp,zmh->zmnp", g, r0)
    return np.einsum("mn,zmnp->zp", driver.weights, cov)


class MemberFlow:
    """Batched direction function where row ``i`` always belongs to member ``ids[i]``."""

    def __init__(self, driver: ChargeDriver, Ns: np.ndarray, anchor: np.ndarray, frame: FrameField | None = None):
        self.driver, self.Ns, self.anchor, self.frame = driver, Ns, np.asarray(anchor, dtype=float), frame

    def gradient(self, X: np.ndarray, ids: np.ndarray) -> np.ndarray:
        p = member_momentum(self.driver, self.Ns[ids], self.anchor, X)
        return unit_rows(np.einsum("zqp,zp->zq", self.driver.metric.ginv_jet(X, 0).value, p))

    def flattened(self, X: np.ndarray, ids: np.ndarray) -> np.ndarray:
        h = self.gradient(X, ids)
        if self.frame is None:
            return h
        return unit_rows(np.einsum("zam,zm->za", self.frame.b_jet(X, 0).value, h))

    def trace(self, kind: str, step: float, n_steps: int, starts: np.ndarray | None = None) -> np.ndarray:
        m = len(self.Ns)
        X0 = np.tile(self.anchor, (m, 1)) if starts is None else starts
        fn = self.gradient if kind == "gradient" else self.flattened
        state = {"ids": np.arange(m)}

        def direction(X):
            return fn(X, state["ids"])

        traj = np.full((n_steps + 1, m, len(self.anchor)), np.nan)
        traj[0] = X0
        X, alive = X0.copy(), np.ones(m, dtype=bool)
        for k in range(n_steps):
            idx = np.flatnonzero(alive)
            if not idx.size:
                break
            state["ids"] = idx
            sub, stop = rk4_flow(direction, X[idx], step, 1)
            ok = stop == 1
            alive[idx[~ok]] = False
            X[idx[ok]] = sub[1, ok]
            traj[k + 1, idx[ok]] = sub[1, ok]
        return traj


# -- volume proxy and bootstrap ---------------------------------------------------------
def volume_proxy(cloud: np.ndarray, rank: int | None = None) -> float:
    """Product of the top ``rank`` singular values of the centered cloud, per ``sqrt(m - 1)``."""
    c = np.asarray(cloud, dtype=float)
    c = c[np.isfinite(c).all(axis=1)]
    if len(c) < 2:
        return 0.0
    rank = c.shape[1] - 1 if rank is None else rank
    s = np.linalg.svd(c - c.mean(axis=0), compute_uv=False) / np.sqrt(len(c) - 1)
    return float(np.prod(s[:rank]))


def _bootstrap_ratio(num: np.ndarray, den: np.ndarray, seed: int, rounds: int = BOOTSTRAP) -> float:
    """Std of ``proxy(num)/proxy(den)`` over paired resamples."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2 ** 31 - 1]))
    m = len(num)
    vals = []
    for _ in range(rounds):
        idx = rng.integers(0, m, m)
        d = volume_proxy(den[idx])
        if d > DEGENERATE:
            vals.append(volume_proxy(num[idx]) / d)
    return float(np.std(vals, ddof=1)) if len(vals) > 1 else float("nan")


@dataclass
class DensityEstimate:
    value: float
    stderr: float
    endpoint: list
    t: float
    samples: int
    step: float
    seed: int
    undefined: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num_cloud, den_cloud, seed, t, endpoint, step, m) -> DensityEstimate:
    den, num = volume_proxy(den_cloud), volume_proxy(num_cloud)
    if min(den, num) < DEGENERATE:
        return DensityEstimate(float("nan"), float("nan"), endpoint, t, m, step, seed,
                               undefined=f"degenerate cloud (volume proxy {min(den, num):.3e})")
    return DensityEstimate(num / den, _bootstrap_ratio(num_cloud, den_cloud, seed), endpoint, t, m, step, seed)


def _center_line(driver, ens, anchor, t, step):
    n = int(round(t / step))
    flow = MemberFlow(driver, ens.center_transformation[None], anchor)
    return flow.trace("gradient", step, n)[:, 0]


def estimate_density_position(driver: ChargeDriver, frame: FrameField | None, ens: EnsembleSpec, a, t: float,
                              step: float = DEFAULT_STEP) -> DensityEstimate:
    """``W`` as the volume ratio of the flattened to the plain endpoint cloud at parameter ``t``."""
    a = np.asarray(a, dtype=float)
    n = int(round(t / step))
    flow = MemberFlow(driver, ens.members(), a, frame)
    plain = flow.trace("gradient", step, n)[-1]
    flat = flow.trace("flattened", step, n)[-1]
    b = _center_line(driver, ens, a, t, step)[-1]
    return _ratio(flat, plain, ens.seed, t, b.tolist(), step, ens.sample_count)


def _complement(direction: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the hyperplane orthogonal to ``direction``."""
    D = direction.shape[0]
    return np.linalg.svd(direction.reshape(1, D))[2][1:]


def normal_disc(direction: np.ndarray, center: np.ndarray, radius: float, count: int, seed: int) -> np.ndarray:
    """Uniform points in the ``(D-1)``-ball of ``radius`` orthogonal to ``direction``."""
    D = len(center)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2 ** 31 - 2]))
    g = rng.normal(size=(count, D - 1))
    g *= (rng.uniform(size=(count, 1)) ** (1.0 / (D - 1))) / np.linalg.norm(g, axis=1, keepdims=True)
    return center + radius * g @ _complement(direction)


def estimate_density_momentum(driver: ChargeDriver, ens: EnsembleSpec, a, t: float, step: float = DEFAULT_STEP,
                              section_radius: float | None = None) -> DensityEstimate:
    """``Z`` as the volume ratio of a normal-section disc at ``a`` to its image after parameter ``t``.

    The image is measured inside the normal section at the center endpoint
    (orthogonal projection along the line direction there), so ``Z`` is the
    transverse Jacobian of the flow and composes along a line.
    """
    a = np.asarray(a, dtype=float)
    n = int(round(t / step))
    T = ens.center_transformation
    center = MemberFlow(driver, T[None], a)
    h = center.gradient(a[None], np.array([0]))[0]
    if not np.isfinite(h).all():
        raise ContractViolation("gradient vanishes at the anchor")
    disc = normal_disc(h, a, section_radius or ens.neighborhood_radius, ens.sample_count, ens.seed)
    flow = MemberFlow(driver, np.repeat(T[None], ens.sample_count, axis=0), a)
    end = flow.trace("gradient", step, n, starts=disc)[-1]
    b = center.trace("gradient", step, n)[-1, 0]
    hb = center.gradient(b[None], np.array([0]))[0]
    start_sec = (disc - a) @ _complement(h).T
    end_sec = (end - b) @ _complement(hb).T
    return _ratio(start_sec, end_sec, ens.seed, t, b.tolist(), step, ens.sample_count)


# -- propagator -----------------------------------------------------------------------
@dataclass
class PropagatorResult:
    value: complex
    accepted: int
    total: int
    records: list = field(default_factory=list)
    undefined: str | None = None

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.total if self.total else 0.0


def _cumulative_action(driver, Ns, anchor, traj) -> np.ndarray:
    """Trapezoidal ``int p_Q dx^Q`` from the first sample, shape ``(n + 1, m)``."""
    n1, m, D = traj.shape
    ids = np.tile(np.arange(m), n1)
    flat = traj.reshape(-1, D)
    ok = np.isfinite(flat).all(axis=1)
    p = np.full_like(flat, np.nan)
    p[ok] = member_momentum(driver, Ns[ids[ok]], anchor, flat[ok])
    p = p.reshape(n1, m, D)
    inc = np.einsum("kmq,kmq->km", 0.5 * (p[1:] + p[:-1]), np.diff(traj, axis=0))
    return np.vstack([np.zeros((1, m)), np.cumsum(inc, axis=0)])


def propagator_sum(driver: ChargeDriver, frame: FrameField | None, ens: EnsembleSpec, a, b, x0_window,
                   ball: float, step: float = DEFAULT_STEP, action_factor: float = 1.0) -> PropagatorResult:
    """Mean of ``sqrt(W) exp(i s)`` over members whose line passes within ``ball`` of ``b``.

    Only samples with parameter in ``x0_window`` count.  ``s`` is the
    elementary action up to the closest sample times ``action_factor``
    (2 for the full action in the orthogonal case); ``W`` is the ensemble
    estimate at that sample's parameter.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    lo, hi = x0_window
    if not 0 <= lo <= hi:
        raise ContractViolation("x0 window must satisfy 0 <= lo <= hi")
    n = int(round(hi / step))
    Ns = ens.members()
    flow = MemberFlow(driver, Ns, a, frame)
    plain = flow.trace("gradient", step, n)
    flat = flow.trace("flattened", step, n)
    actions = _cumulative_action(driver, Ns, a, plain)
    x0 = step * np.arange(n + 1)
    window = (x0 >= lo - 1e-12) & (x0 <= hi + 1e-12)
    dist = np.linalg.norm(plain - b, axis=2)
    dist[~window] = np.inf
    dist[~np.isfinite(dist)] = np.inf
    k_best = np.argmin(dist, axis=0)
    d_best = dist[k_best, np.arange(len(Ns))]
    accepted = d_best <= ball
    W_cache: dict[int, float] = {}
    terms, records = [], []
    for i in range(len(Ns)):
        k = int(k_best[i])
        rec = {"member": i, "endpoint": plain[k, i].tolist(), "x0": float(x0[k]),
               "action": float(action_factor * actions[k, i]), "accepted": bool(accepted[i])}
        if accepted[i]:
            if k not in W_cache:
                den = volume_proxy(plain[k])
                W_cache[k] = volume_proxy(flat[k]) / den if den > DEGENERATE else float("nan")
            rec["W"] = W_cache[k]
            terms.append(np.sqrt(W_cache[k]) * np.exp(1j * rec["action"]))
        records.append(rec)
    if not terms:
        return PropagatorResult(complex("nan"), 0, len(Ns), records, undefined="no sampled line reached the ball")
    # fixed index order keeps the sum bit-stable
    total = complex(0.0)
    for term in terms:
        total += term
    return PropagatorResult(total / len(terms), len(terms), len(Ns), records)


# -- persistence ----------------------------------------------------------------------
def write_ensemble_csv(path, records) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["member", "endpoint", "action", "accepted"])
        for r in records:
            w.writerow([r["member"], " ".join(f"{v:.17g}" for v in r["endpoint"]), f"{r['action']:.17g}",
                        int(r["accepted"])])
    return path


def write_summary_json(path, summary: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x
