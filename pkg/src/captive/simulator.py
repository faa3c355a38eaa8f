"""Euler-Maruyama discretization of captive jump-diffusion SDEs.

One step advances ``X_{k+1} = clamp(X_k + mu dt + sigma dW_k + gamma dJ,
[g_l(t_{k+1}), g_u(t_{k+1})])``.  Drift and diffusion are applied first,
then the jump; the jump coefficient is evaluated with the left-limit state
(the value before the step's jump) and the left-limit boundaries.  The
clamp is the discretization policy: the continuous-time construction never
leaves the domain, but an Euler step can overshoot, so every projection
back into the interval is audited and reported rather than hidden.

Paths are vectorized in blocks; each path owns a counter-based random
stream derived from (master seed, path index), consumed in a fixed order
(jump arrival gaps, then jump fractions, then Brownian increments), so
results are bit-identical regardless of block size or worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryFn, validate_pair
from .coefficients import CoefficientSet, check_admissibility, resolve_theta, theta_is_random
from .drivers import JumpSpec, RandomSource, _arrival_times
from .errors import ConfigurationError, NumericalError

_SLAB_STEPS = 2000
_BLOCK_VALUE_BUDGET = 8_000_000  # floats per block values matrix


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: float
    x0: float
    n_paths: int = 1
    seed: int = 0
    clamp_tolerance: float = 0.0
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigurationError("dt and horizon must be positive")
        n = round(self.horizon / self.dt)
        if n < 1 or abs(n * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ConfigurationError("dt must divide the horizon")
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be >= 1")
        if self.clamp_tolerance < 0:
            raise ConfigurationError("clamp_tolerance must be >= 0")
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.dt)

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass
class PathSample:
    times: np.ndarray
    values: np.ndarray
    jump_flags: np.ndarray
    clamp_events: list  # (time, pre-clamp overshoot magnitude)
    boundary_hits: list  # (time, "lower" | "upper")
    path_index: int = 0
    corridor_index: np.ndarray | None = None


@dataclass
class EnsembleSummary:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    min: np.ndarray
    max: np.ndarray
    n_paths: int
    seed: int
    clamp_count: int
    overshoots: np.ndarray  # all pre-clamp overshoot magnitudes > 0
    boundary_hits: dict
    captivity_violations: int
    jump_count: int
    deferred_jumps: int
    dropped_jumps: int
    mean_final: float
    stderr_final: float
    config: dict | None = None
    stored_paths: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Grid preparation


@dataclass(frozen=True)
class _BoundaryGrids:
    gl: np.ndarray
    gu: np.ndarray
    gl_left: np.ndarray
    gu_left: np.ndarray


def _boundary_grids(lower: BoundaryFn, upper: BoundaryFn, times: np.ndarray) -> _BoundaryGrids:
    gl = lower.values(times)
    gu = upper.values(times)
    safe = np.maximum(times, times[1] if len(times) > 1 else 1.0)
    gl_left = np.where(times > 0, lower.values_left(safe), gl)
    gu_left = np.where(times > 0, upper.values_left(safe), gu)
    return _BoundaryGrids(gl, gu, gl_left, gu_left)


# ---------------------------------------------------------------------------
# Per-path randomness (fixed stream protocol)


def _draw_thetas(rng: np.random.Generator, n: int) -> np.ndarray:
    th = rng.uniform(-1.0, 1.0, size=n)
    while True:
        zero = th == 0.0
        if not zero.any():
            return th
        th[zero] = rng.uniform(-1.0, 1.0, size=int(zero.sum()))


def _jump_schedule(rng, cs: CoefficientSet, jump: JumpSpec | None, cfg: SimConfig):
    """Snapped jump grid indices and per-jump theta values for one path.

    Arrival times snap to the next grid point; collisions defer to the
    following free step (finite activity keeps these rare).  Returns
    (grid indices, thetas, deferred count, dropped count).
    """
    if jump is None or jump.intensity == 0.0:
        return np.empty(0, dtype=np.int64), np.empty(0), 0, 0
    times = _arrival_times(rng, jump.intensity, cfg.horizon)
    n_steps = cfg.n_steps
    random_theta = cs.has_jump_part and theta_is_random(getattr(cs, "theta", None))
    if random_theta:
        thetas_all = _draw_thetas(rng, len(times))
    idxs, thetas = [], []
    occupied = set()
    deferred = dropped = 0
    for j, s in enumerate(times):
        k = max(1, int(np.ceil(s / cfg.dt - 1e-9)))
        if k in occupied:
            deferred += 1
            while k in occupied:
                k += 1
        if k > n_steps:
            dropped += 1
            continue
        occupied.add(k)
        idxs.append(k)
        if random_theta:
            thetas.append(thetas_all[j])
        elif cs.has_jump_part and getattr(cs, "theta", None) is not None:
            thetas.append(resolve_theta(cs.theta, float(s)))
        else:
            thetas.append(0.0)
    return (np.asarray(idxs, dtype=np.int64), np.asarray(thetas, dtype=float),
            deferred, dropped)


# ---------------------------------------------------------------------------
# Block engine


@dataclass
class _BlockResult:
    path_indices: np.ndarray
    values: np.ndarray      # (B, n_steps + 1)
    jump_flags: np.ndarray  # (B, n_steps + 1) bool
    ov_path: np.ndarray     # overshoot event records
    ov_step: np.ndarray
    ov_mag: np.ndarray
    deferred_jumps: int
    dropped_jumps: int


def _simulate_block(
    cs: CoefficientSet,
    grids: _BoundaryGrids,
    cfg: SimConfig,
    jump: JumpSpec | None,
    base: RandomSource,
    path_indices: np.ndarray,
) -> _BlockResult:
    times = cfg.time_grid()
    n_steps = cfg.n_steps
    B = len(path_indices)
    dt = cfg.dt

    rngs = [base.for_path(int(p)).generator() for p in path_indices]

    flags = np.zeros((B, n_steps + 1), dtype=bool)
    ev_step, ev_path, ev_theta = [], [], []
    deferred = dropped = 0
    for b, rng in enumerate(rngs):
        idxs, thetas, defer, drop = _jump_schedule(rng, cs, jump, cfg)
        deferred += defer
        dropped += drop
        flags[b, idxs] = True
        ev_step.append(idxs)
        ev_path.append(np.full(len(idxs), b, dtype=np.int64))
        ev_theta.append(thetas)
    ev_step = np.concatenate(ev_step) if ev_step else np.empty(0, dtype=np.int64)
    ev_path = np.concatenate(ev_path) if ev_path else np.empty(0, dtype=np.int64)
    ev_theta = np.concatenate(ev_theta) if ev_theta else np.empty(0)
    order = np.argsort(ev_step, kind="stable")
    ev_step, ev_path, ev_theta = ev_step[order], ev_path[order], ev_theta[order]
    # slice boundaries per grid index for O(1) per-step lookup
    ev_lo = np.searchsorted(ev_step, np.arange(n_steps + 2), side="left")

    gl, gu = grids.gl, grids.gu
    gl_left, gu_left = grids.gl_left, grids.gu_left

    X = np.empty((B, n_steps + 1))
    x = np.full(B, float(cfg.x0))
    if np.any(x < gl[0]) or np.any(x > gu[0]):
        raise ConfigurationError(f"x0={cfg.x0} outside [{gl[0]}, {gu[0]}]")
    X[:, 0] = x

    ov_path, ov_step, ov_mag = [], [], []
    sqrt_dt = np.sqrt(dt)

    for s0 in range(0, n_steps, _SLAB_STEPS):
        m = min(_SLAB_STEPS, n_steps - s0)
        dW = np.empty((B, m))
        for b, rng in enumerate(rngs):
            dW[b] = rng.normal(0.0, sqrt_dt, size=m)
        for j in range(m):
            k = s0 + j
            t = times[k]
            mu = cs.drift(t, x, gl[k], gu[k])
            sig = cs.vol(t, x, gl[k], gu[k])
            xn = x + np.asarray(mu) * dt + np.asarray(sig) * dW[:, j]
            a, bnd = ev_lo[k + 1], ev_lo[k + 2]
            if bnd > a:
                p = ev_path[a:bnd]
                gam = cs.jump_coeff(
                    times[k + 1], x[p], gl_left[k + 1], gu_left[k + 1], ev_theta[a:bnd]
                )
                xn[p] += np.asarray(gam)
            lo, hi = gl[k + 1], gu[k + 1]
            ov = np.maximum(np.maximum(lo - xn, xn - hi), 0.0)
            mask = ov > 0.0
            if mask.any():
                w = np.nonzero(mask)[0]
                ov_path.append(w)
                ov_step.append(np.full(len(w), k + 1, dtype=np.int64))
                ov_mag.append(ov[w])
            np.clip(xn, lo, hi, out=xn)
            x = xn
            X[:, k + 1] = x
        seg = X[:, s0 + 1: s0 + m + 1]
        if not np.isfinite(seg).all():
            bad = np.nonzero(~np.isfinite(seg))
            raise NumericalError(
                f"non-finite value at step {s0 + 1 + int(bad[1][0])}",
                step=s0 + 1 + int(bad[1][0]),
            )

    return _BlockResult(
        path_indices=np.asarray(path_indices),
        values=X,
        jump_flags=flags,
        ov_path=np.concatenate(ov_path) if ov_path else np.empty(0, dtype=np.int64),
        ov_step=np.concatenate(ov_step) if ov_step else np.empty(0, dtype=np.int64),
        ov_mag=np.concatenate(ov_mag) if ov_mag else np.empty(0),
        deferred_jumps=deferred,
        dropped_jumps=dropped,
    )


def _worker_count() -> int:
    env = os.environ.get("CAPTIVE_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return 1


def _block_ranges(n_paths: int, n_steps: int):
    block = max(1, min(n_paths, _BLOCK_VALUE_BUDGET // (n_steps + 1)))
    return [np.arange(a, min(a + block, n_paths)) for a in range(0, n_paths, block)]


def _run_blocks(cs, grids, cfg, jump, base, ranges):
    """Simulate blocks (possibly in parallel) and yield them in index order."""
    workers = _worker_count()
    if workers == 1 or len(ranges) == 1:
        for r in ranges:
            yield _simulate_block(cs, grids, cfg, jump, base, r)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_simulate_block, cs, grids, cfg, jump, base, r) for r in ranges]
        for fut in futures:  # fixed order, independent of completion order
            yield fut.result()


# ---------------------------------------------------------------------------
# Path assembly


def _strided_flags(flags: np.ndarray, stride: int) -> np.ndarray:
    if stride == 1:
        return flags.copy()
    # a recorded point is flagged if any jump occurred since the previous one
    n = len(flags)
    edges = np.arange(0, n, stride)
    agg = np.zeros(len(edges), dtype=bool)
    agg[0] = flags[0]
    for i, e in enumerate(edges[1:], start=1):
        agg[i] = flags[e - stride + 1: e + 1].any()
    return agg


def _build_path_sample(
    block: _BlockResult, local: int, cfg: SimConfig, grids: _BoundaryGrids, times: np.ndarray
) -> PathSample:
    stride = cfg.record_stride
    vals = block.values[local]
    sel = block.ov_path == local
    beyond = block.ov_mag[sel] > cfg.clamp_tolerance
    clamp_events = [
        (float(times[s]), float(m))
        for s, m in zip(block.ov_step[sel][beyond], block.ov_mag[sel][beyond])
    ]
    hits = []
    hit_lo = np.nonzero(vals == grids.gl)[0]
    hit_hi = np.nonzero(vals == grids.gu)[0]
    for i in hit_lo:
        hits.append((float(times[i]), "lower"))
    for i in hit_hi:
        hits.append((float(times[i]), "upper"))
    hits.sort()
    return PathSample(
        times=times[::stride].copy(),
        values=vals[::stride].copy(),
        jump_flags=_strided_flags(block.jump_flags[local], stride),
        clamp_events=clamp_events,
        boundary_hits=hits,
        path_index=int(block.path_indices[local]),
    )


# ---------------------------------------------------------------------------
# Public API


def simulate_path(
    cs: CoefficientSet,
    lower: BoundaryFn,
    upper: BoundaryFn,
    cfg: SimConfig,
    src: RandomSource,
    jump: JumpSpec | None = None,
    validate: bool = True,
) -> PathSample:
    """Simulate a single path; validates the configuration first."""
    times = cfg.time_grid()
    if validate:
        _validate_or_raise(cs, lower, upper, times)
    grids = _boundary_grids(lower, upper, times)
    block = _simulate_block(cs, grids, cfg, jump, src, np.array([src.path_index]))
    return _build_path_sample(block, 0, cfg, grids, times)


def _validate_or_raise(cs, lower, upper, times):
    pair = validate_pair(lower, upper, times)
    if not pair.ok:
        raise ConfigurationError(f"boundary pair invalid: {pair.messages[0]}")
    adm = check_admissibility(cs, lower, upper, times)
    if not adm.ok:
        for name in ("drift", "vol", "jump"):
            cond = getattr(adm, name)
            if not cond.ok:
                raise ConfigurationError(
                    f"admissibility condition '{name}' failed: {cond.first_counterexample}"
                )


def run_ensemble(
    cs: CoefficientSet,
    lower: BoundaryFn,
    upper: BoundaryFn,
    cfg: SimConfig,
    jump: JumpSpec | None = None,
    store_paths: int = 0,
    validate: bool = True,
    src: RandomSource | None = None,
) -> EnsembleSummary:
    """Simulate cfg.n_paths independent paths and reduce to summary statistics.

    Statistics are computed at full grid resolution and stored at
    ``record_stride``; reduction order is fixed by block index, so the
    result does not depend on the worker count (CAPTIVE_THREADS).
    """
    times = cfg.time_grid()
    if validate:
        _validate_or_raise(cs, lower, upper, times)
    grids = _boundary_grids(lower, upper, times)
    n = cfg.n_steps

    total = np.zeros(n + 1)
    total_sq = np.zeros(n + 1)
    vmin = np.full(n + 1, np.inf)
    vmax = np.full(n + 1, -np.inf)
    overshoots = []
    clamp_count = 0
    hits = {"lower": 0, "upper": 0}
    violations = 0
    jump_count = 0
    deferred = dropped = 0
    stored = []
    finals = []

    base = src if src is not None else RandomSource(cfg.seed)
    for block in _run_blocks(cs, grids, cfg, jump, base, _block_ranges(cfg.n_paths, n)):
        V = block.values
        total += V.sum(axis=0)
        total_sq += np.square(V).sum(axis=0)
        np.minimum(vmin, V.min(axis=0), out=vmin)
        np.maximum(vmax, V.max(axis=0), out=vmax)
        finals.append(V[:, -1].copy())
        overshoots.append(block.ov_mag)
        clamp_count += int(np.count_nonzero(block.ov_mag > cfg.clamp_tolerance))
        hits["lower"] += int(np.count_nonzero(V == grids.gl[None, :]))
        hits["upper"] += int(np.count_nonzero(V == grids.gu[None, :]))
        violations += int(np.count_nonzero((V < grids.gl[None, :]) | (V > grids.gu[None, :])))
        jump_count += int(np.count_nonzero(block.jump_flags))
        deferred += block.deferred_jumps
        dropped += block.dropped_jumps
        for local, p in enumerate(block.path_indices):
            if p < store_paths:
                stored.append(_build_path_sample(block, local, cfg, grids, times))

    n_paths = cfg.n_paths
    mean = total / n_paths
    if n_paths > 1:
        variance = np.clip((total_sq - n_paths * mean * mean) / (n_paths - 1), 0.0, None)
    else:
        variance = np.zeros(n + 1)
    finals = np.concatenate(finals)
    stderr = float(finals.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    stride = cfg.record_stride
    return EnsembleSummary(
        times=times[::stride].copy(),
        mean=mean[::stride].copy(),
        variance=variance[::stride].copy(),
        min=vmin[::stride].copy(),
        max=vmax[::stride].copy(),
        n_paths=n_paths,
        seed=cfg.seed,
        clamp_count=clamp_count,
        overshoots=np.concatenate(overshoots) if overshoots else np.empty(0),
        boundary_hits=hits,
        captivity_violations=violations,
        jump_count=jump_count,
        deferred_jumps=deferred,
        dropped_jumps=dropped,
        mean_final=float(finals.mean()),
        stderr_final=stderr,
        stored_paths=stored,
    )


# ---------------------------------------------------------------------------
# Path audits


def check_captivity(p: PathSample, lower: BoundaryFn, upper: BoundaryFn, tol: float) -> list:
    """Times at which the recorded path escapes [g_l - tol, g_u + tol]."""
    gl = lower.values(p.times)
    gu = upper.values(p.times)
    with np.errstate(invalid="ignore"):
        bad = (p.values < gl - tol) | (p.values > gu + tol)
    return [float(t) for t in p.times[np.nonzero(bad)[0]]]


@dataclass
class AbsorptionReport:
    hit: bool
    tau: float | None
    boundary: str | None
    ok: bool
    first_violation_time: float | None = None


def _constant_level(b: BoundaryFn) -> float:
    from .boundary import Constant

    if b.jumps or len(b.segments) != 1 or not isinstance(b.segments[0].shape, Constant):
        raise ConfigurationError("absorption check requires constant boundaries")
    return float(b.segments[0].shape.c)


def check_absorption(p: PathSample, lower: BoundaryFn, upper: BoundaryFn) -> AbsorptionReport:
    """Once a path touches a constant boundary it must stay there forever."""
    L = _constant_level(lower)
    U = _constant_level(upper)
    on_lower = p.values == L
    on_upper = p.values == U
    hit_idx = np.nonzero(on_lower | on_upper)[0]
    if len(hit_idx) == 0:
        return AbsorptionReport(hit=False, tau=None, boundary=None, ok=True)
    i = int(hit_idx[0])
    which = "lower" if on_lower[i] else "upper"
    rest = p.values[i:]
    stuck = rest == p.values[i]
    if stuck.all():
        return AbsorptionReport(hit=True, tau=float(p.times[i]), boundary=which, ok=True)
    j = i + int(np.nonzero(~stuck)[0][0])
    return AbsorptionReport(
        hit=True, tau=float(p.times[i]), boundary=which, ok=False,
        first_violation_time=float(p.times[j]),
    )


@dataclass
class MonotoneReport:
    applies: bool
    ok: bool
    first_violation: tuple | None = None  # (t, which, derivative)


def _samples_vanish(fn, times, grids, n_x=16) -> bool:
    idx = np.unique(np.linspace(0, len(times) - 1, 33).astype(int))
    for i in idx:
        xs = np.linspace(grids.gl[i], grids.gu[i], n_x)
        if np.any(np.abs(np.asarray(fn(times[i], xs, grids.gl[i], grids.gu[i]))) > 1e-12):
            return False
    return True


def validate_monotone_bounds(
    cs: CoefficientSet, lower: BoundaryFn, upper: BoundaryFn, grid: np.ndarray
) -> MonotoneReport:
    """Continuous martingales and pure-jump processes need a non-increasing
    lower and a non-decreasing upper boundary; other dynamics pass."""
    if lower.jumps or upper.jumps:
        raise ConfigurationError("monotone-bound validation requires continuous boundaries")
    grid = np.asarray(grid, dtype=float)
    grids = _boundary_grids(lower, upper, grid)

    drift_zero = _samples_vanish(cs.drift, grid, grids)
    vol_zero = _samples_vanish(cs.vol, grid, grids)
    if cs.has_jump_part:
        th = getattr(cs, "theta", None)
        if theta_is_random(th):
            jump_zero = all(
                _samples_vanish(lambda t, x, a, b: cs.jump_coeff(t, x, a, b, s), grid, grids)
                for s in (-1.0, 1.0)
            )
        else:
            jump_zero = _samples_vanish(lambda t, x, a, b: cs.jump_coeff(t, x, a, b), grid, grids)
    else:
        jump_zero = True

    is_cont_mart = drift_zero and jump_zero and not vol_zero
    is_pure_jump = drift_zero and vol_zero and not jump_zero
    if not (is_cont_mart or is_pure_jump):
        return MonotoneReport(applies=False, ok=True)

    dL = lower.derivatives(grid)
    dU = upper.derivatives(grid)
    bad_l = np.nonzero(dL > 1e-12)[0]
    bad_u = np.nonzero(dU < -1e-12)[0]
    if len(bad_l):
        i = bad_l[0]
        return MonotoneReport(True, False, (float(grid[i]), "lower", float(dL[i])))
    if len(bad_u):
        i = bad_u[0]
        return MonotoneReport(True, False, (float(grid[i]), "upper", float(dU[i])))
    return MonotoneReport(applies=True, ok=True)
