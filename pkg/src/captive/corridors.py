"""Piecewise-confined captive jump processes with internal corridors.

A corridor model stacks boundaries g0 < g1 < ... < gm.  The outermost
pair is the master domain which no path may ever leave; internal
boundaries subdivide it into corridors that continuous motion cannot
cross (the volatility is a product vanishing on every active boundary)
but a large enough jump can.  The drift pulls towards a target inside
the corridor that contained the process at its most recent jump time,
which is what the monitoring state tracks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .boundary import CONTINUOUS, LOWER, UPPER, BoundaryFn
from .coefficients import _timefunc
from .errors import ConfigurationError, StateError, UsageError
from .simulator import (
    PathSample,
    SimConfig,
    _block_ranges,
    _jump_schedule,
    _strided_flags,
    _worker_count,
)
from .drivers import JumpSpec, RandomSource
from .errors import NumericalError

_SLAB_STEPS = 2000


@dataclass(frozen=True)
class CorridorModel:
    boundaries: tuple            # g0 .. gm as BoundaryFn
    weights: tuple               # one weight in (0,1) per corridor
    segments: tuple = ()         # (t_start, t_end) per boundary; () = full horizon

    def __post_init__(self):
        bs = tuple(self.boundaries)
        if len(bs) < 2:
            raise ConfigurationError("corridor model needs at least two boundaries")
        if bs[0].kind != LOWER:
            raise ConfigurationError("g0 must be lower-admissible")
        if bs[-1].kind != UPPER:
            raise ConfigurationError("gm must be upper-admissible")
        for b in bs[1:-1]:
            if b.kind != CONTINUOUS or b.jumps:
                raise ConfigurationError("internal boundaries must be continuous")
        T = bs[0].horizon
        if abs(bs[-1].horizon - T) > 1e-12:
            raise ConfigurationError("master boundaries must share the horizon")
        segs = tuple(self.segments) if self.segments else tuple((0.0, b.horizon) for b in bs)
        if len(segs) != len(bs):
            raise ConfigurationError("one time segment per boundary required")
        if segs[0] != (0.0, T) or segs[-1] != (0.0, T):
            raise ConfigurationError("master boundary segments must cover [0, T]")
        for s, e in segs:
            if not (0.0 <= s < e <= T + 1e-12):
                raise ConfigurationError(f"bad boundary segment ({s}, {e})")
        ws = tuple(float(w) for w in self.weights)
        if len(ws) != len(bs) - 1:
            raise ConfigurationError("need one weight per corridor")
        if any(not 0.0 < w < 1.0 for w in ws):
            raise ConfigurationError("corridor weights must lie in (0, 1)")
        object.__setattr__(self, "boundaries", bs)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "weights", ws)

    @property
    def horizon(self) -> float:
        return self.boundaries[0].horizon

    @property
    def n_corridors(self) -> int:
        return len(self.boundaries) - 1

    def active_indices(self, t: float) -> list:
        return [
            j for j, (s, e) in enumerate(self.segments)
            if s <= t <= e + 1e-12
        ]

    def validate_ordering(self, grid: np.ndarray) -> None:
        grid = np.asarray(grid, dtype=float)
        vals = [b.values(grid) for b in self.boundaries]
        for j in range(len(vals) - 1):
            for k in range(j + 1, len(vals)):
                sj, ej = self.segments[j]
                sk, ek = self.segments[k]
                mask = (grid >= max(sj, sk)) & (grid <= min(ej, ek))
                if mask.any() and not np.all(vals[j][mask] < vals[k][mask]):
                    i = np.nonzero(mask & ~(vals[j] < vals[k]))[0][0]
                    raise ConfigurationError(
                        f"boundary ordering g({j}) < g({k}) violated at t={grid[i]}"
                    )


@dataclass(frozen=True)
class MonitorState:
    """Per-boundary (monitored value, last-jump clock) pairs.

    ``entries[j]`` is None until boundary j's time segment has started;
    otherwise it holds (X at tau_j, tau_j), where tau_j is the time of the
    most recent jump inside the segment (or the segment start).
    """

    entries: tuple
    time: float
    last_jump_time: float | None = None


def initial_monitor(model: CorridorModel, x0: float) -> MonitorState:
    entries = tuple(
        (float(x0), s) if s <= 0.0 else None for s, _ in model.segments
    )
    return MonitorState(entries=entries, time=0.0)


def update_monitor(
    ms: MonitorState, model: CorridorModel, t: float, x: float, jumped: bool
) -> MonitorState:
    """Advance the monitor to time t; jumps refresh every active clock."""
    if t < ms.time - 1e-12:
        raise UsageError(f"monitor time regressed from {ms.time} to {t}")
    entries = list(ms.entries)
    for j, (s, e) in enumerate(model.segments):
        if entries[j] is None and s <= t:
            entries[j] = (float(x), float(s))
        if jumped and entries[j] is not None and s <= t <= e + 1e-12:
            entries[j] = (float(x), float(t))
    return MonitorState(
        entries=tuple(entries),
        time=float(t),
        last_jump_time=float(t) if jumped else ms.last_jump_time,
    )


def _corridor_index_at(model: CorridorModel, t: float, x: float) -> int:
    """Index of the corridor containing x in the active stack at time t.

    Half-open convention [g_j, g_{j+1}) except the topmost corridor,
    which is closed at gm.
    """
    active = model.active_indices(t)
    levels = [model.boundaries[j].eval(min(t, model.boundaries[j].horizon)) for j in active]
    if x < levels[0] or x > levels[-1]:
        raise StateError(f"value {x} outside master domain [{levels[0]}, {levels[-1]}] at t={t}")
    # position among internal active boundaries
    pos = 0
    for lev in levels[1:-1]:
        if x >= lev:
            pos += 1
    return pos


def corridor_target(ms: MonitorState, model: CorridorModel) -> float:
    """Mean-reversion target selected by the monitored corridor.

    With corridors [a,b), [b,c), [c,d] and weights w1..w3 this returns
    w*lower + (1-w)*upper for the corridor that contained the process at
    the last monitored jump time.
    """
    entry = ms.entries[0]
    if entry is None:
        raise StateError("monitor has no recorded value yet")
    x_tau, tau = entry
    active = model.active_indices(tau)
    levels = [model.boundaries[j].eval(min(tau, model.boundaries[j].horizon)) for j in active]
    if x_tau < levels[0] or x_tau > levels[-1]:
        raise StateError(f"monitored value {x_tau} outside [{levels[0]}, {levels[-1]}]")
    pos = 0
    for lev in levels[1:-1]:
        if x_tau >= lev:
            pos += 1
    w = model.weights[active[pos]]
    return w * levels[pos] + (1.0 - w) * levels[pos + 1]


# ---------------------------------------------------------------------------
# Model validation (drift conditions at every boundary, on the grid)


def validate_corridor_drift(model: CorridorModel, cs, grid: np.ndarray) -> list:
    """Check the inward-drift conditions of the corridor-target rule.

    For each boundary and each possible monitored corridor: if the
    monitored state sits at or above the boundary, the drift there must be
    >= the boundary's right-derivative (plus jump); below, <=.  Returns a
    list of violation messages (empty when all pass).
    """
    grid = np.asarray(grid, dtype=float)
    model.validate_ordering(grid)
    kappa = _timefunc(getattr(cs, "kappa", 1.0))
    problems = []
    vals = [b.values(grid) for b in model.boundaries]
    for j, b in enumerate(model.boundaries):
        dg = b.derivatives(grid) + b.jump_deltas(grid)
        for c in range(model.n_corridors):
            w = model.weights[c]
            beta = w * vals[c] + (1.0 - w) * vals[c + 1]
            drift = np.array([kappa(t) for t in grid]) * (beta - vals[j])
            if c >= j:  # monitored corridor lies at or above boundary j
                bad = np.nonzero(drift < dg - 1e-12)[0]
                side = ">="
            else:
                bad = np.nonzero(drift > dg + 1e-12)[0]
                side = "<="
            if len(bad):
                problems.append(
                    f"drift at boundary {j} with monitored corridor {c} violates "
                    f"{side} boundary slope at t={grid[bad[0]]}"
                )
    return problems


# ---------------------------------------------------------------------------
# Simulation


@dataclass
class CorridorRun:
    paths: list                   # PathSample with corridor_index
    monitor_histories: list       # per stored path: list of MonitorState
    clamp_count: int
    overshoots: np.ndarray
    master_violations: int
    jump_count: int
    seed: int


def _grid_levels(model: CorridorModel, times: np.ndarray):
    vals = np.stack([b.values(times) for b in model.boundaries])
    safe = np.maximum(times, times[1] if len(times) > 1 else 1.0)
    left = np.stack([
        np.where(times > 0, b.values_left(safe), vals[j])
        for j, b in enumerate(model.boundaries)
    ])
    active = np.stack([
        (times >= s - 1e-12) & (times <= e + 1e-12) for s, e in model.segments
    ])
    return vals, left, active


def _targets_for(model, vals, active, k, x):
    """Vectorized corridor target for values x using levels at grid index k."""
    act = np.nonzero(active[:, k])[0]
    levels = vals[act, k]
    pos = np.zeros(len(x), dtype=np.int64)
    for lev in levels[1:-1]:
        pos += x >= lev
    w = np.array([model.weights[j] for j in act[:-1]])
    lo = levels[:-1]
    hi = levels[1:]
    tgt = w[pos] * lo[pos] + (1.0 - w[pos]) * hi[pos]
    return tgt


def _simulate_corridor_block(model, cs, cfg, jump, base, path_indices):
    times = cfg.time_grid()
    n_steps = cfg.n_steps
    dt = cfg.dt
    B = len(path_indices)
    vals, left, active = _grid_levels(model, times)
    m = len(model.boundaries)

    kappa = _timefunc(getattr(cs, "kappa", 1.0))
    alpha = _timefunc(getattr(cs, "alpha", 1.0))

    rngs = [base.for_path(int(p)).generator() for p in path_indices]
    flags = np.zeros((B, n_steps + 1), dtype=bool)
    ev_step, ev_path, ev_theta = [], [], []
    for b, rng in enumerate(rngs):
        idxs, thetas, _, _ = _jump_schedule(rng, cs, jump, cfg)
        flags[b, idxs] = True
        ev_step.append(idxs)
        ev_path.append(np.full(len(idxs), b, dtype=np.int64))
        ev_theta.append(thetas)
    ev_step = np.concatenate(ev_step) if ev_step else np.empty(0, dtype=np.int64)
    ev_path = np.concatenate(ev_path) if ev_path else np.empty(0, dtype=np.int64)
    ev_theta = np.concatenate(ev_theta) if ev_theta else np.empty(0)
    order = np.argsort(ev_step, kind="stable")
    ev_step, ev_path, ev_theta = ev_step[order], ev_path[order], ev_theta[order]
    ev_lo = np.searchsorted(ev_step, np.arange(n_steps + 2), side="left")

    g0, gm = vals[0], vals[-1]
    g0_left, gm_left = left[0], left[-1]

    X = np.empty((B, n_steps + 1))
    x = np.full(B, float(cfg.x0))
    if np.any(x < g0[0]) or np.any(x >= gm[0]):
        raise ConfigurationError(f"x0={cfg.x0} outside [{g0[0]}, {gm[0]})")
    X[:, 0] = x
    target = _targets_for(model, vals, active, 0, x)

    # steps where the active boundary set changes retarget every path
    act_change = np.nonzero((active[:, 1:] != active[:, :-1]).any(axis=0))[0] + 1
    act_change = set(int(i) for i in act_change)

    ov_path, ov_step, ov_mag = [], [], []
    sqrt_dt = np.sqrt(dt)
    for s0 in range(0, n_steps, _SLAB_STEPS):
        mlen = min(_SLAB_STEPS, n_steps - s0)
        dW = np.empty((B, mlen))
        for b, rng in enumerate(rngs):
            dW[b] = rng.normal(0.0, sqrt_dt, size=mlen)
        for jstep in range(mlen):
            k = s0 + jstep
            t = times[k]
            mu = kappa(t) * (target - x)
            prod = np.ones(B)
            for j in range(m):
                if active[j, k]:
                    prod *= x - vals[j, k]
            sig = alpha(t) * prod
            xn = x + mu * dt + sig * dW[:, jstep]
            a, bnd = ev_lo[k + 1], ev_lo[k + 2]
            lo, hi = g0[k + 1], gm[k + 1]
            if bnd > a:
                p = ev_path[a:bnd]
                gam = ev_theta[a:bnd] * np.minimum(
                    x[p] - g0_left[k + 1], gm_left[k + 1] - x[p]
                )
                xn[p] += gam
            ov = np.maximum(np.maximum(lo - xn, xn - hi), 0.0)
            mask = ov > 0.0
            if mask.any():
                w = np.nonzero(mask)[0]
                ov_path.append(w)
                ov_step.append(np.full(len(w), k + 1, dtype=np.int64))
                ov_mag.append(ov[w])
            np.clip(xn, lo, hi, out=xn)
            if bnd > a:
                p = ev_path[a:bnd]
                target[p] = _targets_for(model, vals, active, k + 1, xn[p])
            if (k + 1) in act_change:
                target = _targets_for(model, vals, active, k + 1, xn)
            x = xn
            X[:, k + 1] = x
        seg = X[:, s0 + 1: s0 + mlen + 1]
        if not np.isfinite(seg).all():
            bad = np.nonzero(~np.isfinite(seg))
            raise NumericalError(
                f"non-finite value at step {s0 + 1 + int(bad[1][0])}",
                step=s0 + 1 + int(bad[1][0]),
            )

    return (np.asarray(path_indices), X, flags,
            np.concatenate(ov_path) if ov_path else np.empty(0, dtype=np.int64),
            np.concatenate(ov_step) if ov_step else np.empty(0, dtype=np.int64),
            np.concatenate(ov_mag) if ov_mag else np.empty(0))


def corridor_index_grid(model: CorridorModel, times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Corridor index at every grid point for a (paths x times) value array."""
    vals, _, active = _grid_levels(model, times)
    V = np.atleast_2d(values)
    idx = np.zeros(V.shape, dtype=np.int64)
    for j in range(1, len(model.boundaries) - 1):
        idx += (V >= vals[j][None, :]) & active[j][None, :]
    return idx if values.ndim == 2 else idx[0]


def _monitor_history(model, times, values, flags) -> list:
    ms = initial_monitor(model, float(values[0]))
    history = [ms]
    for i in range(1, len(times)):
        ms = update_monitor(ms, model, float(times[i]), float(values[i]), bool(flags[i]))
        if bool(flags[i]):
            history.append(ms)
    return history


def simulate_corridor_path(
    model: CorridorModel,
    cs,
    cfg: SimConfig,
    src: RandomSource,
    jump: JumpSpec | None = None,
) -> tuple[PathSample, list]:
    """One corridor path plus its monitor history (state after each jump)."""
    run = run_corridor_ensemble(
        model, cs, replace(cfg, n_paths=1), jump, src=src, with_history=True
    )
    return run.paths[0], run.monitor_histories[0]


def run_corridor_ensemble(
    model: CorridorModel,
    cs,
    cfg: SimConfig,
    jump: JumpSpec | None = None,
    src: RandomSource | None = None,
    with_history: bool = False,
) -> CorridorRun:
    """Simulate cfg.n_paths corridor paths; every path is retained."""
    times = cfg.time_grid()
    model.validate_ordering(times)
    base = src if src is not None else RandomSource(cfg.seed)
    ranges = _block_ranges(cfg.n_paths, cfg.n_steps)

    def job(r):
        return _simulate_corridor_block(model, cs, cfg, jump, base, r)

    workers = _worker_count()
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, ranges))
    else:
        results = [job(r) for r in ranges]

    vals0, _, _ = _grid_levels(model, times)
    stride = cfg.record_stride
    paths, histories = [], []
    overshoots = []
    clamp_count = 0
    violations = 0
    jump_count = 0
    for pidx, X, flags, ovp, ovs, ovm in results:
        cidx = corridor_index_grid(model, times, X)
        violations += int(np.count_nonzero((X < vals0[0][None, :]) | (X > vals0[-1][None, :])))
        jump_count += int(np.count_nonzero(flags))
        overshoots.append(ovm)
        clamp_count += int(np.count_nonzero(ovm > cfg.clamp_tolerance))
        for local, p in enumerate(pidx):
            sel = ovp == local
            beyond = ovm[sel] > cfg.clamp_tolerance
            clamp_events = [
                (float(times[s]), float(mg))
                for s, mg in zip(ovs[sel][beyond], ovm[sel][beyond])
            ]
            paths.append(PathSample(
                times=times[::stride].copy(),
                values=X[local, ::stride].copy(),
                jump_flags=_strided_flags(flags[local], stride),
                clamp_events=clamp_events,
                boundary_hits=[],
                path_index=int(p),
                corridor_index=cidx[local, ::stride].copy(),
            ))
            if with_history:
                histories.append(_monitor_history(model, times, X[local], flags[local]))
    return CorridorRun(
        paths=paths,
        monitor_histories=histories,
        clamp_count=clamp_count,
        overshoots=np.concatenate(overshoots) if overshoots else np.empty(0),
        master_violations=violations,
        jump_count=jump_count,
        seed=base.master_seed,
    )


# ---------------------------------------------------------------------------
# Occupancy statistics


@dataclass
class OccupancyStats:
    time_fraction: np.ndarray        # per corridor
    transitions: np.ndarray          # (n_corridors x n_corridors) counts at jumps
    skip_count: int                  # |from - to| >= 2 transitions
    off_jump_changes: int            # corridor changes without a jump flag


def corridor_occupancy(paths: list, model: CorridorModel) -> OccupancyStats:
    n = model.n_corridors
    counts = np.zeros(n, dtype=np.int64)
    trans = np.zeros((n, n), dtype=np.int64)
    skip = 0
    off_jump = 0
    total = 0
    for p in paths:
        idx = p.corridor_index
        if idx is None:
            idx = corridor_index_grid(model, p.times, p.values[None, :])[0]
        counts += np.bincount(idx, minlength=n)
        total += len(idx)
        changed = np.nonzero(idx[1:] != idx[:-1])[0] + 1
        for i in changed:
            a, b = int(idx[i - 1]), int(idx[i])
            if p.jump_flags[i]:
                trans[a, b] += 1
                if abs(a - b) >= 2:
                    skip += 1
            else:
                off_jump += 1
    return OccupancyStats(
        time_fraction=counts / max(total, 1),
        transitions=trans,
        skip_count=skip,
        off_jump_changes=off_jump,
    )
