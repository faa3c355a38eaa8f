"""Time-dependent boundary functions with signed jump structure.

A boundary is a piecewise closed-form function of time plus an explicit
list of discontinuities.  Lower boundaries may only jump down, upper
boundaries may only jump up, and purely continuous boundaries carry no
jumps at all.  Evaluation follows the cadlag convention: ``eval`` includes
a jump located exactly at ``t``, ``eval_left`` excludes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

LOWER = "lower-admissible"
UPPER = "upper-admissible"
CONTINUOUS = "continuous"

_KINDS = (LOWER, UPPER, CONTINUOUS)

_KIND_ALIASES = {
    "lower": LOWER,
    "upper": UPPER,
    LOWER: LOWER,
    UPPER: UPPER,
    CONTINUOUS: CONTINUOUS,
}


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown boundary kind {kind!r}")


# ---------------------------------------------------------------------------
# Segment shapes


@dataclass(frozen=True)
class Constant:
    c: float

    def value(self, t, t0):
        return np.broadcast_to(float(self.c), np.shape(t)).copy() if np.ndim(t) else float(self.c)

    def derivative(self, t, t0):
        return np.zeros_like(t, dtype=float) if np.ndim(t) else 0.0


@dataclass(frozen=True)
class Linear:
    c0: float
    slope: float

    def value(self, t, t0):
        return self.c0 + self.slope * (np.asarray(t, dtype=float) - t0) if np.ndim(t) else self.c0 + self.slope * (t - t0)

    def derivative(self, t, t0):
        return np.full_like(np.asarray(t, dtype=float), self.slope) if np.ndim(t) else float(self.slope)


@dataclass(frozen=True)
class Sinusoid:
    """offset + amp * sin(freq * t + phase), freq in radians per unit time."""

    amp: float
    freq: float
    phase: float = 0.0
    offset: float = 0.0

    def value(self, t, t0):
        return self.offset + self.amp * np.sin(self.freq * np.asarray(t, dtype=float) + self.phase)

    def derivative(self, t, t0):
        return self.amp * self.freq * np.cos(self.freq * np.asarray(t, dtype=float) + self.phase)


@dataclass(frozen=True)
class Table:
    """Sampled values with linear interpolation; times are absolute."""

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if len(times) != len(values) or len(times) < 2:
            raise ConfigurationError("table shape needs >= 2 matching samples")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("table times must be strictly increasing")
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError("table values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def value(self, t, t0):
        return np.interp(np.asarray(t, dtype=float), self.times, self.values)

    def derivative(self, t, t0):
        # right slope: at a node the slope towards the next node
        ts = np.asarray(self.times)
        vs = np.asarray(self.values)
        idx = np.searchsorted(ts, np.asarray(t, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(ts) - 2)
        slopes = (vs[idx + 1] - vs[idx]) / (ts[idx + 1] - ts[idx])
        return slopes if np.ndim(t) else float(slopes)


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    shape: object

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ConfigurationError(
                f"segment [{self.t_start}, {self.t_end}] is empty or reversed"
            )


# ---------------------------------------------------------------------------
# BoundaryFn


@dataclass(frozen=True)
class BoundaryFn:
    segments: tuple
    jumps: tuple = ()
    kind: str = CONTINUOUS
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        segs = tuple(self.segments)
        if not segs:
            raise ConfigurationError("boundary needs at least one segment")
        if abs(segs[0].t_start) > 1e-15:
            raise ConfigurationError("first segment must start at t=0")
        for a, b in zip(segs, segs[1:]):
            if abs(a.t_end - b.t_start) > 1e-12:
                raise ConfigurationError(
                    f"segments must tile [0, T]: gap/overlap at t={a.t_end}"
                )
        jumps = tuple(sorted((float(t), float(d)) for t, d in self.jumps))
        for t, d in jumps:
            if not (0.0 < t <= segs[-1].t_end):
                raise ConfigurationError(f"jump time {t} outside (0, T]")
            if self.kind == LOWER and d > 0:
                raise ConfigurationError(
                    f"lower-admissible boundary cannot jump up (delta={d} at t={t})"
                )
            if self.kind == UPPER and d < 0:
                raise ConfigurationError(
                    f"upper-admissible boundary cannot jump down (delta={d} at t={t})"
                )
            if self.kind == CONTINUOUS:
                raise ConfigurationError("continuous boundary cannot carry jumps")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "jumps", jumps)

    @property
    def horizon(self) -> float:
        return self.segments[-1].t_end

    def _segment_at(self, t: float) -> Segment:
        for seg in self.segments:
            if seg.t_start <= t < seg.t_end:
                return seg
        last = self.segments[-1]
        if t == last.t_end:
            return last
        raise DomainError(f"t={t} outside [0, {self.horizon}]")

    def _base(self, t: float) -> float:
        seg = self._segment_at(t)
        return float(seg.shape.value(t, seg.t_start))

    def _jump_offset(self, t: float, include_at_t: bool) -> float:
        total = 0.0
        for tj, d in self.jumps:
            if tj < t or (include_at_t and tj == t):
                total += d
        return total

    def eval(self, t: float) -> float:
        """g(t) with the cadlag (right-continuous) convention."""
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        return self._base(t) + self._jump_offset(t, include_at_t=True)

    def eval_left(self, t: float) -> float:
        """Left limit g(t-); a jump located exactly at t is excluded."""
        if not (0.0 < t <= self.horizon):
            raise DomainError(f"t={t} outside (0, {self.horizon}]")
        return self._base(t) + self._jump_offset(t, include_at_t=False)

    def right_derivative(self, t: float) -> float:
        """Analytic right-derivative of the active segment shape (jumps excluded)."""
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        seg = self._segment_at(t)
        return float(seg.shape.derivative(t, seg.t_start))

    # -- vectorized evaluation over a time grid (used by the simulator) --

    def _base_grid(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        out = np.empty_like(times)
        for i, seg in enumerate(self.segments):
            if i == len(self.segments) - 1:
                mask = (times >= seg.t_start) & (times <= seg.t_end + 1e-12)
            else:
                mask = (times >= seg.t_start) & (times < seg.t_end)
            if mask.any():
                out[mask] = seg.shape.value(times[mask], seg.t_start)
        return out

    def _jump_grid(self, times: np.ndarray, side: str) -> np.ndarray:
        if not self.jumps:
            return np.zeros_like(np.asarray(times, dtype=float))
        jt = np.array([t for t, _ in self.jumps])
        cum = np.concatenate(([0.0], np.cumsum([d for _, d in self.jumps])))
        idx = np.searchsorted(jt, np.asarray(times, dtype=float), side=side)
        return cum[idx]

    def values(self, times: np.ndarray) -> np.ndarray:
        """Vectorized ``eval`` over a grid."""
        return self._base_grid(times) + self._jump_grid(times, side="right")

    def values_left(self, times: np.ndarray) -> np.ndarray:
        """Vectorized ``eval_left`` over a grid (t=0 returns the base value)."""
        return self._base_grid(times) + self._jump_grid(times, side="left")

    def derivatives(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        out = np.empty_like(times)
        for i, seg in enumerate(self.segments):
            if i == len(self.segments) - 1:
                mask = (times >= seg.t_start) & (times <= seg.t_end + 1e-12)
            else:
                mask = (times >= seg.t_start) & (times < seg.t_end)
            if mask.any():
                out[mask] = seg.shape.derivative(times[mask], seg.t_start)
        return out

    def jump_deltas(self, times: np.ndarray) -> np.ndarray:
        """Delta g at each grid time (zero where no jump sits on the grid)."""
        times = np.asarray(times, dtype=float)
        out = np.zeros_like(times)
        for tj, d in self.jumps:
            hit = np.isclose(times, tj, rtol=0.0, atol=1e-12)
            out[hit] += d
        return out


# ---------------------------------------------------------------------------
# Convenience constructors


def constant(c: float, horizon: float, kind: str = CONTINUOUS, jumps=(), name="") -> BoundaryFn:
    return BoundaryFn((Segment(0.0, horizon, Constant(c)),), tuple(jumps), kind, name)


def linear(c0: float, slope: float, horizon: float, kind: str = CONTINUOUS, jumps=(), name="") -> BoundaryFn:
    return BoundaryFn((Segment(0.0, horizon, Linear(c0, slope)),), tuple(jumps), kind, name)


def sinusoid(amp, freq, phase, offset, horizon, kind=CONTINUOUS, jumps=(), name="") -> BoundaryFn:
    return BoundaryFn((Segment(0.0, horizon, Sinusoid(amp, freq, phase, offset)),), tuple(jumps), kind, name)


def from_table(times, values, kind=CONTINUOUS, jumps=(), name="") -> BoundaryFn:
    shape = Table(tuple(times), tuple(values))
    return BoundaryFn((Segment(float(times[0]), float(times[-1]), shape),), tuple(jumps), kind, name)


# ---------------------------------------------------------------------------
# Pair validation


@dataclass
class PairReport:
    ok: bool
    first_violation: tuple | None = None  # (t, lower value, upper value)
    n_checked: int = 0
    max_jump_snap_distance: float = 0.0
    messages: list = field(default_factory=list)


def snap_distances(b: BoundaryFn, grid: np.ndarray) -> list:
    """Distance from each jump time to its nearest grid point."""
    grid = np.asarray(grid, dtype=float)
    out = []
    for tj, _ in b.jumps:
        i = np.searchsorted(grid, tj)
        cands = grid[max(i - 1, 0): i + 1]
        out.append(float(np.min(np.abs(cands - tj))) if len(cands) else float("inf"))
    return out


def validate_pair(lower: BoundaryFn, upper: BoundaryFn, grid: np.ndarray) -> PairReport:
    """Check strict ordering lower < upper (right and left limits) on the grid."""
    if lower.kind not in (LOWER, CONTINUOUS):
        raise ConfigurationError(f"lower boundary has kind {lower.kind!r}")
    if upper.kind not in (UPPER, CONTINUOUS):
        raise ConfigurationError(f"upper boundary has kind {upper.kind!r}")
    grid = np.asarray(grid, dtype=float)
    report = PairReport(ok=True, n_checked=len(grid))
    lo, hi = lower.values(grid), upper.values(grid)
    bad = np.nonzero(~(lo < hi))[0]
    if len(bad) == 0:
        interior = grid > 0
        lo_l = lower.values_left(grid[interior])
        hi_l = upper.values_left(grid[interior])
        bad_l = np.nonzero(~(lo_l < hi_l))[0]
        if len(bad_l):
            i = np.nonzero(interior)[0][bad_l[0]]
            report.ok = False
            report.first_violation = (float(grid[i]), float(lo_l[bad_l[0]]), float(hi_l[bad_l[0]]))
            report.messages.append(
                f"left limits violate lower < upper at t={grid[i]}"
            )
    else:
        i = bad[0]
        report.ok = False
        report.first_violation = (float(grid[i]), float(lo[i]), float(hi[i]))
        report.messages.append(f"lower < upper violated at t={grid[i]}")
    snaps = snap_distances(lower, grid) + snap_distances(upper, grid)
    report.max_jump_snap_distance = max(snaps, default=0.0)
    return report
