"""Conditional corridor-transition probabilities.

A jump from pre-jump value x moves the process by theta * m where
m = min(x - a, d - x) is the distance to the nearer master boundary.
The set of theta values landing the process in a target corridor [k, l)
is the interval [(k - x)/m, (l - x)/m); intersecting it with the support
of theta and multiplying by the jump probability gives the transition
probability.  A Monte-Carlo estimator over the corridor engine provides
the matching empirical check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StateError, StatisticalError, UsageError

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class ThetaDist:
    """Distribution descriptor for the jump fraction theta on [-1, 1]."""

    name: str = "uniform"
    density: callable = None

    def interval_mass(self, lo: float, hi: float) -> float:
        lo = max(lo, -1.0)
        hi = min(hi, 1.0)
        if hi <= lo:
            return 0.0
        if self.density is None:
            return (hi - lo) / 2.0
        xs = np.linspace(lo, hi, 20001)
        return float(np.trapezoid([self.density(v) for v in xs], xs))


UNIFORM_THETA = ThetaDist()


@dataclass(frozen=True)
class TransitionQuery:
    x_minus: float
    from_corridor: tuple
    to_corridor: tuple
    master: tuple
    theta_dist: ThetaDist = UNIFORM_THETA
    jump_prob: float = 1.0

    def __post_init__(self):
        a, d = self.master
        if not a < d:
            raise ConfigurationError("master interval must satisfy a < d")
        for lo, hi in (self.from_corridor, self.to_corridor):
            if not (a - 1e-12 <= lo < hi <= d + 1e-12):
                raise ConfigurationError(
                    f"corridor [{lo}, {hi}) not inside master [{a}, {d}]"
                )
        if not 0.0 <= self.jump_prob <= 1.0:
            raise ConfigurationError("jump_prob must lie in [0, 1]")
        lo, hi = self.from_corridor
        x = self.x_minus
        in_corridor = lo <= x < hi or (hi >= d - 1e-12 and x == hi)
        if not in_corridor:
            raise ConfigurationError(
                f"x_minus={x} not in from_corridor [{lo}, {hi})"
            )


def _reach(q: TransitionQuery) -> float:
    a, d = q.master
    m = min(q.x_minus - a, d - q.x_minus)
    if m <= 0.0:
        raise StateError(
            f"x_minus={q.x_minus} sits on a master boundary; jump reach is zero"
        )
    return m


def s_set(q: TransitionQuery) -> tuple:
    """Theta interval [s_lo, s_hi) that lands the jump in the target corridor."""
    m = _reach(q)
    k, l = q.to_corridor
    return ((k - q.x_minus) / m, (l - q.x_minus) / m)


def theta_factor(q: TransitionQuery) -> float:
    """Probability that theta falls in the target's landing set.

    The unreachable cases return the literal 0.0: the target floor is
    beyond the upward reach, or the target ceiling beyond the downward
    reach.
    """
    m = _reach(q)
    k, l = q.to_corridor
    if (k - q.x_minus) > m:
        return 0.0
    if (l - q.x_minus) < -m:
        return 0.0
    s_lo, s_hi = s_set(q)
    return q.theta_dist.interval_mass(s_lo, s_hi)


def transition_probability(q: TransitionQuery) -> float:
    """theta_factor times the jump probability (independence factorization)."""
    tf = theta_factor(q)
    if tf == 0.0:
        return 0.0
    return tf * q.jump_prob


def bin_averaged_probability(
    q: TransitionQuery, bin_lo: float, bin_hi: float, n: int = 201
) -> float:
    """Average of transition_probability over x_minus in the conditioning bin."""
    from dataclasses import replace

    xs = np.linspace(bin_lo, bin_hi, n)
    vals = [transition_probability(replace(q, x_minus=float(x))) for x in xs]
    return float(np.mean(vals))


def transition_matrix(
    edges: tuple, jump_prob: float, x_values: tuple = None,
    theta_dist: ThetaDist = UNIFORM_THETA,
) -> np.ndarray:
    """Analytic corridor-to-corridor matrix.

    edges are the boundary levels (a, g1, ..., d); each row is evaluated
    at the representative pre-jump value for that corridor (the midpoint
    unless x_values overrides it).
    """
    edges = tuple(float(e) for e in edges)
    n = len(edges) - 1
    if x_values is None:
        x_values = tuple((edges[i] + edges[i + 1]) / 2.0 for i in range(n))
    master = (edges[0], edges[-1])
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            q = TransitionQuery(
                x_minus=float(x_values[i]),
                from_corridor=(edges[i], edges[i + 1]),
                to_corridor=(edges[j], edges[j + 1]),
                master=master,
                theta_dist=theta_dist,
                jump_prob=jump_prob,
            )
            out[i, j] = transition_probability(q)
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo validation


@dataclass
class TransitionEstimate:
    estimate: float
    ci_lo: float
    ci_hi: float
    n_conditioning: int   # grid steps with pre-step value in the bin
    n_jump_steps: int     # of those, steps where a jump fired
    n_events: int         # jump steps landing in the target corridor
    jump_prob: float      # per-step 1 - exp(-lambda dt)


def _wilson(k: int, n: int, z: float = _Z95) -> tuple:
    if n == 0:
        return 0.0, 0.0, 0.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * np.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n))
    return p, max(0.0, center - half), min(1.0, center + half)


def estimate_transition_mc(
    model,
    cs,
    cfg,
    jump,
    bin_lo: float,
    bin_hi: float,
    to_corridor: tuple,
    src=None,
) -> TransitionEstimate:
    """Empirical one-step transition probability from the corridor engine.

    Conditions on grid steps whose pre-step value lies in [bin_lo,
    bin_hi); among those where a jump fired, measures the fraction landing
    in to_corridor, and scales by the per-step jump probability
    1 - exp(-lambda * dt).  Returns the estimate with a 95% Wilson
    interval (scaled the same way).
    """
    from .corridors import run_corridor_ensemble

    if cfg.record_stride != 1:
        raise UsageError("transition estimation needs record_stride=1")
    lam = 0.0 if jump is None else jump.intensity
    if lam == 0.0:
        return TransitionEstimate(0.0, 0.0, 0.0, 0, 0, 0, 0.0)
    p_step = 1.0 - np.exp(-lam * cfg.dt)
    k_lo, k_hi = to_corridor
    a, d = model.boundaries[0].eval(0.0), model.boundaries[-1].eval(0.0)

    n_cond = n_jump = n_hit = 0
    run = run_corridor_ensemble(model, cs, cfg, jump=jump, src=src)
    for path in run.paths:
        v = path.values
        pre_in = (v[:-1] >= bin_lo) & (v[:-1] < bin_hi)
        n_cond += int(pre_in.sum())
        jumped = pre_in & path.jump_flags[1:]
        n_jump += int(jumped.sum())
        nxt = v[1:][jumped]
        landed = (nxt >= k_lo) & ((nxt < k_hi) | ((k_hi >= d - 1e-12) & (nxt == k_hi)))
        n_hit += int(landed.sum())

    if n_cond < 100:
        raise StatisticalError(
            f"only {n_cond} conditioning samples in [{bin_lo}, {bin_hi}); "
            "increase n_paths or the horizon"
        )
    if n_jump == 0:
        raise StatisticalError(
            "no jumps observed from the conditioning bin; increase the run length"
        )
    frac, lo, hi = _wilson(n_hit, n_jump)
    return TransitionEstimate(
        estimate=frac * p_step,
        ci_lo=lo * p_step,
        ci_hi=hi * p_step,
        n_conditioning=n_cond,
        n_jump_steps=n_jump,
        n_events=n_hit,
        jump_prob=p_step,
    )
