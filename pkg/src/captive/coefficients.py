"""Coefficient triples (drift, volatility, jump) and their admissibility checks.

A coefficient set is admissible for a boundary pair when the drift points
inward at the boundaries, the volatility vanishes there, and the jump
coefficient never reaches past either boundary.  Those three conditions are
what keeps the simulated process inside the domain; they are verified on
the simulation grid with documented tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryFn
from .errors import ConfigurationError, StateError

#: marker for the default random jump fraction: i.i.d. uniform on [-1,1]\{0},
#: one draw per jump event.
THETA_UNIFORM = "uniform"

SIGMA_TOL = 1e-12
DRIFT_SLACK = 1e-12
STATE_TOL = 1e-9


def _timefunc(v):
    """Accept a constant or a callable of t; return callable."""
    if callable(v):
        return v
    c = float(v)
    return lambda t: c


def theta_is_random(theta) -> bool:
    return isinstance(theta, str) and theta == THETA_UNIFORM


def resolve_theta(theta, t: float) -> float:
    """Value of a deterministic theta specification at time t."""
    if theta_is_random(theta):
        raise ConfigurationError("random theta has no deterministic value")
    if callable(theta):
        return float(theta(t))
    return float(theta)


def _check_theta_spec(theta):
    if theta_is_random(theta) or callable(theta):
        return theta
    v = float(theta)
    if v == 0.0 or not -1.0 <= v <= 1.0:
        raise ConfigurationError("theta must lie in [-1, 1] and be nonzero")
    return v


def _guard_state(x, gl, gu):
    if np.ndim(x) == 0:
        if x < gl - STATE_TOL or x > gu + STATE_TOL:
            raise StateError(f"x={x} outside boundary interval [{gl}, {gu}]")


class CoefficientSet:
    """Base interface; x arguments may be scalars or numpy arrays."""

    family = "custom"
    #: does the set carry a jump coefficient at all
    has_jump_part = True
    theta = None

    def drift(self, t, x, gl, gu):
        raise NotImplementedError

    def vol(self, t, x, gl, gu):
        raise NotImplementedError

    def jump_coeff(self, t, x, gl, gu, theta=None):
        raise NotImplementedError


def _min_distance(x, gl, gu):
    return np.minimum(np.asarray(x) - gl, gu - np.asarray(x))


@dataclass(frozen=True)
class MeanReverting(CoefficientSet):
    """kappa*(beta - x) drift, alpha*(x-gl)*(gu-x) volatility,
    theta*min(x-gl, gu-x) jump coefficient."""

    kappa: object = 1.0
    beta: object = 0.0
    alpha: object = 1.0
    theta: object = THETA_UNIFORM

    family = "mean-reverting"
    has_jump_part = True

    def __post_init__(self):
        object.__setattr__(self, "theta", _check_theta_spec(self.theta))

    def drift(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        return _timefunc(self.kappa)(t) * (_timefunc(self.beta)(t) - np.asarray(x))

    def vol(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        x = np.asarray(x)
        return _timefunc(self.alpha)(t) * (x - gl) * (gu - x)

    def jump_coeff(self, t, x, gl, gu, theta=None):
        _guard_state(x, gl, gu)
        th = resolve_theta(self.theta, t) if theta is None else theta
        return th * _min_distance(x, gl, gu)


@dataclass(frozen=True)
class TrigonometricSine(CoefficientSet):
    """The sin-of-Brownian-motion construction: -x/2 drift, sqrt(1-x^2)
    volatility, captive in [-1, 1]."""

    theta: object = THETA_UNIFORM

    family = "trigonometric-sine"
    has_jump_part = True

    def __post_init__(self):
        object.__setattr__(self, "theta", _check_theta_spec(self.theta))

    def drift(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        return -0.5 * np.asarray(x)

    def vol(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        return np.sqrt(np.clip(1.0 - np.square(np.asarray(x, dtype=float)), 0.0, None))

    def jump_coeff(self, t, x, gl, gu, theta=None):
        _guard_state(x, gl, gu)
        th = resolve_theta(self.theta, t) if theta is None else theta
        return th * _min_distance(x, gl, gu)


@dataclass(frozen=True)
class PureJump(CoefficientSet):
    """No drift, no volatility; theta*min(x-gl, gu-x) jumps only."""

    theta: object = THETA_UNIFORM

    family = "pure-jump"
    has_jump_part = True

    def __post_init__(self):
        object.__setattr__(self, "theta", _check_theta_spec(self.theta))

    def drift(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def vol(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def jump_coeff(self, t, x, gl, gu, theta=None):
        _guard_state(x, gl, gu)
        th = resolve_theta(self.theta, t) if theta is None else theta
        return th * _min_distance(x, gl, gu)


@dataclass(frozen=True)
class Zero(CoefficientSet):
    """All coefficients identically zero; a frozen path."""

    family = "zero"
    has_jump_part = False
    theta = None

    def drift(self, t, x, gl, gu):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    vol = drift

    def jump_coeff(self, t, x, gl, gu, theta=None):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0


@dataclass(frozen=True)
class Martingale(CoefficientSet):
    """Driftless, jumpless diffusion with alpha*(x-gl)*(gu-x) volatility."""

    alpha: object = 1.0

    family = "martingale"
    has_jump_part = False
    theta = None

    def drift(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def vol(self, t, x, gl, gu):
        _guard_state(x, gl, gu)
        x = np.asarray(x)
        return _timefunc(self.alpha)(t) * (x - gl) * (gu - x)

    def jump_coeff(self, t, x, gl, gu, theta=None):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0


@dataclass(frozen=True)
class Custom(CoefficientSet):
    """User-supplied grid-evaluable coefficients.

    ``mu`` and ``sigma`` have signature (t, x, gl, gu); ``gamma`` has
    signature (t, x, gl, gu, theta) and may be None for a continuous set.
    """

    mu: object = None
    sigma: object = None
    gamma: object = None
    theta: object = None

    family = "custom"

    def __post_init__(self):
        object.__setattr__(self, "has_jump_part", self.gamma is not None)
        if self.gamma is not None and self.theta is not None:
            object.__setattr__(self, "theta", _check_theta_spec(self.theta))

    def drift(self, t, x, gl, gu):
        if self.mu is None:
            return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
        return self.mu(t, x, gl, gu)

    def vol(self, t, x, gl, gu):
        if self.sigma is None:
            return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
        return self.sigma(t, x, gl, gu)

    def jump_coeff(self, t, x, gl, gu, theta=None):
        if self.gamma is None:
            return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
        if theta is None and self.theta is not None:
            theta = resolve_theta(self.theta, t)
        return self.gamma(t, x, gl, gu, theta)


# ---------------------------------------------------------------------------
# Admissibility


@dataclass
class ConditionResult:
    ok: bool = True
    first_counterexample: tuple | None = None  # (t, message)

    def fail(self, t, message):
        if self.ok:
            self.ok = False
            self.first_counterexample = (float(t), message)


@dataclass
class AdmissibilityReport:
    drift: ConditionResult = field(default_factory=ConditionResult)
    vol: ConditionResult = field(default_factory=ConditionResult)
    jump: ConditionResult = field(default_factory=ConditionResult)

    @property
    def ok(self) -> bool:
        return self.drift.ok and self.vol.ok and self.jump.ok


def _theta_extremes(cs: CoefficientSet, t: float):
    if not cs.has_jump_part:
        return (None,)
    th = getattr(cs, "theta", None)
    if th is None:
        return (None,)
    if theta_is_random(th):
        return (-1.0, 1.0)
    return (resolve_theta(th, t),)


def check_admissibility(
    cs: CoefficientSet,
    lower: BoundaryFn,
    upper: BoundaryFn,
    grid: np.ndarray,
    n_x: int = 50,
) -> AdmissibilityReport:
    """Verify the three boundary conditions at every grid time.

    Condition 1: drift at the boundary left-limits points inward relative
    to the boundary's right-derivative plus its jump.  Condition 2: the
    volatility vanishes (|sigma| <= 1e-12) at both boundary left-limits.
    Condition 3: the jump coefficient stays within [gl(t-)-x, gu(t-)-x]
    over equispaced x samples and extreme theta values.
    """
    grid = np.asarray(grid, dtype=float)
    report = AdmissibilityReport()
    gl = lower.values(grid)
    gu = upper.values(grid)
    gl_left = np.where(grid > 0, lower.values_left(np.maximum(grid, 1e-300)), gl)
    gu_left = np.where(grid > 0, upper.values_left(np.maximum(grid, 1e-300)), gu)
    dgl = lower.derivatives(grid) + lower.jump_deltas(grid)
    dgu = upper.derivatives(grid) + upper.jump_deltas(grid)

    for i, t in enumerate(grid):
        # coefficients at time t- see the boundary left limits
        mu_lo = float(np.asarray(cs.drift(t, gl_left[i], gl_left[i], gu_left[i])))
        if mu_lo < dgl[i] - DRIFT_SLACK:
            report.drift.fail(t, f"mu(t, g_l-)={mu_lo} < dg_l/dt+delta={dgl[i]}")
        mu_hi = float(np.asarray(cs.drift(t, gu_left[i], gl_left[i], gu_left[i])))
        if mu_hi > dgu[i] + DRIFT_SLACK:
            report.drift.fail(t, f"mu(t, g_u-)={mu_hi} > dg_u/dt+delta={dgu[i]}")

        sig_lo = float(np.asarray(cs.vol(t, gl_left[i], gl_left[i], gu_left[i])))
        sig_hi = float(np.asarray(cs.vol(t, gu_left[i], gl_left[i], gu_left[i])))
        if abs(sig_lo) > SIGMA_TOL or abs(sig_hi) > SIGMA_TOL:
            report.vol.fail(t, f"sigma at boundary = ({sig_lo}, {sig_hi})")

        xs = np.linspace(gl_left[i], gu_left[i], n_x)
        for th in _theta_extremes(cs, float(t)):
            gam = np.asarray(cs.jump_coeff(t, xs, gl_left[i], gu_left[i], th))
            lo_ok = np.all(gam >= (gl_left[i] - xs) - DRIFT_SLACK)
            hi_ok = np.all(gam <= (gu_left[i] - xs) + DRIFT_SLACK)
            if not (lo_ok and hi_ok):
                report.jump.fail(t, f"jump coefficient escapes boundary band (theta={th})")
                break
    return report


# ---------------------------------------------------------------------------
# Composition of a continuous captive part with a pure-jump captive part


def _samples_all_zero(fn, grid, lowvals, hivals, n_x=20, theta=None):
    for i, t in enumerate(grid[:: max(1, len(grid) // 64)]):
        j = i * max(1, len(grid) // 64)
        xs = np.linspace(lowvals[j], hivals[j], n_x)
        vals = fn(t, xs) if theta is None else fn(t, xs, theta)
        if np.any(np.abs(np.asarray(vals)) > 1e-12):
            return False
    return True


def compose(
    continuous_part: CoefficientSet,
    jump_part: CoefficientSet,
    outer: tuple,
    inner: tuple,
    grid: np.ndarray,
) -> Custom:
    """Combine a continuous captive set with a pure-jump captive set.

    The result evolves with the continuous part's drift and volatility on
    the outer boundary pair while jumping with the jump part's coefficient
    (evaluated against the inner pair and clipped to the outer band), so
    the combined process stays captive in the outer domain.
    """
    outer_l, outer_u = outer
    inner_l, inner_u = inner
    grid = np.asarray(grid, dtype=float)

    ol, ou = outer_l.values(grid), outer_u.values(grid)
    il, iu = inner_l.values(grid), inner_u.values(grid)
    if not (np.all(ol <= il + 1e-12) and np.all(iu <= ou + 1e-12)):
        raise ConfigurationError("inner boundaries must nest inside the outer pair")

    if continuous_part.has_jump_part:
        raise ConfigurationError("continuous part must have no jump coefficient")
    if not jump_part.has_jump_part:
        raise ConfigurationError("jump part must carry a jump coefficient")
    th = getattr(jump_part, "theta", None)
    if th is not None and not theta_is_random(th) and not callable(th):
        if float(th) == 0.0:
            raise ConfigurationError("jump part theta must be nonzero")
    if not _samples_all_zero(lambda t, xs: jump_part.drift(t, xs, ol[0], ou[0]), grid, ol, ou):
        raise ConfigurationError("jump part must have zero drift")
    if not _samples_all_zero(lambda t, xs: jump_part.vol(t, xs, ol[0], ou[0]), grid, ol, ou):
        raise ConfigurationError("jump part must have zero volatility")

    def gamma(t, x, gl, gu, theta):
        raw = jump_part.jump_coeff(t, x, inner_l.eval(min(t, inner_l.horizon)),
                                   inner_u.eval(min(t, inner_u.horizon)), theta)
        return np.clip(raw, gl - np.asarray(x), gu - np.asarray(x))

    return Custom(
        mu=lambda t, x, gl, gu: continuous_part.drift(t, x, gl, gu),
        sigma=lambda t, x, gl, gu: continuous_part.vol(t, x, gl, gu),
        gamma=gamma,
        theta=getattr(jump_part, "theta", THETA_UNIFORM),
    )
