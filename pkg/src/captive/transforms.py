"""Building captive diffusions from bounded maps of Brownian motion, and
pushing captive paths through monotone maps.

A bounded C^2 map f with range [a, b] applied to a Brownian motion yields
a diffusion confined to [a, b]; its coefficients come out of the chain
rule as mu = f''(f_inv(x))/2 and sigma = f'(f_inv(x)).  Separately, any
monotone map sends a captive path to a captive path with mapped
boundaries; jumps happen at the same times, only their sizes change.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import boundary as bd
from .coefficients import Custom
from .errors import ConfigurationError
from .simulator import PathSample

INCREASING = "increasing"
DECREASING = "decreasing"

_RANGE_TOL = 1e-10
_N_SAMPLES = 1000


@dataclass(frozen=True)
class BoundedMap:
    """A C^2 map onto a bounded range [a, b], with inverse and derivatives."""

    f: callable
    f_inv: callable
    f1: callable
    f2: callable
    range: tuple
    name: str = ""

    def verify(self) -> None:
        """Check the flat-at-the-ends conditions that make the image captive."""
        a, b = self.range
        if not a < b:
            raise ConfigurationError("map range must satisfy a < b")
        for end, val in (("lower", a), ("upper", b)):
            try:
                with np.errstate(divide="ignore", invalid="ignore"):
                    y = float(self.f_inv(val))
            except (ValueError, ZeroDivisionError, FloatingPointError) as exc:
                raise ConfigurationError(
                    f"inverse undefined at the {end} end of the range: {exc}"
                )
            if not np.isfinite(y):
                raise ConfigurationError(f"inverse not finite at the {end} range end")
            if abs(float(self.f1(y))) > _RANGE_TOL:
                raise ConfigurationError(
                    f"first derivative does not vanish at the {end} range end "
                    f"(got {float(self.f1(y)):.3e})"
                )
        if float(self.f2(self.f_inv(a))) < -_RANGE_TOL:
            raise ConfigurationError("second derivative negative at the lower range end")
        if float(self.f2(self.f_inv(b))) > _RANGE_TOL:
            raise ConfigurationError("second derivative positive at the upper range end")
        xs = np.linspace(a, b, _N_SAMPLES)[1:-1]
        ys = np.asarray([self.f_inv(v) for v in xs])
        if not (np.isfinite([self.f1(y) for y in ys]).all()
                and np.isfinite([self.f2(y) for y in ys]).all()):
            raise ConfigurationError("derivatives unbounded on the sampled domain")


@dataclass(frozen=True)
class MonotoneMap:
    f: callable
    direction: str
    f1: callable
    f2: callable
    name: str = ""

    def __post_init__(self):
        if self.direction not in (INCREASING, DECREASING):
            raise ConfigurationError(f"unknown direction {self.direction!r}")

    def check_on(self, lo: float, hi: float) -> float:
        """Verify constant derivative sign over [lo, hi]; return max |f'|."""
        xs = np.linspace(lo, hi, _N_SAMPLES)
        d = np.asarray([self.f1(v) for v in xs], dtype=float)
        want_pos = self.direction == INCREASING
        if want_pos and not np.all(d > 0):
            raise ConfigurationError(
                f"map {self.name or 'f'} not increasing over [{lo}, {hi}]"
            )
        if not want_pos and not np.all(d < 0):
            raise ConfigurationError(
                f"map {self.name or 'f'} not decreasing over [{lo}, {hi}]"
            )
        return float(np.max(np.abs(d)))


def captive_from_bounded(bmap: BoundedMap) -> Custom:
    """Diffusion coefficients whose solution is f applied to Brownian motion.

    The process stays in bmap.range with constant boundaries; pair with
    ``constant_domain`` to simulate it.
    """
    bmap.verify()
    f_inv, f1, f2 = bmap.f_inv, bmap.f1, bmap.f2

    def mu(t, x, gl, gu):
        y = f_inv(np.clip(x, bmap.range[0], bmap.range[1]))
        return 0.5 * np.asarray(f2(y), dtype=float)

    def sigma(t, x, gl, gu):
        y = f_inv(np.clip(x, bmap.range[0], bmap.range[1]))
        return np.asarray(f1(y), dtype=float)

    return Custom(mu=mu, sigma=sigma, gamma=None, theta=None)


def constant_domain(bmap: BoundedMap, horizon: float):
    a, b = bmap.range
    return (bd.constant(a, horizon, kind=bd.LOWER),
            bd.constant(b, horizon, kind=bd.UPPER))


def map_path(
    p: PathSample, mmap: MonotoneMap, lower: bd.BoundaryFn, upper: bd.BoundaryFn
):
    """Push a captive path through a monotone map.

    Returns (mapped path, mapped lower boundary, mapped upper boundary).
    For a decreasing map the roles of the two boundaries swap.  Jump flags
    are untouched; clamp magnitudes scale by the sampled Lipschitz
    constant of the map over the boundary envelope.
    """
    gl = lower.values(p.times)
    gu = upper.values(p.times)
    lip = mmap.check_on(float(gl.min()), float(gu.max()))
    y = np.asarray([mmap.f(v) for v in p.values], dtype=float)
    fl = np.asarray([mmap.f(v) for v in gl], dtype=float)
    fu = np.asarray([mmap.f(v) for v in gu], dtype=float)
    if mmap.direction == INCREASING:
        new_lo, new_hi = fl, fu
    else:
        new_lo, new_hi = fu, fl
    mapped = replace(
        p,
        values=y,
        clamp_events=[(t, mag * lip) for t, mag in p.clamp_events],
    )
    m_lower = bd.from_table(p.times, new_lo, kind=bd.LOWER)
    m_upper = bd.from_table(p.times, new_hi, kind=bd.UPPER)
    return mapped, m_lower, m_upper


# ---------------------------------------------------------------------------
# Builtin maps


def _sin_map() -> BoundedMap:
    return BoundedMap(
        f=np.sin, f_inv=np.arcsin, f1=np.cos,
        f2=lambda y: -np.sin(y), range=(-1.0, 1.0), name="sin",
    )


def _cos_map() -> BoundedMap:
    return BoundedMap(
        f=np.cos, f_inv=np.arccos, f1=lambda y: -np.sin(y),
        f2=lambda y: -np.cos(y), range=(-1.0, 1.0), name="cos",
    )


BOUNDED_MAPS = {"sin": _sin_map, "cos": _cos_map}

MONOTONE_MAPS = {
    "exp": lambda: MonotoneMap(
        f=np.exp, direction=INCREASING, f1=np.exp, f2=np.exp, name="exp"
    ),
    "reciprocal": lambda: MonotoneMap(
        f=lambda x: 1.0 / x, direction=DECREASING,
        f1=lambda x: -1.0 / x ** 2, f2=lambda x: 2.0 / x ** 3, name="reciprocal",
    ),
    "identity": lambda: MonotoneMap(
        f=lambda x: x, direction=INCREASING,
        f1=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        f2=lambda x: np.zeros_like(np.asarray(x, dtype=float)), name="identity",
    ),
}


def builtin_monotone(name: str) -> MonotoneMap:
    try:
        return MONOTONE_MAPS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown monotone map {name!r}; choose from {sorted(MONOTONE_MAPS)}"
        )


def builtin_bounded(name: str) -> BoundedMap:
    try:
        return BOUNDED_MAPS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown bounded map {name!r}; choose from {sorted(BOUNDED_MAPS)}"
        )
