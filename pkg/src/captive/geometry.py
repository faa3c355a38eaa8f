"""Polar-plane trajectories built from two captive coordinate processes.

The radius is a captive process in [a, d] and the angle a captive process
in [0, 2*pi]; together they trace a particle that cannot leave the
annulus (or disc, when a = 0).  The angle is deliberately not wrapped
modulo 2*pi: its boundary behaviour is part of the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drivers import JumpSpec, RandomSource
from .errors import DomainError
from .simulator import PathSample, SimConfig, simulate_path

TWO_PI = 2.0 * np.pi
_ANGLE_TOL = 1e-9


def to_cartesian(radius, angle) -> tuple:
    """(r cos phi, r sin phi) per step."""
    r = np.asarray(radius, dtype=float)
    phi = np.asarray(angle, dtype=float)
    if r.shape != phi.shape:
        raise DomainError(
            f"radius and angle lengths differ ({r.shape} vs {phi.shape})"
        )
    return r * np.cos(phi), r * np.sin(phi)


@dataclass(frozen=True)
class PolarTrajectory:
    times: np.ndarray
    radius: np.ndarray
    angle: np.ndarray
    corridor_index: np.ndarray | None = None
    path_index: int = 0

    def __post_init__(self):
        if not (len(self.times) == len(self.radius) == len(self.angle)):
            raise DomainError("times, radius and angle must have equal length")
        if np.any(self.angle < -_ANGLE_TOL) or np.any(self.angle > TWO_PI + _ANGLE_TOL):
            raise DomainError("angle values must lie in [0, 2*pi]")

    def cartesian(self) -> tuple:
        return to_cartesian(self.radius, self.angle)


def annulus_check(traj: PolarTrajectory, a: float, d: float, tol: float = 0.0) -> list:
    """Indices whose Cartesian norm escapes [a - tol, d + tol]; expect []."""
    if not 0.0 <= a < d:
        raise DomainError("need 0 <= inner radius < outer radius")
    x, y = traj.cartesian()
    norm = np.hypot(x, y)
    bad = (norm < a - tol) | (norm > d + tol)
    return [int(i) for i in np.nonzero(bad)[0]]


def from_paths(radial: PathSample, angular: PathSample) -> PolarTrajectory:
    """Pair two already-simulated coordinate paths into a trajectory."""
    if len(radial.times) != len(angular.times):
        raise DomainError("coordinate paths recorded on different grids")
    return PolarTrajectory(
        times=radial.times,
        radius=radial.values,
        angle=angular.values,
        corridor_index=radial.corridor_index,
        path_index=radial.path_index,
    )


def simulate_polar_path(
    radial_cs, radial_lower, radial_upper,
    angular_cs, angular_lower, angular_upper,
    cfg_r: SimConfig,
    cfg_phi: SimConfig,
    src: RandomSource,
    jump_r: JumpSpec | None = None,
    jump_phi: JumpSpec | None = None,
) -> PolarTrajectory:
    """Simulate both coordinates on derived independent streams.

    The radius uses the source's child stream 0, the angle child stream 1,
    so the pair is reproducible from (master seed, path index) alone.
    """
    p_r = simulate_path(radial_cs, radial_lower, radial_upper, cfg_r,
                        src.child(0), jump=jump_r)
    p_phi = simulate_path(angular_cs, angular_lower, angular_upper, cfg_phi,
                          src.child(1), jump=jump_phi)
    return from_paths(p_r, p_phi)


def simulate_polar_ensemble(
    radial_cs, radial_lower, radial_upper,
    angular_cs, angular_lower, angular_upper,
    cfg_r: SimConfig,
    cfg_phi: SimConfig,
    src: RandomSource,
    n_paths: int,
    jump_r: JumpSpec | None = None,
    jump_phi: JumpSpec | None = None,
) -> list:
    return [
        simulate_polar_path(
            radial_cs, radial_lower, radial_upper,
            angular_cs, angular_lower, angular_upper,
            cfg_r, cfg_phi, src.for_path(i), jump_r=jump_r, jump_phi=jump_phi,
        )
        for i in range(n_paths)
    ]


def radial_histogram(
    trajectories: list, bins: int = 40, span: tuple | None = None
) -> tuple:
    """Occupancy fractions of the radius over an ensemble.

    Returns (fractions, bin edges); fractions sum to 1 and expose where
    the radial process accumulates.
    """
    values = np.concatenate([np.asarray(t.radius, dtype=float) for t in trajectories])
    counts, edges = np.histogram(values, bins=bins, range=span)
    return counts / counts.sum(), edges
