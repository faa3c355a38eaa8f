"""Stochastic drivers: per-path random streams, Brownian increments and
finite-activity unit-jump arrival times.

Streams are counter-based (Philox) and derived from (master_seed,
path_index), so any path's randomness can be reproduced in isolation and
paths can be simulated in parallel in any order without affecting results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

INDEPENDENT = "independent"
COMMON = "common"
THINNED = "thinned"


@dataclass(frozen=True)
class RandomSource:
    master_seed: int
    path_index: int = 0
    #: extra derivation coordinates (e.g. one per polar coordinate process)
    spawn: tuple = ()

    def generator(self) -> np.random.Generator:
        """Fresh generator at the start of this path's stream."""
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=(int(self.path_index),) + tuple(int(k) for k in self.spawn),
        )
        return np.random.Generator(np.random.Philox(seq))

    def for_path(self, path_index: int) -> "RandomSource":
        return RandomSource(self.master_seed, path_index, self.spawn)

    def child(self, key: int) -> "RandomSource":
        """Derived independent stream, e.g. for a second coordinate."""
        return RandomSource(self.master_seed, self.path_index, self.spawn + (int(key),))


@dataclass(frozen=True)
class JumpSpec:
    """Poisson arrivals with unit jump size (finite activity)."""

    intensity: float = 0.0
    correlation: str = INDEPENDENT
    thinning_p: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.intensity) or self.intensity < 0:
            raise ConfigurationError("jump intensity must be finite and >= 0")
        if self.correlation not in (INDEPENDENT, COMMON, THINNED):
            raise ConfigurationError(f"unknown jump correlation {self.correlation!r}")
        if not 0.0 <= self.thinning_p <= 1.0:
            raise ConfigurationError("thinning probability must lie in [0, 1]")


def brownian_increments(src: RandomSource, dt: float, n: int) -> np.ndarray:
    """n i.i.d. N(0, dt) increments from the source's stream."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    if n < 0:
        raise DomainError("n must be >= 0")
    rng = src.generator()
    return rng.normal(0.0, np.sqrt(dt), size=n)


def _arrival_times(rng: np.random.Generator, intensity: float, horizon: float) -> np.ndarray:
    if intensity == 0.0:
        return np.empty(0)
    times = []
    t = 0.0
    # draw exponentials in chunks to limit generator call overhead
    chunk = max(16, int(intensity * horizon * 1.5) + 8)
    while True:
        gaps = rng.exponential(1.0 / intensity, size=chunk)
        for g in gaps:
            t += g
            if t > horizon:
                return np.array(times)
            times.append(t)


def poisson_jump_times(src: RandomSource, spec: JumpSpec, horizon: float) -> np.ndarray:
    """Strictly increasing arrival times in (0, horizon]."""
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    rng = src.generator()
    return _arrival_times(rng, spec.intensity, horizon)


def correlated_jump_times(
    src: RandomSource, spec: JumpSpec, horizon: float
) -> tuple[np.ndarray, np.ndarray]:
    """Arrival-time pair for two coordinate processes.

    "common" reuses the same arrivals, "thinned" shares each arrival with
    probability p (unshared arrivals are replaced by independent ones), and
    "independent" draws two separate streams.
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    rng = src.generator()
    first = _arrival_times(rng, spec.intensity, horizon)
    if spec.correlation == COMMON:
        return first, first.copy()
    if spec.correlation == INDEPENDENT:
        second = _arrival_times(rng, spec.intensity, horizon)
        return first, second
    keep = rng.random(size=len(first)) < spec.thinning_p
    extra = _arrival_times(rng, spec.intensity * (1.0 - spec.thinning_p), horizon)
    second = np.sort(np.concatenate([first[keep], extra]))
    return first, second


def correlated_brownian_pair(
    src: RandomSource, rho: float, dt: float, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Two increment sequences with per-step correlation rho."""
    if not -1.0 <= rho <= 1.0:
        raise DomainError("rho must lie in [-1, 1]")
    if dt <= 0:
        raise DomainError("dt must be positive")
    rng = src.generator()
    s = np.sqrt(dt)
    first = rng.normal(0.0, s, size=n)
    indep = rng.normal(0.0, s, size=n)
    second = rho * first + np.sqrt(1.0 - rho * rho) * indep
    return first, second
