"""TOML run configuration: parsing and object construction.

A run is a single document with [simulation], [jump], [boundaries.NAME],
[coefficients] and optional [corridors], [polar], [transitions],
[transform] and [output] sections.  Command-line flags may override only
seed, n_paths and the output directory.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np

from . import boundary as bd
from .coefficients import (
    Martingale,
    MeanReverting,
    PureJump,
    TrigonometricSine,
    Zero,
)
from .corridors import CorridorModel
from .drivers import JumpSpec
from .errors import ConfigurationError
from .simulator import SimConfig

_KINDS = {"lower": bd.LOWER, "upper": bd.UPPER, "continuous": bd.CONTINUOUS}


def load_config(path) -> dict:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {p}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error in {p}: {exc}")
    if "simulation" not in doc:
        raise ConfigurationError("config must contain a [simulation] section")
    return doc


def build_simconfig(doc: dict, seed=None, n_paths=None) -> SimConfig:
    sim = doc.get("simulation", {})
    required = ("dt", "horizon", "x0")
    for key in required:
        if key not in sim:
            raise ConfigurationError(f"[simulation] missing required key {key!r}")
    try:
        return SimConfig(
            dt=float(sim["dt"]),
            horizon=float(sim["horizon"]),
            x0=float(sim["x0"]),
            n_paths=int(n_paths if n_paths is not None else sim.get("n_paths", 1)),
            seed=int(seed if seed is not None else sim.get("seed", 0)),
            clamp_tolerance=float(sim.get("clamp_tolerance", 0.0)),
            record_stride=int(sim.get("record_stride", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad [simulation] value: {exc}")


def build_jump(doc: dict) -> JumpSpec | None:
    j = doc.get("jump")
    if not j:
        return None
    return JumpSpec(
        intensity=float(j.get("intensity", 0.0)),
        correlation=j.get("correlation", "independent"),
        thinning_p=float(j.get("thinning_p", 1.0)),
    )


def build_boundary(spec: dict, horizon: float, name: str = "") -> bd.BoundaryFn:
    kind_key = spec.get("kind", "continuous")
    if kind_key not in _KINDS:
        raise ConfigurationError(
            f"boundary {name!r}: unknown kind {kind_key!r} "
            f"(expected one of {sorted(_KINDS)})"
        )
    kind = _KINDS[kind_key]
    jumps = tuple((float(t), float(d)) for t, d in spec.get("jumps", ()))
    shape = spec.get("shape", "constant")
    try:
        if shape == "constant":
            return bd.constant(float(spec["value"]), horizon, kind=kind,
                               jumps=jumps, name=name)
        if shape == "linear":
            return bd.linear(float(spec["value"]), float(spec["slope"]), horizon,
                             kind=kind, jumps=jumps, name=name)
        if shape == "sinusoid":
            return bd.sinusoid(float(spec["amp"]), float(spec["freq"]),
                               float(spec.get("phase", 0.0)), float(spec["offset"]),
                               horizon, kind=kind, jumps=jumps, name=name)
        if shape == "table":
            return bd.from_table(spec["times"], spec["values"], kind=kind,
                                 jumps=jumps, name=name)
    except KeyError as exc:
        raise ConfigurationError(f"boundary {name!r}: missing key {exc} for shape {shape!r}")
    raise ConfigurationError(f"boundary {name!r}: unknown shape {shape!r}")


def build_boundaries(doc: dict, horizon: float) -> dict:
    section = doc.get("boundaries")
    if not section:
        raise ConfigurationError("config must define at least one [boundaries.NAME]")
    return {
        name: build_boundary(spec, horizon, name=name)
        for name, spec in section.items()
    }


_FAMILIES = {"mean-reverting", "trig-sine", "martingale", "pure-jump", "zero"}


def build_coefficients(doc: dict):
    c = doc.get("coefficients", {})
    family = c.get("family", "mean-reverting")
    if family not in _FAMILIES:
        raise ConfigurationError(
            f"unknown coefficient family {family!r} (expected one of {sorted(_FAMILIES)})"
        )
    theta = c.get("theta", "uniform")
    if family == "mean-reverting":
        return MeanReverting(
            kappa=float(c.get("kappa", 1.0)),
            beta=float(c.get("beta", 0.0)),
            alpha=float(c.get("alpha", 1.0)),
            theta=theta,
        )
    if family == "trig-sine":
        return TrigonometricSine(theta=theta)
    if family == "martingale":
        return Martingale(alpha=float(c.get("alpha", 1.0)))
    if family == "pure-jump":
        return PureJump(theta=theta)
    return Zero()


def build_corridor_model(doc: dict, boundaries: dict) -> CorridorModel:
    c = doc.get("corridors")
    if not c:
        raise ConfigurationError("config has no [corridors] section")
    names = c.get("edges")
    if not names:
        raise ConfigurationError("[corridors] must list boundary names under 'edges'")
    stack = []
    for n in names:
        if n not in boundaries:
            raise ConfigurationError(f"[corridors] references unknown boundary {n!r}")
        stack.append(boundaries[n])
    weights = tuple(float(w) for w in c.get("weights", ()))
    segments = tuple(tuple(map(float, s)) for s in c.get("segments", ()))
    return CorridorModel(boundaries=tuple(stack), weights=weights, segments=segments)


def resolve_pair(doc: dict, boundaries: dict) -> tuple:
    """The (lower, upper) pair for plain simulation.

    Uses explicit [simulation] lower/upper names when given, otherwise the
    unique lower-admissible and upper-admissible boundaries.
    """
    sim = doc.get("simulation", {})
    lo_name, up_name = sim.get("lower"), sim.get("upper")
    if lo_name or up_name:
        for n in (lo_name, up_name):
            if n not in boundaries:
                raise ConfigurationError(f"[simulation] references unknown boundary {n!r}")
        return boundaries[lo_name], boundaries[up_name]
    lowers = [b for b in boundaries.values() if b.kind == bd.LOWER]
    uppers = [b for b in boundaries.values() if b.kind == bd.UPPER]
    if len(lowers) != 1 or len(uppers) != 1:
        raise ConfigurationError(
            "could not infer the boundary pair; name them via [simulation] lower/upper"
        )
    return lowers[0], uppers[0]
