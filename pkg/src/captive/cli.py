"""Command-line entry point: deterministic runs, bit-stable artifacts.

Every subcommand reads one TOML config, validates it before touching the
RNG, simulates, and writes its outputs atomically (temp file + rename)
together with a manifest carrying sha256 checksums, the full config echo,
the seed and the package version.  Identical (config, seed) inputs yield
byte-identical artifact sets regardless of CAPTIVE_THREADS.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import boundary as bd
from . import config as cfgmod
from .boundary import validate_pair
from .coefficients import check_admissibility
from .corridors import (
    corridor_occupancy,
    run_corridor_ensemble,
    validate_corridor_drift,
)
from .drivers import JumpSpec, RandomSource
from .errors import (
    CaptiveError,
    ConfigurationError,
    NumericalError,
    StatisticalError,
)
from .geometry import annulus_check, from_paths, radial_histogram, simulate_polar_ensemble
from .simulator import run_ensemble, validate_monotone_bounds
from .transforms import builtin_monotone, map_path
from .transitions import (
    TransitionQuery,
    bin_averaged_probability,
    estimate_transition_mc,
    transition_matrix,
    transition_probability,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5

_FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    return _FLOAT_FMT % float(x)


def _fail(stage: str, exc: Exception, code: int):
    payload = {
        "error": type(exc).__name__,
        "stage": stage,
        "message": str(exc),
    }
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    sys.exit(code)


def _atomic_write(path: Path, data: bytes) -> str:
    """Write via temp file + rename; returns the sha256 hex digest."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def _json_bytes(obj) -> bytes:
    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.ndarray):
            return [clean(x) for x in v.tolist()]
        if isinstance(v, (np.floating, float)):
            return float(v)
        if isinstance(v, (np.integer, int)):
            return int(v)
        if isinstance(v, (np.bool_, bool)):
            return bool(v)
        return v

    return (json.dumps(clean(obj), sort_keys=True, indent=2) + "\n").encode()


def _path_csv_bytes(p, with_corridor: bool = False) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t", "x", "jump"] + (["corridor"] if with_corridor else [])
    w.writerow(header)
    for i in range(len(p.times)):
        row = [_fmt(p.times[i]), _fmt(p.values[i]), int(p.jump_flags[i])]
        if with_corridor:
            row.append(int(p.corridor_index[i]))
        w.writerow(row)
    return buf.getvalue().encode()


class _Manifest:
    def __init__(self, outdir: Path, doc: dict, seed: int, subcommand: str):
        self.outdir = outdir
        self.entries = {}
        self.doc = doc
        self.seed = seed
        self.subcommand = subcommand

    def write(self, rel: str, data: bytes):
        digest = _atomic_write(self.outdir / rel, data)
        self.entries[rel] = {"sha256": digest, "bytes": len(data)}

    def finish(self):
        body = {
            "subcommand": self.subcommand,
            "version": __version__,
            "seed": self.seed,
            "config": self.doc,
            "outputs": self.entries,
        }
        _atomic_write(self.outdir / "manifest.json", _json_bytes(body))


def _load(config_path, seed, paths):
    doc = cfgmod.load_config(config_path)
    sim = cfgmod.build_simconfig(doc, seed=seed, n_paths=paths)
    jump = cfgmod.build_jump(doc)
    bounds = cfgmod.build_boundaries(doc, sim.horizon)
    cs = cfgmod.build_coefficients(doc)
    return doc, sim, jump, bounds, cs


def _validate_stage(cs, lower, upper, grid):
    report = validate_pair(lower, upper, grid)
    if not report.ok:
        raise ConfigurationError(f"boundary pair invalid: {report.messages[0]}")
    adm = check_admissibility(cs, lower, upper, grid)
    if not adm.ok:
        for name in ("drift", "vol", "jump"):
            cond = getattr(adm, name)
            if not cond.ok:
                raise ConfigurationError(
                    f"admissibility condition '{name}' failed: {cond.first_counterexample}"
                )
    mono = validate_monotone_bounds(cs, lower, upper, grid)
    if mono.applies and not mono.ok:
        t, which, deriv = mono.first_violation
        raise ConfigurationError(
            f"monotone-boundary condition failed: {which} boundary has slope "
            f"{deriv:g} at t={t:g}"
        )


_common = [
    click.option("--config", "config_path", required=True,
                 type=click.Path(), help="TOML run configuration."),
    click.option("--seed", type=int, default=None, help="Override the config seed."),
    click.option("--paths", type=int, default=None, help="Override n_paths."),
    click.option("--out", "outdir", type=click.Path(), default=None,
                 help="Output directory (default from config, else ./out)."),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


def _outdir(doc, outdir) -> Path:
    if outdir:
        return Path(outdir)
    return Path(doc.get("output", {}).get("directory", "out"))


@click.group()
@click.version_option(__version__)
def main():
    """Simulate jump-diffusions confined to moving bounded domains."""


@main.command()
@_with_common
def simulate(config_path, seed, paths, outdir):
    """Plain two-boundary ensemble: paths/*.csv + summary.json."""
    try:
        doc, sim, jump, bounds, cs = _load(config_path, seed, paths)
        lower, upper = cfgmod.resolve_pair(doc, bounds)
    except CaptiveError as exc:
        _fail("config", exc, EXIT_CONFIG)
    try:
        _validate_stage(cs, lower, upper, sim.time_grid())
    except CaptiveError as exc:
        _fail("validation", exc, EXIT_VALIDATION)
    store = int(doc.get("output", {}).get("store_paths", min(sim.n_paths, 10)))
    try:
        summary = run_ensemble(cs, lower, upper, sim, jump=jump,
                               store_paths=store, validate=False)
    except NumericalError as exc:
        _fail("simulation", exc, EXIT_NUMERICAL)
    try:
        man = _Manifest(_outdir(doc, outdir), doc, sim.seed, "simulate")
        for p in summary.stored_paths:
            man.write(f"paths/path_{p.path_index:05d}.csv", _path_csv_bytes(p))
        man.write("summary.json", _json_bytes({
            "n_paths": summary.n_paths,
            "seed": summary.seed,
            "clamp_count": summary.clamp_count,
            "captivity_violations": summary.captivity_violations,
            "jump_count": summary.jump_count,
            "deferred_jumps": summary.deferred_jumps,
            "dropped_jumps": summary.dropped_jumps,
            "boundary_hits": summary.boundary_hits,
            "mean_final": summary.mean_final,
            "stderr_final": summary.stderr_final,
            "times": summary.times,
            "mean": summary.mean,
            "variance": summary.variance,
            "min": summary.min,
            "max": summary.max,
        }))
        man.finish()
    except OSError as exc:
        _fail("output", exc, EXIT_IO)


@main.command()
@_with_common
def corridors(config_path, seed, paths, outdir):
    """Corridor ensemble: paths with corridor indices + occupancy summary."""
    try:
        doc, sim, jump, bounds, cs = _load(config_path, seed, paths)
        model = cfgmod.build_corridor_model(doc, bounds)
    except CaptiveError as exc:
        _fail("config", exc, EXIT_CONFIG)
    try:
        model.validate_ordering(sim.time_grid())
        problems = validate_corridor_drift(model, cs, sim.time_grid()[:: max(1, sim.n_steps // 200)])
        if problems:
            raise ConfigurationError(problems[0])
    except CaptiveError as exc:
        _fail("validation", exc, EXIT_VALIDATION)
    try:
        run = run_corridor_ensemble(model, cs, sim, jump=jump)
    except NumericalError as exc:
        _fail("simulation", exc, EXIT_NUMERICAL)
    occ = corridor_occupancy(run.paths, model)
    store = int(doc.get("output", {}).get("store_paths", min(sim.n_paths, 10)))
    try:
        man = _Manifest(_outdir(doc, outdir), doc, sim.seed, "corridors")
        for p in run.paths[:store]:
            man.write(f"paths/path_{p.path_index:05d}.csv",
                      _path_csv_bytes(p, with_corridor=True))
        man.write("summary.json", _json_bytes({
            "n_paths": sim.n_paths,
            "seed": run.seed,
            "clamp_count": run.clamp_count,
            "master_violations": run.master_violations,
            "jump_count": run.jump_count,
            "occupancy": occ.time_fraction,
            "transitions": occ.transitions,
            "skip_count": occ.skip_count,
            "off_jump_changes": occ.off_jump_changes,
        }))
        man.finish()
    except OSError as exc:
        _fail("output", exc, EXIT_IO)


@main.command()
@_with_common
@click.option("--summary", "with_summary", is_flag=True,
              help="Also emit the radial occupancy histogram.")
def polar(config_path, seed, paths, outdir, with_summary):
    """Two-coordinate polar trajectories: CSV per path (t,r,phi,x,y)."""
    try:
        doc = cfgmod.load_config(config_path)
        pol = doc.get("polar")
        if not pol or "radial" not in pol or "angular" not in pol:
            raise ConfigurationError(
                "polar runs need [polar.radial] and [polar.angular] sections"
            )

        def coord(section):
            sub = dict(doc)
            sub["simulation"] = {**doc["simulation"], **section.get("simulation", {})}
            sub["boundaries"] = section["boundaries"]
            sub["coefficients"] = section.get("coefficients", doc.get("coefficients", {}))
            sim_c = cfgmod.build_simconfig(sub, seed=seed, n_paths=paths)
            bounds = cfgmod.build_boundaries(sub, sim_c.horizon)
            lo, up = cfgmod.resolve_pair(sub, bounds)
            cs_c = cfgmod.build_coefficients(sub)
            jump_c = cfgmod.build_jump({"jump": section.get("jump", doc.get("jump", {}))})
            return sim_c, lo, up, cs_c, jump_c

        sim_r, lo_r, up_r, cs_r, jump_r = coord(pol["radial"])
        sim_p, lo_p, up_p, cs_p, jump_p = coord(pol["angular"])
        if sim_r.n_steps != sim_p.n_steps:
            raise ConfigurationError("radial and angular grids must match")
    except CaptiveError as exc:
        _fail("config", exc, EXIT_CONFIG)
    try:
        _validate_stage(cs_r, lo_r, up_r, sim_r.time_grid())
        _validate_stage(cs_p, lo_p, up_p, sim_p.time_grid())
    except CaptiveError as exc:
        _fail("validation", exc, EXIT_VALIDATION)
    try:
        trajs = simulate_polar_ensemble(
            cs_r, lo_r, up_r, cs_p, lo_p, up_p, sim_r, sim_p,
            RandomSource(sim_r.seed), sim_r.n_paths,
            jump_r=jump_r, jump_phi=jump_p,
        )
    except NumericalError as exc:
        _fail("simulation", exc, EXIT_NUMERICAL)
    a = float(lo_r.eval(0.0))
    d = float(up_r.eval(0.0))
    violations = sum(len(annulus_check(t, a, d, tol=sim_r.clamp_tolerance)) for t in trajs)
    store = int(doc.get("output", {}).get("store_paths", min(sim_r.n_paths, 10)))
    try:
        man = _Manifest(_outdir(doc, outdir), doc, sim_r.seed, "polar")
        for t in trajs[:store]:
            x, y = t.cartesian()
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["t", "r", "phi", "x", "y"])
            for i in range(len(t.times)):
                w.writerow([_fmt(t.times[i]), _fmt(t.radius[i]), _fmt(t.angle[i]),
                            _fmt(x[i]), _fmt(y[i])])
            man.write(f"paths/polar_{t.path_index:05d}.csv", buf.getvalue().encode())
        summary = {
            "n_paths": sim_r.n_paths,
            "seed": sim_r.seed,
            "inner_radius": a,
            "outer_radius": d,
            "annulus_violations": violations,
        }
        if with_summary:
            frac, edges = radial_histogram(trajs, bins=int(pol.get("bins", 40)),
                                           span=(a, d))
            summary["radial_histogram"] = {"fractions": frac, "edges": edges}
        man.write("summary.json", _json_bytes(summary))
        man.finish()
    except OSError as exc:
        _fail("output", exc, EXIT_IO)


@main.command()
@_with_common
def transitions(config_path, seed, paths, outdir):
    """Analytic corridor-transition matrix, optionally checked by MC."""
    try:
        doc, sim, jump, bounds, cs = _load(config_path, seed, paths)
        model = cfgmod.build_corridor_model(doc, bounds)
        tsec = doc.get("transitions", {})
    except CaptiveError as exc:
        _fail("config", exc, EXIT_CONFIG)
    try:
        model.validate_ordering(sim.time_grid())
    except CaptiveError as exc:
        _fail("validation", exc, EXIT_VALIDATION)

    lam = jump.intensity if jump else 0.0
    p_step = float(1.0 - np.exp(-lam * sim.dt))
    edges = tuple(float(b.eval(0.0)) for b in model.boundaries)
    master = (edges[0], edges[-1])
    matrix = transition_matrix(edges, p_step)

    def corridor_of(x):
        for i in range(len(edges) - 1):
            if edges[i] <= x < edges[i + 1] or (i == len(edges) - 2 and x == edges[i + 1]):
                return (edges[i], edges[i + 1])
        raise ConfigurationError(f"query value {x} outside the master domain")

    rows = []
    try:
        for qspec in tsec.get("queries", ()):
            x = float(qspec["x"])
            to = tuple(float(v) for v in qspec["to"])
            width = float(qspec.get("bin_width", 0.04))
            q = TransitionQuery(x, corridor_of(x), to, master, jump_prob=p_step)
            analytic = transition_probability(q)
            est = estimate_transition_mc(
                model, cs, sim, jump, x - width / 2, x + width / 2, to,
            )
            rows.append({
                "x": x, "from": q.from_corridor, "to": to,
                "analytic": analytic,
                "analytic_bin_avg": bin_averaged_probability(q, x - width / 2, x + width / 2),
                "mc_estimate": est.estimate,
                "ci_lo": est.ci_lo, "ci_hi": est.ci_hi,
            })
    except StatisticalError as exc:
        _fail("estimation", exc, EXIT_NUMERICAL)
    except CaptiveError as exc:
        _fail("config", exc, EXIT_CONFIG)

    try:
        man = _Manifest(_outdir(doc, outdir), doc, sim.seed, "transitions")
        man.write("transitions.json", _json_bytes({
            "edges": edges,
            "jump_prob_per_step": p_step,
            "matrix": matrix,
        }))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "from_lo", "from_hi", "to_lo", "to_hi",
                    "analytic", "mc_estimate", "ci_lo", "ci_hi"])
        for r in rows:
            w.writerow([_fmt(r["x"]), _fmt(r["from"][0]), _fmt(r["from"][1]),
                        _fmt(r["to"][0]), _fmt(r["to"][1]), _fmt(r["analytic"]),
                        _fmt(r["mc_estimate"]), _fmt(r["ci_lo"]), _fmt(r["ci_hi"])])
        man.write("transitions.csv", buf.getvalue().encode())
        man.finish()
    except OSError as exc:
        _fail("output", exc, EXIT_IO)


@main.command()
@_with_common
@click.option("--input", "input_csv", type=click.Path(), default=None,
              help="Stored path CSV to transform (default from [transform] input).")
@click.option("--map", "map_name", default=None,
              help="Builtin map: exp, reciprocal, identity.")
def transform(config_path, seed, paths, outdir, input_csv, map_name):
    """Push a stored path through a monotone map."""
    try:
        doc, sim, jump, bounds, cs = _load(config_path, seed, paths)
        lower, upper = cfgmod.resolve_pair(doc, bounds)
        tsec = doc.get("transform", {})
        input_csv = input_csv or tsec.get("input")
        map_name = map_name or tsec.get("map")
        if not input_csv:
            raise ConfigurationError("no input CSV given (--input or [transform] input)")
        if not map_name:
            raise ConfigurationError("no map given (--map or [transform] map)")
        mono = builtin_monotone(map_name)
    except CaptiveError as exc:
        _fail("config", exc, EXIT_CONFIG)
    try:
        data = np.genfromtxt(input_csv, delimiter=",", names=True)
    except OSError as exc:
        _fail("input", exc, EXIT_IO)
    from .simulator import PathSample

    p = PathSample(
        times=np.atleast_1d(data["t"]).astype(float),
        values=np.atleast_1d(data["x"]).astype(float),
        jump_flags=np.atleast_1d(data["jump"]).astype(bool),
        clamp_events=[], boundary_hits=[], path_index=0,
    )
    try:
        mapped, m_lower, m_upper = map_path(p, mono, lower, upper)
    except CaptiveError as exc:
        _fail("validation", exc, EXIT_VALIDATION)
    try:
        man = _Manifest(_outdir(doc, outdir), doc, sim.seed, "transform")
        man.write("paths/mapped.csv", _path_csv_bytes(mapped))
        man.write("summary.json", _json_bytes({
            "map": map_name,
            "direction": mono.direction,
            "source": str(input_csv),
            "mapped_lower": m_lower.values(mapped.times),
            "mapped_upper": m_upper.values(mapped.times),
            "times": mapped.times,
        }))
        man.finish()
    except OSError as exc:
        _fail("output", exc, EXIT_IO)


@main.command()
@_with_common
def validate(config_path, seed, paths, outdir):
    """Run every applicable validator; write the report, simulate nothing."""
    try:
        doc, sim, jump, bounds, cs = _load(config_path, seed, paths)
    except CaptiveError as exc:
        _fail("config", exc, EXIT_CONFIG)
    grid = sim.time_grid()
    report = {"checks": {}, "ok": True}
    try:
        if "corridors" in doc:
            model = cfgmod.build_corridor_model(doc, bounds)
            model.validate_ordering(grid)
            problems = validate_corridor_drift(
                model, cs, grid[:: max(1, sim.n_steps // 200)]
            )
            if problems:
                raise ConfigurationError(problems[0])
            report["checks"]["corridor"] = "pass"
        else:
            lower, upper = cfgmod.resolve_pair(doc, bounds)
            pair = validate_pair(lower, upper, grid)
            if not pair.ok:
                raise ConfigurationError(f"boundary pair invalid: {pair.messages[0]}")
            report["checks"]["pair"] = "pass"
            adm = check_admissibility(cs, lower, upper, grid)
            if not adm.ok:
                for name in ("drift", "vol", "jump"):
                    cond = getattr(adm, name)
                    if not cond.ok:
                        raise ConfigurationError(
                            f"admissibility condition '{name}' failed: "
                            f"{cond.first_counterexample}"
                        )
            report["checks"]["admissibility"] = "pass"
            mono = validate_monotone_bounds(cs, lower, upper, grid)
            if mono.applies and not mono.ok:
                t, which, deriv = mono.first_violation
                raise ConfigurationError(
                    f"monotone-boundary condition failed: {which} boundary has "
                    f"slope {deriv:g} at t={t:g}"
                )
            report["checks"]["monotone_bounds"] = (
                "pass" if mono.applies else "not-applicable"
            )
    except CaptiveError as exc:
        report["ok"] = False
        report["failure"] = str(exc)
        sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
        _fail("validation", exc, EXIT_VALIDATION)
    sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
