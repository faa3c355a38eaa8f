"""Acceptance suite: one test per release criterion.

Each test prints a single PASS line (visible with ``pytest -s`` or in the
verbose report); together they gate the release.
"""

import hashlib
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from captive import boundary as bd
from captive.cli import main as cli_main
from captive.coefficients import Martingale, MeanReverting, PureJump
from captive.corridors import CorridorModel, corridor_occupancy, run_corridor_ensemble
from captive.drivers import JumpSpec, RandomSource, brownian_increments
from captive.errors import ConfigurationError
from captive.geometry import annulus_check, radial_histogram, simulate_polar_ensemble
from captive.simulator import (
    SimConfig,
    check_absorption,
    check_captivity,
    run_ensemble,
    simulate_path,
    validate_monotone_bounds,
)
from captive.transforms import builtin_monotone, map_path
from captive.transitions import (
    TransitionQuery,
    estimate_transition_mc,
    transition_probability,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# reference ensemble: band [2, 3], kappa=1, beta=2.5, alpha=1, lambda=2
BAND = (2.0, 3.0)
MR = MeanReverting(kappa=1.0, beta=2.5, alpha=1.0, theta="uniform")
LAMBDA = 2.0


def band(lo, hi, horizon):
    return (bd.constant(lo, horizon, kind="lower"),
            bd.constant(hi, horizon, kind="upper"))


def _report(n, label):
    print(f"ACCEPTANCE {n} ({label}): PASS")


def test_criterion_01_captivity_and_overshoot_scaling():
    lo, hi = band(*BAND, 10.0)
    jump = JumpSpec(intensity=LAMBDA)

    t0 = time.monotonic()
    cfg = SimConfig(dt=1e-3, horizon=10.0, x0=2.5, n_paths=10_000, seed=1001)
    s = run_ensemble(MR, lo, hi, cfg, jump=jump)
    elapsed = time.monotonic() - t0
    assert s.captivity_violations == 0
    assert s.min.min() >= BAND[0] and s.max.max() <= BAND[1]
    assert elapsed < 60.0, f"ensemble took {elapsed:.1f}s"

    # pre-clamp overshoot tail shrinks with the step size (matched seeds)
    p99 = []
    for dt in (1e-2, 1e-3, 1e-4):
        sweep = SimConfig(dt=dt, horizon=10.0, x0=2.5, n_paths=500, seed=77)
        r = run_ensemble(MR, lo, hi, sweep, jump=jump)
        assert r.captivity_violations == 0
        assert len(r.overshoots) > 0
        p99.append(float(np.percentile(r.overshoots, 99)))
    assert p99[0] > p99[1] > p99[2], p99
    _report(1, "captivity and overshoot scaling")


def test_criterion_02_trigonometric_identity():
    from captive.transforms import builtin_bounded, captive_from_bounded, constant_domain

    cs = captive_from_bounded(builtin_bounded("sin"))
    lo, hi = constant_domain(builtin_bounded("sin"), 1.0)
    cfg = SimConfig(dt=1e-4, horizon=1.0, x0=0.0, seed=2002)
    worst = 0.0
    for i in range(100):
        src = RandomSource(2002, i)
        p = simulate_path(cs, lo, hi, cfg, src, validate=(i == 0))
        dW = brownian_increments(src, cfg.dt, cfg.n_steps)
        w = np.concatenate([[0.0], np.cumsum(dW)])
        # the pathwise identity X = sin(W) holds on the principal branch;
        # compare up to the first exit of W from [-pi/2, pi/2]
        out = np.nonzero(np.abs(w) > np.pi / 2)[0]
        stop = int(out[0]) if len(out) else len(w)
        worst = max(worst, float(np.max(np.abs(p.values[:stop] - np.sin(w[:stop])))))
        assert np.all(np.abs(p.values) <= 1.0)
    assert worst <= 0.05, worst
    _report(2, f"trigonometric identity, max deviation {worst:.4f}")


@pytest.mark.parametrize("x0", [2.1, 2.5, 2.9])
def test_criterion_03_martingale_preservation(x0):
    lo, hi = band(*BAND, 1.0)
    cfg = SimConfig(dt=1e-3, horizon=1.0, x0=x0, n_paths=10_000, seed=3003)
    s = run_ensemble(Martingale(alpha=1.0), lo, hi, cfg)
    assert abs(s.mean_final - x0) <= 3 * s.stderr_final
    _report(3, f"martingale preservation at x0={x0}")


def test_criterion_04_monotone_boundary_rejection():
    lo = bd.constant(2.0, 10.0, kind="lower")
    shrinking = bd.linear(3.0, -0.05, 10.0, kind="upper")
    grid = np.linspace(0, 10, 201)

    rep = validate_monotone_bounds(PureJump(theta="uniform"), lo, shrinking, grid)
    assert rep.applies and not rep.ok
    cfg = SimConfig(dt=1e-2, horizon=10.0, x0=2.5, seed=4)
    with pytest.raises(ConfigurationError):
        simulate_path(PureJump(theta="uniform"), lo, shrinking, cfg, RandomSource(4),
                      jump=JumpSpec(intensity=LAMBDA))

    # the same boundary with full drift and volatility is accepted
    # (mean reversion strong enough to stay inward against the moving bound)
    full = MeanReverting(kappa=2.0, beta=2.2, alpha=1.0, theta="uniform")
    rep2 = validate_monotone_bounds(full, lo, shrinking, grid)
    assert not rep2.applies and rep2.ok
    p = simulate_path(full, lo, shrinking, cfg, RandomSource(4),
                      jump=JumpSpec(intensity=LAMBDA))
    assert check_captivity(p, lo, shrinking, tol=0.0) == []
    _report(4, "monotone-boundary rejection")


def test_criterion_05_absorption_on_constant_boundaries():
    lo, hi = band(*BAND, 10.0)
    cfg = SimConfig(dt=2e-2, horizon=10.0, x0=2.9, n_paths=400, seed=5005)
    s = run_ensemble(Martingale(alpha=3.0), lo, hi, cfg, store_paths=400)
    hit = passed = 0
    for p in s.stored_paths:
        rep = check_absorption(p, lo, hi)
        if rep.hit:
            hit += 1
            passed += rep.ok
    assert hit > 0
    assert passed == hit, f"{passed}/{hit} absorbed paths stayed put"
    _report(5, f"absorption: {hit}/{hit} boundary-hitting paths stay absorbed")


def _figure4_model(T=10.0):
    bs = (bd.constant(1.0, T, kind="lower"),
          bd.constant(2.0, T, kind="continuous"),
          bd.constant(2.5, T, kind="continuous"),
          bd.constant(3.5, T, kind="upper"))
    return CorridorModel(bs, weights=(0.5, 0.5, 0.5))


CORRIDOR_CS = MeanReverting(kappa=1.0, alpha=1.0, theta="uniform")


def test_criterion_06_corridor_confinement():
    model = _figure4_model()
    cfg = SimConfig(dt=1e-3, horizon=10.0, x0=1.4, n_paths=1000, seed=6006)
    run = run_corridor_ensemble(model, CORRIDOR_CS, cfg, jump=JumpSpec(intensity=LAMBDA))
    assert run.master_violations == 0                      # (i) within [1, 3.5]
    occ = corridor_occupancy(run.paths, model)
    assert occ.off_jump_changes == 0                       # (ii) changes only at jumps
    assert occ.transitions[0, 2] >= 1                      # (iii) skip [a,b) -> [c,d]
    _report(6, f"corridor confinement, {occ.transitions[0, 2]} corridor-skipping jumps")


def test_criterion_07_transition_oracle():
    t0 = time.monotonic()
    model = _figure4_model()
    master = (1.0, 3.5)
    jump = JumpSpec(intensity=LAMBDA)
    cfg = SimConfig(dt=1e-3, horizon=10.0, x0=1.9, n_paths=1000, seed=7007)
    p_step = 1.0 - np.exp(-LAMBDA * cfg.dt)

    # analytic vs numeric integration of the uniform theta density
    query = TransitionQuery(1.9, (1.0, 2.0), (2.5, 3.5), master, jump_prob=p_step)
    analytic = transition_probability(query)
    m = min(1.9 - 1.0, 3.5 - 1.9)
    th = np.linspace(-1, 1, 2_000_001)
    landed = (1.9 + th * m >= 2.5) & (1.9 + th * m < 3.5)
    oracle = float(np.trapezoid(landed * 0.5, th)) * p_step
    assert analytic == pytest.approx(oracle, abs=1e-4)

    # analytic vs Monte-Carlo (Wilson 95% interval over >= 1e5 conditioning steps)
    est = estimate_transition_mc(model, CORRIDOR_CS, cfg, jump, 1.88, 1.92, (2.5, 3.5))
    assert est.n_conditioning >= 100_000
    assert est.ci_lo <= analytic <= est.ci_hi

    # zero rule: unreachable corridor gives literal 0 and no MC events
    zq = TransitionQuery(1.5, (1.0, 2.0), (2.5, 3.5), master, jump_prob=p_step)
    assert transition_probability(zq) == 0.0
    cfg_z = SimConfig(dt=1e-3, horizon=10.0, x0=1.5, n_paths=200, seed=7008)
    est_z = estimate_transition_mc(model, CORRIDOR_CS, cfg_z, jump, 1.48, 1.52, (2.5, 3.5))
    assert est_z.n_events == 0 and est_z.estimate == 0.0

    elapsed = time.monotonic() - t0
    assert elapsed < 300.0
    _report(7, f"transition oracle, mc=[{est.ci_lo:.2e}, {est.ci_hi:.2e}]")


def test_criterion_08_transform_preservation():
    lo, hi = band(*BAND, 5.0)
    cfg = SimConfig(dt=1e-3, horizon=5.0, x0=2.5, n_paths=100, seed=8008,
                    clamp_tolerance=0.0)
    s = run_ensemble(MR, lo, hi, cfg, jump=JumpSpec(intensity=LAMBDA), store_paths=100)
    for name in ("exp", "reciprocal"):
        mono = builtin_monotone(name)
        for p in s.stored_paths:
            mp, mlo, mhi = map_path(p, mono, lo, hi)
            assert check_captivity(mp, mlo, mhi, tol=1e-9) == []
            np.testing.assert_array_equal(mp.jump_flags, p.jump_flags)
    _report(8, "transform preservation (exp, reciprocal)")


def test_criterion_09_polar_demos():
    T = 2.0
    # annular confinement for each (inner, outer) configuration
    for a, d in ((0.0, 3.5), (1.0, 3.0), (1.5, 2.5), (1.5, 2.0)):
        cs_r = MeanReverting(kappa=1.0, beta=(a + d) / 2, alpha=1.0, theta="uniform")
        cs_p = MeanReverting(kappa=1.0, beta=np.pi, alpha=0.2, theta="uniform")
        trajs = simulate_polar_ensemble(
            cs_r, *band(a, d, T), cs_p, *band(0.0, 2 * np.pi, T),
            SimConfig(dt=1e-3, horizon=T, x0=(a + d) / 2, seed=9009),
            SimConfig(dt=1e-3, horizon=T, x0=np.pi, seed=9009),
            RandomSource(9009), n_paths=10,
            jump_r=JumpSpec(intensity=LAMBDA), jump_phi=JumpSpec(intensity=LAMBDA),
        )
        for traj in trajs:
            assert annulus_check(traj, a, d) == []

    # radial occupancy comparison on the disc of radius 4: strong boundary
    # accumulation at alpha=1 versus centre accumulation at alpha=0.25
    hists = {}
    for alpha in (1.0, 0.25):
        cs_r = MeanReverting(kappa=1.0, beta=2.0, alpha=alpha, theta="uniform")
        cs_p = MeanReverting(kappa=1.0, beta=np.pi, alpha=0.2, theta="uniform")
        trajs = simulate_polar_ensemble(
            cs_r, *band(0.0, 4.0, T), cs_p, *band(0.0, 2 * np.pi, T),
            SimConfig(dt=1e-3, horizon=T, x0=2.0, seed=9010),
            SimConfig(dt=1e-3, horizon=T, x0=np.pi, seed=9010),
            RandomSource(9010), n_paths=20, jump_r=JumpSpec(intensity=LAMBDA),
        )
        frac, edges = radial_histogram(trajs, bins=40, span=(0.0, 4.0))
        assert frac.sum() == pytest.approx(1.0)
        hists[alpha] = frac
    assert not np.allclose(hists[1.0], hists[0.25])
    _report(9, "polar annulus confinement and radial occupancy histograms")


def test_criterion_10_deterministic_artifacts(tmp_path, monkeypatch):
    def digest(root: Path) -> dict:
        return {
            str(f.relative_to(root)): hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(root.rglob("*")) if f.is_file()
        }

    runner = CliRunner()
    for sub, config in (("simulate", "mean_reverting.toml"),
                        ("corridors", "corridor.toml")):
        outs = []
        for i, threads in enumerate(("1", "1", "4")):
            monkeypatch.setenv("CAPTIVE_THREADS", threads)
            out = tmp_path / f"{sub}_{i}"
            res = runner.invoke(cli_main, [sub, "--config", str(CONFIGS / config),
                                           "--out", str(out)])
            assert res.exit_code == 0, res.output
            outs.append(digest(out))
        assert outs[0] == outs[1] == outs[2], f"{sub} artifacts differ"
    _report(10, "byte-identical artifacts across reruns and worker counts")
