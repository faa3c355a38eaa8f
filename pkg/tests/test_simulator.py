"""Discretization engine: captivity, determinism, jump snapping, audits."""

import numpy as np
import pytest

from captive import boundary as bd
from captive.coefficients import Custom, Martingale, MeanReverting, PureJump
from captive.drivers import JumpSpec, RandomSource
from captive.errors import ConfigurationError, NumericalError
from captive.simulator import (
    PathSample,
    SimConfig,
    _jump_schedule,
    check_absorption,
    check_captivity,
    run_ensemble,
    simulate_path,
    validate_monotone_bounds,
)

T = 10.0


def band(lo=2.0, hi=3.0):
    return (bd.constant(lo, T, kind="lower"), bd.constant(hi, T, kind="upper"))


MR = MeanReverting(kappa=1.0, beta=2.5, alpha=1.0, theta="uniform")
JUMP = JumpSpec(intensity=2.0)


def test_simconfig_validation():
    with pytest.raises(ConfigurationError):
        SimConfig(dt=-0.1, horizon=1.0, x0=0.0)
    with pytest.raises(ConfigurationError):
        SimConfig(dt=0.3, horizon=1.0, x0=0.0)  # dt does not divide T
    cfg = SimConfig(dt=1e-3, horizon=1.0, x0=0.0)
    assert cfg.n_steps == 1000
    assert len(cfg.time_grid()) == 1001


def test_path_stays_in_band():
    lo, hi = band()
    cfg = SimConfig(dt=1e-3, horizon=T, x0=2.5, seed=1)
    p = simulate_path(MR, lo, hi, cfg, RandomSource(1), jump=JUMP)
    assert check_captivity(p, lo, hi, tol=0.0) == []
    assert p.values[0] == 2.5
    assert len(p.values) == cfg.n_steps + 1


def test_invalid_configuration_rejected_before_simulation():
    lo, hi = band()
    bad = MeanReverting(kappa=1.0, beta=5.0, alpha=1.0)  # outward drift at U
    cfg = SimConfig(dt=1e-3, horizon=T, x0=2.5)
    with pytest.raises(ConfigurationError):
        simulate_path(bad, lo, hi, cfg, RandomSource(0))


def test_ensemble_determinism_across_worker_counts(monkeypatch):
    lo, hi = band()
    cfg = SimConfig(dt=1e-3, horizon=T, x0=2.5, n_paths=40, seed=5)
    monkeypatch.setenv("CAPTIVE_THREADS", "1")
    s1 = run_ensemble(MR, lo, hi, cfg, jump=JUMP, store_paths=3)
    monkeypatch.setenv("CAPTIVE_THREADS", "4")
    s2 = run_ensemble(MR, lo, hi, cfg, jump=JUMP, store_paths=3)
    np.testing.assert_array_equal(s1.mean, s2.mean)
    np.testing.assert_array_equal(s1.variance, s2.variance)
    assert s1.jump_count == s2.jump_count
    for a, b in zip(s1.stored_paths, s2.stored_paths):
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.jump_flags, b.jump_flags)


def test_single_path_matches_ensemble_member():
    lo, hi = band()
    cfg = SimConfig(dt=1e-3, horizon=T, x0=2.5, n_paths=3, seed=9)
    summary = run_ensemble(MR, lo, hi, cfg, jump=JUMP, store_paths=3)
    p1 = simulate_path(MR, lo, hi, cfg, RandomSource(9, 1), jump=JUMP)
    stored = [p for p in summary.stored_paths if p.path_index == 1][0]
    np.testing.assert_array_equal(stored.values, p1.values)


def test_record_stride_subsamples_and_aggregates_flags():
    lo, hi = band()
    cfg1 = SimConfig(dt=1e-3, horizon=T, x0=2.5, seed=2)
    cfg10 = SimConfig(dt=1e-3, horizon=T, x0=2.5, seed=2, record_stride=10)
    full = simulate_path(MR, lo, hi, cfg1, RandomSource(2), jump=JUMP)
    coarse = simulate_path(MR, lo, hi, cfg10, RandomSource(2), jump=JUMP)
    np.testing.assert_array_equal(coarse.values, full.values[::10])
    assert coarse.jump_flags.sum() <= full.jump_flags.sum()
    # a recorded flag means some jump happened since the previous record
    assert full.jump_flags.sum() > 0
    for i in np.nonzero(full.jump_flags)[0]:
        assert coarse.jump_flags[int(np.ceil(i / 10))]


class _FakeRng:
    """Deterministic stand-in for a Generator: scripted exponential gaps."""

    def __init__(self, gaps):
        self._gaps = list(gaps)

    def exponential(self, scale, size):
        out = np.full(size, 1e9)
        take = min(size, len(self._gaps))
        out[:take] = self._gaps[:take]
        self._gaps = self._gaps[take:]
        return out

    def uniform(self, lo, hi, size):
        return np.full(size, 0.5)


def test_jump_snapping_defer_and_drop():
    cfg = SimConfig(dt=1e-3, horizon=1.0, x0=2.5)
    # arrivals at 0.0004 and 0.0005 snap to step 1; second defers to step 2.
    rng = _FakeRng([0.0004, 0.0001])
    idxs, thetas, deferred, dropped = _jump_schedule(rng, MR, JumpSpec(intensity=2.0), cfg)
    assert list(idxs) == [1, 2]
    assert deferred == 1 and dropped == 0
    assert np.all(thetas == 0.5)


def test_jump_exactly_on_grid_point_keeps_index():
    cfg = SimConfig(dt=1e-3, horizon=1.0, x0=2.5)
    rng = _FakeRng([0.002])
    idxs, _, _, _ = _jump_schedule(rng, MR, JumpSpec(intensity=2.0), cfg)
    assert list(idxs) == [2]


def test_overshoots_are_audited_not_hidden():
    lo, hi = band()
    cfg = SimConfig(dt=1e-2, horizon=T, x0=2.5, n_paths=200, seed=3)
    s = run_ensemble(MR, lo, hi, cfg, jump=JUMP)
    # coarse steps overshoot occasionally; every event is recorded and clamped
    assert s.captivity_violations == 0
    assert len(s.overshoots) == s.clamp_count
    assert np.all(s.overshoots > 0)


def test_numerical_error_reports_step():
    lo, hi = band()
    cs = Custom(
        mu=lambda t, x, gl, gu: np.where(t > 0.5, np.nan, 0.0) * np.ones_like(np.asarray(x, dtype=float)),
        sigma=None,
    )
    cfg = SimConfig(dt=1e-2, horizon=1.0, x0=2.5)
    with pytest.raises(NumericalError) as err:
        simulate_path(cs, lo, hi, cfg, RandomSource(0), validate=False)
    assert err.value.step is not None


def test_martingale_mean_is_flat():
    lo, hi = band()
    cfg = SimConfig(dt=1e-3, horizon=T, x0=2.4, n_paths=2000, seed=11)
    s = run_ensemble(Martingale(alpha=1.0), lo, hi, cfg)
    assert abs(s.mean_final - 2.4) <= 3 * s.stderr_final


# -- absorption ------------------------------------------------------------


def _sample(values):
    values = np.asarray(values, dtype=float)
    return PathSample(
        times=np.arange(len(values), dtype=float),
        values=values,
        jump_flags=np.zeros(len(values), dtype=bool),
        clamp_events=[], boundary_hits=[],
    )


def test_absorption_ok_when_stuck():
    lo, hi = band(0.0, 1.0)
    rep = check_absorption(_sample([0.5, 0.2, 0.0, 0.0, 0.0]), lo, hi)
    assert rep.hit and rep.ok and rep.boundary == "lower"
    assert rep.tau == 2.0


def test_absorption_violation_detected():
    lo, hi = band(0.0, 1.0)
    rep = check_absorption(_sample([0.5, 1.0, 0.9]), lo, hi)
    assert rep.hit and not rep.ok
    assert rep.first_violation_time == 2.0


def test_absorption_no_hit():
    lo, hi = band(0.0, 1.0)
    rep = check_absorption(_sample([0.5, 0.4, 0.6]), lo, hi)
    assert not rep.hit and rep.ok


def test_absorption_requires_constant_boundaries():
    lo = bd.linear(0.0, 0.1, T, kind="lower")
    hi = bd.constant(1.0, T, kind="upper")
    with pytest.raises(ConfigurationError):
        check_absorption(_sample([0.5]), lo, hi)


# -- monotone boundary validation ------------------------------------------


def test_monotone_bounds_reject_decreasing_upper_for_pure_jump():
    lo = bd.constant(2.0, T, kind="lower")
    hi = bd.linear(3.0, -0.05, T, kind="upper")
    grid = np.linspace(0, T, 101)
    rep = validate_monotone_bounds(PureJump(theta="uniform"), lo, hi, grid)
    assert rep.applies and not rep.ok
    assert rep.first_violation[1] == "upper"


def test_monotone_bounds_not_applicable_with_full_dynamics():
    lo = bd.constant(2.0, T, kind="lower")
    hi = bd.linear(3.0, -0.05, T, kind="upper")
    grid = np.linspace(0, T, 101)
    rep = validate_monotone_bounds(MR, lo, hi, grid)
    assert not rep.applies and rep.ok


def test_monotone_bounds_allow_widening_domain():
    lo = bd.linear(2.0, -0.01, T, kind="lower")
    hi = bd.linear(3.0, 0.01, T, kind="upper")
    grid = np.linspace(0, T, 101)
    rep = validate_monotone_bounds(Martingale(), lo, hi, grid)
    assert rep.applies and rep.ok
