import math

import numpy as np
import pytest

from nlschrodinger.forms import build_form_system
from nlschrodinger.kernels import ProcessSpec
from nlschrodinger.montecarlo import PathFunctionals, SimConfig
from nlschrodinger.perturbations import NonlocalPerturbation
from nlschrodinger.verify import (CalibrationError, calibrate_critical, check_gauge_spectral,
                                  check_gauge_supercritical, check_green_cross, check_ground_state,
                                  check_identities, check_levy_system, richardson_factor,
                                  semigroup_variation)


@pytest.fixture(scope="module")
def local_system(default_cfg, small_grid):
    cfg = default_cfg
    return build_form_system(small_grid, cfg.build_spec(), cfg.build_mu(), NonlocalPerturbation.zero())


def test_richardson_factor():
    assert richardson_factor(ProcessSpec(alpha=1.0)) == pytest.approx(2.0)
    assert richardson_factor(ProcessSpec(alpha=1.2)) == pytest.approx(1.0 / (1.0 - 2.0 ** -0.8))


def test_semigroup_variation_of_zero_is_zero(small_system):
    tv = semigroup_variation(small_system.A_minus, np.zeros(small_system.n), small_system.grid.spacing, [10, 20])
    assert np.all(tv == 0.0)


def test_identities_on_small_grid(small_system, rng):
    r = check_identities(small_system, rng)
    assert r.passed and r.statistic <= 1e-12


def test_identities_local_case(local_system, rng):
    assert check_identities(local_system, rng).passed


def test_ground_state_check_small_grid(small_system):
    r = check_ground_state(small_system, box_sizes=(8.0, 16.0), mu_scales=(0.5, 1.0, 2.0))
    assert r.passed, r.details["failed"]
    lams = r.details["lambdas"]
    assert lams[0] >= lams[1]


def test_calibration_local_case_is_exact(local_system, default_cfg, small_grid):
    # with F = 0, lambda(c) = lambda(1) / c, so c* = lambda(1)
    lam1 = local_system.ground_state().lam
    c, crit, trace = calibrate_critical(default_cfg.build_mu(), NonlocalPerturbation.zero(), small_grid,
                                        default_cfg.build_spec())
    assert c == pytest.approx(lam1, rel=1e-5)
    assert crit.ground_state().lam == pytest.approx(1.0, abs=1e-6)
    cs, lams = np.array(sorted(trace)).T
    assert np.all(np.diff(lams) <= 1e-12)


def test_calibration_default_has_no_bracket(default_cfg, small_grid):
    cfg = default_cfg
    with pytest.raises(CalibrationError):
        calibrate_critical(cfg.build_mu(), cfg.build_F(), small_grid, cfg.build_spec())


def test_calibration_with_scaled_fplus(default_cfg, small_grid):
    cfg = default_cfg
    F = cfg.build_F(cfg.checks.critical_fplus_scale)
    c, crit, _ = calibrate_critical(cfg.build_mu(), F, small_grid, cfg.build_spec())
    assert 0 < c < 1
    assert abs(crit.ground_state().lam - 1.0) <= 1e-6


def test_levy_system_zero_F_is_exact(spec):
    cfg = SimConfig(epsilon=0.05, dt=1e-2, n_paths=200, master_seed=3)
    r = check_levy_system(NonlocalPerturbation.zero(), 0.0, 1.0, cfg, spec)
    assert r.passed and r.statistic == 0.0


def test_levy_system_small_run_passes(default_cfg, spec):
    cfg = default_cfg.build_sim(n_paths=4000, dt=1e-2)
    r = check_levy_system(default_cfg.build_F(), 0.0, 0.5, cfg, spec)
    assert r.passed, r.details


def test_green_cross_zero_source(small_system, default_cfg, spec):
    cfg = default_cfg.build_sim(n_paths=100, dt=0.05, horizon=20.0)
    fn = PathFunctionals(small_system.mu, small_system.F, spec, cfg.epsilon)
    r = check_green_cross(small_system, lambda x: np.zeros_like(np.asarray(x, dtype=float)), [0.0], cfg, fn,
                          refined=small_system)
    assert r.passed
    assert r.rows[0]["mean"] == 0.0 and r.rows[0]["reference"] == 0.0


def test_gauge_without_perturbation_is_one(small_system, default_cfg, spec):
    # a ball far from every support sees no perturbation: theta = inf, gauge = 1
    cfg = default_cfg.build_sim(n_paths=200)
    fn = PathFunctionals(small_system.mu, small_system.F, spec, cfg.epsilon)
    r = check_gauge_spectral(small_system, 6.0, 0.5, [6.0], cfg, fn)
    assert math.isinf(r.details["theta"])
    assert r.passed
    assert r.rows[0]["gauge_n"] == pytest.approx(1.0)


def test_supercritical_control_below_critical_fails_without_simulation(small_system, default_cfg, spec):
    cfg = default_cfg.build_sim(n_paths=100)
    fn = PathFunctionals(small_system.mu, small_system.F, spec, cfg.epsilon)
    r = check_gauge_supercritical(small_system, 0.0, 1.5, 0.0, cfg, fn, factor=0.5)
    assert not r.passed
    assert r.details["theta_control"] >= 1.0
