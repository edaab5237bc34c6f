import math

import numpy as np
import pytest
from scipy import integrate

from nlschrodinger.grid import Grid
from nlschrodinger.kernels import ProcessSpec, normalization_constant
from nlschrodinger.perturbations import (CertificateError, LocalMeasure, NonlocalPerturbation, ResolutionError,
                                         assemble_rho, bump, bump_pair_perturbation, channel_density,
                                         comparability_constant, kato_modulus, li_decompose, revuz_density,
                                         uniform_local_mass)

DEFAULT_F = dict(a_plus=0.6, c_plus=-1.0, w_plus=2.0, a_minus=0.5, c_minus=2.0, w_minus=1.5, beta=2.0)


def random_pairs(rng, n=10_000, s=4.0):
    x = rng.uniform(-s, s, n)
    y = x + rng.normal(0, 1.0, n)
    return x, y


@pytest.fixture(scope="module")
def F():
    return bump_pair_perturbation(**DEFAULT_F)


def test_bump_profile():
    x = np.array([-1.0, -0.5, 0.0, 0.5, 1.0, 2.0])
    v = bump(x)
    assert v[2] == 1.0 and v[0] == 0.0 and v[4] == 0.0 and v[5] == 0.0
    assert v[1] == v[3] == pytest.approx(math.exp(1 - 1 / 0.75))


def test_builtin_family_invariants(F, rng):
    x, y = random_pairs(rng)
    np.testing.assert_array_equal(F.fplus(x, y), F.fplus(y, x))
    np.testing.assert_array_equal(F.fminus(x, y), F.fminus(y, x))
    assert np.all(F.fplus(x, y) * F.fminus(x, y) == 0)
    assert np.all(F.fplus(x, y) >= 0) and np.all(F.fminus(x, y) >= 0)
    assert np.all(F.fplus(x, x) == 0) and np.all(F.fminus(x, x) == 0)
    assert np.abs(F(x, y)).max() <= F.bound
    assert F.check_certificate(rng) <= 1.0
    far = np.array([F.support + 0.1])
    assert F(far, np.array([0.0]))[0] == 0.0
    assert F.support == pytest.approx(3.5)


def test_negative_amplitudes_rejected():
    with pytest.raises(ValueError):
        bump_pair_perturbation(a_plus=-1.0)
    with pytest.raises(ValueError):
        LocalMeasure.bumps(a_minus=-0.1)


def test_li_identity(F, rng):
    dec = li_decompose(F)
    x, y = random_pairs(rng)
    diff = (dec.gplus(x, y) - dec.gminus(x, y)) - np.expm1(F(x, y))
    assert np.abs(diff).max() <= 1e-14
    gm = dec.gminus(x, y)
    assert np.all(gm >= 0) and np.all(gm < 1)
    assert np.all(dec.gplus(x, y) >= 0)


def test_li_one_sided(rng):
    x, y = random_pairs(rng)
    only_plus = li_decompose(bump_pair_perturbation(a_plus=0.8, w_plus=2.0))
    assert np.all(only_plus.gminus(x, y) == 0)
    np.testing.assert_array_equal(only_plus.gplus(x, y), np.expm1(only_plus.source.fplus(x, y)))
    only_minus = li_decompose(bump_pair_perturbation(a_minus=0.8, w_minus=2.0))
    assert np.all(only_minus.gplus(x, y) == 0)
    np.testing.assert_array_equal(only_minus.gminus(x, y), -np.expm1(-only_minus.source.fminus(x, y)))


def test_comparability_constant_values():
    assert comparability_constant(NonlocalPerturbation.zero()) == 1.0
    tiny = bump_pair_perturbation(a_plus=1e-9)
    assert comparability_constant(tiny) == pytest.approx(1.0, abs=1e-8)
    unit = bump_pair_perturbation(a_plus=1.0)
    assert comparability_constant(unit) == pytest.approx(math.e, rel=1e-15)
    assert math.e > 1.0 / (1.0 - math.exp(-1.0))


def test_comparability_pointwise(F, rng):
    dec = li_decompose(F)
    C, M = dec.comparability, F.bound
    x, y = random_pairs(rng)
    fp, fm = F.fplus(x, y), F.fminus(x, y)
    gp, gm = dec.gplus(x, y), dec.gminus(x, y)
    tol = 1e-15
    assert np.all(fp / C <= gp + tol) and np.all(gp <= C * fp + tol)
    assert np.all(fm / C <= gm + tol) and np.all(gm <= C * fm + tol)
    assert np.all(gm <= fm + tol) and np.all(fm * (1 - math.exp(-M)) / M <= gm + tol)


def test_channel_density_zero_and_support(spec):
    zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)
    assert np.all(channel_density(zero, np.array([0.0, 1.0]), spec, (1.0, 2.0), 1.0) == 0)
    F = bump_pair_perturbation(a_plus=0.5, w_plus=1.0)
    out = channel_density(F.fplus, np.array([1.5, -3.0]), spec, (F.lipschitz, F.beta), F.support)
    assert np.all(out == 0)


def test_channel_density_brute_force_oracle():
    # m = 0, alpha = 1: nu(z) = (2/pi) / z^2; H = min(|x-y|,1)^2 on [-1,1]^2
    spec = ProcessSpec(alpha=1.0)
    H = lambda x, y: np.minimum(np.abs(x - y), 1.0) ** 2 * ((np.abs(x) <= 1) & (np.abs(y) <= 1))
    xs = np.array([0.0, 0.5, -0.8])
    got = channel_density(H, xs, spec, (1.0, 2.0), 1.0)
    y = np.linspace(-1.0, 1.0, 1_000_001)
    for x, g in zip(xs, got):
        z = np.abs(y - x)
        safe = np.where(z > 0, z, 1.0)
        integrand = np.where(z > 0, np.minimum(safe, 1.0) ** 2 / safe ** 2, 1.0) * 2.0 * normalization_constant(1.0)
        brute = integrate.trapezoid(integrand, y)
        assert g == pytest.approx(brute, abs=1e-6)
    assert got[0] == pytest.approx(4.0 / math.pi, abs=1e-8)


def test_channel_density_certificate_exponent(spec):
    with pytest.raises(CertificateError):
        channel_density(lambda x, y: 0 * x, np.array([0.0]), spec, (1.0, 1.1), 1.0)


def test_revuz_densities(F, spec):
    grid = Grid(8.0, 161)
    dec = li_decompose(F)
    xi_f = revuz_density(F.fplus, grid, spec, (F.lipschitz, F.beta), F.support)
    xi_g = revuz_density(dec.gplus, grid, spec, dec.certificate, F.support)
    assert np.all(xi_g <= dec.comparability * xi_f + 1e-8)
    assert np.all(xi_f[np.abs(grid.nodes) > F.support] == 0)
    zero = revuz_density(lambda x, y: np.zeros(np.broadcast(x, y).shape), grid, spec, (1.0, 2.0), 3.0)
    assert not np.any(zero)


def test_assemble_rho(F, spec):
    grid = Grid(8.0, 161)
    x = grid.nodes
    mu = LocalMeasure.bumps(a_plus=1.0, w_plus=1.5)
    rp, rm = assemble_rho(mu, li_decompose(NonlocalPerturbation.zero()), grid, spec)
    np.testing.assert_array_equal(rp, mu.vplus(x))
    assert not np.any(rm)
    dec = li_decompose(F)
    rp, rm = assemble_rho(LocalMeasure.zero(), dec, grid, spec)
    np.testing.assert_allclose(rp, revuz_density(dec.gplus, grid, spec, dec.certificate, F.support))
    np.testing.assert_allclose(rm, revuz_density(dec.gminus, grid, spec, dec.certificate, F.support))
    mu2 = LocalMeasure.bumps(a_plus=1.0, w_plus=1.5, a_minus=0.5, c_minus=2.5)
    rp, rm = assemble_rho(mu2, dec, grid, spec)
    assert np.all(rp >= mu2.vplus(x)) and np.all(rm >= 0)


def test_scaled_measure():
    mu = LocalMeasure.bumps(a_plus=1.0, w_plus=1.5, a_minus=0.5, c_minus=2.5)
    x = np.linspace(-4, 4, 33)
    s = mu.scaled(3.0)
    np.testing.assert_allclose(s.vplus(x), 3.0 * mu.vplus(x))
    np.testing.assert_array_equal(s.vminus(x), mu.vminus(x))
    assert s.params["a_plus"] == 3.0


def test_kato_modulus_properties():
    grid = Grid(10.0, 2001)
    spec = ProcessSpec(alpha=1.5)
    nu = 0.7 * bump(grid.nodes, 0.0, 2.0)
    assert kato_modulus(np.zeros(grid.n), 0.5, grid, spec) == 0.0
    rs = [0.5, 0.25, 0.1, 0.05]
    vals = [kato_modulus(nu, r, grid, spec) for r in rs]
    for r, v in zip(rs, vals):
        assert v <= (4.0 / 3.0) * 0.7 * r ** 1.5 * (1 + 1e-12)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.1 * vals[0]
    assert uniform_local_mass(nu, grid) <= 0.7 * 2.0 + 1e-12
    with pytest.raises(ResolutionError):
        kato_modulus(nu, 2 * grid.spacing, grid, spec)


def test_kato_modulus_log_kernel():
    grid = Grid(10.0, 2001)
    nu = bump(grid.nodes, 1.0, 1.0)
    vals = [kato_modulus(nu, r, grid, ProcessSpec(alpha=1.0)) for r in (0.5, 0.25, 0.1, 0.05)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
