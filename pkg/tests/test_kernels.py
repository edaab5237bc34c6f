import math

import numpy as np
import pytest
from scipy import integrate, special

from nlschrodinger.kernels import (DomainError, ProcessSpec, characteristic_exponent, compensated_kernel,
                                   jump_intensity, jump_truncation_stats, levy_density,
                                   normalization_constant, one_sided_tail, psi, psi_table)


def psi_bessel(r, alpha):
    """psi(r) = 2**(1-nu) r**nu K_nu(r) / Gamma(nu), nu = (1 + alpha)/2."""
    nu = (1.0 + alpha) / 2.0
    r = np.asarray(r, dtype=float)
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, 2.0 ** (1.0 - nu) * safe ** nu * special.kv(nu, safe) / special.gamma(nu), 1.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.2, 1.7])
def test_psi_matches_bessel_identity(alpha):
    r = np.array([0.1, 1.0, 5.0, 10.0])
    np.testing.assert_allclose(psi(r, alpha), psi_bessel(r, alpha), rtol=1e-8, atol=0)


def test_psi_at_zero_and_monotone():
    r = np.linspace(0.0, 20.0, 41)
    vals = psi(r, 1.2)
    assert vals[0] == 1.0
    assert np.all(np.diff(vals) < 0)


def test_psi_table_agrees_with_quadrature():
    r = np.array([0.0, 0.003, 0.37, 2.2, 9.1, 31.0, 70.0])
    np.testing.assert_allclose(psi_table(1.2)(r), psi_bessel(r, 1.2), rtol=1e-7)


def test_normalization_constant_cauchy():
    assert abs(normalization_constant(1.0) - 1.0 / math.pi) <= 1e-12


@pytest.mark.parametrize("alpha", [1.0, 1.2, 1.5, 1.9])
def test_normalization_gives_unit_symbol(alpha):
    # kappa C int (1 - cos z) |z|^{-1-alpha} dz = kappa, via the closed form of the integral
    if alpha == 1.0:
        half_integral = math.pi / 2.0
    else:
        half_integral = -math.gamma(-alpha) * math.cos(math.pi * alpha / 2.0)
    assert 2.0 * normalization_constant(alpha) * half_integral == pytest.approx(1.0, rel=1e-12)


def test_characteristic_exponent_relativistic_by_quadrature():
    spec = ProcessSpec(alpha=1.2, mass=1.0)
    u = 1.3
    f = lambda z: (1.0 - math.cos(u * z)) * float(levy_density(z, spec))
    val = 2.0 * sum(integrate.quad(f, a, b, limit=400, epsabs=0, epsrel=1e-10)[0]
                    for a, b in ((0.0, 1.0), (1.0, 10.0), (10.0, 80.0)))
    assert val == pytest.approx(float(characteristic_exponent(u, spec)), rel=1e-6)


def test_levy_density_symmetric_and_singular():
    spec = ProcessSpec(alpha=1.2, mass=0.5)
    z = np.array([0.01, 0.3, 4.0])
    np.testing.assert_array_equal(levy_density(z, spec), levy_density(-z, spec))
    np.testing.assert_array_equal(jump_intensity(1.0, 1.0 + z, spec), jump_intensity(1.0 + z, 1.0, spec))
    with pytest.raises(DomainError):
        levy_density(0.0, spec)


@pytest.mark.parametrize("mass", [0.0, 0.7])
def test_truncation_stats_by_quadrature(mass):
    spec = ProcessSpec(alpha=1.2, mass=mass)
    eps, beta = 0.05, 2.0
    st = jump_truncation_stats(eps, beta, spec)
    nu = lambda z: float(levy_density(z, spec))
    tail = integrate.quad(nu, eps, 1.0)[0] + integrate.quad(nu, 1.0, np.inf)[0]
    var = integrate.quad(lambda z: z * z * nu(z), 0, eps, epsrel=1e-11)[0]
    assert st.tail_rate == pytest.approx(2 * tail, rel=1e-8)
    assert one_sided_tail(eps, spec) == pytest.approx(tail, rel=1e-8)
    assert st.small_jump_variance == pytest.approx(2 * var, rel=1e-8)
    assert st.beta_moment == pytest.approx(st.small_jump_variance, rel=1e-8)  # beta = 2


def test_truncation_requires_beta_above_alpha():
    with pytest.raises(DomainError):
        jump_truncation_stats(0.1, 1.0, ProcessSpec(alpha=1.2))


@pytest.mark.parametrize("kw", [dict(alpha=2.0), dict(alpha=0.0), dict(alpha=1.2, mass=-1),
                                dict(alpha=0.8), dict(alpha=1.2, dim=2),
                                dict(alpha=1.2, intensity_multiplier=0.0)])
def test_process_spec_rejects(kw):
    with pytest.raises(DomainError):
        ProcessSpec(**kw)


def test_compensated_kernel():
    assert compensated_kernel(0.0, 2.0, ProcessSpec(alpha=1.0)) == pytest.approx(-math.log(2.0))
    assert compensated_kernel(0.0, 2.0, ProcessSpec(alpha=1.5)) == pytest.approx(2.0 ** 0.5)
    with pytest.raises(DomainError):
        compensated_kernel(1.0, 1.0, ProcessSpec(alpha=1.5))
