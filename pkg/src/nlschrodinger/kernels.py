"""Constants and jump kernels of the 1-d symmetric (relativistic) alpha-stable process.

The jump-rate density of the simulated process is

    nu(z) = kappa * C(1, -alpha) * psi(m**(1/alpha) * |z|) / |z|**(1 + alpha)

where ``kappa`` is :attr:`ProcessSpec.intensity_multiplier`.  With the default
``kappa = 2`` the associated Dirichlet form
``E(u, u) = 1/2 iint (u(x) - u(y))**2 nu(x - y) dx dy`` carries the front factor
``C(1, -alpha)`` and the characteristic exponent is
``kappa * ((u**2 + m**(2/alpha))**(alpha/2) - m)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

__all__ = [
    "DomainError",
    "QuadratureError",
    "ProcessSpec",
    "TruncationStats",
    "normalization_constant",
    "psi",
    "psi_integral",
    "psi_table",
    "jump_intensity",
    "levy_density",
    "compensated_kernel",
    "one_sided_tail",
    "jump_truncation_stats",
    "characteristic_exponent",
]

PSI_QUAD_TOL = 1e-10


class DomainError(ValueError):
    """Argument outside the domain of a kernel or constant."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class ProcessSpec:
    """Parameters of the recurrent 1-d (relativistic) stable process.

    Parameters
    ----------
    alpha : float
        Stability index in (0, 2).
    mass : float
        Relativistic mass ``m >= 0``; ``m = 0`` is the standard stable case.
    intensity_multiplier : float
        Front factor ``kappa`` of the jump kernel, relative to ``C(1, -alpha)``.
    dim : int
        Space dimension, must be 1.
    """

    alpha: float
    mass: float = 0.0
    intensity_multiplier: float = 2.0
    dim: int = 1

    def __post_init__(self):
        if self.dim != 1:
            raise DomainError(f"only dim = 1 is supported, got {self.dim}")
        if not 0.0 < self.alpha < 2.0:
            raise DomainError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.mass < 0.0:
            raise DomainError(f"mass must be >= 0, got {self.mass}")
        if self.mass == 0.0 and self.alpha < 1.0:
            raise DomainError("the m = 0 process is recurrent only for alpha >= 1")
        if not self.intensity_multiplier > 0.0:
            raise DomainError("intensity_multiplier must be positive")

    @property
    def relativistic(self) -> bool:
        return self.mass > 0.0

    @property
    def mass_scale(self) -> float:
        """``m**(1/alpha)``, the argument scale of psi."""
        return self.mass ** (1.0 / self.alpha)

    @property
    def kernel_prefactor(self) -> float:
        """``kappa * C(1, -alpha)``."""
        return self.intensity_multiplier * normalization_constant(self)


@dataclass(frozen=True)
class TruncationStats:
    """Moments of the Levy density split at the jump cutoff ``epsilon``.

    ``tail_rate`` is the rate of jumps with ``|z| > epsilon`` (both signs),
    ``small_jump_variance`` and ``beta_moment`` integrate ``z**2`` and
    ``|z|**beta`` over ``|z| <= epsilon``.
    """

    epsilon: float
    beta: float
    tail_rate: float
    small_jump_variance: float
    beta_moment: float


def normalization_constant(spec) -> float:
    """C(1, -alpha) = alpha Gamma((1+alpha)/2) / (2**(1-alpha) sqrt(pi) Gamma(1 - alpha/2)).

    Accepts a :class:`ProcessSpec` or a bare ``alpha``.
    """
    alpha = spec.alpha if isinstance(spec, ProcessSpec) else float(spec)
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    d = 1
    return (alpha * math.gamma((d + alpha) / 2.0)
            / (2.0 ** (1.0 - alpha) * math.pi ** (d / 2.0) * math.gamma(1.0 - alpha / 2.0)))


def _psi_order(alpha: float) -> float:
    return (1.0 + alpha) / 2.0


def psi_integral(r: float, alpha: float) -> float:
    """I(r) = int_0^inf s**(nu-1) exp(-s/4 - r**2/s) ds with nu = (1+alpha)/2."""
    nu = _psi_order(alpha)
    r = float(r)
    if r < 0:
        raise DomainError("psi is defined for r >= 0")
    if r == 0.0:
        # peak of s**(nu-1) e^{-s/4}
        peak = max(4.0 * (nu - 1.0), 1.0)
    else:
        # stationary point of (nu-1) log s - s/4 - r^2/s
        b = nu - 1.0
        peak = 2.0 * (b + math.sqrt(b * b + r * r))
    log_scale = (nu - 1.0) * math.log(peak) - peak / 4.0 - (r * r / peak if r else 0.0)

    def f(s):
        if s <= 0.0:
            return 0.0
        return math.exp((nu - 1.0) * math.log(s) - s / 4.0 - r * r / s - log_scale)

    total = 0.0
    err_total = 0.0
    for a, b in ((0.0, peak), (peak, math.inf)):
        # the error estimate is checked below
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
        err_total += err
    if err_total > PSI_QUAD_TOL * total:
        raise QuadratureError(f"psi quadrature at r={r}: error {err_total:.3g} exceeds tolerance")
    return total * math.exp(log_scale)


def psi(r, spec) -> np.ndarray | float:
    """psi(r) = I(r) / I(0) by adaptive quadrature (``spec`` may be a bare alpha)."""
    alpha = spec.alpha if isinstance(spec, ProcessSpec) else float(spec)
    i0 = psi_integral(0.0, alpha)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise DomainError("psi is defined for r >= 0")
    out = np.vectorize(lambda t: psi_integral(t, alpha) / i0 if t > 0 else 1.0, otypes=[float])(r_arr)
    return float(out) if out.ndim == 0 else out


class PsiTable:
    """Monotone (PCHIP on log psi) interpolant of psi on a radial grid.

    Nodes are quadrature values; the grid is uniform in ``sqrt(r)`` so that the
    small-r region, where psi is flattest in r but curves fastest in log, is dense.
    """

    def __init__(self, alpha: float, r_max: float = 80.0, n_nodes: int = 6001):
        self.alpha = float(alpha)
        self.r_max = float(r_max)
        s = np.linspace(0.0, math.sqrt(r_max), n_nodes)
        r = s * s
        vals = psi(r, self.alpha)
        self._log = PchipInterpolator(s, np.log(vals), extrapolate=False)
        self._tail_slope = (math.log(vals[-1]) - math.log(vals[-2])) / (r[-1] - r[-2])
        self._tail_value = math.log(vals[-1])

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inside = r <= self.r_max
        out[inside] = np.exp(self._log(np.sqrt(r[inside])))
        out[~inside] = np.exp(self._tail_value + self._tail_slope * (r[~inside] - self.r_max))
        return out


@lru_cache(maxsize=16)
def psi_table(alpha: float) -> PsiTable:
    """Shared, immutable psi interpolant for ``alpha``."""
    return PsiTable(alpha)


def _psi_fast(r, spec: ProcessSpec):
    if not spec.relativistic:
        return np.ones_like(np.asarray(r, dtype=float))
    return psi_table(spec.alpha)(r)


def levy_density(z, spec: ProcessSpec):
    """Jump-rate density nu(z) of the process, z != 0."""
    z = np.abs(np.asarray(z, dtype=float))
    if np.any(z == 0.0):
        raise DomainError("the jump kernel is singular on the diagonal")
    return spec.kernel_prefactor * _psi_fast(spec.mass_scale * z, spec) / z ** (1.0 + spec.alpha)


def jump_intensity(x, y, spec: ProcessSpec):
    """N(x, dy)/dy, symmetric in (x, y)."""
    return levy_density(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), spec)


def compensated_kernel(x, y, spec: ProcessSpec):
    """R_K(x, y): log(1/|x-y|) when alpha = 1, |x-y|**(alpha-1) otherwise (d = 1)."""
    r = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if np.any(r == 0.0):
        raise DomainError("R_K is singular on the diagonal")
    if spec.alpha == 1.0:
        return -np.log(r)
    # alpha < 1 (d > alpha) and alpha > 1 (alpha > d) share |r|**(alpha - d) in d = 1
    return r ** (spec.alpha - 1.0)


def _quad_moment(weight, a: float, b: float, spec: ProcessSpec) -> float:
    """int_a^b weight(z) nu(z) dz for 0 < a < b <= inf (one side)."""
    def f(z):
        return weight(z) * float(levy_density(z, spec))

    val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-11, limit=400)
    return val


def one_sided_tail(a: float, spec: ProcessSpec) -> float:
    """int_a^inf nu(z) dz."""
    if a <= 0:
        raise DomainError("tail mass requires a > 0")
    c = spec.kernel_prefactor
    if not spec.relativistic:
        return c * a ** (-spec.alpha) / spec.alpha
    return _quad_moment(lambda z: 1.0, a, math.inf, spec)


def jump_truncation_stats(epsilon: float, beta: float, spec: ProcessSpec) -> TruncationStats:
    """Tail rate, small-jump variance and beta-moment of nu split at ``epsilon``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not beta > spec.alpha:
        raise DomainError("beta must exceed alpha")
    a = spec.alpha
    c = spec.kernel_prefactor
    if not spec.relativistic:
        rate = 2.0 * c * epsilon ** (-a) / a
        var = 2.0 * c * epsilon ** (2.0 - a) / (2.0 - a)
        mom = 2.0 * c * epsilon ** (beta - a) / (beta - a)
    else:
        rate = 2.0 * one_sided_tail(epsilon, spec)
        # the integrands z**p nu(z) ~ z**(p-1-a) are integrable at 0
        var = 2.0 * _quad_moment(lambda z: z * z, 0.0, epsilon, spec)
        mom = 2.0 * _quad_moment(lambda z: z ** beta, 0.0, epsilon, spec)
    return TruncationStats(epsilon=epsilon, beta=beta, tail_rate=rate,
                           small_jump_variance=var, beta_moment=mom)


def characteristic_exponent(u, spec: ProcessSpec):
    """Closed-form Levy exponent int (1 - cos(u z)) nu(z) dz."""
    u = np.abs(np.asarray(u, dtype=float))
    k = spec.intensity_multiplier
    if not spec.relativistic:
        return k * u ** spec.alpha
    m = spec.mass
    return k * ((u * u + m ** (2.0 / spec.alpha)) ** (spec.alpha / 2.0) - m)
