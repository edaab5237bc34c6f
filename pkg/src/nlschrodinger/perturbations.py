"""Local measures mu = mu+ - mu-, non-local perturbations F = F+ - F-, and their
Revuz densities.

Measures are bounded compactly supported densities.  A non-local perturbation
carries a diagonal certificate ``|F(x, y)| <= L |x - y|**beta`` (``beta > alpha``)
on ``|x - y| <= 1`` and vanishes unless both points lie in ``[-S_F, S_F]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .grid import Grid
from .kernels import ProcessSpec, levy_density

__all__ = [
    "CertificateError",
    "ResolutionError",
    "bump",
    "LocalMeasure",
    "NonlocalPerturbation",
    "DecomposedPerturbation",
    "bump_pair_perturbation",
    "li_decompose",
    "comparability_constant",
    "channel_density",
    "revuz_density",
    "assemble_rho",
    "kato_modulus",
    "uniform_local_mass",
]

PairFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class CertificateError(ValueError):
    """The diagonal decay certificate is missing or too weak (beta <= alpha)."""


class ResolutionError(ValueError):
    """The grid does not resolve the requested window."""


def bump(x, center: float = 0.0, width: float = 1.0):
    """C-infinity bump ``exp(1 - 1/(1 - t**2))``, ``t = (x - center)/width``; peak 1."""
    t = (np.asarray(x, dtype=float) - center) / width
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def _zero(x, *rest):
    return np.zeros(np.broadcast(np.asarray(x, dtype=float), *[np.asarray(r) for r in rest]).shape)


@dataclass(frozen=True)
class LocalMeasure:
    """Signed measure with densities ``vplus`` and ``vminus`` (both >= 0)."""

    vplus: Callable = _zero
    vminus: Callable = _zero
    support: float = 0.0
    bound_plus: float = 0.0
    bound_minus: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    @classmethod
    def zero(cls) -> "LocalMeasure":
        return cls()

    @classmethod
    def bumps(cls, a_plus=0.0, c_plus=0.0, w_plus=1.0,
              a_minus=0.0, c_minus=0.0, w_minus=1.0) -> "LocalMeasure":
        """``V+ = a_plus bump(c_plus, w_plus)``, ``V- = a_minus bump(c_minus, w_minus)``."""
        if a_plus < 0 or a_minus < 0:
            raise ValueError("bump amplitudes must be non-negative")
        radii = [abs(c) + w for a, c, w in ((a_plus, c_plus, w_plus), (a_minus, c_minus, w_minus)) if a > 0]
        return cls(
            vplus=(lambda x: a_plus * bump(x, c_plus, w_plus)) if a_plus > 0 else _zero,
            vminus=(lambda x: a_minus * bump(x, c_minus, w_minus)) if a_minus > 0 else _zero,
            support=max(radii, default=0.0),
            bound_plus=a_plus,
            bound_minus=a_minus,
            params=dict(a_plus=a_plus, c_plus=c_plus, w_plus=w_plus,
                        a_minus=a_minus, c_minus=c_minus, w_minus=w_minus),
        )

    def scaled(self, c_plus: float) -> "LocalMeasure":
        """Copy with mu+ multiplied by ``c_plus``."""
        vp = self.vplus
        params = dict(self.params)
        if "a_plus" in params:
            params["a_plus"] = params["a_plus"] * c_plus
        return LocalMeasure(vplus=lambda x: c_plus * vp(x), vminus=self.vminus, support=self.support,
                            bound_plus=c_plus * self.bound_plus, bound_minus=self.bound_minus,
                            params=params)

    def signed(self, x):
        return self.vplus(x) - self.vminus(x)


@dataclass(frozen=True)
class NonlocalPerturbation:
    """Symmetric bounded F = F+ - F- vanishing on the diagonal.

    ``bound`` is ``M = sup |F|``; ``(lipschitz, beta)`` is the diagonal certificate
    and ``support`` the joint support radius ``S_F``.
    """

    fplus: PairFunction = _zero
    fminus: PairFunction = _zero
    bound: float = 0.0
    lipschitz: float = 0.0
    beta: float = 2.0
    support: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    @classmethod
    def zero(cls, beta: float = 2.0) -> "NonlocalPerturbation":
        return cls(beta=beta)

    def __call__(self, x, y):
        return self.fplus(x, y) - self.fminus(x, y)

    @property
    def is_zero(self) -> bool:
        return self.bound == 0.0

    def check_certificate(self, rng: np.random.Generator, n_pairs: int = 10_000) -> float:
        """Largest sampled ratio ``|F(x,y)| / (L |x-y|**beta)`` on near-diagonal pairs.

        Returns a value <= 1 when the certificate holds on the sample.
        """
        if self.is_zero:
            return 0.0
        s = max(self.support, 1e-12)
        x = rng.uniform(-s, s, n_pairs)
        dz = rng.uniform(-1.0, 1.0, n_pairs) * 10.0 ** rng.uniform(-4, 0, n_pairs)
        dz[dz == 0.0] = 1e-6
        y = x + dz
        ratio = np.abs(self(x, y)) / (self.lipschitz * np.abs(dz) ** self.beta)
        return float(ratio.max())


def bump_pair_perturbation(a_plus=0.0, c_plus=0.0, w_plus=1.0,
                           a_minus=0.0, c_minus=0.0, w_minus=1.0,
                           beta: float = 2.0) -> NonlocalPerturbation:
    """Built-in family

    ``F(x,y) = a+ chi(x) chi(y) min(|x-y|,1)**beta - a- chit(x) chit(y) min(|x-y|,1)**beta``

    with bumps ``chi = bump(c_plus, w_plus)`` and ``chit = bump(c_minus, w_minus)``.
    ``F+``/``F-`` are the positive/negative parts of F, so they never overlap.
    """
    if a_plus < 0 or a_minus < 0:
        raise ValueError("amplitudes must be non-negative")

    def signed(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = np.minimum(np.abs(x - y), 1.0) ** beta
        out = np.zeros(np.broadcast(x, y).shape)
        if a_plus > 0:
            out = out + a_plus * (bump(x, c_plus, w_plus) * bump(y, c_plus, w_plus)) * d
        if a_minus > 0:
            out = out - a_minus * (bump(x, c_minus, w_minus) * bump(y, c_minus, w_minus)) * d
        return out

    radii = [abs(c) + w for a, c, w in ((a_plus, c_plus, w_plus), (a_minus, c_minus, w_minus)) if a > 0]
    return NonlocalPerturbation(
        fplus=(lambda x, y: np.maximum(signed(x, y), 0.0)) if a_plus > 0 else _zero,
        fminus=(lambda x, y: np.maximum(-signed(x, y), 0.0)) if a_minus > 0 else _zero,
        bound=max(a_plus, a_minus),
        lipschitz=max(a_plus, a_minus),
        beta=beta,
        support=max(radii, default=0.0),
        params=dict(a_plus=a_plus, c_plus=c_plus, w_plus=w_plus,
                    a_minus=a_minus, c_minus=c_minus, w_minus=w_minus, beta=beta),
    )


@dataclass(frozen=True)
class DecomposedPerturbation:
    """``G+ = (e^{F+} - 1) e^{-F-}``, ``G- = 1 - e^{-F-}``; ``G+ - G- = e^F - 1``."""

    source: NonlocalPerturbation
    comparability: float

    def gplus(self, x, y):
        return np.expm1(self.source.fplus(x, y)) * np.exp(-self.source.fminus(x, y))

    def gminus(self, x, y):
        return -np.expm1(-self.source.fminus(x, y))

    def g(self, x, y):
        return np.expm1(self.source(x, y))

    @property
    def certificate(self) -> tuple[float, float]:
        """Certificate shared by G+ and G-: ``G+- <= C_G F+- <= C_G L |z|**beta``."""
        return self.comparability * self.source.lipschitz, self.source.beta


def comparability_constant(F: NonlocalPerturbation) -> float:
    """``C_G = max(e^M, M / (1 - e^{-M}))`` so that ``C_G^{-1} F+- <= G+- <= C_G F+-``.

    On ``[0, M]``, ``(e^t - 1)/t`` lies in ``[1, (e^M - 1)/M]`` and ``(1 - e^{-t})/t``
    in ``[(1 - e^{-M})/M, 1]``; the extra ``e^{-F-}`` factor of G+ is at least
    ``e^{-M}`` and at most 1 (and equals 1 wherever F+ > 0).
    """
    m = float(F.bound)
    if m == 0.0:
        return 1.0
    return max(math.exp(m), m / -math.expm1(-m))


def li_decompose(F: NonlocalPerturbation) -> DecomposedPerturbation:
    return DecomposedPerturbation(source=F, comparability=comparability_constant(F))


def _band_width(L: float, beta: float, spec: ProcessSpec, tol: float) -> float:
    """Half-width of the dropped diagonal band: ``2 kappa C L delta**(beta-alpha)/(beta-alpha) <= tol``."""
    gap = beta - spec.alpha
    if L == 0.0:
        return 1e-12
    return min((tol * gap / (2.0 * spec.kernel_prefactor * L)) ** (1.0 / gap), 1e-3)


def channel_density(H: PairFunction, x, spec: ProcessSpec, certificate: tuple[float, float],
                    support: float, tol: float = 1e-8) -> np.ndarray:
    """NH(x) = int H(x, y) N(x, dy) for H vanishing unless |x|, |y| <= support.

    The band ``|y - x| <= delta`` is dropped; its contribution is below ``tol/10`` by
    the certificate.  The rest is integrated adaptively in ``z = |y - x| = t**p``,
    which removes the algebraic singularity ``z**(beta-1-alpha)`` at the diagonal.
    """
    L, beta = certificate
    if not beta > spec.alpha:
        raise CertificateError(f"certificate exponent beta={beta} must exceed alpha={spec.alpha}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    inside = np.abs(x) <= support
    if not inside.any() or support == 0.0:
        return out
    xs = x[inside]
    delta = _band_width(L, beta, spec, tol / 10.0)
    p = max(1.0, 2.0 / (beta - spec.alpha))
    z_max = 2.0 * support

    def integrand(t):
        z = t ** p
        vals = H(xs, xs + z) + H(xs, xs - z)
        return vals * (float(levy_density(z, spec)) * p * t ** (p - 1.0))

    t_lo, t_hi = delta ** (1.0 / p), z_max ** (1.0 / p)
    points = [1.0] if t_lo < 1.0 < t_hi else None
    val, err = integrate.quad_vec(integrand, t_lo, t_hi, epsabs=tol / 10.0, epsrel=1e-12,
                                  norm="max", points=points, limit=20000)
    out[inside] = val
    return out


def revuz_density(H: PairFunction, grid: Grid, spec: ProcessSpec,
                  certificate: tuple[float, float], support: float) -> np.ndarray:
    """Density of xi_H = NH(x) dx sampled on the grid nodes."""
    return channel_density(H, grid.nodes, spec, certificate, support)


def assemble_rho(mu: LocalMeasure, dec: DecomposedPerturbation, grid: Grid,
                 spec: ProcessSpec) -> tuple[np.ndarray, np.ndarray]:
    """rho+- = mu+- + xi_{G+-} on the grid, with xi by quadrature."""
    x = grid.nodes
    F = dec.source
    xi_p = revuz_density(dec.gplus, grid, spec, dec.certificate, F.support)
    xi_m = revuz_density(dec.gminus, grid, spec, dec.certificate, F.support)
    return mu.vplus(x) + xi_p, mu.vminus(x) + xi_m


def _abs_rk_primitive(s, alpha: float):
    """int_0^s |R_K(r)| dr for s >= 0 (d = 1)."""
    s = np.asarray(s, dtype=float)
    if alpha == 1.0:
        # |log r|: r - r log r on [0, 1], mirrored past 1
        small = np.minimum(s, 1.0)
        prim = np.where(small > 0, small - small * np.log(np.where(small > 0, small, 1.0)), 0.0)
        big = np.maximum(s, 1.0)
        prim = prim + (big * np.log(big) - big + 1.0)
        return prim
    return s ** alpha / alpha


def kato_modulus(nu: np.ndarray, r: float, grid: Grid, spec: ProcessSpec) -> float:
    """max_i int_{|x_i - y| < r} |R_K(x_i, y)| nu(y) dy for a piecewise-constant density.

    Each cell integral of |R_K| is exact, so the value is the modulus of the cellwise
    constant measure.
    """
    h = grid.spacing
    if r < 4.0 * h:
        raise ResolutionError(f"window r={r} below 4 * spacing = {4 * h}")
    nu = np.asarray(nu, dtype=float)
    if not np.any(nu):
        return 0.0
    k_max = int(math.ceil(r / h)) + 1
    k = np.arange(0, k_max + 1)
    # kernel mass of cell k (distance k h), clipped to the window
    lo = np.clip((k - 0.5) * h, 0.0, r)
    hi = np.clip((k + 0.5) * h, 0.0, r)
    prim = lambda s: _abs_rk_primitive(s, spec.alpha)
    mass = prim(hi) - prim(lo)
    mass[0] = 2.0 * prim(min(0.5 * h, r))
    stencil = np.concatenate([mass[:0:-1], mass])
    return float(_centered_convolve(np.abs(nu), stencil).max())


def uniform_local_mass(nu: np.ndarray, grid: Grid) -> float:
    """sup_x int_{|x-y| <= 1} nu(dy) (the alpha > 1 Kato criterion)."""
    h = grid.spacing
    k = int(math.floor(1.0 / h))
    stencil = np.ones(2 * k + 1) * h
    return float(_centered_convolve(np.abs(nu), stencil).max())


def _centered_convolve(v: np.ndarray, stencil: np.ndarray) -> np.ndarray:
    """Convolution with an odd, centred stencil, same length as ``v`` (any stencil length)."""
    off = (stencil.size - 1) // 2
    return np.convolve(v, stencil, mode="full")[off:off + v.size]
