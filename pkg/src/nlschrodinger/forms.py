"""Discrete quadratic forms on the truncation grid, Green operators and the
variational ground state.

Conventions: a symmetric matrix ``A`` represents the form ``u -> u^T A u``
approximating the continuum form of the grid function; the mass ``int u^2 d rho``
is ``u^T diag(rho h) u``; ``green_apply(A, f)`` solves ``A u = f h`` so that
``u(x_i) ~ int R(x_i, y) f(y) dy``, i.e. ``R(x_i, x_j) ~ (A^{-1})_{ij}``.

All pair weights come from one table ``W`` (per-cell kernel mass plus a
nearest-neighbour second-moment correction).  Every form is a Laplacian of
``W`` times a pairwise multiplier plus a diagonal, so the algebraic identities
between the forms hold exactly on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .grid import Grid
from .kernels import ProcessSpec, levy_density, one_sided_tail, psi_table
from .perturbations import DecomposedPerturbation, LocalMeasure, NonlocalPerturbation, li_decompose

__all__ = [
    "NumericalError",
    "ConvergenceError",
    "PreconditionError",
    "AssumptionAError",
    "WeightTable",
    "PairBlock",
    "FormSystem",
    "GroundState",
    "AdmissibleBall",
    "assemble_weights",
    "pair_block",
    "assemble_base_form",
    "assemble_killed_form",
    "assemble_schrodinger_form",
    "assemble_Y_form",
    "build_form_system",
    "green_apply",
    "GreenOperator",
    "principal_eigenpair",
    "domain_principal_value",
    "green_tight_tail",
    "greens_domination",
    "a_infinity_diagnostic",
    "assumption_A_radius",
    "min_ritz_value",
]


class NumericalError(ArithmeticError):
    pass


class ConvergenceError(NumericalError):
    pass


class PreconditionError(ValueError):
    pass


class AssumptionAError(NumericalError):
    """No dyadic radius satisfies lambda * ||R^Y(1_B rho+)||_inf < 1."""


# ---------------------------------------------------------------- weights

@dataclass(frozen=True)
class WeightTable:
    """Translation-invariant pair weights ``w_k`` (k = |i - j|) and exterior killing.

    ``bare[k] = h * kappa C psi(m^(1/a) k h) * int_{cell k} z^(-1-a) dz``;
    ``correction`` is added to ``k = 1`` so that the discrete second moment
    ``sum_k k^2 h w_k`` matches ``int z^2 nu(z) dz`` (the self-cell and the
    cell-quadrature defect of the near field).  ``exterior[i]`` is
    ``h * int_{outside box} nu(x_i - y) dy``.
    """

    grid: Grid
    spec: ProcessSpec
    bare: np.ndarray
    correction: float
    exterior: np.ndarray

    @property
    def toeplitz(self) -> np.ndarray:
        w = self.bare.copy()
        w[1] += self.correction
        return w

    @property
    def correction_energy(self) -> float:
        """Energy coefficient ``c h`` of the correction; O(h^(2-alpha))."""
        return self.correction * self.grid.spacing

    def matrix(self) -> np.ndarray:
        return linalg.toeplitz(self.toeplitz)

    def block(self, idx: np.ndarray) -> np.ndarray:
        w = self.toeplitz
        return w[np.abs(idx[:, None] - idx[None, :])]


def _cell_gauss(spec: ProcessSpec, a: np.ndarray, b: np.ndarray, weight=None, order: int = 24):
    """Vectorised Gauss-Legendre of ``weight(z) nu(z)`` over cells [a, b] (a > 0)."""
    t, wq = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    z = mid + half * t[None, :]
    vals = levy_density(z, spec)
    if weight is not None:
        vals = vals * weight(z)
    return (vals * wq[None, :]).sum(axis=1) * half[:, 0]


def assemble_weights(grid: Grid, spec: ProcessSpec) -> WeightTable:
    n, h, a = grid.n, grid.spacing, spec.alpha
    c = spec.kernel_prefactor
    k = np.arange(n, dtype=float)
    bare = np.zeros(n)
    kk = k[1:]
    cell = (((kk - 0.5) * h) ** (-a) - ((kk + 0.5) * h) ** (-a)) / a
    psi_mid = psi_table(a)(spec.mass_scale * kk * h) if spec.relativistic else 1.0
    bare[1:] = h * c * psi_mid * cell

    reach = (n - 0.5) * h
    if not spec.relativistic:
        moment = c * reach ** (2.0 - a) / (2.0 - a)
    else:
        f = lambda z: z * z * float(levy_density(z, spec))
        cut = min(1.0, reach)
        moment = sum(integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-11, limit=400)[0]
                     for a, b in ((0.0, cut), (cut, reach)) if b > a)
    correction = (moment - (kk * kk * h * bare[1:]).sum()) / h

    # tails from the cell edges (j + 1/2) h, j = 0..n-1
    edges = (np.arange(n) + 0.5) * h
    if not spec.relativistic:
        tails = c * edges ** (-a) / a
    else:
        far = one_sided_tail(edges[-1], spec)
        pieces = _cell_gauss(spec, edges[:-1], edges[1:])
        tails = far + np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    exterior = h * (tails + tails[::-1])
    return WeightTable(grid=grid, spec=spec, bare=bare, correction=float(correction),
                       exterior=exterior)


# ---------------------------------------------------------------- pair data

@dataclass(frozen=True)
class PairBlock:
    """Pairwise perturbation values on the support block ``index`` x ``index``."""

    index: np.ndarray
    W: np.ndarray
    fplus: np.ndarray
    fminus: np.ndarray

    @property
    def gplus(self) -> np.ndarray:
        return np.expm1(self.fplus) * np.exp(-self.fminus)

    @property
    def gminus(self) -> np.ndarray:
        return -np.expm1(-self.fminus)

    @property
    def g(self) -> np.ndarray:
        return np.expm1(self.fplus - self.fminus)


def pair_block(weights: WeightTable, F: NonlocalPerturbation) -> PairBlock:
    x = weights.grid.nodes
    idx = np.flatnonzero(np.abs(x) <= F.support) if not F.is_zero else np.zeros(0, dtype=int)
    xs = x[idx]
    W = weights.block(idx)
    fp = F.fplus(xs[:, None], xs[None, :])
    fm = F.fminus(xs[:, None], xs[None, :])
    np.fill_diagonal(fp, 0.0)
    np.fill_diagonal(fm, 0.0)
    return PairBlock(index=idx, W=W, fplus=fp, fminus=fm)


def _laplacian_into(A: np.ndarray, idx: np.ndarray, K: np.ndarray, sign: float = 1.0) -> None:
    """A += sign * (diag(K 1) - K) on the block idx (K has zero diagonal)."""
    if idx.size == 0:
        return
    sub = np.ix_(idx, idx)
    A[sub] -= sign * K
    A[idx, idx] += sign * K.sum(axis=1)


def assemble_base_form(weights: WeightTable) -> np.ndarray:
    """E on the grid: ``1/2 sum_{i != j} (u_i - u_j)^2 w_ij + sum_i u_i^2 exterior_i``."""
    W = weights.matrix()
    A = -W
    A[np.diag_indices_from(A)] = W.sum(axis=1) + weights.exterior
    return A


def _measure_h(mu_density, grid: Grid) -> np.ndarray:
    return np.asarray(mu_density(grid.nodes), dtype=float) * grid.spacing


def discrete_rho(weights: WeightTable, F: NonlocalPerturbation, mu: LocalMeasure,
                 block: PairBlock | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Grid densities rho+- = mu+- + xi_{G+-} with ``xi_G(x_i) h = sum_j G_ij w_ij``.

    This is the row-sum form of the Revuz density that makes the symmetrised and
    literal assemblies agree exactly.
    """
    grid = weights.grid
    blk = block if block is not None else pair_block(weights, F)
    h = grid.spacing
    rp = np.asarray(mu.vplus(grid.nodes), dtype=float).copy()
    rm = np.asarray(mu.vminus(grid.nodes), dtype=float).copy()
    if blk.index.size:
        rp[blk.index] += (blk.gplus * blk.W).sum(axis=1) / h
        rm[blk.index] += (blk.gminus * blk.W).sum(axis=1) / h
    return rp, rm


def assemble_killed_form(weights: WeightTable, F: NonlocalPerturbation, mu: LocalMeasure,
                         base: np.ndarray | None = None, block: PairBlock | None = None) -> np.ndarray:
    """E^-: ``1/2 sum (u_i - u_j)^2 e^{-F-_ij} w_ij + sum u_i^2 (exterior_i + rho-_i h)``."""
    grid = weights.grid
    blk = block if block is not None else pair_block(weights, F)
    A = (assemble_base_form(weights) if base is None else base).copy()
    _, rm = discrete_rho(weights, F, mu, blk)
    if blk.index.size:
        # Lap(W e^{-F-}) = Lap(W) - Lap(W G-)
        _laplacian_into(A, blk.index, blk.W * blk.gminus, sign=-1.0)
    A[np.diag_indices_from(A)] += rm * grid.spacing
    return A


def assemble_schrodinger_form(weights: WeightTable, F: NonlocalPerturbation, mu: LocalMeasure,
                              base: np.ndarray | None = None,
                              block: PairBlock | None = None) -> tuple[np.ndarray, np.ndarray]:
    """E^{mu,F} assembled two ways.

    Returns ``(literal, symmetrised)``: the literal route couples ``u_i u_j`` through
    ``G = e^F - 1``; the symmetrised route uses increments against G+- and the
    rho+- diagonals.  The symmetrised matrix is the canonical one.
    """
    grid = weights.grid
    h = grid.spacing
    blk = block if block is not None else pair_block(weights, F)
    A0 = assemble_base_form(weights) if base is None else base

    literal = A0.copy()
    literal[np.diag_indices_from(literal)] -= _measure_h(mu.signed, grid)
    if blk.index.size:
        literal[np.ix_(blk.index, blk.index)] -= blk.g * blk.W

    rp, rm = discrete_rho(weights, F, mu, blk)
    sym = A0.copy()
    if blk.index.size:
        _laplacian_into(sym, blk.index, blk.W * blk.gminus, sign=-1.0)
        _laplacian_into(sym, blk.index, blk.W * blk.gplus, sign=+1.0)
    sym[np.diag_indices_from(sym)] += (rm - rp) * h
    return literal, sym


def assemble_Y_form(A_minus: np.ndarray, weights: WeightTable, F: NonlocalPerturbation,
                    mu: LocalMeasure, block: PairBlock | None = None) -> tuple[np.ndarray, np.ndarray]:
    """E^Y = E^- + 1/2 sum (u_i - u_j)^2 G+_ij w_ij; returns ``(A_Y, b_rho)``.

    ``b_rho = rho+ h`` is the diagonal of the mass operator B.
    """
    blk = block if block is not None else pair_block(weights, F)
    A = A_minus.copy()
    if blk.index.size:
        _laplacian_into(A, blk.index, blk.W * blk.gplus, sign=+1.0)
    rp, _ = discrete_rho(weights, F, mu, blk)
    return A, rp * weights.grid.spacing


@dataclass
class FormSystem:
    """Assembled operators on one grid.  Treat as immutable after construction."""

    grid: Grid
    spec: ProcessSpec
    mu: LocalMeasure
    F: NonlocalPerturbation
    weights: WeightTable
    A_base: np.ndarray
    A_minus: np.ndarray
    A_schr: np.ndarray
    A_Y: np.ndarray
    b_rho: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    A_schr_literal: np.ndarray | None = None
    _green: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def decomposition(self) -> DecomposedPerturbation:
        return li_decompose(self.F)

    def green(self, which: str = "minus") -> "GreenOperator":
        """Cached Green operator for ``"minus"`` (R^-) or ``"Y"`` (R^Y)."""
        if which not in self._green:
            A = {"minus": self.A_minus, "Y": self.A_Y, "base": self.A_base}[which]
            self._green[which] = GreenOperator(A, self.grid.spacing)
        return self._green[which]

    def ground_state(self) -> "GroundState":
        if "ground" not in self._green:
            self._green["ground"] = principal_eigenpair(self.A_Y, self.b_rho,
                                                        factor=self.green("Y").factor)
        return self._green["ground"]


def build_form_system(grid: Grid, spec: ProcessSpec, mu: LocalMeasure, F: NonlocalPerturbation,
                      keep_literal: bool = False, weights: WeightTable | None = None) -> FormSystem:
    grid.check_supports(mu.support, F.support)
    if not F.is_zero:
        grid.check_resolution(spec.alpha, F.beta)
    weights = weights if weights is not None else assemble_weights(grid, spec)
    blk = pair_block(weights, F)
    base = assemble_base_form(weights)
    A_minus = assemble_killed_form(weights, F, mu, base=base, block=blk)
    literal, sym = assemble_schrodinger_form(weights, F, mu, base=base, block=blk)
    A_Y, b_rho = assemble_Y_form(A_minus, weights, F, mu, block=blk)
    rp, rm = discrete_rho(weights, F, mu, blk)
    return FormSystem(grid=grid, spec=spec, mu=mu, F=F, weights=weights, A_base=base,
                      A_minus=A_minus, A_schr=sym, A_Y=A_Y, b_rho=b_rho, rho_plus=rp,
                      rho_minus=rm, A_schr_literal=literal if keep_literal else None)


# ---------------------------------------------------------------- solves

class GreenOperator:
    """Cholesky-factored positive definite form; ``apply(f)`` solves ``A u = f h``."""

    def __init__(self, A: np.ndarray, spacing: float):
        self.spacing = spacing
        try:
            self.factor = linalg.cho_factor(A, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            ev = linalg.eigvalsh(A, subset_by_index=[0, 0])[0]
            raise NumericalError(f"operator is not positive definite (min eigenvalue {ev:.3g})") from exc
        self._A = A

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return linalg.cho_solve(self.factor, f * self.spacing, check_finite=False)

    def solve(self, rhs) -> np.ndarray:
        return linalg.cho_solve(self.factor, np.asarray(rhs, dtype=float), check_finite=False)

    def columns(self, idx) -> np.ndarray:
        """Columns of ``A^{-1}`` (the discrete Green kernel R(x, x_j))."""
        idx = np.atleast_1d(idx)
        E = np.zeros((self._A.shape[0], idx.size))
        E[idx, np.arange(idx.size)] = 1.0
        return self.solve(E)


def green_apply(A: np.ndarray, f, spacing: float) -> np.ndarray:
    """``u`` with ``A u = f h``; ``u(x) ~ int R(x, y) f(y) dy``."""
    op = GreenOperator(A, spacing)
    u = op.apply(f)
    res = np.linalg.norm(A @ u - np.asarray(f) * spacing)
    scale = np.linalg.norm(np.asarray(f) * spacing) or 1.0
    if res > 1e-8 * scale:
        raise NumericalError(f"Green solve residual {res:.3g} relative to {scale:.3g}")
    return u


@dataclass(frozen=True)
class GroundState:
    lam: float
    h: np.ndarray
    residual: float
    normalization: float
    iterations: int

    @property
    def max_h(self) -> float:
        return float(self.h.max())


def principal_eigenpair(A: np.ndarray, b: np.ndarray, tol: float = 1e-10, max_iter: int = 500,
                        residual_tol: float = 1e-10, factor=None) -> GroundState:
    """min u^T A u / u^T B u with B = diag(b) >= 0 by inverse power iteration.

    Iterates ``v <- A^{-1} B v`` (B-normalised).  Components in the null space of B
    are carried by the solve as the energy-minimising extension, so no explicit
    deflation is needed beyond B-normalisation.
    """
    b = np.asarray(b, dtype=float)
    if not np.any(b > 0):
        raise PreconditionError("rho+ vanishes on the grid: the variational problem is void")
    cf = factor if factor is not None else linalg.cho_factor(A, lower=True, check_finite=False)
    v = np.ones(A.shape[0])
    v /= math.sqrt(v @ (b * v))
    lam_prev = math.inf
    residual = math.inf
    for it in range(1, max_iter + 1):
        bv = b * v
        w = linalg.cho_solve(cf, bv, check_finite=False)
        bw = b * w
        lam = float((w @ bv) / (w @ bw))
        v = w / math.sqrt(w @ bw)
        if abs(lam - lam_prev) <= tol * abs(lam):
            residual = float(np.linalg.norm(A @ v - lam * (b * v)) / np.linalg.norm(v))
            if residual <= residual_tol:
                break
        lam_prev = lam
    else:
        raise ConvergenceError(f"inverse iteration stalled after {max_iter} steps "
                               f"(residual {residual:.3g})")
    if v.sum() < 0:
        v = -v
    if np.any(v <= 0):
        raise NumericalError("ground state is not strictly positive on the grid")
    return GroundState(lam=lam, h=v, residual=residual, normalization=float(v @ (b * v)),
                       iterations=it)


def domain_principal_value(D: np.ndarray, A_Y: np.ndarray, b: np.ndarray, lam: float) -> float:
    """theta(D) = min over u supported in D of u^T A_Y u / (lam u^T B u); inf if rho+ = 0 on D."""
    D = np.asarray(D)
    if D.size == 0:
        raise PreconditionError("empty domain")
    bD = b[D]
    if not np.any(bD > 0):
        return math.inf
    sub = A_Y[np.ix_(D, D)]
    return principal_eigenpair(sub, bD).lam / lam


def green_tight_tail(nu: np.ndarray, a: float, green: GreenOperator, grid: Grid) -> float:
    """max_x int_{|y| >= a} R(x, y) nu(y) dy on the grid."""
    mask = np.abs(grid.nodes) >= a
    if not mask.any():
        return 0.0
    return float(green.apply(np.where(mask, nu, 0.0)).max())


def greens_domination(green_minus: GreenOperator, green_Y: GreenOperator, probes) -> float:
    """max over probe columns of the entrywise ratio R^Y(., x_j) / R^-(., x_j)."""
    cy = green_Y.columns(probes)
    cm = green_minus.columns(probes)
    ok = (np.abs(cy) >= 1e-14) | (np.abs(cm) >= 1e-14)
    return float(np.max(cy[ok] / cm[ok]))


def a_infinity_diagnostic(fpair: np.ndarray, K_set: np.ndarray, green_minus: GreenOperator,
                          weights: WeightTable, n_side: int = 8) -> float:
    """3G-type statistic over a coarse subsample of (x, w) pairs (at most n_side**2).

    sum_{(y,z) not in K x K} R(x,y) F(y,z) R(z,w) w_yz / R(x,w); ``fpair`` is the full
    n x n table of the (non-negative) perturbation on the grid.
    """
    n = weights.grid.n
    if not np.any(fpair):
        return 0.0
    probes = np.unique(np.linspace(n // 8, n - 1 - n // 8, n_side).astype(int))
    R = green_minus.columns(probes)  # n x p, symmetric kernel
    inK = np.zeros(n, dtype=bool)
    inK[np.asarray(K_set, dtype=int)] = True
    M = fpair * weights.matrix()
    M[np.ix_(inK, inK)] = 0.0
    num = R.T @ M @ R
    den = R[probes, :]
    off = probes[:, None] != probes[None, :]
    return float(np.max(num[off] / den[off]))


@dataclass(frozen=True)
class AdmissibleBall:
    center: float
    radius: float
    statistic: float  # lam * ||R^Y(1_B rho+)||_inf

    @property
    def margin(self) -> float:
        return 1.0 - self.statistic


def assumption_A_radius(z: float, lam: float, green_Y: GreenOperator, rho_plus: np.ndarray,
                        grid: Grid) -> AdmissibleBall:
    """Largest dyadic r in {L/2, L/4, ...} with lam ||R^Y(1_{B(z,r)} rho+)||_inf < 1."""
    x = grid.nodes
    if not abs(z) < grid.half_width:
        raise PreconditionError("center must lie in the grid interior")
    r = grid.half_width / 2.0
    while r >= 4.0 * grid.spacing:
        f = np.where(np.abs(x - z) < r, rho_plus, 0.0)
        stat = lam * float(green_Y.apply(f).max())
        if stat < 1.0:
            return AdmissibleBall(center=z, radius=r, statistic=stat)
        r /= 2.0
    raise AssumptionAError(f"no admissible radius around z={z} down to 4h")


def min_ritz_value(A: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric matrix A."""
    return float(linalg.eigvalsh(A, subset_by_index=[0, 0])[0])
