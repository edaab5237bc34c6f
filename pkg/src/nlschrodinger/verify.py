"""Cross-checks between the discrete forms and the path simulation.

Each check returns a :class:`CheckReport`; budgets are computed from the run
(sample standard errors, published simulation bias, and a grid-refinement
estimate of the discretisation error), never hand-set.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .config import RunConfig
from .forms import (FormSystem, GroundState, NumericalError, PreconditionError, assumption_A_radius,
                    build_form_system, domain_principal_value, min_ritz_value, principal_eigenpair)
from .grid import Grid
from .kernels import ProcessSpec, jump_truncation_stats
from .montecarlo import (DensityTable, Domain, MCEstimate, PathFunctionals, SimConfig,
                         feynman_kac_estimate, gauge_estimate, generator_sup,
                         killed_green_estimate, simulate)
from .perturbations import LocalMeasure, NonlocalPerturbation, bump, channel_density

__all__ = [
    "CheckReport",
    "CalibrationError",
    "calibrate_critical",
    "check_identities",
    "check_ground_state",
    "check_levy_system",
    "check_green_cross",
    "check_harmonicity",
    "check_gauge_spectral",
    "check_gauge_supercritical",
    "refined_system",
    "richardson_factor",
    "semigroup_variation",
    "run_suite",
]


class CalibrationError(NumericalError):
    pass


@dataclass
class CheckReport:
    """Outcome of one check.  ``passed`` is ``statistic <= tolerance`` unless
    ``predicate`` says otherwise (the divergence witness uses ``>``)."""

    name: str
    digest: str
    statistic: float
    tolerance: float
    passed: bool
    predicate: str = "statistic <= tolerance"
    details: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)


def _digest(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _estimate_row(prefix: dict, est: MCEstimate) -> dict:
    row = dict(prefix)
    row.update(mean=est.mean, stderr=est.stderr, bias=est.bias_bound, censored=est.censored,
               n_paths=est.n_paths, max_weight=est.max_weight_observed)
    return row


# ---------------------------------------------------------------- grid refinement

def richardson_factor(spec: ProcessSpec) -> float:
    """``1 / (1 - 2**-p)`` with the band-correction rate ``p = 2 - alpha``.

    ``|q_n - q_{2n}|`` times this factor estimates ``|q_n - q|`` for a quantity
    converging at rate ``h**p``.
    """
    p = 2.0 - spec.alpha
    return 1.0 / (1.0 - 2.0 ** (-p))


def refined_system(system: FormSystem) -> FormSystem:
    """Same problem on the grid with half the spacing (``2n - 1`` nested nodes)."""
    g = system.grid
    fine = Grid(g.half_width, 2 * g.n - 1)
    return build_form_system(fine, system.spec, system.mu, system.F)


def semigroup_variation(A: np.ndarray, f: np.ndarray, spacing: float, index,
                        t_max: float = 1e4, n_times: int = 4000) -> np.ndarray:
    """Total variation in t of ``(exp(-t A/h) f)_i`` for the nodes ``index``.

    ``A/h`` is the discrete generator; the variation bounds the left-point Riemann
    error of the time integral of ``P_t f`` by ``dt * variation``.
    """
    evals, Q = linalg.eigh(A)
    coef = Q.T @ f
    rates = evals / spacing
    ts = np.concatenate([[0.0], np.geomspace(1e-6, t_max, n_times)])
    decay = np.exp(-np.outer(rates, ts))
    out = []
    for i in np.atleast_1d(index):
        path = (Q[i] * coef) @ decay
        out.append(float(np.abs(np.diff(path)).sum() + abs(path[-1])))
    return np.array(out)


# ---------------------------------------------------------------- forms checks

def check_identities(system: FormSystem, rng: np.random.Generator, n_vectors: int = 20) -> CheckReport:
    """Exact operator identities on random vectors.

    Literal and symmetrised Schrodinger forms agree, ``A_schr = A_Y - B``, all
    operators are symmetric, and with F = 0 the form collapses to
    ``A_base - diag(mu h)``.
    """
    if system.A_schr_literal is None:
        system = build_form_system(system.grid, system.spec, system.mu, system.F, keep_literal=True,
                                   weights=system.weights)
    U = rng.standard_normal((system.n, n_vectors))

    def rel(A, B):
        qa = np.einsum("ij,ij->j", U, A @ U)
        qb = np.einsum("ij,ij->j", U, B @ U)
        scale = np.einsum("ij,ij->j", U, np.abs(A) @ np.abs(U))
        return float(np.max(np.abs(qa - qb) / scale))

    B = np.diag(system.b_rho)
    local = build_form_system(system.grid, system.spec, system.mu,
                              NonlocalPerturbation.zero(system.F.beta), weights=system.weights)
    h = system.grid.spacing
    takeda = local.A_base - np.diag((system.mu.vplus(system.grid.nodes)
                                     - system.mu.vminus(system.grid.nodes)) * h)
    values = {
        "literal_vs_symmetrised": rel(system.A_schr_literal, system.A_schr),
        "schr_equals_Y_minus_B": rel(system.A_Y - B, system.A_schr),
        "local_collapse": rel(local.A_schr, takeda),
        "asymmetry": max(float(np.abs(A - A.T).max() / np.abs(A).max())
                         for A in (system.A_base, system.A_minus, system.A_schr, system.A_Y)),
    }
    stat = max(values.values())
    rows = [dict(identity=k, relative_error=v) for k, v in values.items()]
    return CheckReport("identities", _digest(dict(n=system.n, k=n_vectors)), stat, 1e-12,
                       stat <= 1e-12, details=values, rows=rows)


def _lower_bound_product(system: FormSystem, gs: GroundState) -> float:
    rho = system.b_rho / system.grid.spacing
    return gs.lam * float(system.green("minus").apply(rho).max())


def check_ground_state(system: FormSystem, box_sizes=(10.0, 20.0, 40.0),
                       mu_scales=(0.5, 1.0, 2.0, 4.0)) -> CheckReport:
    """Residual, positivity, normalisation, the bound ``lam ||R^- rho+|| >= 1``, the
    energy identity and monotonicity of lambda under box growth (same spacing) and
    under scaling of mu+."""
    gs = system.ground_state()
    h = gs.h
    B = system.b_rho
    energy = float(h @ system.A_schr @ h - (gs.lam - 1.0) * (h @ (B * h)))
    ritz = min_ritz_value(system.A_Y)
    scale = float(np.abs(system.A_Y).max())
    conditions = [
        ("residual", gs.residual, 1e-9, gs.residual <= 1e-9),
        ("min_h", float(h.min()), 0.0, bool(h.min() > 0)),
        ("normalization_error", abs(gs.normalization - 1.0), 1e-10, abs(gs.normalization - 1.0) <= 1e-10),
        ("lambda", gs.lam, 0.0, gs.lam > 0),
        ("lambda_times_green_bound", _lower_bound_product(system, gs), 1.0 - 1e-8,
         _lower_bound_product(system, gs) >= 1.0 - 1e-8),
        ("energy_identity", abs(energy), 1e-9, abs(energy) <= 1e-9),
        ("min_ritz_A_Y", ritz, -1e-10 * scale, ritz >= -1e-10 * scale),
        ("max_h", gs.max_h, math.inf, math.isfinite(gs.max_h)),
    ]
    # nested boxes with the same spacing
    spacing = system.grid.spacing
    lams = []
    for L in box_sizes:
        n = int(round(2.0 * L / spacing)) + 1
        if n == system.n and abs(L - system.grid.half_width) < 1e-12:
            lams.append(gs.lam)
            continue
        sub = build_form_system(Grid(float(L), n), system.spec, system.mu, system.F)
        lams.append(sub.ground_state().lam)
    mono = all(a >= b - 1e-12 * abs(a) for a, b in zip(lams, lams[1:]))
    conditions.append(("lambda_monotone_in_box", float(mono), 1.0, mono))
    # larger mu+ can only lower lambda
    vplus_h = system.mu.vplus(system.grid.nodes) * spacing
    factor = system.green("Y").factor
    scaled = [principal_eigenpair(system.A_Y, system.b_rho + (c - 1.0) * vplus_h, factor=factor).lam
              for c in mu_scales]
    mono_c = all(a >= b - 1e-12 * abs(a) for a, b in zip(scaled, scaled[1:]))
    conditions.append(("lambda_monotone_in_mu_plus", float(mono_c), 1.0, mono_c))
    failed = [c[0] for c in conditions if not c[3]]
    rows = [dict(condition=c[0], value=c[1], bound=c[2], passed=c[3]) for c in conditions]
    rows += [dict(condition=f"lambda_L={L:g}", value=lam, bound="", passed=True)
             for L, lam in zip(box_sizes, lams)]
    rows += [dict(condition=f"lambda_c={c:g}", value=lam, bound="", passed=True)
             for c, lam in zip(mu_scales, scaled)]
    return CheckReport("ground_state", _digest(dict(n=system.n, L=system.grid.half_width)),
                       float(len(failed)), 0.0, not failed, details=dict(failed=failed, lambdas=lams, lambdas_mu_scaled=scaled),
                       rows=rows)


def calibrate_critical(mu: LocalMeasure, F: NonlocalPerturbation, grid: Grid, spec: ProcessSpec,
                       tol: float = 1e-6, max_iter: int = 200):
    """Bisection on c (in log scale) multiplying mu+ until ``|lambda - 1| <= tol``.

    A_Y does not depend on mu+, so every step is one eigen-solve with the same
    factorisation.  Returns ``(c_star, calibrated_system, trace)``.
    """
    base = build_form_system(grid, spec, mu, F)
    factor = base.green("Y").factor
    vplus_h = mu.vplus(grid.nodes) * grid.spacing
    trace = []

    def lam_of(c):
        b = base.b_rho + (c - 1.0) * vplus_h
        lam = principal_eigenpair(base.A_Y, b, factor=factor).lam
        trace.append((c, lam))
        return lam

    lo_e, hi_e = 0.0, 0.0  # log2 c bracket with lam(2**lo) > 1 > lam(2**hi)
    lam1 = lam_of(1.0)
    if abs(lam1 - 1.0) <= tol:
        return 1.0, base, trace
    step = -1.0 if lam1 < 1.0 else 1.0
    e = 0.0
    while True:
        e += step
        if abs(e) > 20:
            raise CalibrationError("no bracket for lambda = 1 in c in [2^-20, 2^20]")
        lam = lam_of(2.0 ** e)
        if (lam - 1.0) * (lam1 - 1.0) <= 0:
            break
    lo_e, hi_e = (e, e - step) if step < 0 else (e - step, e)
    for _ in range(max_iter):
        mid = 0.5 * (lo_e + hi_e)
        lam = lam_of(2.0 ** mid)
        if abs(lam - 1.0) <= tol:
            c = 2.0 ** mid
            return c, build_form_system(grid, spec, mu.scaled(c), F, weights=base.weights), trace
        if lam > 1.0:
            lo_e = mid
        else:
            hi_e = mid
    raise CalibrationError(f"bisection did not reach |lambda - 1| <= {tol}")


# ---------------------------------------------------------------- simulation checks

def check_levy_system(F: NonlocalPerturbation, x: float, t: float, config: SimConfig,
                      spec: ProcessSpec, stream: int = 101) -> CheckReport:
    """Jump sum ``sum_{s<=t} F(X_{s-}, X_s)`` against ``int_0^t NF(X_s) ds`` on common paths.

    The resolved jump sum misses the jumps below epsilon, at most ``L m_beta(eps) t``
    in mean; the time integral carries the Riemann bound ``t dt sup|L NF| / 2`` and
    the table interpolation error.
    """
    fn = PathFunctionals(LocalMeasure.zero(), F, spec, config.epsilon)
    if F.is_zero:
        nf = DensityTable(None, spec, None, 0.0)
    else:
        nf = DensityTable(None, spec, None, fn.span, fn.nodes().size,
                          values=lambda y: channel_density(F, y, spec, (F.lipschitz, F.beta), F.support))
    batch = simulate(x, None, fn, config, horizon=t, stream=stream, occupation=(nf,), killed=False)
    jump = batch.acc.a_F_plus - batch.acc.a_F_minus
    integral = batch.occupation[0]
    d = jump - integral
    n = d.size
    se = float(np.std(d, ddof=1) / math.sqrt(n))
    diff = float(np.mean(d))
    if F.is_zero:
        bias = 0.0
    else:
        dx = nf.x[1] - nf.x[0]
        m_beta = jump_truncation_stats(config.epsilon, F.beta, spec).beta_moment
        bias = (F.lipschitz * m_beta * t + 0.5 * config.dt * t * generator_sup(nf.values, dx, spec)
                + t * nf.curvature * dx * dx / 8.0)
    tol = 3.0 * se + bias
    details = dict(jump_mean=float(np.mean(jump)), jump_stderr=float(np.std(jump, ddof=1) / math.sqrt(n)),
                   integral_mean=float(np.mean(integral)),
                   integral_stderr=float(np.std(integral, ddof=1) / math.sqrt(n)),
                   diff=diff, paired_stderr=se, bias=bias, n_paths=n, epsilon=config.epsilon)
    return CheckReport("levy_system", _digest(dict(x=x, t=t, cfg=config, F=F.params)), abs(diff), tol,
                       abs(diff) <= tol, details=details, rows=[dict(x=x, t=t, **details)])


def check_green_cross(system: FormSystem, f, probes, config: SimConfig, functionals: PathFunctionals,
                      refined: FormSystem | None = None, stream: int = 201) -> CheckReport:
    """Killed-process occupation estimate against ``A_minus u = f h`` at the probes.

    Budget per probe: ``3 stderr`` + published simulation bias (Riemann error from
    the discrete semigroup's variation, killing discretisation) + Richardson
    estimate of the grid error.
    """
    grid = system.grid
    fv = np.asarray(f(grid.nodes), dtype=float)
    u = system.green("minus").apply(fv)
    probes = np.asarray(probes, dtype=float)
    idx = np.array([int(np.argmin(np.abs(grid.nodes - p))) for p in probes])
    if np.any(fv):
        refined = refined if refined is not None else refined_system(system)
        fine = refined.grid
        u2 = refined.green("minus").apply(np.asarray(f(fine.nodes), dtype=float))
        grid_err = np.abs(grid.interpolate(u, probes) - fine.interpolate(u2, probes)) * richardson_factor(system.spec)
        variation = semigroup_variation(system.A_minus, fv, grid.spacing, idx)
    else:
        grid_err = np.zeros(probes.size)
        variation = np.zeros(probes.size)
    rows, ratios = [], []
    for k, x in enumerate(probes):
        est = killed_green_estimate(float(x), f, functionals, config, box=grid.box, stream=stream + k,
                                    riemann_variation=float(variation[k]))
        ref = float(grid.interpolate(u, x))
        budget = grid_err[k] + est.bias_bound
        allowed = 3.0 * est.stderr + budget
        diff = abs(est.mean - ref)
        ok = est.usable and diff <= allowed
        ratios.append(diff / allowed if allowed > 0 else (0.0 if diff == 0 else math.inf))
        if not est.usable:
            ratios[-1] = math.inf
        rows.append(_estimate_row(dict(x=float(x), reference=ref), est)
                    | dict(grid_budget=float(grid_err[k]), allowed=allowed, diff=diff, passed=ok))
    stat = max(ratios)
    return CheckReport("green_cross", _digest(dict(n=system.n, probes=probes.tolist(), cfg=config)),
                       stat, 1.0, stat <= 1.0, predicate="max |diff| / (3 stderr + budget) <= 1",
                       rows=rows)


def _ground_state_errors(system: FormSystem, refined: FormSystem):
    """Richardson estimates (sup error of h, error of lambda) and the refined h."""
    gs, gs2 = system.ground_state(), refined.ground_state()
    R = richardson_factor(system.spec)
    e_sup = float(np.abs(gs.h - gs2.h[::2]).max()) * R
    e_lam = abs(gs.lam - gs2.lam) * R
    return e_sup, e_lam, gs2


def check_harmonicity(system: FormSystem, U: Domain, probes, config: SimConfig,
                      functionals: PathFunctionals, refined: FormSystem | None = None,
                      lam: float | None = None, name: str = "harmonicity", stream: int = 301,
                      max_relative_budget: float = 0.02) -> CheckReport:
    """``h(x) = E_x[exp(A_tau + (lam - 1) A^{rho+}_tau) h(X_tau)]`` at the probes.

    The payoff is the grid ground state interpolated (0 outside the box).  The
    combined budget is the published simulation bias plus the grid error
    ``e_h(x) + e_sup E[w] + e_lam E[w A^{rho+} h]``; it must stay below
    ``max_relative_budget * h(x)``.  ``lam`` overrides the grid eigenvalue (used
    with lam = 1 after calibration; the mismatch enters ``e_lam``).
    """
    grid = system.grid
    gs = system.ground_state()
    refined = refined if refined is not None else refined_system(system)
    e_sup, e_lam, gs2 = _ground_state_errors(system, refined)
    lam_used = gs.lam if lam is None else float(lam)
    e_lam = e_lam + abs(lam_used - gs.lam)
    payoff = lambda y: grid.interpolate(gs.h, y)
    R = richardson_factor(system.spec)
    rows, ratios, rel_budgets = [], [], []
    for k, x in enumerate(np.asarray(probes, dtype=float)):
        est = feynman_kac_estimate(float(x), U, payoff, lam_used, functionals, config, stream=stream + k)
        ref = float(payoff(x))
        e_x = abs(ref - float(refined.grid.interpolate(gs2.h, x))) * R
        grid_budget = e_x + e_sup * est.extra["mean_weight"] + e_lam * abs(est.extra["rho_weighted"])
        budget = grid_budget + est.bias_bound
        allowed = 3.0 * est.stderr + budget
        diff = abs(est.mean - ref)
        ok = est.usable and diff <= allowed and budget <= max_relative_budget * ref
        ratios.append(diff / allowed if est.usable else math.inf)
        rel_budgets.append(budget / ref)
        rows.append(_estimate_row(dict(x=float(x), h=ref), est)
                    | dict(grid_budget=grid_budget, budget=budget, relative_budget=budget / ref,
                           allowed=allowed, diff=diff, passed=ok))
    stat = max(ratios)
    passed = stat <= 1.0 and max(rel_budgets) <= max_relative_budget
    details = dict(lam=lam_used, lam_grid=gs.lam, e_sup=e_sup, e_lam=e_lam,
                   max_relative_budget=max(rel_budgets),
                   domain=[(p.lo, p.hi) for p in U.parts])
    return CheckReport(name, _digest(dict(n=system.n, probes=list(map(float, probes)), cfg=config,
                                          U=details["domain"], lam=lam_used)),
                       stat, 1.0, passed,
                       predicate="max |diff| / (3 stderr + budget) <= 1 and budget <= 2% of h",
                       details=details, rows=rows)


def _jensen_floor(system: FormSystem, D_idx: np.ndarray, lam: float, functionals: PathFunctionals) -> float:
    """``exp(-sup_x E_x[A^- + (1 - lam)^+ A^{rho+}])`` over D, by the discrete Green function of D.

    Jensen gives ``E_x[e^{A^eta}] >= exp(E_x[A^eta])`` and ``A^eta >= -A^- - (1-lam)^+ A^{rho+}``.
    """
    grid = system.grid
    x = grid.nodes[D_idx]
    F = system.F
    kill = system.mu.vminus(x) + (channel_density(F.fminus, x, system.spec, (F.lipschitz, F.beta),
                                                  F.support) if not F.is_zero else 0.0)
    dens = kill + max(1.0 - lam, 0.0) * system.b_rho[D_idx] / grid.spacing
    sub = system.A_base[np.ix_(D_idx, D_idx)]
    pot = linalg.solve(sub, dens * grid.spacing, assume_a="pos")
    return math.exp(-float(pot.max()))


def check_gauge_spectral(system: FormSystem, center: float, radius: float, probes,
                         config: SimConfig, functionals: PathFunctionals,
                         stream: int = 401) -> CheckReport:
    """theta(D) > 1 and a finite, stable gauge on D = B(center, radius).

    Predicate: at every probe the estimates with n and 2n paths (independent
    streams) agree within 3 combined standard errors, censoring is negligible,
    and each estimate respects the Jensen floor.  Without perturbations theta is
    infinite and the gauge must be 1.
    """
    gs = system.ground_state()
    D_idx = system.grid.indices_within(center, radius)
    theta = domain_principal_value(D_idx, system.A_Y, system.b_rho, gs.lam)
    D = Domain.ball(center, radius)
    floor = _jensen_floor(system, D_idx, gs.lam, functionals)
    rows, ok_all, worst = [], True, 0.0
    for k, x in enumerate(np.asarray(probes, dtype=float)):
        a = gauge_estimate(float(x), D, gs.lam, functionals, config, stream=stream + 2 * k)
        b = gauge_estimate(float(x), D, gs.lam, functionals, config.replace(n_paths=2 * config.n_paths),
                           stream=stream + 2 * k + 1)
        comb = math.sqrt(a.stderr ** 2 + b.stderr ** 2)
        change = abs(a.mean - b.mean)
        ratio = change / (3.0 * comb) if comb > 0 else (0.0 if change == 0 else math.inf)
        floor_ok = min(a.mean + 3 * a.stderr, b.mean + 3 * b.stderr) >= floor * (1 - 1e-12)
        finite = math.isfinite(a.max_weight_observed) and math.isfinite(b.max_weight_observed)
        ok = a.usable and b.usable and ratio <= 1.0 and floor_ok and finite
        if not math.isfinite(theta) and abs(a.mean - 1.0) > 3 * a.stderr + 1e-12:
            ok = False
        ok_all &= ok
        worst = max(worst, ratio if (a.usable and b.usable and floor_ok and finite) else math.inf)
        rows.append(dict(x=float(x), gauge_n=a.mean, stderr_n=a.stderr, gauge_2n=b.mean, stderr_2n=b.stderr,
                         change_ratio=ratio, jensen_floor=floor, weight_q999=b.extra["weight_q999"],
                         censored=a.censored + b.censored, passed=ok))
    ok_all &= theta > 1.0
    details = dict(theta=theta, lam=gs.lam, center=center, radius=radius, jensen_floor=floor)
    return CheckReport("gauge_spectral", _digest(dict(n=system.n, D=(center, radius), cfg=config)),
                       worst, 1.0, bool(ok_all),
                       predicate="theta(D) > 1 and gauge stable under doubling paths (ratio <= 1)",
                       details=details, rows=rows)


def _theta_scaled(A_sub: np.ndarray, b_sub: np.ndarray, vplus_sub: np.ndarray, lam: float, c: float) -> float:
    return principal_eigenpair(A_sub, b_sub + (c - 1.0) * vplus_sub).lam / lam


def check_gauge_supercritical(system: FormSystem, center: float, radius: float, probe: float,
                              config: SimConfig, functionals: PathFunctionals, factor: float = 2.0,
                              threshold: float = 10.0, stream: int = 501) -> CheckReport:
    """Divergence witness for a supercritical control on D = B(center, radius).

    lambda stays fixed while mu+ is scaled by c; the critical scale ``theta_c(D) = 1``
    is found by bisection and the control uses ``factor`` times it, so theta(D) < 1.
    The truncated gauge ``E_x[exp(A^eta_{tau ^ T})]`` is estimated at horizon T with
    n paths and at 2T with 2n paths; the witness fires when it grows by more than
    ``threshold``.  T is ``4 / gamma`` with gamma the growth rate of the discrete
    Feynman-Kac semigroup on D.
    """
    grid = system.grid
    gs = system.ground_state()
    D_idx = grid.indices_within(center, radius)
    A_sub = system.A_Y[np.ix_(D_idx, D_idx)]
    b_sub = system.b_rho[D_idx]
    vplus_sub = system.mu.vplus(grid.nodes[D_idx]) * grid.spacing
    if not np.any(vplus_sub > 0):
        raise PreconditionError("mu+ vanishes on D; no supercritical control exists")
    theta1 = _theta_scaled(A_sub, b_sub, vplus_sub, gs.lam, 1.0)
    lo, hi = 1.0, 2.0
    while _theta_scaled(A_sub, b_sub, vplus_sub, gs.lam, hi) > 1.0:
        lo, hi = hi, 2.0 * hi
        if hi > 2.0 ** 20:
            raise CalibrationError("no critical scale for mu+ on D")
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if _theta_scaled(A_sub, b_sub, vplus_sub, gs.lam, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    c_crit = math.sqrt(lo * hi)
    c = factor * c_crit
    theta_c = _theta_scaled(A_sub, b_sub, vplus_sub, gs.lam, c)
    op = (A_sub - gs.lam * np.diag(b_sub + (c - 1.0) * vplus_sub)) / grid.spacing
    gamma = -float(linalg.eigvalsh(op, subset_by_index=[0, 0])[0])
    digest = _digest(dict(n=system.n, D=(center, radius), c=c, cfg=config))
    predicate = "theta(D) < 1 and gauge(2T) / gauge(T) > threshold"
    if gamma <= 0.0:
        # not supercritical: no growth to witness
        details = dict(theta_at_c1=theta1, c_critical=c_crit, c_control=c, theta_control=theta_c,
                       growth_rate=gamma)
        return CheckReport("gauge_supercritical", digest, 0.0, threshold, False, predicate=predicate,
                           details=details)
    T = 4.0 / gamma
    fn = functionals.with_mu(system.mu.scaled(c))
    D = Domain.ball(center, radius)
    a = gauge_estimate(probe, D, gs.lam, fn, config, stream=stream, truncate=True, horizon=T)
    b = gauge_estimate(probe, D, gs.lam, fn, config.replace(n_paths=2 * config.n_paths),
                       stream=stream + 1, truncate=True, horizon=2.0 * T)
    ratio = b.mean / a.mean
    details = dict(theta_at_c1=theta1, c_critical=c_crit, c_control=c, theta_control=theta_c,
                   growth_rate=gamma, horizon=T, gauge_T=a.mean, stderr_T=a.stderr, gauge_2T=b.mean,
                   stderr_2T=b.stderr, censored_T=a.censored, censored_2T=b.censored)
    rows = [dict(horizon=T, n_paths=a.n_paths, gauge=a.mean, stderr=a.stderr, censored=a.censored),
            dict(horizon=2 * T, n_paths=b.n_paths, gauge=b.mean, stderr=b.stderr, censored=b.censored)]
    return CheckReport("gauge_supercritical", digest, ratio, threshold, bool(theta_c < 1.0 and ratio > threshold),
                       predicate=predicate, details=details, rows=rows)


# ---------------------------------------------------------------- suite

_STREAMS = {"levy_system": 100, "green_cross": 200, "harmonicity": 300, "harmonicity_union": 400,
            "harmonicity_critical": 500, "gauge_spectral": 600, "gauge_supercritical": 700}


def _harmonic_probes(lo: float, hi: float) -> np.ndarray:
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + half * np.array([-0.6, -0.3, 0.0, 0.3, 0.6])


def run_suite(cfg: RunConfig, selection=None, log=None) -> list[CheckReport]:
    """Run the selected checks of ``cfg`` in a fixed order; each owns a fixed stream."""
    sel = tuple(cfg.checks.selection if selection is None else selection)
    say = log or (lambda msg: None)
    spec, grid = cfg.build_spec(), cfg.build_grid()
    mu, F = cfg.build_mu(), cfg.build_F()
    sim = cfg.build_sim()
    ck = cfg.checks
    reports: list[CheckReport] = []
    system = build_form_system(grid, spec, mu, F)
    needs_mc = any(s in sel for s in _STREAMS)
    fn = PathFunctionals(mu, F, spec, sim.epsilon) if needs_mc else None
    cache = {}

    def refined():
        if "refined" not in cache:
            cache["refined"] = refined_system(system)
        return cache["refined"]

    if "identities" in sel:
        say("identities")
        # exact algebra is grid independent; n = 400 on the smallest admissible box
        small = build_form_system(Grid(2.0 * max(mu.support, F.support, 1.0), 400), spec, mu, F,
                                  keep_literal=True)
        reports.append(check_identities(small, np.random.default_rng(sim.master_seed)))
    if "ground_state" in sel:
        say("ground_state")
        reports.append(check_ground_state(system, ck.box_sizes))
    if "levy_system" in sel:
        say("levy_system")
        reports.append(check_levy_system(F, ck.levy_x, ck.levy_t, sim.replace(n_paths=ck.levy_paths),
                                         spec, stream=_STREAMS["levy_system"]))
    if "green_cross" in sel:
        say("green_cross")
        f = lambda x: bump(x, ck.green_center, ck.green_width)
        gcfg = sim.replace(dt=ck.green_dt, n_paths=ck.green_paths, horizon=ck.green_horizon)
        reports.append(check_green_cross(system, f, ck.green_probes, gcfg, fn, refined(),
                                         stream=_STREAMS["green_cross"]))
    hcfg = sim.replace(n_paths=ck.harmonic_paths)
    gs = system.ground_state() if any(s.startswith("harmonicity") or s.startswith("gauge") for s in sel) else None
    if "harmonicity" in sel:
        say("harmonicity")
        ball = assumption_A_radius(ck.harmonic_center, gs.lam, system.green("Y"), system.b_rho / grid.spacing, grid)
        U = Domain.ball(ball.center, ball.radius)
        r = check_harmonicity(system, U, _harmonic_probes(*U.bounds), hcfg, fn, refined(),
                              stream=_STREAMS["harmonicity"])
        r.details["assumption_A_statistic"] = ball.statistic
        reports.append(r)
    if "harmonicity_union" in sel:
        say("harmonicity_union")
        balls = [assumption_A_radius(z, gs.lam, system.green("Y"), system.b_rho / grid.spacing, grid)
                 for z in ck.union_centers]
        U = Domain.union(*[Domain.ball(b.center, b.radius) for b in balls])
        (b1, b2) = balls
        if abs(b1.center - b2.center) >= b1.radius + b2.radius:
            raise PreconditionError("union balls do not overlap")
        r = check_harmonicity(system, U, _harmonic_probes(*U.bounds), hcfg, fn, refined(),
                              name="harmonicity_union", stream=_STREAMS["harmonicity_union"])
        r.details["assumption_A_statistics"] = [b.statistic for b in balls]
        reports.append(r)
    if "harmonicity_critical" in sel:
        say("harmonicity_critical")
        F_c = cfg.build_F(ck.critical_fplus_scale)
        c_star, crit, trace = calibrate_critical(mu, F_c, grid, spec)
        fn_c = PathFunctionals(crit.mu, F_c, spec, sim.epsilon)
        lam_c = crit.ground_state().lam
        ball = assumption_A_radius(ck.harmonic_center, lam_c, crit.green("Y"), crit.b_rho / grid.spacing, grid)
        U = Domain.ball(ball.center, ball.radius)
        r = check_harmonicity(crit, U, _harmonic_probes(*U.bounds), hcfg, fn_c, refined_system(crit),
                              lam=1.0, name="harmonicity_critical", stream=_STREAMS["harmonicity_critical"])
        r.details.update(c_star=c_star, fplus_scale=ck.critical_fplus_scale, lam_calibrated=lam_c,
                         bisection_steps=len(trace),
                         assumption_A_statistic=ball.statistic)
        reports.append(r)
    if "gauge_spectral" in sel:
        say("gauge_spectral")
        reports.append(check_gauge_spectral(system, ck.gauge_center, ck.gauge_radius, ck.gauge_probes,
                                            sim.replace(n_paths=ck.gauge_paths), fn,
                                            stream=_STREAMS["gauge_spectral"]))
    if "gauge_supercritical" in sel:
        say("gauge_supercritical")
        reports.append(check_gauge_supercritical(system, ck.gauge_center, ck.gauge_radius, ck.gauge_center,
                                                 sim.replace(n_paths=ck.gauge_paths), fn,
                                                 factor=ck.supercritical_factor,
                                                 threshold=ck.witness_threshold,
                                                 stream=_STREAMS["gauge_supercritical"]))
    digest = cfg.digest()
    for r in reports:
        r.digest = f"{digest}-{r.digest}"
    return reports
