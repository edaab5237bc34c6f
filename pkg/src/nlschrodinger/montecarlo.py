"""Jump-resolved simulation of the stable / relativistic process and
Feynman-Kac, gauge and Green estimators.

Jumps larger than ``epsilon`` are a compound Poisson stream; the small jumps are
replaced by a Brownian component with the matching variance, stepped with
``dt``.  Continuous additive functionals are left-point Riemann sums at step
resolution; the jump functional sums ``F(X_{s-}, X_s)`` over resolved jumps.
What the approximation leaves out is published as a bias bound with every
estimate.

Paths are simulated in chunks.  Chunk ``k`` of stream ``s`` draws from a Philox
generator keyed by ``(master_seed, s, k)``, so results do not depend on the order
in which chunks are evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .kernels import DomainError, ProcessSpec, jump_truncation_stats, levy_density, one_sided_tail
from .perturbations import LocalMeasure, NonlocalPerturbation, channel_density, li_decompose

__all__ = [
    "SimConfig",
    "Interval",
    "Domain",
    "JumpSampler",
    "DensityTable",
    "PathFunctionals",
    "FunctionalAccumulator",
    "PathRealization",
    "PathBatch",
    "band_density",
    "generator_sup",
    "MCEstimate",
    "UnsupportedError",
    "chunk_rng",
    "sample_increment_stable",
    "simulate",
    "sample_path",
    "accumulate_functionals",
    "feynman_kac_estimate",
    "gauge_estimate",
    "killed_green_estimate",
    "kato_time_diagnostic",
    "write_event_log",
]


class UnsupportedError(NotImplementedError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    ``horizon`` caps every path; ``weight_cap`` only counts weights above it.
    """

    epsilon: float = 0.02
    dt: float = 1e-3
    horizon: float = 50.0
    n_paths: int = 20_000
    master_seed: int = 20240917
    weight_cap: float | None = None
    chunk_size: int = 8192

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_paths < 100:
            raise ValueError("n_paths must be at least 100")
        if self.weight_cap is not None and not self.weight_cap > 0:
            raise ValueError("weight_cap must be positive")

    def replace(self, **kw) -> "SimConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return SimConfig(**vals)


def chunk_rng(master_seed: int, stream: int, chunk: int) -> np.random.Generator:
    """Counter-based generator for one chunk of one stream."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------- domains

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def contains(self, x):
        return (x > self.lo) & (x < self.hi)


@dataclass(frozen=True)
class Domain:
    """Finite union of open intervals (balls in d = 1)."""

    parts: tuple[Interval, ...]

    @classmethod
    def ball(cls, center: float, radius: float) -> "Domain":
        return cls((Interval(center - radius, center + radius),))

    @classmethod
    def union(cls, *domains: "Domain") -> "Domain":
        return cls(tuple(p for d in domains for p in d.parts))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for p in self.parts:
            out |= p.contains(x)
        return out

    @property
    def bounds(self) -> tuple[float, float]:
        return min(p.lo for p in self.parts), max(p.hi for p in self.parts)


# ---------------------------------------------------------------- jumps

class JumpSampler:
    """Signed jump sizes from the normalised tail of nu on ``|z| > epsilon``.

    Closed-form inverse CDF for m = 0; a 4096-point monotone inverse-CDF table of
    the tempered tail for m > 0 (mass beyond the table is reported in
    ``table_defect``).
    """

    def __init__(self, spec: ProcessSpec, epsilon: float, table_size: int = 4096):
        self.spec = spec
        self.epsilon = epsilon
        self.rate = 2.0 * one_sided_tail(epsilon, spec)
        self.table_defect = 0.0
        if spec.relativistic:
            decay = spec.mass_scale
            s_max = epsilon + 60.0 / decay
            s = np.geomspace(epsilon, s_max, table_size)
            t, wq = np.polynomial.legendre.leggauss(16)
            mid = 0.5 * (s[:-1] + s[1:])[:, None]
            half = 0.5 * (s[1:] - s[:-1])[:, None]
            pieces = (levy_density(mid + half * t, spec) * wq).sum(axis=1) * half[:, 0]
            tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
            total = tail[0] + one_sided_tail(s_max, spec)
            q = (tail + one_sided_tail(s_max, spec)) / total
            self.table_defect = float(q[-1])
            # log s as a monotone function of -log q
            self._inv = PchipInterpolator(-np.log(q), np.log(s), extrapolate=False)
            self._q_min = float(q[-1])
            self._s_max = s_max

    def sizes(self, rng: np.random.Generator, k: int) -> np.ndarray:
        u = 1.0 - rng.random(k)  # (0, 1]
        sign = np.where(rng.random(k) < 0.5, -1.0, 1.0)
        if not self.spec.relativistic:
            mag = self.epsilon * u ** (-1.0 / self.spec.alpha)
        else:
            uu = np.maximum(u, self._q_min)
            mag = np.exp(self._inv(-np.log(uu)))
        return sign * mag


def sample_increment_stable(alpha: float, t: float, rng: np.random.Generator, size=None,
                            spec: ProcessSpec | None = None) -> np.ndarray:
    """Exact symmetric alpha-stable increments over time ``t`` (Chambers-Mallows-Stuck).

    The law has characteristic function ``exp(-kappa t |u|^alpha)``, matching the
    Levy density of ``spec`` (m = 0 only).
    """
    if spec is None:
        spec = ProcessSpec(alpha=alpha)
    if spec.relativistic:
        raise UnsupportedError("relativistic increments have no closed form")
    if not t > 0:
        raise ValueError("t must be positive")
    a = spec.alpha
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    w = rng.exponential(1.0, size)
    if a == 1.0:
        x = np.tan(v)
    else:
        x = (np.sin(a * v) / np.cos(v) ** (1.0 / a)
             * (np.cos((1.0 - a) * v) / w) ** ((1.0 - a) / a))
    return (spec.intensity_multiplier * t) ** (1.0 / a) * x


# ---------------------------------------------------------------- functionals

class DensityTable:
    """Piecewise-linear table of ``NH(x)``, zero outside ``[-support, support]``."""

    def __init__(self, H, spec: ProcessSpec, certificate, support: float, n_nodes: int = 801,
                 values: Callable | None = None):
        self.support = support
        if support == 0.0:
            self.x = np.array([0.0])
            self.values = np.array([0.0])
        else:
            self.x = np.linspace(-support, support, n_nodes)
            if values is None:
                self.values = channel_density(H, self.x, spec, certificate, support)
            else:
                self.values = np.asarray(values(self.x), dtype=float)

    def __call__(self, x):
        return np.interp(x, self.x, self.values, left=0.0, right=0.0)

    @property
    def sup(self) -> float:
        return float(np.abs(self.values).max())

    @property
    def curvature(self) -> float:
        """Max second difference quotient of the nodal values."""
        if self.x.size < 3:
            return 0.0
        dx = self.x[1] - self.x[0]
        return float(np.abs(np.diff(self.values, 2)).max() / dx ** 2)


def band_density(H, x, spec: ProcessSpec, epsilon: float, beta: float, order: int = 32) -> np.ndarray:
    """``int_{0<|z|<=eps} H(x, x+z) nu(z) dz``, the Levy-system rate of unresolved jumps.

    Gauss-Legendre in ``t`` with ``z = eps t**p``, ``p = 1/(beta - alpha)``, which makes
    ``|z|**(beta-1-alpha) dz`` a constant multiple of ``dt``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = 1.0 / (beta - spec.alpha)
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    z = epsilon * t ** p
    jac = epsilon * p * t ** (p - 1.0) * levy_density(z, spec) * w
    xx = x[:, None]
    vals = H(xx, xx + z) + H(xx, xx - z)
    return vals @ jac


def generator_sup(values: np.ndarray, dx: float, spec: ProcessSpec) -> float:
    """``max_i |L f(x_i)|`` for f given on uniform nodes and zero beyond them.

    ``L f(x) = int_0^inf (f(x+z) + f(x-z) - 2 f(x)) nu(z) dz`` is summed over lattice
    shifts ``z = k dx`` with exact cell masses of nu; the centre cell uses the
    discrete second derivative against ``int_0^{dx/2} z**2 nu``.
    """
    f = np.asarray(values, dtype=float)
    n = f.size
    if n < 3 or not np.any(f):
        return 0.0
    k = np.arange(1, n)
    edges = np.concatenate([(k - 0.5) * dx, [(n - 0.5) * dx]])
    tails = np.array([one_sided_tail(e, spec) for e in edges]) if spec.relativistic \
        else spec.kernel_prefactor * edges ** (-spec.alpha) / spec.alpha
    mass = tails[:-1] - tails[1:]
    pad = np.concatenate([np.zeros(n), f, np.zeros(n)])
    Lf = -2.0 * f * tails[-1]
    for kk, w in zip(k, mass):
        Lf += (pad[n + kk:2 * n + kk] + pad[n - kk:2 * n - kk] - 2.0 * f) * w
    second = (pad[n + 1:2 * n + 1] + pad[n - 1:2 * n - 1] - 2.0 * f) / dx ** 2
    near = 0.5 * jump_truncation_stats(0.5 * dx, spec.alpha + 1.0, spec).small_jump_variance
    Lf += second * near
    return float(np.abs(Lf).max())


class PathFunctionals:
    """Densities and jump functions accumulated along paths.

    Besides V+-, F+- and the Revuz density of G+, the rates of unresolved jumps
    ``int_{|z|<=eps} F+-(x, x+z) nu(z) dz`` are tabulated; adding them as continuous
    functionals compensates the jump sums for the jumps replaced by the Gaussian.
    All tables share one set of nodes on ``[-S, S]``, S the larger support radius.
    """

    def __init__(self, mu: LocalMeasure, F: NonlocalPerturbation, spec: ProcessSpec,
                 epsilon: float, xi_gplus: DensityTable | None = None, n_nodes: int = 801):
        self.mu = mu
        self.F = F
        self.spec = spec
        self.epsilon = epsilon
        dec = li_decompose(F)
        self.decomposition = dec
        self.span = max(mu.support, F.support)
        S = self.span
        if F.is_zero:
            zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
            self.xi_gplus = DensityTable(None, spec, None, S, n_nodes, values=zero)
            self.band_plus = self.band_minus = self.xi_gplus
        else:
            self.xi_gplus = xi_gplus if xi_gplus is not None else DensityTable(
                dec.gplus, spec, dec.certificate, S, n_nodes,
                values=lambda x: channel_density(dec.gplus, x, spec, dec.certificate, F.support))
            self.band_plus = DensityTable(None, spec, None, S, n_nodes,
                                          values=lambda x: band_density(F.fplus, x, spec, epsilon, F.beta))
            self.band_minus = DensityTable(None, spec, None, S, n_nodes,
                                           values=lambda x: band_density(F.fminus, x, spec, epsilon, F.beta))
        self._rate_cache: dict = {}

    def with_mu(self, mu: LocalMeasure) -> "PathFunctionals":
        """Same F and epsilon with a new local measure whose support fits the tables."""
        if mu.support > self.span:
            return PathFunctionals(mu, self.F, self.spec, self.epsilon)
        return PathFunctionals(mu, self.F, self.spec, self.epsilon, xi_gplus=self.xi_gplus,
                               n_nodes=self.xi_gplus.x.size)

    def rho_plus(self, x):
        return self.mu.vplus(x) + self.xi_gplus(x)

    def nodes(self) -> np.ndarray:
        return self.xi_gplus.x

    def riemann_rate(self, lam: float) -> float:
        """``sup |L f|`` for the integrand f of the weight's continuous part.

        The expected left-point Riemann error of ``int_0^t f(X_s) ds`` is at most
        ``t dt sup|Lf| / 2``.
        """
        if lam not in self._rate_cache:
            x = self.nodes()
            if x.size < 3:
                self._rate_cache[lam] = 0.0
            else:
                f = (self.mu.vplus(x) - self.mu.vminus(x) + self.band_plus(x) - self.band_minus(x)
                     + (lam - 1.0) * self.rho_plus(x))
                self._rate_cache[lam] = generator_sup(f, x[1] - x[0], self.spec)
        return self._rate_cache[lam]

    def compensator_remainder(self) -> float:
        """Rate bound for ``E[e^{sum of unresolved F}] - e^{compensator}``.

        ``|e^F - 1 - F| <= e^M F**2 / 2`` and ``F**2 <= L**2 |z|**(2 beta)`` near the diagonal.
        """
        F = self.F
        if F.is_zero:
            return 0.0
        m2 = jump_truncation_stats(self.epsilon, 2.0 * F.beta, self.spec).beta_moment
        return 0.5 * math.exp(F.bound) * F.lipschitz ** 2 * m2


@dataclass
class FunctionalAccumulator:
    """Additive functionals of one or many paths (arrays broadcast elementwise).

    ``a_F_small_plus`` / ``a_F_small_minus`` are Riemann sums of the unresolved-jump
    rates (see :class:`PathFunctionals`); they enter ``a_plus`` / ``a_minus``.
    """

    a_mu_plus: np.ndarray | float = 0.0
    a_mu_minus: np.ndarray | float = 0.0
    a_F_plus: np.ndarray | float = 0.0
    a_F_minus: np.ndarray | float = 0.0
    a_xi_gplus: np.ndarray | float = 0.0
    a_F_small_plus: np.ndarray | float = 0.0
    a_F_small_minus: np.ndarray | float = 0.0
    elapsed: np.ndarray | float = 0.0
    bias_bound: np.ndarray | float = 0.0

    @property
    def a_rho_plus(self):
        return self.a_mu_plus + self.a_xi_gplus

    @property
    def a_plus(self):
        return self.a_mu_plus + self.a_F_plus + self.a_F_small_plus

    @property
    def a_minus(self):
        return self.a_mu_minus + self.a_F_minus + self.a_F_small_minus

    def exponent(self, lam: float):
        """``A_t + (lam - 1) A_t^{rho+}`` with ``A = A+ - A-``."""
        return self.a_plus - self.a_minus + (lam - 1.0) * self.a_rho_plus

    def __add__(self, other: "FunctionalAccumulator") -> "FunctionalAccumulator":
        return FunctionalAccumulator(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                                        for f in fields(self)})


@dataclass
class PathRealization:
    """Events ``(t, x_before, x_after, kind)`` and the terminal record of one path.

    Within a step of length dt the Gaussian move comes first, followed by the
    step's K jumps; their time stamps split the step evenly.
    """

    events: list
    t_end: float
    x_end: float
    exit_by_jump: bool
    censored: bool
    x0: float


@dataclass
class PathBatch:
    """Per-path outputs of :func:`simulate` (arrays of length n_paths)."""

    t_end: np.ndarray
    x_end: np.ndarray
    exit_by_jump: np.ndarray
    censored: np.ndarray
    extinguished: np.ndarray
    n_jumps: np.ndarray
    acc: FunctionalAccumulator
    occupation: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.t_end.size


_ACC_NAMES = ("a_mu_plus", "a_mu_minus", "a_F_plus", "a_F_minus", "a_xi_gplus",
              "a_F_small_plus", "a_F_small_minus")


def _run_chunk(x0: np.ndarray, domain: Domain | None, horizon: float, functionals: PathFunctionals,
               sampler: JumpSampler, sigma: float, dt: float, rng: np.random.Generator,
               occupation: Sequence[Callable] = (), extinction: float | None = None,
               record: bool = False, killed: bool = True) -> dict:
    n = x0.size
    n_occ = len(occupation)
    out = {name: np.zeros(n) for name in _ACC_NAMES}
    out.update(t_end=np.zeros(n), x_end=np.zeros(n), exit_by_jump=np.zeros(n, bool),
               censored=np.zeros(n, bool), extinguished=np.zeros(n, bool),
               n_jumps=np.zeros(n, np.int64), occupation=np.zeros((n_occ, n)))
    events = [] if record else None

    live = np.arange(n)
    X = x0.astype(float).copy()
    acc = {name: np.zeros(n) for name in _ACC_NAMES}
    occ = np.zeros((n_occ, n))
    nj = np.zeros(n, np.int64)
    vp, vm = functionals.mu.vplus, functionals.mu.vminus
    xi, bp, bm = functionals.xi_gplus, functionals.band_plus, functionals.band_minus
    fp, fm = functionals.F.fplus, functionals.F.fminus
    has_f = not functionals.F.is_zero
    rate_dt = sampler.rate * dt
    sd = sigma * math.sqrt(dt)
    n_steps = int(math.ceil(horizon / dt - 1e-9))

    def finish(mask, t, by_jump=False, censored=False, extinguished=False):
        nonlocal live, X, acc, occ, nj
        ids = live[mask]
        out["t_end"][ids] = t
        out["x_end"][ids] = X[mask]
        out["exit_by_jump"][ids] = by_jump
        out["censored"][ids] = censored
        out["extinguished"][ids] = extinguished
        for name in _ACC_NAMES:
            out[name][ids] = acc[name][mask]
        out["occupation"][:, ids] = occ[:, mask]
        out["n_jumps"][ids] = nj[mask]
        keep = ~mask
        live = live[keep]
        X = X[keep]
        acc = {name: v[keep] for name, v in acc.items()}
        occ = occ[:, keep]
        nj = nj[keep]

    for step in range(n_steps):
        if live.size == 0:
            break
        t0 = step * dt
        t1 = (step + 1) * dt
        if n_occ:
            if killed:
                surv = np.exp(-(acc["a_mu_minus"] + acc["a_F_minus"] + acc["a_F_small_minus"])) * dt
            else:
                surv = dt
            for i, f in enumerate(occupation):
                occ[i] += surv * f(X)
        acc["a_mu_plus"] += vp(X) * dt
        acc["a_mu_minus"] += vm(X) * dt
        acc["a_xi_gplus"] += xi(X) * dt
        if has_f:
            acc["a_F_small_plus"] += bp(X) * dt
            acc["a_F_small_minus"] += bm(X) * dt

        dG = sd * rng.standard_normal(live.size)
        if record:
            moves = [(float(X[0]), float(X[0] + dG[0]), "step")]
        X = X + dG
        if domain is not None:
            gone = ~domain.contains(X)
            if gone.any():
                finish(gone, t1)
        k = rng.poisson(rate_dt, live.size)
        j = 1
        while live.size and j <= k.max():
            sel = np.flatnonzero(k >= j)
            z = sampler.sizes(rng, sel.size)
            xb = X[sel]
            xa = xb + z
            if has_f:
                acc["a_F_plus"][sel] += fp(xb, xa)
                acc["a_F_minus"][sel] += fm(xb, xa)
            if record:
                moves.append((float(xb[0]), float(xa[0]), "jump"))
            X[sel] = xa
            nj[sel] += 1
            if domain is not None:
                gone = np.zeros(live.size, bool)
                gone[sel] = ~domain.contains(xa)
                if gone.any():
                    finish(gone, t1, by_jump=True)
                    k = k[~gone]
            j += 1
        if record:
            stamps = t0 + dt * np.arange(1, len(moves) + 1) / (len(moves) + 1)
            events.extend((float(ts), *mv) for ts, mv in zip(stamps, moves))
        if extinction is not None and live.size:
            dead = np.exp(-(acc["a_mu_minus"] + acc["a_F_minus"] + acc["a_F_small_minus"])) < extinction
            if dead.any():
                finish(dead, t1, extinguished=True)
    if live.size:
        finish(np.ones(live.size, bool), n_steps * dt, censored=domain is not None)
    out["events"] = events
    return out


def _sigma(functionals: PathFunctionals, config: SimConfig) -> float:
    if functionals.epsilon != config.epsilon:
        raise ValueError("functionals were tabulated for a different epsilon")
    spec = functionals.spec
    stats = jump_truncation_stats(config.epsilon, spec.alpha + 1.0, spec)
    return math.sqrt(stats.small_jump_variance)


def simulate(x0: float, domain: Domain | None, functionals: PathFunctionals, config: SimConfig,
             horizon: float | None = None, stream: int = 0, occupation: Sequence[Callable] = (),
             extinction: float | None = None, n_paths: int | None = None,
             killed: bool = True) -> PathBatch:
    """Simulate ``n_paths`` paths from ``x0`` until exit from ``domain`` or the horizon.

    With ``domain=None`` the paths run to the horizon and are not flagged censored.
    ``occupation`` functions f give ``sum_k e^{-a_minus(t_k)} f(X_{t_k}) dt`` per path
    (without the factor ``e^{-a_minus}`` when ``killed`` is false).
    """
    if domain is not None and not domain.contains(np.array([x0]))[0]:
        raise DomainError(f"start point {x0} is not in the domain")
    sigma = _sigma(functionals, config)
    horizon = config.horizon if horizon is None else horizon
    n_paths = config.n_paths if n_paths is None else n_paths
    sampler = _sampler(functionals.spec, config.epsilon)
    parts = []
    for c, start in enumerate(range(0, n_paths, config.chunk_size)):
        size = min(config.chunk_size, n_paths - start)
        rng = chunk_rng(config.master_seed, stream, c)
        parts.append(_run_chunk(np.full(size, float(x0)), domain, horizon, functionals, sampler,
                                sigma, config.dt, rng, occupation=tuple(occupation),
                                extinction=extinction, killed=killed))
    cat = {k: np.concatenate([p[k] for p in parts], axis=-1) for k in parts[0] if k != "events"}
    acc = FunctionalAccumulator(**{name: cat[name] for name in _ACC_NAMES}, elapsed=cat["t_end"])
    return PathBatch(t_end=cat["t_end"], x_end=cat["x_end"], exit_by_jump=cat["exit_by_jump"],
                     censored=cat["censored"], extinguished=cat["extinguished"],
                     n_jumps=cat["n_jumps"], acc=acc, occupation=cat["occupation"])


_SAMPLERS: dict = {}


def _sampler(spec: ProcessSpec, epsilon: float) -> JumpSampler:
    key = (spec, epsilon)
    if key not in _SAMPLERS:
        _SAMPLERS[key] = JumpSampler(spec, epsilon)
    return _SAMPLERS[key]


def sample_path(x0: float, functionals: PathFunctionals, config: SimConfig,
                domain: Domain | None = None, horizon: float | None = None,
                path_index: int = 0) -> tuple[PathRealization, FunctionalAccumulator]:
    """One path with its event list, drawn from the stream keyed by ``path_index``."""
    if domain is not None and not domain.contains(np.array([x0]))[0]:
        raise DomainError(f"start point {x0} is not in the domain")
    sigma = _sigma(functionals, config)
    horizon = config.horizon if horizon is None else horizon
    rng = chunk_rng(config.master_seed, _PATH_STREAM, path_index)
    res = _run_chunk(np.array([float(x0)]), domain, horizon, functionals,
                     _sampler(functionals.spec, config.epsilon), sigma, config.dt, rng, record=True)
    path = PathRealization(events=res["events"], t_end=float(res["t_end"][0]),
                           x_end=float(res["x_end"][0]), exit_by_jump=bool(res["exit_by_jump"][0]),
                           censored=bool(res["censored"][0]), x0=float(x0))
    acc = FunctionalAccumulator(**{name: float(res[name][0]) for name in _ACC_NAMES},
                                elapsed=path.t_end)
    return path, acc


_PATH_STREAM = 1 << 20


def accumulate_functionals(path: PathRealization, functionals: PathFunctionals,
                           config: SimConfig) -> FunctionalAccumulator:
    """Recompute the additive functionals of a recorded path from its events.

    Riemann sums take the left point of each ``dt`` step; jump sums run over the
    resolved jumps.  ``bias_bound`` bounds the expected error of the exponent:
    ``t (dt sup|Lf| / 2 + compensator remainder rate)``.
    """
    mu, F = functionals.mu, functionals.F
    acc = dict.fromkeys(_ACC_NAMES, 0.0)
    for _, xb, xa, kind in path.events:
        if kind == "step":
            x = np.array([xb])
            acc["a_mu_plus"] += float(mu.vplus(x)[0]) * config.dt
            acc["a_mu_minus"] += float(mu.vminus(x)[0]) * config.dt
            acc["a_xi_gplus"] += float(functionals.xi_gplus(x)[0]) * config.dt
            if not F.is_zero:
                acc["a_F_small_plus"] += float(functionals.band_plus(x)[0]) * config.dt
                acc["a_F_small_minus"] += float(functionals.band_minus(x)[0]) * config.dt
        elif not F.is_zero:
            acc["a_F_plus"] += float(F.fplus(np.array([xb]), np.array([xa]))[0])
            acc["a_F_minus"] += float(F.fminus(np.array([xb]), np.array([xa]))[0])
    rate = 0.5 * config.dt * functionals.riemann_rate(1.0) + functionals.compensator_remainder()
    return FunctionalAccumulator(**acc, elapsed=path.t_end, bias_bound=rate * path.t_end)


def write_event_log(path: PathRealization, fh) -> None:
    """One event per line: ``time x_before x_after kind``."""
    for t, xb, xa, kind in path.events:
        fh.write(f"{t!r} {xb!r} {xa!r} {kind}\n")


# ---------------------------------------------------------------- estimates

@dataclass
class MCEstimate:
    mean: float
    stderr: float
    n_effective: int
    bias_bound: float
    max_weight_observed: float
    n_paths: int
    censored: int = 0
    capped: int = 0
    usable: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def censor_fraction(self) -> float:
        return self.censored / self.n_paths


def _summarize(values: np.ndarray, weights: np.ndarray, bias: float, censored: int,
               config: SimConfig, censor_limit: float, extra=None) -> MCEstimate:
    n = values.size
    mean = float(np.sum(values) / n)
    sd = float(np.std(values, ddof=1))
    capped = int(np.sum(weights > config.weight_cap)) if config.weight_cap is not None else 0
    return MCEstimate(mean=mean, stderr=sd / math.sqrt(n), n_effective=n - censored,
                      bias_bound=float(bias), max_weight_observed=float(np.max(np.abs(weights))),
                      n_paths=n, censored=censored, capped=capped,
                      usable=censored <= censor_limit * n, extra=extra or {})


def feynman_kac_estimate(x: float, U: Domain, payoff: Callable, lam: float,
                         functionals: PathFunctionals, config: SimConfig, stream: int = 0,
                         truncate: bool = False, horizon: float | None = None) -> MCEstimate:
    """E_x[exp(A_tau + (lam - 1) A_tau^{rho+}) payoff(X_tau)], tau the exit time of U.

    Censored paths (horizon reached inside U) contribute 0 and are counted; with
    ``truncate`` they contribute their weight at the horizon with payoff 1, which
    estimates the truncated gauge ``E_x[exp(A^eta_{tau ^ T})]``.

    The bias bound is ``mean(|w payoff| (exp(b) - 1))`` with the per-path exponent
    error ``b = tau (dt sup|Lf| / 2 + compensator remainder rate)``.
    """
    batch = simulate(x, U, functionals, config, stream=stream, horizon=horizon)
    w = np.exp(batch.acc.exponent(lam))
    pay = np.asarray(payoff(batch.x_end), dtype=float)
    pay = np.where(batch.censored, 1.0 if truncate else 0.0, pay)
    vals = w * pay
    rate = 0.5 * config.dt * functionals.riemann_rate(lam) + functionals.compensator_remainder()
    bias = float(np.mean(np.abs(vals) * np.expm1(rate * batch.t_end)))
    extra = dict(step_exit_fraction=float(np.mean(~batch.exit_by_jump & ~batch.censored)),
                 mean_exit_time=float(np.mean(batch.t_end)),
                 mean_weight=float(np.mean(w)),
                 weight_q99=float(np.quantile(w, 0.99)),
                 weight_q999=float(np.quantile(w, 0.999)),
                 rho_weighted=float(np.mean(vals * batch.acc.a_rho_plus)))
    limit = math.inf if truncate else 0.01
    return _summarize(vals, w, bias, int(batch.censored.sum()), config, limit, extra)


def gauge_estimate(x: float, D: Domain, lam: float, functionals: PathFunctionals,
                   config: SimConfig, stream: int = 0, truncate: bool = False,
                   horizon: float | None = None) -> MCEstimate:
    """E_x^-[exp(A_tau^+ + (lam - 1) A_tau^{rho+})] with the killing realised by the weight e^{-A^-}."""
    return feynman_kac_estimate(x, D, np.ones_like, lam, functionals, config, stream=stream,
                                truncate=truncate, horizon=horizon)


def killed_green_estimate(x: float, f: Callable, functionals: PathFunctionals, config: SimConfig,
                          box: tuple[float, float], stream: int = 0, extinction: float = 1e-6,
                          riemann_variation: float | None = None) -> MCEstimate:
    """E_x[int_0^zeta e^{-(A^{mu-}_t + A^{F-}_t)} f(X_t) dt], zeta the exit time of ``box``.

    A path stops when it leaves the box, when its weight falls below ``extinction``
    or at the horizon (censored).

    The left-point Riemann error of the time integral is at most ``dt`` times the
    total variation of ``t -> P_t^- f(x)``; pass that variation as
    ``riemann_variation`` when it is known (e.g. from the discrete semigroup).
    Otherwise the Dynkin bound ``dt/2 E[zeta] sup|L f|`` is used.
    """
    domain = Domain((Interval(*box),))
    batch = simulate(x, domain, functionals, config, stream=stream, occupation=(f,),
                     extinction=extinction)
    vals = batch.occupation[0]
    xs = np.linspace(box[0], box[1], 4001)
    fx = np.asarray(f(xs), dtype=float)
    fsup = float(np.abs(fx).max())
    if riemann_variation is None:
        gsup = generator_sup(fx, xs[1] - xs[0], functionals.spec)
        riemann = 0.5 * config.dt * gsup * float(np.mean(batch.t_end))
    else:
        riemann = config.dt * riemann_variation
    # first-order error of the discretised killing exponent
    kill_sup = float(np.abs(functionals.mu.vminus(xs)).max()) + functionals.band_minus.sup
    killing = config.dt * kill_sup * abs(float(np.mean(vals)))
    tail = extinction * fsup * config.horizon
    extra = dict(mean_time=float(np.mean(batch.t_end)), extinguished=int(batch.extinguished.sum()),
                 bias_riemann=riemann, bias_killing=killing, bias_extinction=tail)
    return _summarize(vals, np.exp(-batch.acc.a_minus), riemann + killing + tail,
                      int(batch.censored.sum()), config, 0.05, extra)


def kato_time_diagnostic(nu: Callable, probes, times, spec: ProcessSpec, config: SimConfig,
                         stream: int = 0) -> np.ndarray:
    """``max_x E_x[int_0^t nu(X_s) ds]`` over ``probes`` for each t in ``times``.

    For a Kato-class density this tends to 0 with t.  Unperturbed paths, run to
    the horizon t without a domain.
    """
    fn = PathFunctionals(LocalMeasure.zero(), NonlocalPerturbation.zero(), spec, config.epsilon)
    out = []
    for t in times:
        vals = [float(np.mean(simulate(float(x), None, fn, config, horizon=float(t), stream=stream + k,
                                       occupation=(nu,), killed=False).occupation[0]))
                for k, x in enumerate(probes)]
        out.append(max(vals))
    return np.array(out)
