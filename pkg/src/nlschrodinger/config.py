"""Run configuration: a sectioned ``key = value`` file mapped onto frozen dataclasses.

Every experiment is reproducible from one config file (the seed lives in ``[sim]``).
Unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import get_type_hints

from .grid import Grid
from .kernels import ProcessSpec
from .montecarlo import SimConfig
from .perturbations import LocalMeasure, NonlocalPerturbation, bump_pair_perturbation

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "dump_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessSection:
    alpha: float = 1.2
    mass: float = 0.0
    intensity_multiplier: float = 2.0


@dataclass(frozen=True)
class GridSection:
    half_width: float = 20.0
    n: int = 2000


@dataclass(frozen=True)
class BumpPairSection:
    """Amplitudes, centres and widths of the positive and negative bumps."""

    a_plus: float = 0.0
    c_plus: float = 0.0
    w_plus: float = 1.0
    a_minus: float = 0.0
    c_minus: float = 0.0
    w_minus: float = 1.0


@dataclass(frozen=True)
class MuSection(BumpPairSection):
    a_plus: float = 1.0
    w_plus: float = 1.5
    a_minus: float = 0.5
    c_minus: float = 2.5
    w_minus: float = 1.0


@dataclass(frozen=True)
class PerturbationSection(BumpPairSection):
    a_plus: float = 0.6
    c_plus: float = -1.0
    w_plus: float = 2.0
    a_minus: float = 0.5
    c_minus: float = 2.0
    w_minus: float = 1.5
    beta: float = 2.0


@dataclass(frozen=True)
class SimSection:
    epsilon: float = 0.02
    dt: float = 1e-3
    n_paths: int = 20_000
    master_seed: int = 20240917
    horizon: float = 50.0
    weight_cap: float | None = None
    probes: tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0)
    domain_center: float = 0.0
    domain_radius: float = 1.25


ALL_CHECKS = ("identities", "ground_state", "levy_system", "green_cross", "harmonicity",
              "harmonicity_union", "harmonicity_critical", "gauge_spectral", "gauge_supercritical")


@dataclass(frozen=True)
class ChecksSection:
    selection: tuple[str, ...] = ALL_CHECKS
    box_sizes: tuple[float, ...] = (10.0, 20.0, 40.0)
    levy_x: float = 0.0
    levy_t: float = 1.0
    levy_paths: int = 100_000
    green_center: float = 0.0
    green_width: float = 1.0
    green_probes: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    green_dt: float = 0.01
    green_paths: int = 12_000
    green_horizon: float = 200.0
    harmonic_center: float = 0.0
    union_centers: tuple[float, ...] = (-1.0, 0.0)
    harmonic_paths: int = 20_000
    gauge_center: float = 0.0
    gauge_radius: float = 1.5
    gauge_probes: tuple[float, ...] = (-0.5, 0.0, 0.5)
    gauge_paths: int = 20_000
    supercritical_factor: float = 2.0
    witness_threshold: float = 10.0
    # the critical run scales the positive amplitude of F first: with the default
    # F, lambda stays below 1 even as mu+ -> 0 and no c reaches lambda = 1
    critical_fplus_scale: float = 0.5


_SECTIONS = {
    "process": ProcessSection,
    "grid": GridSection,
    "mu": MuSection,
    "perturbation": PerturbationSection,
    "sim": SimSection,
    "checks": ChecksSection,
}


@dataclass(frozen=True)
class RunConfig:
    process: ProcessSection = field(default_factory=ProcessSection)
    grid: GridSection = field(default_factory=GridSection)
    mu: MuSection = field(default_factory=MuSection)
    perturbation: PerturbationSection = field(default_factory=PerturbationSection)
    sim: SimSection = field(default_factory=SimSection)
    checks: ChecksSection = field(default_factory=ChecksSection)

    def __post_init__(self):
        try:
            self.validate()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self) -> None:
        self.build_spec()
        grid = self.build_grid()
        mu, F = self.build_mu(), self.build_F()
        grid.check_supports(mu.support, F.support)
        if not F.is_zero:
            grid.check_resolution(self.process.alpha, F.beta)
        self.build_sim()
        unknown = set(self.checks.selection) - set(ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
        for name in ("levy_paths", "green_paths", "harmonic_paths", "gauge_paths"):
            if getattr(self.checks, name) < 100:
                raise ConfigError(f"checks.{name} must be at least 100")
        if not self.checks.critical_fplus_scale >= 0:
            raise ConfigError("checks.critical_fplus_scale must be non-negative")
        if len(self.checks.union_centers) != 2:
            raise ConfigError("checks.union_centers needs exactly two centres")

    # -- builders
    def build_spec(self) -> ProcessSpec:
        p = self.process
        return ProcessSpec(alpha=p.alpha, mass=p.mass, intensity_multiplier=p.intensity_multiplier)

    def build_grid(self) -> Grid:
        return Grid(self.grid.half_width, self.grid.n)

    def build_mu(self) -> LocalMeasure:
        return LocalMeasure.bumps(**asdict(self.mu))

    def build_F(self, fplus_scale: float = 1.0) -> NonlocalPerturbation:
        params = asdict(self.perturbation)
        params["a_plus"] *= fplus_scale
        return bump_pair_perturbation(**params)

    def build_sim(self, **overrides) -> SimConfig:
        s = self.sim
        cfg = SimConfig(epsilon=s.epsilon, dt=s.dt, horizon=s.horizon, n_paths=s.n_paths,
                        master_seed=s.master_seed, weight_cap=s.weight_cap)
        return cfg.replace(**overrides) if overrides else cfg

    # -- overrides and digests
    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, sim=replace(self.sim, master_seed=int(seed)))

    def with_paths(self, n: int) -> "RunConfig":
        """Set every path count (simulation and all checks) to ``n``."""
        n = int(n)
        return replace(self, sim=replace(self.sim, n_paths=n),
                       checks=replace(self.checks, levy_paths=n, green_paths=n,
                                      harmonic_paths=n, gauge_paths=n))

    def as_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def digest(self) -> str:
        """Hash of the full configuration."""
        return _hash(self.as_dict())

    def assembly_digest(self) -> str:
        """Hash of the seed-free inputs of the discrete forms."""
        d = self.as_dict()
        return _hash({k: d[k] for k in ("process", "grid", "mu", "perturbation")})


def _hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _convert(raw: str, typ, key: str):
    text = raw.strip()
    try:
        if typ is float:
            return float(text)
        if typ is int:
            return int(text)
        if typ == (float | None):
            return None if text.lower() in ("", "none") else float(text)
        if typ == tuple[float, ...]:
            return tuple(float(v) for v in text.replace(",", " ").split())
        if typ == tuple[str, ...]:
            return tuple(v for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    raise ConfigError(f"{key}: unsupported type {typ}")


def parse_config(text: str) -> RunConfig:
    """Build a :class:`RunConfig` from config-file text; missing keys keep their defaults."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    sections = {}
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        cls = _SECTIONS[name]
        hints = get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {name}.{key}")
            values[key] = _convert(raw, hints[key], f"{name}.{key}")
        sections[name] = cls(**values)
    try:
        return RunConfig(**sections)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Config-file text that parses back to ``cfg``."""
    lines = []
    for name in _SECTIONS:
        lines.append(f"[{name}]")
        for key, val in asdict(getattr(cfg, name)).items():
            if isinstance(val, (tuple, list)):
                val = ", ".join(repr(v) if not isinstance(v, str) else v for v in val)
            elif val is None:
                val = "none"
            else:
                val = repr(val)
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)
