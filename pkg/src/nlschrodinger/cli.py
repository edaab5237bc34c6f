"""Command-line entry point.

Subcommands ``assemble``, ``groundstate``, ``simulate``, ``gauge`` and ``verify``
read one config file and write CSV files (17 significant digits) into ``--out``.
Every output starts with a ``#`` comment carrying the tool version and the config
digest.  Exit codes: 0 success, 1 config error, 2 numerical failure, 3 check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import struct
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .forms import build_form_system, domain_principal_value, green_apply, principal_eigenpair
from .montecarlo import Domain, PathFunctionals, feynman_kac_estimate, gauge_estimate
from .verify import run_suite

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3

CACHE_NAME = "forms.cache"
CACHE_MAGIC = b"NLSFORMS"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<8sIQdddd16s")
_CACHE_ARRAYS = ("A_minus", "A_Y", "b_rho", "rho_plus", "rho_minus")


class CacheError(ValueError):
    pass


# ---------------------------------------------------------------- output helpers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, rows: list[dict], digest: str, columns: list[str] | None = None,
              comments: tuple[str, ...] = ()) -> Path:
    """Header comment, header row, one line per row; columns default to first-seen key order."""
    if columns is None:
        columns = []
        for row in rows:
            columns += [k for k in row if k not in columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# nlschrodinger {__version__} config {digest}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


# ---------------------------------------------------------------- forms cache

def write_cache(path: Path, cfg: RunConfig, arrays: dict) -> None:
    """Magic, version, n, L, alpha, m, kappa, assembly digest, then float64 arrays (little endian)."""
    p, g = cfg.process, cfg.grid
    head = _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, g.n, g.half_width, p.alpha, p.mass,
                              p.intensity_multiplier, cfg.assembly_digest().encode())
    with open(path, "wb") as fh:
        fh.write(head)
        for name in _CACHE_ARRAYS:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def read_cache(path: Path, cfg: RunConfig) -> dict:
    """Arrays from a cache written for the same seed-free inputs as ``cfg``."""
    with open(path, "rb") as fh:
        raw = fh.read(_CACHE_HEADER.size)
        if len(raw) != _CACHE_HEADER.size:
            raise CacheError("truncated cache header")
        magic, version, n, L, alpha, mass, kappa, digest = _CACHE_HEADER.unpack(raw)
        if magic != CACHE_MAGIC or version != CACHE_VERSION:
            raise CacheError("not a forms cache of this version")
        if digest.decode() != cfg.assembly_digest():
            raise CacheError("cache was assembled from different inputs")
        out = {}
        for name in _CACHE_ARRAYS:
            shape = (n, n) if name.startswith("A_") else (n,)
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise CacheError("truncated cache payload")
            out[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float)
    return out


def _forms_arrays(cfg: RunConfig, out: Path | None, log) -> dict:
    """Arrays from ``out/forms.cache`` when it matches, otherwise a fresh assembly."""
    if out is not None and (out / CACHE_NAME).exists():
        try:
            arrays = read_cache(out / CACHE_NAME, cfg)
            log(f"using {out / CACHE_NAME}")
            return arrays
        except CacheError as exc:
            log(f"ignoring cache: {exc}")
    log("assembling forms")
    system = build_form_system(cfg.build_grid(), cfg.build_spec(), cfg.build_mu(), cfg.build_F())
    return {name: getattr(system, name) for name in _CACHE_ARRAYS}


# ---------------------------------------------------------------- commands

def cmd_assemble(cfg: RunConfig, out: Path, log) -> int:
    arrays = _forms_arrays(cfg, None, log)
    write_cache(out / CACHE_NAME, cfg, arrays)
    grid = cfg.build_grid()
    h = grid.spacing
    row = dict(n=grid.n, half_width=grid.half_width, spacing=h, alpha=cfg.process.alpha,
               mass=cfg.process.mass, intensity_multiplier=cfg.process.intensity_multiplier,
               rho_plus_mass=float(arrays["rho_plus"].sum() * h),
               rho_minus_mass=float(arrays["rho_minus"].sum() * h),
               assembly_digest=cfg.assembly_digest(), cache=CACHE_NAME)
    write_csv(out / "assemble.csv", [row], cfg.digest())
    log(f"wrote {out / CACHE_NAME}")
    return EXIT_OK


def _ground_state(cfg: RunConfig, out: Path, log):
    arrays = _forms_arrays(cfg, out, log)
    gs = principal_eigenpair(arrays["A_Y"], arrays["b_rho"])
    return arrays, gs


def cmd_groundstate(cfg: RunConfig, out: Path, log) -> int:
    arrays, gs = _ground_state(cfg, out, log)
    grid = cfg.build_grid()
    bound = gs.lam * float(green_apply(arrays["A_minus"], arrays["rho_plus"], grid.spacing).max())
    write_csv(out / "groundstate.csv",
              [dict(x=x, h=v, rho_plus=r) for x, v, r in zip(grid.nodes, gs.h, arrays["rho_plus"])],
              cfg.digest(), columns=["x", "h", "rho_plus"])
    row = dict(lam=gs.lam, residual=gs.residual, normalization=gs.normalization, iterations=gs.iterations,
               max_h=gs.max_h, min_h=float(gs.h.min()), lambda_times_green_bound=bound,
               bound_ok=bound >= 1.0 - 1e-8, residual_ok=gs.residual <= 1e-9)
    write_csv(out / "groundstate_manifest.csv", [row], cfg.digest())
    log(f"lambda = {gs.lam:.12g}, residual = {gs.residual:.3g}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path, log) -> int:
    """Feynman-Kac estimates of the ground state at the configured probes."""
    _, gs = _ground_state(cfg, out, log)
    grid = cfg.build_grid()
    sim = cfg.build_sim()
    s = cfg.sim
    U = Domain.ball(s.domain_center, s.domain_radius)
    fn = PathFunctionals(cfg.build_mu(), cfg.build_F(), cfg.build_spec(), sim.epsilon)
    payoff = lambda y: grid.interpolate(gs.h, y)
    rows = []
    for k, x in enumerate(s.probes):
        log(f"probe {x:g}")
        est = feynman_kac_estimate(float(x), U, payoff, gs.lam, fn, sim, stream=1000 + k)
        rows.append(dict(x=float(x), h=float(payoff(x)), mean=est.mean, stderr=est.stderr,
                         bias=est.bias_bound, censored=est.censored, n_paths=est.n_paths,
                         max_weight=est.max_weight_observed, usable=est.usable))
    write_csv(out / "simulate.csv", rows, cfg.digest(),
              comments=(f"lambda {gs.lam:.17g} domain B({s.domain_center:g}, {s.domain_radius:g})",))
    return EXIT_OK


def cmd_gauge(cfg: RunConfig, out: Path, log) -> int:
    """theta(D) and gauge estimates on D = B(gauge_center, gauge_radius)."""
    arrays, gs = _ground_state(cfg, out, log)
    grid = cfg.build_grid()
    ck = cfg.checks
    sim = cfg.build_sim(n_paths=ck.gauge_paths)
    D_idx = grid.indices_within(ck.gauge_center, ck.gauge_radius)
    theta = domain_principal_value(D_idx, arrays["A_Y"], arrays["b_rho"], gs.lam)
    D = Domain.ball(ck.gauge_center, ck.gauge_radius)
    fn = PathFunctionals(cfg.build_mu(), cfg.build_F(), cfg.build_spec(), sim.epsilon)
    rows = []
    for k, x in enumerate(ck.gauge_probes):
        log(f"probe {x:g}")
        est = gauge_estimate(float(x), D, gs.lam, fn, sim, stream=2000 + k)
        rows.append(dict(x=float(x), mean=est.mean, stderr=est.stderr, bias=est.bias_bound,
                         censored=est.censored, n_paths=est.n_paths,
                         weight_q999=est.extra["weight_q999"], usable=est.usable))
    write_csv(out / "gauge.csv", rows, cfg.digest(),
              comments=(f"theta {theta:.17g} lambda {gs.lam:.17g}",))
    log(f"theta(D) = {theta:.6g}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, log, selection=None) -> int:
    reports = run_suite(cfg, selection, log=log)
    digest = cfg.digest()
    manifest = []
    for r in reports:
        if r.rows:
            path = write_csv(out / f"check_{r.name}.csv", r.rows, digest)
            r.artifacts.append(path.name)
        manifest.append(dict(name=r.name, digest=r.digest, statistic=r.statistic, tolerance=r.tolerance,
                             passed=r.passed, predicate=r.predicate, artifacts=";".join(r.artifacts)))
    write_csv(out / "manifest.csv", manifest, digest,
              columns=["name", "digest", "statistic", "tolerance", "passed", "predicate", "artifacts"])
    with open(out / "reports.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable([dict(name=r.name, digest=r.digest, statistic=r.statistic,
                                  tolerance=r.tolerance, passed=r.passed, predicate=r.predicate,
                                  details=r.details) for r in reports]),
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    failed = [r.name for r in reports if not r.passed]
    for r in reports:
        log(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.statistic:.6g} vs {r.tolerance:.6g}")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {"assemble": cmd_assemble, "groundstate": cmd_groundstate, "simulate": cmd_simulate,
            "gauge": cmd_gauge, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlschrodinger", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="config file (defaults built in when omitted)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, help="override sim.master_seed")
        p.add_argument("--paths", type=int, help="override every path count")
        p.add_argument("--quiet", action="store_true", help="no progress messages")
        if name == "verify":
            p.add_argument("--checks", help="comma-separated subset of checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        cfg = load_config(args.config) if args.config is not None else RunConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.paths is not None:
            cfg = cfg.with_paths(args.paths)
        selection = None
        if getattr(args, "checks", None):
            selection = tuple(s.strip() for s in args.checks.split(",") if s.strip())
            cfg = replace(cfg, checks=replace(cfg.checks, selection=selection))
        args.out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "verify":
            return cmd_verify(cfg, args.out, log, selection)
        return COMMANDS[args.command](cfg, args.out, log)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
