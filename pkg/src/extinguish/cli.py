"""Command line entry point.

    extinguish run <config>
    extinguish sweep <config-glob> [--workers N]
    extinguish certify {monotone,ode,gn} [flags]

Exit codes: 0 all applicable verdicts pass, 1 solver failure, 2 only
unmet hypotheses, 3 an applicable verdict failed, 64 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import glob
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import extinctlab as X
from .coeffset import CoefficientContext, extinction_exponent
from .domain import Grid, Potential, load_field, norm
from .errors import ConfigError, DomainError, NonConvergence
from .evolve import ForcingKind, ForcingSpec, OperatorData, Schedule, run as evolve_run
from .satkernel import SatParams, certify_region

EXIT_OK, EXIT_SOLVER, EXIT_UNMET, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2, 3, 64

KNOWN = {
    "grid": {"dim", "nodes", "extent"},
    "coefficient": {"a_re", "a_im", "m"},
    "potential": {"kind", "value", "path"},
    "forcing": {"kind", "t0", "amplitude", "m_inf", "profile", "width", "eps_star", "ell"},
    "initial": {"profile", "amplitude", "width", "mode", "path"},
    "schedule": {"tau", "t_end", "eps", "eps_continuation"},
    "outputs": {"trace", "report", "stride"},
    "run": {"seed", "gn_samples", "theorems"},
}


@dataclass
class RunConfig:
    grid: Grid
    coeff: CoefficientContext
    potential: Potential
    forcing: ForcingSpec
    u0: np.ndarray
    schedule: Schedule
    trace_path: str | None
    report_path: str | None
    seed: int
    gn_samples: int
    theorems: list
    echo: dict = field(default_factory=dict)


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, lines: dict):
        self.cp = cp
        self.lines = lines

    def _err(self, msg, section, key=None):
        return ConfigError(msg, section, key, self.lines.get((section, key)) or self.lines.get((section, None)))

    def get(self, section, key, kind=str, default=None, required=False):
        if not self.cp.has_section(section) or not self.cp.has_option(section, key):
            if required:
                raise self._err("missing required setting", section, key)
            return default
        raw = self.cp.get(section, key).strip()
        try:
            if kind is bool:
                return raw.lower() in ("1", "true", "yes", "on")
            return kind(raw)
        except (TypeError, ValueError):
            raise self._err(f"cannot parse {raw!r} as {kind.__name__}", section, key) from None


def _line_index(text: str) -> dict:
    out = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
            out[(section, None)] = i
        elif "=" in s and section and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip().lower())] = i
    return out


def _profile(name: str, grid: Grid, width: float, mode: int, rng) -> np.ndarray:
    coords = grid.coordinates()
    L = grid.extent
    if name == "sine":
        u = np.ones(grid.shape)
        for x in coords:
            u = u * np.sin(math.pi * mode * x / L)
        return u.astype(complex)
    if name == "gaussian":
        r2 = sum((x - 0.5 * L) ** 2 for x in coords)
        return np.exp(-r2 / (2.0 * width * width)).astype(complex)
    if name == "ones":
        return np.ones(grid.shape, dtype=complex)
    if name == "indicator":
        inside = np.ones(grid.shape, dtype=bool)
        for x in coords:
            inside &= np.abs(x - 0.5 * L) <= 0.25 * L
        return inside.astype(complex)
    if name == "random":
        u = np.zeros(grid.shape, dtype=complex)
        for _ in range(6):
            ks = rng.integers(1, 6, grid.dim)
            term = np.ones(grid.shape)
            for x, k in zip(coords, ks):
                term = term * np.sin(math.pi * k * x / L)
            u += (rng.normal() + 1j * rng.normal()) / float(np.prod(ks)) * term
        return u / float(np.abs(u).max())
    raise ValueError(name)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed config: {exc.message if hasattr(exc, 'message') else exc}", line=line) from None
    lines = _line_index(text)
    for sec in cp.sections():
        if sec not in KNOWN:
            raise ConfigError("unknown section", sec, line=lines.get((sec, None)))
        for key in cp.options(sec):
            if key not in KNOWN[sec]:
                raise ConfigError("unknown setting", sec, key, lines.get((sec, key)))
    r = _Reader(cp, lines)

    def check(cond, msg, sec, key):
        if not cond:
            raise r._err(msg, sec, key)

    seed = r.get("run", "seed", int, 0)
    rng = np.random.default_rng(seed)

    dim = r.get("grid", "dim", int, required=True)
    nodes = r.get("grid", "nodes", int, required=True)
    extent = r.get("grid", "extent", float, 1.0)
    check(dim in (1, 2, 3), "dim must be 1, 2 or 3", "grid", "dim")
    check(nodes >= 1, "nodes must be >= 1", "grid", "nodes")
    check(extent > 0.0, "extent must be positive", "grid", "extent")
    grid = Grid.box(dim, nodes, extent)

    m = r.get("coefficient", "m", float, required=True)
    check(0.0 <= m <= 1.0, "m must be in [0, 1]", "coefficient", "m")
    a = complex(r.get("coefficient", "a_re", float, 0.0), r.get("coefficient", "a_im", float, 1.0))
    coeff = CoefficientContext(a, m)
    check(coeff.classification.value != "OutsideC", f"a = {a} lies outside C({m})", "coefficient", "a_im")

    pkind = r.get("potential", "kind", str, "zero").lower()
    if pkind == "zero":
        V = Potential()
    elif pkind == "constant":
        V = Potential.constant(r.get("potential", "value", float, required=True))
    elif pkind == "file":
        vpath = r.get("potential", "path", str, required=True)
        try:
            vals, vgrid = load_field(os.path.join(os.path.dirname(path), vpath))
        except (OSError, DomainError) as exc:
            raise r._err(f"cannot load potential: {exc}", "potential", "path") from None
        check(vgrid.shape == grid.shape, "potential grid does not match", "potential", "path")
        check(not np.any(vals.imag), "potential must be real", "potential", "path")
        V = Potential(v1=vals.real)
    else:
        raise r._err(f"unknown potential kind {pkind!r}", "potential", "kind")

    width = r.get("forcing", "width", float, 0.1 * extent)
    fkind = r.get("forcing", "kind", str, "zero").lower()
    T0 = r.get("forcing", "t0", float, 0.0)
    check(T0 >= 0.0, "T0 must be >= 0", "forcing", "t0")
    fprof_name = r.get("forcing", "profile", str, "sine").lower()
    try:
        fprof = _profile(fprof_name, grid, width, 1, rng)
    except ValueError:
        raise r._err(f"unknown profile {fprof_name!r}", "forcing", "profile") from None
    amp = r.get("forcing", "amplitude", float, 0.0)
    try:
        if fkind == "zero":
            forcing = ForcingSpec.zero()
        elif fkind == "cutoff":
            forcing = ForcingSpec(ForcingKind.CutoffAtT0, T0=T0, profile=fprof, amplitude=amp)
        elif fkind == "bounded_tail":
            m_inf = r.get("forcing", "m_inf", float, required=True)
            forcing = ForcingSpec(ForcingKind.BoundedTail, T0=T0, profile=fprof, amplitude=amp, m_inf=m_inf)
        elif fkind == "synchronized":
            ell = r.get("forcing", "ell", int, 1)
            check(ell in (1, 2), "ell must be 1 or 2", "forcing", "ell")
            check(m < 1.0, "synchronized forcing needs m < 1", "forcing", "kind")
            delta = extinction_exponent(dim, ell, m)
            eps_star = r.get("forcing", "eps_star", float, None)
            if eps_star is None:
                form = "gradient" if ell == 1 else "laplacian"
                c_gn = X.estimate_gn_constant(grid, m, 8, seed, form)
                eps_star = X.epsilon_star(a.imag / c_gn, delta)
            forcing = X.synchronized_profile(T0, delta, eps_star, grid, fprof, ell=ell)
        else:
            raise r._err(f"unknown forcing kind {fkind!r}", "forcing", "kind")
    except DomainError as exc:
        raise r._err(str(exc), "forcing", "kind") from None

    iname = r.get("initial", "profile", str, "sine").lower()
    if iname == "file":
        ipath = r.get("initial", "path", str, required=True)
        try:
            u0, igrid = load_field(os.path.join(os.path.dirname(path), ipath))
        except (OSError, DomainError) as exc:
            raise r._err(f"cannot load initial field: {exc}", "initial", "path") from None
        check(igrid.shape == grid.shape, "initial field grid does not match", "initial", "path")
    else:
        try:
            u0 = _profile(iname, grid, r.get("initial", "width", float, 0.1 * extent),
                          r.get("initial", "mode", int, 1), rng)
        except ValueError:
            raise r._err(f"unknown profile {iname!r}", "initial", "profile") from None
    u0 = r.get("initial", "amplitude", float, 1.0) * u0

    tau = r.get("schedule", "tau", float, required=True)
    t_end = r.get("schedule", "t_end", float, required=True)
    check(tau > 0.0, "tau must be positive", "schedule", "tau")
    check(t_end >= 0.0, "t_end must be >= 0", "schedule", "t_end")
    eps_raw = r.get("schedule", "eps", str, "default").lower()
    eps = None
    if eps_raw != "default":
        try:
            eps = float(eps_raw)
        except ValueError:
            raise r._err(f"cannot parse {eps_raw!r} as float", "schedule", "eps") from None
        check(eps >= 0.0, "eps must be >= 0", "schedule", "eps")
    if m == 0.0:
        check(eps is None or eps > 0.0, "m = 0 needs eps > 0", "schedule", "eps")
    cont = r.get("schedule", "eps_continuation", str, None)
    eps_cont = None
    if cont:
        try:
            eps_cont = [float(x) for x in cont.replace(",", " ").split()]
        except ValueError:
            raise r._err("eps_continuation must be a list of numbers", "schedule", "eps_continuation") from None
        check(all(b < a_ for a_, b in zip(eps_cont, eps_cont[1:])), "eps_continuation must decrease",
              "schedule", "eps_continuation")
        check(m > 0.0 or eps_cont[-1] > 0.0, "m = 0 cannot continue to eps = 0", "schedule", "eps_continuation")
    stride = r.get("outputs", "stride", int, 1)
    check(stride >= 1, "stride must be >= 1", "outputs", "stride")
    schedule = Schedule(tau=tau, t_end=t_end, eps=eps, eps_continuation=eps_cont, stride=stride)

    gn_samples = r.get("run", "gn_samples", int, 8)
    check(gn_samples >= 1, "gn_samples must be >= 1", "run", "gn_samples")
    names = r.get("run", "theorems", str, None)
    if names:
        try:
            theorems = [X.TheoremId(x.strip()) for x in names.replace(",", " ").split()]
        except ValueError as exc:
            raise r._err(str(exc), "run", "theorems") from None
    else:
        theorems = list(X.TheoremId)

    base = os.path.dirname(path)
    tp = r.get("outputs", "trace", str, None)
    rp = r.get("outputs", "report", str, None)
    echo = {s: dict(cp.items(s)) for s in cp.sections()}
    return RunConfig(grid, coeff, V, forcing, u0, schedule,
                     os.path.join(base, tp) if tp else None, os.path.join(base, rp) if rp else None,
                     seed, gn_samples, theorems, echo)


def _gn_constants(cfg: RunConfig) -> dict:
    if cfg.coeff.m >= 1.0:
        return {}
    return {
        1: X.estimate_gn_constant(cfg.grid, cfg.coeff.m, cfg.gn_samples, cfg.seed, "gradient"),
        2: X.estimate_gn_constant(cfg.grid, cfg.coeff.m, cfg.gn_samples, cfg.seed, "laplacian"),
    }


def execute(cfg: RunConfig):
    """Run one configuration; returns (report dict, exit code)."""
    t_start = time.perf_counter()
    op = OperatorData(cfg.grid, cfg.coeff.a, cfg.coeff.m, cfg.potential)
    trace, _ = evolve_run(cfg.u0, cfg.schedule, cfg.forcing, op)
    t_run = time.perf_counter() - t_start
    c_gn = _gn_constants(cfg)
    ctx = X.VerdictContext(cfg.coeff, cfg.grid.dim, cfg.forcing, c_gn, V_constant=cfg.potential.is_constant,
                           tau=cfg.schedule.tau, u0=cfg.u0, grid=cfg.grid)
    verdicts = [X.verdict(trace, tid, ctx) for tid in cfg.theorems]
    t_total = time.perf_counter() - t_start
    if cfg.trace_path:
        trace.to_csv(cfg.trace_path)
    applicable = [v for v in verdicts if v.hypotheses_ok]
    if not applicable:
        code = EXIT_UNMET
    elif all(v.passed for v in applicable):
        code = EXIT_OK
    else:
        code = EXIT_FAILED
    report = {
        "config": cfg.echo,
        "trace_summary": {
            "extinction_time": trace.extinction_time,
            "final_mass": trace.mass[-1],
            "max_identity_residual": trace.max_identity_residual,
            "rows": len(trace),
        },
        "gn_constants": {str(k): v for k, v in c_gn.items()},
        "verdicts": [v.to_dict() for v in verdicts],
        "exit_code": code,
        "timings": {"evolve_s": t_run, "total_s": t_total},
    }
    if cfg.report_path:
        with open(cfg.report_path, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return report, code


def run_path(path: str):
    """(exit code, report or error dict) for one config path; never raises."""
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        return EXIT_CONFIG, {"config_path": path, "error": str(exc)}
    try:
        report, code = execute(cfg)
    except NonConvergence as exc:
        return EXIT_SOLVER, {"config_path": path, "error": f"solver failure: {exc}"}
    report["config_path"] = path
    return code, report


def _pool_size(flag: int | None) -> int:
    n = flag if flag else (os.cpu_count() or 1)
    cap = os.environ.get("EXTINGUISH_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


def _merge_codes(codes) -> int:
    for c in (EXIT_CONFIG, EXIT_SOLVER, EXIT_FAILED, EXIT_UNMET):
        if c in codes:
            return c
    return EXIT_OK


def cmd_run(args) -> int:
    code, report = run_path(args.config)
    if "error" in report:
        print(report["error"], file=sys.stderr)
    else:
        for v in report["verdicts"]:
            state = "PASS" if v["pass"] else ("FAIL" if v["hypotheses_ok"] else "N/A ")
            print(f"{state} {v['theorem_id']}: predicted={v['predicted']} observed={v['observed']}")
    return code


def cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.pattern))
    if not paths:
        print(f"no configs match {args.pattern!r}", file=sys.stderr)
        return EXIT_CONFIG
    workers = min(_pool_size(args.workers), len(paths))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_path, paths))
    else:
        results = [run_path(p) for p in paths]
    merged = {"runs": [dict(r, exit_code=c) for c, r in results]}
    text = json.dumps(merged, indent=2)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    for (c, r), p in zip(results, paths):
        print(f"{c:3d} {p}")
    return _merge_codes([c for c, _ in results])


def cmd_certify(args) -> int:
    mode = args.mode
    if mode == "monotone":
        if not (0.0 <= args.m <= 1.0) or args.eps < 0.0 or args.n < 1:
            raise ConfigError("need 0 <= m <= 1, eps >= 0 and n >= 1")
        if args.m == 0.0 and args.eps == 0.0:
            raise ConfigError("m = eps = 0 is the multivalued kernel; choose eps > 0")
        rep = certify_region(SatParams(args.m, args.eps), args.n, args.seed, workers=_pool_size(args.workers))
        text = rep.to_text()
        ok = rep.passed
    elif mode == "ode":
        if not (0.5 <= args.delta <= 1.0) or args.alpha <= 0.0 or args.dt <= 0.0:
            raise ConfigError("need 1/2 <= delta <= 1, alpha > 0, dt > 0")
        p = X.OdeProblem(args.y0, args.alpha, args.delta)
        sol = X.ode_solve(p, args.dt)
        err = float(np.max(np.abs(sol.y - p.closed_form(sol.t))))
        lines = [f"delta = {args.delta!r}", f"alpha = {args.alpha!r}", f"max_closed_form_error = {err!r}"]
        ok = err <= 1e-6
        if args.delta < 1.0:
            tc = p.closed_form_extinction()
            et = sol.extinction_time
            terr = abs(et - tc) if et is not None else math.inf
            lines += [f"closed_form_extinction = {tc!r}", f"extinction_time = {et!r}", f"extinction_error = {terr!r}"]
            ok = ok and terr <= 1e-6
            if args.delta > 0.5:
                s4 = X.ode_solve(X.step4_problem(args.alpha, args.delta, args.T0), args.dt_step4,
                                 t_end=1.25 * args.T0)
                yT0 = s4.at(args.T0)
                lines.append(f"step4_y_T0 = {yT0!r}")
                ok = ok and yT0 <= 1e-10
        lines.append(f"passed = {ok}")
        text = "".join(x + "\n" for x in lines)
    else:
        if args.samples < 1:
            raise ConfigError("samples must be >= 1")
        if not (0.0 <= args.m < 1.0):
            raise ConfigError("GN estimation needs 0 <= m < 1")
        if args.dim not in (1, 2, 3) or args.nodes < 1 or args.extent <= 0:
            raise ConfigError("bad grid flags")
        grid = Grid.box(args.dim, args.nodes, args.extent)
        vals = [X.estimate_gn_constant(grid, args.m, args.samples, args.seed + k, args.form) for k in range(3)]
        spread = (max(vals) - min(vals)) / max(vals)
        ok = spread <= 0.05
        text = (f"form = {args.form}\nm = {args.m!r}\nsamples = {args.samples}\n"
                f"estimates = {', '.join(repr(v) for v in vals)}\nestimate = {max(vals)!r}\n"
                f"seed_spread = {spread!r}\npassed = {ok}\n")
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extinguish", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run one configuration")
    pr.add_argument("config")
    pr.set_defaults(func=cmd_run)
    ps = sub.add_parser("sweep", help="run every configuration matching a glob")
    ps.add_argument("pattern")
    ps.add_argument("--workers", type=int, default=None)
    ps.add_argument("--report", default=None)
    ps.set_defaults(func=cmd_sweep)
    pc = sub.add_parser("certify", help="property batteries")
    pc.add_argument("mode", choices=["monotone", "ode", "gn"])
    pc.add_argument("--m", type=float, default=0.5)
    pc.add_argument("--eps", type=float, default=0.0)
    pc.add_argument("--n", type=int, default=1_000_000)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--workers", type=int, default=None)
    pc.add_argument("--delta", type=float, default=0.75)
    pc.add_argument("--alpha", type=float, default=1.0)
    pc.add_argument("--y0", type=float, default=1.0)
    pc.add_argument("--dt", type=float, default=1e-4)
    pc.add_argument("--T0", type=float, default=1.0)
    pc.add_argument("--dt-step4", dest="dt_step4", type=float, default=1e-5)
    pc.add_argument("--dim", type=int, default=1)
    pc.add_argument("--nodes", type=int, default=128)
    pc.add_argument("--extent", type=float, default=10.0)
    pc.add_argument("--samples", type=int, default=16)
    pc.add_argument("--form", choices=["gradient", "laplacian"], default="gradient")
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=cmd_certify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
