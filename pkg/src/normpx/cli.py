"""Command-line front end: ``normpx solve | sweep-eps | report | verify``.

Exit codes: 0 success, 1 a verification suite failed, 2 configuration error,
3 solver failure, 4 missing input file.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import regularity
from .config import ConfigError, build_grid, build_options, build_problem, build_region, load_config
from .errors import DomainError, SolverError
from .grid import gradient_field
from .outputs import read_solution, write_csv, write_manifest, write_solution
from .solver import continuation_in_epsilon, solve_dirichlet
from .verify import DEFAULT_SEED, run_verification

log = logging.getLogger("normpx")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_MISSING = 4


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# shared plumbing


def _load(args):
    if args.config is None:
        raise _Fail(EXIT_CONFIG, "--config is required for this command")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        raise _Fail(EXIT_MISSING, f"config file not found: {args.config}") from None
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"invalid config {args.config}: {exc}") from None
    update = {}
    if args.grid_n is not None:
        update["grid"] = cfg.grid.model_copy(update={"n": args.grid_n})
    seed = args.seed if args.seed is not None else (cfg.seed if cfg.seed is not None else DEFAULT_SEED)
    update["seed"] = seed
    return cfg.model_copy(update=update)


def _config_echo(cfg):
    return cfg.model_dump(mode="json")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build(cfg):
    try:
        grid = build_grid(cfg)
        problem, exact = build_problem(cfg, grid)
        opts = build_options(cfg)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"invalid problem: {exc}") from None
    return grid, problem, exact, opts


def _solution_files(out, u, cfg):
    return [p for p in write_solution(out / "solution.csv", u, cfg.save_binary) if p.suffix == ".csv"]


def _exact_error(u, exact):
    if exact is None:
        return None
    mask = u.grid.interior_mask
    return float(np.max(np.abs(u.values - exact.field(u.grid).values)[mask]))


def _solve(problem, opts):
    try:
        return solve_dirichlet(problem, opts)
    except SolverError as exc:
        raise _Fail(EXIT_SOLVER, f"solver failed: {exc}") from None
    except DomainError as exc:
        raise _Fail(EXIT_CONFIG, f"invalid problem: {exc}") from None


# ---------------------------------------------------------------------------
# commands


SOLVE_COLUMNS = ["n", "dimension", "epsilon", "iterations", "newton_steps", "picard_steps",
                 "residual_norm", "converged", "error_vs_exact"]


def cmd_solve(args):
    cfg = _load(args)
    out = _out_dir(args)
    grid, problem, exact, opts = _build(cfg)
    t0 = time.perf_counter()
    rep = _solve(problem, opts)
    t_solve = time.perf_counter() - t0
    err = _exact_error(rep.solution, exact)
    files = _solution_files(out, rep.solution, cfg)
    files.append(write_csv(out / "solve.csv", [{
        "n": grid.points_per_axis, "dimension": grid.dimension, "epsilon": problem.eq.reg.epsilon,
        "iterations": rep.iterations, "newton_steps": rep.newton_steps,
        "picard_steps": rep.picard_steps, "residual_norm": rep.residual_norm,
        "converged": rep.converged, "error_vs_exact": err}], SOLVE_COLUMNS))
    files.append(write_csv(out / "history.csv",
                           [{"iteration": i, "residual": r} for i, r in enumerate(rep.history)],
                           ["iteration", "residual"]))
    write_manifest(out, "solve", _config_echo(cfg), cfg.seed, {"solve_seconds": t_solve}, files)
    _say(args, f"solve: residual {rep.residual_norm:.3e} after {rep.iterations} iterations"
         + ("" if err is None else f", error vs exact {err:.3e}"))
    return EXIT_OK


def cmd_sweep_eps(args):
    cfg = _load(args)
    out = _out_dir(args)
    grid, problem, exact, opts = _build(cfg)
    t0 = time.perf_counter()
    try:
        sweep = continuation_in_epsilon(problem, cfg.sweep.schedule, opts)
    except SolverError as exc:
        raise _Fail(EXIT_SOLVER, f"sweep failed: {exc}") from None
    except DomainError as exc:
        raise _Fail(EXIT_CONFIG, f"invalid sweep: {exc}") from None
    elapsed = time.perf_counter() - t0
    rows = []
    for i, (eps, rep) in enumerate(zip(sweep.epsilons, sweep.reports)):
        rows.append({"eps": eps, "gap": sweep.cauchy_gaps[i - 1] if i else None,
                     "residual": rep.residual_norm, "iterations": rep.iterations})
    files = [write_csv(out / "sweep.csv", rows, ["eps", "gap", "residual", "iterations"])]
    files += _solution_files(out, sweep.solutions[-1], cfg)
    write_manifest(out, "sweep-eps", _config_echo(cfg), cfg.seed, {"sweep_seconds": elapsed}, files)
    _say(args, "sweep-eps: gaps " + ", ".join(f"{g:.3e}" for g in sweep.cauchy_gaps))
    return EXIT_OK


def _row_with(prefix, rows):
    return [{**prefix, **r} for r in rows]


def cmd_report(args):
    cfg = _load(args)
    out = _out_dir(args)
    grid, problem, exact, opts = _build(cfg)
    files = []
    t0 = time.perf_counter()
    if cfg.report.solution:
        try:
            u = read_solution(cfg.report.solution, grid)
        except FileNotFoundError:
            raise _Fail(EXIT_MISSING, f"solution file not found: {cfg.report.solution}") from None
        except ValueError as exc:
            raise _Fail(EXIT_CONFIG, f"unusable solution file: {exc}") from None
    else:
        u = _solve(problem, opts).solution
        files += _solution_files(out, u, cfg)
    du = gradient_field(u)
    dim = grid.dimension
    rc = cfg.report
    extra = {}
    try:
        region = build_region(rc.holder, dim)
        holder_rows = []
        for name, fld in (("u", u), ("Du", du)):
            rep = regularity.fit_holder_exponent(fld, region, rc.alphas)
            holder_rows += _row_with({"field": name}, rep.rows())
        files.append(write_csv(out / "holder.csv", holder_rows))

        decay_rows = []
        for center in rc.decay.centers:
            tag = " ".join(repr(float(c)) for c in center)
            osc = regularity.oscillation_decay(du, center, rc.decay.tau, rc.decay.depth, rc.decay.radius0)
            aff = regularity.affine_decay(u, center, rc.decay.tau, rc.decay.depth, rc.decay.radius0)
            decay_rows += _row_with({"field": "Du", "center": tag}, osc.rows())
            decay_rows += _row_with({"field": "u", "center": tag}, aff.rows())
        files.append(write_csv(out / "decay.csv", decay_rows))

        if np.min(u.values[grid.interior_mask]) >= -1e-12:
            harnack_rows = []
            for tau in rc.harnack.taus:
                chk = regularity.weak_harnack_check(u, problem.eq.source, tau, rc.harnack.qexp)
                harnack_rows += chk.rows()
            files.append(write_csv(out / "harnack.csv", harnack_rows))
        else:
            extra["harnack"] = "skipped: the solution takes negative values"
            log.info("weak Harnack check skipped: solution is not nonnegative")

        morrey_rows = []
        for d in rc.morrey.directions:
            for eps0 in rc.morrey.eps0:
                frac = regularity.morrey_condition(du, d, eps0)
                morrey_rows.append({"direction": " ".join(repr(float(c)) for c in d),
                                    "eps0": eps0, "fraction": frac})
        files.append(write_csv(out / "morrey.csv", morrey_rows, ["direction", "eps0", "fraction"]))
    except DomainError as exc:
        raise _Fail(EXIT_CONFIG, f"invalid report settings: {exc}") from None
    write_manifest(out, "report", _config_echo(cfg), cfg.seed,
                   {"report_seconds": time.perf_counter() - t0}, files, extra=extra)
    _say(args, f"report: wrote {len(files)} files to {out}")
    return EXIT_OK


def _verify_seed(args):
    """Seed from --seed, else from a verify manifest or a run config."""
    if args.seed is not None or args.config is None:
        return DEFAULT_SEED if args.seed is None else args.seed, None
    try:
        doc = yaml.safe_load(Path(args.config).read_text())
    except FileNotFoundError:
        raise _Fail(EXIT_MISSING, f"config file not found: {args.config}") from None
    except yaml.YAMLError as exc:
        raise _Fail(EXIT_CONFIG, f"cannot parse {args.config}: {exc}") from None
    if isinstance(doc, dict) and doc.get("command") == "verify" and "manifest_version" in doc:
        seed = doc.get("seed")
        if not isinstance(seed, int):
            raise _Fail(EXIT_CONFIG, "verify manifest carries no integer seed")
        return seed, doc.get("config")
    cfg = _load(args)
    return cfg.seed, _config_echo(cfg)


def cmd_verify(args):
    seed, echo = _verify_seed(args)
    out = _out_dir(args)
    t0 = time.perf_counter()
    results = run_verification(seed)
    elapsed = time.perf_counter() - t0
    path = write_csv(out / "verify.csv", [r.row() for r in results],
                     ["suite", "samples", "violations", "worst", "passed", "digest"])
    ok = all(r.passed for r in results)
    write_manifest(out, "verify", echo, seed, {"verify_seconds": elapsed}, [path],
                   status="ok" if ok else "failed")
    for r in results:
        _say(args, f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.violations} violations "
                   f"in {r.samples} samples (worst {r.worst:.3e})")
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


COMMANDS = {
    "solve": cmd_solve,
    "sweep-eps": cmd_sweep_eps,
    "report": cmd_report,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# entry point


def _say(args, text):
    if not args.quiet:
        print(text)


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config or a run manifest")
    common.add_argument("--out", metavar="DIR", default="normpx-out", help="output directory")
    common.add_argument("--seed", type=_u64, help="random seed (overrides the config)")
    common.add_argument("--grid-n", type=int, metavar="INT", help="override grid.n")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    parser = argparse.ArgumentParser(prog="normpx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except _Fail as exc:
        print(f"normpx {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
