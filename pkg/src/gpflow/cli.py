"""Command line entry point: ``gpflow <command> [--config FILE] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments
from .config import RunConfig, load_config
from .errors import ConfigError, FieldFormatError, GPFlowError
from .grid import load_field
from .operators import check_admissibility
from .quotient import align_phase

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NONCONVERGED = 4

log = logging.getLogger("gpflow")


def _config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_seed(args.seed)


def cmd_solve(args):
    cfg = _config(args)
    report, summary = experiments.run_solve(cfg, args.out)
    r = summary["result"]
    _say(
        args,
        f"{r['termination']} after {r['iterations']} iterations: E = {r['energy']['total']:.12g}, "
        f"lambda = {r['rayleigh']:.12g}, residual = {r['eigen_residual']:.3e}",
    )
    return EXIT_OK if summary["converged"] else EXIT_NONCONVERGED


def cmd_dissipation(args):
    cfg = _config(args)
    summary = experiments.run_dissipation(cfg, args.out)
    for scheme, s in summary["schemes"].items():
        _say(
            args,
            f"{scheme:>4}: {s['termination']} after {s['iterations']} iterations, "
            f"E = {s['energy']['total']:.12g}, median alpha = {s['median_alpha']}",
        )
    return EXIT_OK


def cmd_fixed_step(args):
    cfg = _config(args)
    summary = experiments.run_fixed_step(cfg, args.out)
    for r in summary["runs"]:
        rate = "-" if r["rate"] is None else f"{r['rate']:.5f}"
        _say(args, f"{r['scheme']:>4} alpha={r['alpha']:<5g} converged={r['converged']!s:<5} rate={rate}")
    return EXIT_OK


def cmd_mesh_study(args):
    cfg = _config(args)
    summary = experiments.run_mesh_study(cfg, args.out)
    res = [str(n) for n in cfg.mesh_study.resolutions]
    _say(args, "scheme " + " ".join(f"{n:>8}" for n in res))
    for scheme, row in summary["rates"].items():
        cells = ["       -" if row[n] is None else f"{row[n]:8.4f}" for n in res]
        _say(args, f"{scheme:>6} " + " ".join(cells))
    return EXIT_OK


def cmd_align(args):
    try:
        u, v = load_field(args.u), load_field(args.v)
    except OSError as exc:
        raise ConfigError("field", f"cannot read {exc.filename}") from None
    a1, a2 = align_phase(u, v, "l2"), align_phase(u, v, "h01")
    out = {"rho1": a1.rho, "omega1": a1.omega_star, "rho2": a2.rho, "omega2": a2.omega_star}
    print(json.dumps(out))
    return EXIT_OK


def cmd_check(args):
    cfg = _config(args)
    grid = cfg.grid()
    adm = check_admissibility(grid, cfg.params(grid))
    print(json.dumps(adm.to_dict()))
    return EXIT_OK


def _say(args, msg):
    if not args.quiet:
        print(msg)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults to the rotating benchmark)")
    common.add_argument("--out", default="out", help="output folder (default: out)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    parser = argparse.ArgumentParser(prog="gpflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in [
        ("solve", cmd_solve, "run one gradient flow"),
        ("dissipation", cmd_dissipation, "compare the three schemes with optimal steps"),
        ("fixed-step", cmd_fixed_step, "fixed step sizes from a near-ground state"),
        ("mesh-study", cmd_mesh_study, "convergence rates across resolutions"),
        ("check", cmd_check, "admissibility of the rotation speed for the trap"),
    ]:
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=fn)
    p = sub.add_parser("align", parents=[common], help="phase-aligned distances between two field files")
    p.add_argument("u")
    p.add_argument("v")
    p.set_defaults(func=cmd_align)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, FieldFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GPFlowError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
