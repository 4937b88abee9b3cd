"""Command line: ``pilotwave run | ensemble | ghz | verify``.

Exit status is 0 on success, 1 when the dynamics hits a node or cannot
resolve a step, and 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import sys

from . import acceptance
from .dynamics import VelocityUndefinedError
from .integrate import NodeCollisionError, StepUnderflowError
from .io import ConfigError, KEYS, REQUIRED_KEYS, emit_csv, emit_figure, parse_run_config
from .scenarios import ghz_check, run, run_ensemble

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_CONFIG = 0, 1, 2

CONFIG_HELP = (
    "Config files hold 'key = value' lines; '#' starts a comment. Required: "
    + ", ".join(REQUIRED_KEYS) + ". Other keys: "
    + ", ".join(k for k in KEYS if k not in REQUIRED_KEYS)
    + ". Unset keys take the ScenarioSpec, DetectorSpec and IntegratorControls defaults "
    "(experiment=sg, packet=rect, k=2pi/0.3, T=2, z0 at the 0.7 quantile).")


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_run_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _run(args) -> int:
    cfg = _load(args.config)
    out = args.out or cfg.out
    fig = args.fig or cfg.fig
    approx = args.compare_approx or cfg.compare_approx
    try:
        result = run(cfg.spec, with_approx=approx)
    except ValueError as exc:
        if isinstance(exc, VelocityUndefinedError):
            raise
        raise ConfigError(str(exc)) from None
    print(f"destination: {result.final_destination}")
    if result.outcomes is not None:
        print(f"outcomes: {result.outcomes[0]}, {result.outcomes[1]}")
    if result.sigma_z is not None:
        print(f"sigma_z: {result.sigma_z:+d}")
    for rec in result.records:
        print(f"record ({rec.channel}): {rec.verdict}")
    if result.surreal != "notApplicable":
        print(f"surreal: {str(result.surreal).lower()}")
    for e in result.trajectory.events:
        print(f"event t={e.time:.6g} {e.kind}")
    if out:
        emit_csv(result, out)
    if fig:
        if result.outcomes is not None:
            raise ConfigError("figures cover single-particle experiments")
        emit_figure(result, fig, cfg.figure)
    return EXIT_OK


def _ensemble(args) -> int:
    cfg = _load(args.config)
    if cfg.spec.experiment not in ("sg", "sgReversed"):
        raise ConfigError("ensembles run the sg and sgReversed experiments")
    if args.samples < 1:
        raise ConfigError("--samples must be positive")
    res = run_ensemble(cfg.spec, args.samples, args.seed)
    up = int((res.final > 0).sum())
    print(f"samples: {args.samples} seed: {res.seed} up fraction: {up / args.samples:.6f}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "z0", "z_final", "beam"])
            for i, (a, b) in enumerate(zip(res.initial, res.final)):
                w.writerow([i, format(a, ".12g"), format(b, ".12g"), "up" if b > 0 else "down"])
    return EXIT_OK


def _ghz(args) -> int:
    proof = ghz_check()
    names = ("s1x", "s2x", "s3x", "s1y", "s2y", "s3y")
    print("constraints: s1x s2x s3x = -1, s1x s2y s3y = s1y s2x s3y = s1y s2y s3x = +1")
    if args.table:
        print(" ".join(f"{n:>4}" for n in names) + "  satisfied")
        for s, flags in proof.table:
            print(" ".join(f"{v:+4d}" for v in s) + "  " + "".join("1" if f else "0" for f in flags))
    print(f"assignments satisfying all constraints: {proof.n_satisfying} of {len(proof.table)}")
    print(f"product of left sides: {proof.lhs_product:+d} (each value appears twice)")
    print(f"product of right sides: {proof.rhs_product:+d}")
    print(f"with the first constraint set to +1: {proof.relaxed_count} assignments")
    return EXIT_OK


def _verify(args) -> int:
    checks = acceptance.run_all(print)
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} criteria passed")
    return EXIT_OK if not failed else EXIT_DIAGNOSTIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pilotwave", description=__doc__.splitlines()[0],
                                epilog=CONFIG_HELP)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate one trajectory", epilog=CONFIG_HELP)
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="trajectory CSV")
    r.add_argument("--fig", help="SVG figure")
    r.add_argument("--compare-approx", action="store_true",
                   help="also integrate the decohered weighted-velocity trajectory")
    r.set_defaults(func=_run)
    e = sub.add_parser("ensemble", help="equilibrium ensemble through an SG device",
                       epilog=CONFIG_HELP)
    e.add_argument("--config", required=True)
    e.add_argument("--samples", type=int, default=10000)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out")
    e.set_defaults(func=_ensemble)
    g = sub.add_parser("ghz", help="exhaustive local-assignment check")
    g.add_argument("--table", action="store_true", help="print all 64 assignments")
    g.set_defaults(func=_ghz)
    v = sub.add_parser("verify", help="run the acceptance criteria")
    v.set_defaults(func=_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NodeCollisionError, StepUnderflowError, VelocityUndefinedError) as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC


if __name__ == "__main__":
    sys.exit(main())
