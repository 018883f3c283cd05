"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 bad input, 3 solver divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from contextlib import contextmanager

from . import pifslp, validation
from .ci_model import dump_system, is_system_file, load_system
from .simharness import (
    Mode,
    ScenarioError,
    convergence_trace,
    first_system,
    load_scenario,
    run_pm_sweep,
    run_sb_sweep,
    scenario_systems,
)

EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3
_SOLVER_KEYS = {"rho", "beta", "tau", "tau_factor", "partition", "iters", "delta_tol", "max_iters"}

log = logging.getLogger("cislp")


class InputError(Exception):
    pass


def _pair(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _scenario(args, mode: Mode | None = None):
    if not args.scenario:
        raise InputError("--scenario is required")
    sc = load_scenario(args.scenario, args.set)
    if mode is not None and sc.mode is not mode:
        raise InputError(f"{args.command} needs a scenario with mode = {mode.value}")
    return sc


def cmd_sweep(args, mode: Mode) -> int:
    sc = _scenario(args, mode)
    run = run_pm_sweep if mode is Mode.PM else run_sb_sweep
    result = run(sc, jobs=args.jobs)
    with _output(args.out) as fh:
        result.to_csv(fh, timing=args.timing)
    return EXIT_OK


def _solver_overrides(cfg: pifslp.PJADMMConfig, pairs) -> tuple[pifslp.PJADMMConfig, int | None]:
    iters = None
    kw = {}
    for key, value in pairs:
        if key not in _SOLVER_KEYS:
            raise InputError(f"key {key!r} does not apply to a CI system fixture")
        if key == "iters":
            iters = int(value)
        elif key in ("max_iters",):
            kw[key] = int(value)
        elif key == "partition":
            kw[key] = value
        else:
            kw[key] = float(value)
    return pifslp.with_overrides(cfg, **kw), iters


def cmd_convergence(args) -> int:
    if not args.scenario:
        raise InputError("--scenario is required")
    with open(args.scenario) as fh:
        text = fh.read()
    if is_system_file(text):
        with open(args.scenario) as fh:
            system = load_system(fh)
        cfg = pifslp.default_config(system.K, system.Nt, system.modulation)
        cfg, iters = _solver_overrides(cfg, args.set)
        systems = [system]
    else:
        sc = _scenario(args)
        cfg = sc.solver_config()
        iters = sc.iters
        systems = scenario_systems(sc)
    if iters is None:
        iters = cfg.fixed_iters or cfg.max_iters
    trace = convergence_trace(systems, cfg, iters)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "objective", "delta", "maxInfeas", "kktResidual"])
        for row in trace:
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return EXIT_OK


def cmd_dump_system(args) -> int:
    sc = _scenario(args)
    system = first_system(sc, slot=args.slot, realization=args.realization)
    with _output(args.out) as fh:
        dump_system(system, fh)
    return EXIT_OK


def cmd_validate(args) -> int:
    return EXIT_OK if validation.run_all() else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cislp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--scenario", help="scenario file (key = value lines)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--set", type=_pair, action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario key; repeatable")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
            p.add_argument("--timing", action="store_true", help="fill the wallMillis column")

    common(sub.add_parser("pm-sweep", help="average transmit power versus SINR threshold"), jobs=True)
    common(sub.add_parser("sb-sweep", help="BER versus SNR at a fixed power budget"), jobs=True)
    common(sub.add_parser("convergence", help="per-iteration trace for a scenario or CI system fixture"))
    p = sub.add_parser("dump-system", help="write the CI system of one slot as a fixture")
    common(p)
    p.add_argument("--slot", type=int, default=0)
    p.add_argument("--realization", type=int, default=0)
    sub.add_parser("validate", help="run the invariant suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "pm-sweep": lambda a: cmd_sweep(a, Mode.PM),
        "sb-sweep": lambda a: cmd_sweep(a, Mode.SB),
        "convergence": cmd_convergence,
        "dump-system": cmd_dump_system,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except pifslp.SolverDivergence as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    except (InputError, ScenarioError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
