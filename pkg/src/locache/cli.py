"""Command-line front end.

Exit codes: 0 success, 1 verification found violations, 2 unreadable input,
3 infeasible problem, 4 invalid LAPDA, 5 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import pda, placement, scheduler, sim
from .radio import shadowing_map
from .beamforming import (SlotChannel, WmmConvergenceError, diagnostics_csv, slot_time,
                          solve_wmm)

EXIT_VIOLATIONS = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_INVALID = 4
EXIT_RUNTIME = 5

log = logging.getLogger("locache")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_PARSE) from None


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _fraction(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _layout(args):
    """Placement from ``--lapda`` or from ``--allocation`` with K and L."""
    if args.lapda:
        try:
            family = pda.parse_lapda(_read(args.lapda))
        except pda.ParseError as exc:
            raise CliError(f"{args.lapda}: {exc}", EXIT_PARSE) from None
        except pda.StructureError as exc:
            raise CliError(f"{args.lapda}: {exc}", EXIT_INVALID) from None
        report = _check_lapda(family)
        if not report.passed:
            raise CliError(f"{args.lapda}: invalid LAPDA\n{report}", EXIT_INVALID)
        return family
    if args.allocation:
        if args.users is None or args.antennas is None:
            raise CliError("--allocation needs --users and --antennas", EXIT_PARSE)
        try:
            memory = placement.parse_allocation(_read(args.allocation))
        except ValueError as exc:
            raise CliError(f"{args.allocation}: {exc}", EXIT_PARSE) from None
        return placement.build_placement(memory, args.users, args.antennas)
    raise CliError("give --lapda or --allocation", EXIT_PARSE)


def _check_lapda(family):
    try:
        return pda.validate_lapda(family)
    except pda.StructureError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None


def cmd_allocate(args):
    try:
        rates = placement.parse_rates(_read(args.rates))
    except ValueError as exc:
        raise CliError(f"{args.rates}: {exc}", EXIT_PARSE) from None
    if args.memory < 0 or args.memory > len(rates):
        raise CliError(f"memory {args.memory} outside [0, {len(rates)}]", EXIT_INFEASIBLE)
    solver = {"multi": placement.allocate_memory,
              "single": placement.allocate_single_user,
              "uniform": placement.allocate_uniform}[args.scheme]
    result = solver(rates, args.memory, args.users, args.antennas)
    if args.grid:
        result = placement.floor_to_grid(result, rates, args.grid)
    _write(args.output, placement.emit_allocation(result))
    print(f"gamma={float(result.worst_time):.6g} objective={float(result.objective):.6g}",
          file=sys.stdout if args.output not in (None, "-") else sys.stderr)
    return 0


def cmd_build_lapda(args):
    try:
        memory = placement.parse_allocation(_read(args.allocation))
    except ValueError as exc:
        raise CliError(f"{args.allocation}: {exc}", EXIT_PARSE) from None
    try:
        family = pda.construct_lapda(args.users, args.antennas, memory)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from None
    _write(args.output, pda.emit_lapda(family))
    return 0


def cmd_validate(args):
    try:
        family = pda.parse_lapda(_read(args.lapda))
    except pda.ParseError as exc:
        raise CliError(f"{args.lapda}: {exc}", EXIT_PARSE) from None
    except pda.StructureError as exc:
        raise CliError(f"{args.lapda}: {exc}", EXIT_INVALID) from None
    report = _check_lapda(family)
    if report.passed:
        print(f"valid: K={family.n_users} L={family.antenna_budget} S={family.n_stus}")
        return 0
    print(report, file=sys.stderr)
    return EXIT_INVALID


def cmd_schedule(args):
    layout = _layout(args)
    try:
        requests = scheduler.parse_requests(_read(args.requests))
    except ValueError as exc:
        raise CliError(f"{args.requests}: {exc}", EXIT_PARSE) from None
    try:
        plan = scheduler.schedule(requests, layout)
    except scheduler.FmInfeasible as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from None
    _write(args.output, scheduler.emit_plan(plan))
    report = scheduler.verify_decodability(plan, placement.arrange_cache(layout))
    print(report, file=sys.stderr if args.output in (None, "-") else sys.stdout)
    return 0 if report.passed else EXIT_VIOLATIONS


def cmd_verify(args):
    layout = _layout(args)
    try:
        plan = scheduler.parse_plan(_read(args.plan))
    except (ValueError, KeyError) as exc:
        raise CliError(f"{args.plan}: {exc}", EXIT_PARSE) from None
    report = scheduler.verify_decodability(plan, placement.arrange_cache(layout))
    print(report)
    return 0 if report.passed else EXIT_VIOLATIONS


def _parse_slot(text):
    """CSV ``user,weight,nulls,h1_re,h1_im,...``; ``nulls`` lists user ids
    separated by spaces."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows or rows[0][:3] != ["user", "weight", "nulls"]:
        raise ValueError("expected header 'user,weight,nulls,h1_re,h1_im,...'")
    width = len(rows[0]) - 3
    if width < 2 or width % 2:
        raise ValueError("channel columns must come in re/im pairs")
    users, weights, nulls, channels = [], [], [], []
    for line_no, row in enumerate(rows[1:], 2):
        if len(row) != len(rows[0]):
            raise ValueError(f"line {line_no}: expected {len(rows[0])} cells")
        try:
            users.append(int(row[0]))
            weights.append(float(Fraction(row[1])))
            nulls.append([int(v) for v in row[2].split()])
            vals = [float(v) for v in row[3:]]
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"line {line_no}: bad number") from None
        channels.append([complex(vals[i], vals[i + 1]) for i in range(0, width, 2)])
    pos = {u: i for i, u in enumerate(users)}
    try:
        groups = [{pos[j] for j in g} for g in nulls]
    except KeyError as exc:
        raise ValueError(f"null set names user {exc.args[0]} not in the slot") from None
    return users, np.array(weights), groups, np.array(channels)


def cmd_solve_slot(args):
    try:
        users, weights, groups, h = _parse_slot(_read(args.slot))
        channel = SlotChannel(h, args.noise, args.power)
    except ValueError as exc:
        raise CliError(f"{args.slot}: {exc}", EXIT_PARSE) from None
    try:
        sol = solve_wmm(channel, groups, weights)
    except WmmConvergenceError as exc:
        if args.diagnostics:
            Path(args.diagnostics).write_text(exc.diagnostics or "")
        raise CliError(str(exc), EXIT_RUNTIME) from None
    if args.diagnostics:
        Path(args.diagnostics).write_text(diagnostics_csv(sol))
    print("user,power,sinr,rate")
    for k, u in enumerate(users):
        print(f"{u},{sol.powers[k]:.9g},{sol.sinr[k]:.9g},{sol.rates[k]:.9g}")
    print(f"# slot_time={slot_time(sol.sinr, weights):.9g} gamma={sol.gamma:.9g}")
    return 0


def cmd_simulate(args):
    try:
        config = sim.load_config(_read(args.config))
    except (ValueError, KeyError) as exc:
        raise CliError(f"{args.config}: {exc}", EXIT_PARSE) from None
    except Exception as exc:         # configparser's own errors
        raise CliError(f"{args.config}: {exc}", EXIT_PARSE) from None
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.drops is not None:
        overrides["drops"] = args.drops
    if args.schemes:
        overrides["schemes"] = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    try:
        config = replace(config, **overrides)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from None
    out = Path(args.out_dir)
    stats = {}
    try:
        setups = sim.prepare_schemes(config)
        shadow = shadowing_map(config.n_stus, config.channel, config.seed)
        drops = [(i, sim.draw_drop(config, i, shadow)) for i in range(config.drops)]
        for name in config.schemes:
            stats[name] = sim._run_scheme(config, setups[name], drops)
    except Exception as exc:
        if stats:
            sim.export_report(stats, out)
        raise CliError(f"simulation failed: {exc}", EXIT_RUNTIME) from exc
    sim.export_report(stats, out)
    _print_summary(stats)
    return 0


def _print_summary(stats):
    print("scheme,mean,p50,p95,n,failed")
    for name in sorted(stats):
        s = stats[name].summary()
        nums = ["" if s[k] is None else f"{s[k]:.6g}" for k in ("mean", "p50", "p95")]
        print(f"{name},{','.join(nums)},{s['n']},{s['failed']}")


def cmd_report(args):
    try:
        stats = sim.parse_report(args.out_dir)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"{args.out_dir}: {exc}", EXIT_PARSE) from None
    _print_summary(stats)
    return 0


def _add_layout(p):
    p.add_argument("--lapda", help="LAPDA text file")
    p.add_argument("--allocation", help="allocation file (built with cyclic windows)")
    p.add_argument("--users", "-K", type=int)
    p.add_argument("--antennas", "-L", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="locache", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("allocate", help="split cache memory across STUs")
    p.add_argument("rates")
    p.add_argument("--memory", "-M", type=_fraction, required=True)
    p.add_argument("--users", "-K", type=int, required=True)
    p.add_argument("--antennas", "-L", type=int, required=True)
    p.add_argument("--scheme", choices=("multi", "single", "uniform"), default="multi")
    p.add_argument("--grid", type=int, help="round K*m down to multiples of 1/GRID")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("build-lapda", help="cyclic-window LAPDA for an integer-gain allocation")
    p.add_argument("allocation")
    p.add_argument("--users", "-K", type=int, required=True)
    p.add_argument("--antennas", "-L", type=int, required=True)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_build_lapda)

    p = sub.add_parser("validate", help="check a LAPDA file")
    p.add_argument("lapda")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("schedule", help="delivery plan for a request vector")
    p.add_argument("requests")
    _add_layout(p)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("verify", help="decodability check of a plan")
    p.add_argument("plan")
    _add_layout(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("solve-slot", help="weighted max-min beamformers for one slot")
    p.add_argument("slot")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--power", type=float, required=True)
    p.add_argument("--diagnostics", help="write per-user solver state as CSV")
    p.set_defaults(func=cmd_solve_slot)

    p = sub.add_parser("simulate", help="run the scheme comparison")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--drops", type=int)
    p.add_argument("--schemes", help="comma list from a,b,c,d")
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="summarise a simulation output directory")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
