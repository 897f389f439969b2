"""Command line entry point.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure, 4 Monte Carlo disagreement with a closed form.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace
from typing import Sequence

from . import runners
from .core import NumericalError, ParameterError
from .montecarlo import McConfig
from .scenario import PRESETS, ConfigError, ResultTable, ScenarioConfig, calibrate_ell, load_config, \
    parse_number, preset

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_MISMATCH = 0, 2, 3, 4

# which runner a preset feeds
PRESET_RUNNER = {"table1": "single", "table2": "duopoly", "fig1": "figures", "fig2": "figures",
                 "crude-n2": "single"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _number(text: str) -> float:
    try:
        return parse_number(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _values(text: str) -> tuple[float, ...]:
    return tuple(_number(part) for part in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario file")
    common.add_argument("--csv", metavar="PATH", help="write CSV here instead of standard output")
    common.add_argument("--seed", type=_seed, metavar="U64", help="override the Monte Carlo seed")
    common.add_argument("--quiet", action="store_true", help="suppress notes and warnings on stderr")

    p = _Parser(prog="carbonexit", parents=[common],
                description="Exit thresholds, compensation and damages for a fossil-fuel phase-out.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("single", parents=[common], help="single market with N firms")
    sub.add_parser("duopoly", parents=[common], help="two countries: Nash game and planner benchmarks")
    fig = sub.add_parser("figures", parents=[common], help="sweep over firm count or share decay")
    fig.add_argument("--vary", choices=("n", "theta"))
    fig.add_argument("--values", type=_values, help="comma-separated sweep values")
    ver = sub.add_parser("mc-verify", parents=[common], help="compare closed forms with Monte Carlo")
    ver.add_argument("--preset", choices=sorted(PRESETS), help="verify a built-in preset")
    ver.add_argument("--paths", type=int, help="override the number of simulated paths")
    ver.add_argument("--corrupt-threshold", type=float, default=1.0, help=argparse.SUPPRESS)
    cal = sub.add_parser("calibrate", parents=[common], help="damage scale from unit profit")
    cal.add_argument("--price", type=_number, required=True, help="profit per unit of production per year")
    cal.add_argument("--x0", type=_number, required=True)
    cal.add_argument("--gamma", type=_number, required=True)
    pre = sub.add_parser("preset", parents=[common], help="run a built-in scenario")
    pre.add_argument("name", choices=sorted(PRESETS))
    return p


def _configs(args) -> tuple[ScenarioConfig, ...]:
    if getattr(args, "preset", None):
        if args.config:
            raise ConfigError("<args>:0: give either --config or --preset, not both")
        cfgs = preset(args.preset)
    elif args.config:
        cfgs = (load_config(args.config),)
    else:
        raise ConfigError("<args>:0: --config PATH is required")
    return tuple(c.with_seed(args.seed) for c in cfgs)


def _emit(table: ResultTable, args, precision: int, csv_path: str | None) -> None:
    text = table.to_csv(precision)
    path = args.csv or csv_path
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not args.quiet:
        for note in table.notes:
            print(f"note: {note}", file=sys.stderr)


def _run(kind: str, cfgs, args) -> ResultTable:
    table = None
    for cfg in cfgs:
        if kind == "single":
            part = runners.run_single(cfg)
        elif kind == "duopoly":
            part = runners.run_duopoly(cfg)
        else:
            part = runners.run_figures(cfg, getattr(args, "vary", None), getattr(args, "values", None))
        if table is None:
            table = part
        else:
            table.extend(part)
    return table


def _dispatch(args) -> int:
    if args.command == "calibrate":
        table = ResultTable(["price", "x0", "gamma", "ell"])
        table.add(price=args.price, x0=args.x0, gamma=args.gamma, ell=calibrate_ell(args.price, args.x0, args.gamma))
        _emit(table, args, 10, None)
        return EXIT_OK
    if args.command == "preset":
        cfgs = tuple(c.with_seed(args.seed) for c in preset(args.name))
        kind = PRESET_RUNNER[args.name]
    elif args.command == "mc-verify":
        cfgs = tuple(_with_mc(c, args.paths) for c in _configs(args))
        table, ok = None, True
        for cfg in cfgs:
            part, passed = runners.run_mc_verify(cfg, args.corrupt_threshold)
            ok = ok and passed
            if table is None:
                table = part
            else:
                table.extend(part)
        _emit(table, args, cfgs[0].precision, cfgs[0].csv_path)
        if not ok:
            print("error: Monte Carlo estimate outside 3 standard errors of the closed form", file=sys.stderr)
            return EXIT_MISMATCH
        return EXIT_OK
    else:
        cfgs = _configs(args)
        kind = args.command
    table = _run(kind, cfgs, args)
    _emit(table, args, cfgs[0].precision, cfgs[0].csv_path)
    return EXIT_OK


def _with_mc(cfg: ScenarioConfig, paths: int | None) -> ScenarioConfig:
    """Default simulation settings when the scenario has no [mc] block."""
    base = cfg.mc or McConfig()
    if paths is not None:
        base = replace(base, n_paths=paths)
    return replace(cfg, mc=base)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings():
        if args.quiet:
            warnings.simplefilter("ignore")
        else:
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
        try:
            return _dispatch(args)
        except (ConfigError, ParameterError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (NumericalError, ArithmeticError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
