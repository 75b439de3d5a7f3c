"""
pmpcheck command-line interface.

Exit codes: 0 pass, 1 semantic failure (denied access, violations, sat),
2 usage, guard or parse error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from loguru import logger
from rich.console import Console
from rich.table import Table

from .campaign import CampaignConfig, CampaignError, CampaignMode, run_campaign, shrink
from .common import format_duration, format_hex, parse_int, parse_int_list
from .config import LOG_LEVEL, OUTPUT_FORMATS, CliConfig
from .keystone import ProbeConfig
from .mask_checker import check_access_mask
from .mutants import CHECKERS
from .pmp import (
    AccessRequest,
    PmpError,
    PmpState,
    Privilege,
    check_access_spec,
    describe_entries,
    highest_priority_match,
)
from .props import PropertyId
from .report import CampaignReport, perms_to_dict
from .script import ScriptError, parse_script, replay
from .smt import SmtError, compile_property_negation, write_document
from .smt.compile import COMPILE_MUTANTS
from .solver import run_solver

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

console = Console()
err_console = Console(stderr=True)


def setup_logging(verbose: bool) -> None:
    """Send log records to stderr so stdout carries only command output."""
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else LOG_LEVEL)


def emit_json(data: Any) -> None:
    print(json.dumps(data, indent=2))


def usage_error(message: str) -> int:
    err_console.print(f"[red]Error:[/red] {message}", highlight=False)
    return EXIT_USAGE


def _settings(args: argparse.Namespace) -> CliConfig:
    cfg = CliConfig.from_env()
    for name, attr in (
        ("paddr_bits", "paddr_bits"),
        ("entries", "n_entries"),
        ("seed", "seed"),
        ("format", "output_format"),
    ):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


# -- decode


def cmd_decode(args: argparse.Namespace, cfg: CliConfig) -> int:
    try:
        cfg_bytes = [v for text in args.cfg for v in parse_int_list(text)]
        addr_regs = [v for text in (args.addr or []) for v in parse_int_list(text)]
    except ValueError as e:
        return usage_error(str(e))
    if len(cfg_bytes) != len(addr_regs):
        return usage_error(
            f"{len(cfg_bytes)} --cfg value(s) but {len(addr_regs)} --addr value(s)"
        )
    try:
        state = PmpState.from_raw(cfg_bytes, addr_regs, cfg.paddr_bits)
    except PmpError as e:
        return usage_error(str(e))

    rows = list(describe_entries(state))
    if cfg.json_output:
        emit_json({"paddr_bits": cfg.paddr_bits, "entries": rows})
        return EXIT_OK

    table = Table(title=f"PMP entries ({cfg.paddr_bits}-bit physical addresses)")
    for column in ("#", "cfg", "pmpaddr", "mode", "lo", "hi", "perms", "lock"):
        table.add_column(column, justify="right" if column in ("#", "lo", "hi") else "left")
    for row in rows:
        table.add_row(
            str(row["index"]),
            format_hex(row["cfg"], 8),
            format_hex(row["addr_reg"]),
            row["mode"],
            format_hex(row["lo"]),
            format_hex(row["hi"]),
            row["perms"],
            "L" if row["locked"] else "",
        )
    console.print(table)
    return EXIT_OK


# -- check


def _parse_entry(text: str) -> tuple[int, int]:
    raw_cfg, sep, raw_addr = text.partition(":")
    if not sep:
        raise ValueError(f"Entry {text!r} must be CFG:ADDR")
    return parse_int(raw_cfg), parse_int(raw_addr)


def cmd_check(args: argparse.Namespace, cfg: CliConfig) -> int:
    try:
        entries = [_parse_entry(text) for text in args.entry or []]
        addr = parse_int(args.addr)
        prv = Privilege.parse(args.prv)
        state = PmpState.from_raw(
            [c for c, _ in entries], [a for _, a in entries], cfg.paddr_bits
        )
        req = AccessRequest(addr, args.size, prv)
        check = check_access_mask if args.impl == "mask" else check_access_spec
        perms = check(state, req)
    except (ValueError, PmpError) as e:
        return usage_error(str(e))

    match = highest_priority_match(state, req.addr)
    granted = None if args.type is None else perms.allows(args.type)
    if cfg.json_output:
        emit_json(
            {
                "addr": req.addr,
                "size": req.size,
                "prv": prv.name,
                "impl": args.impl,
                "match": match,
                "perms": perms_to_dict(perms),
                "granted": granted,
            }
        )
    else:
        where = "no match" if match is None else f"entry {match}"
        line = f"{format_hex(req.addr)} size={req.size} prv={prv.name}: {perms} ({where})"
        if granted is not None:
            line += f" -> {args.type} {'granted' if granted else 'denied'}"
        console.print(line, highlight=False)
    return EXIT_FAIL if granted is False else EXIT_OK


# -- verify


def _print_report(report: CampaignReport, timing: bool) -> None:
    status = "[green]PASS[/green]" if report.passed else "[red]FAIL[/red]"
    title = (
        f"{report.checker}: {report.mode}, {report.paddr_bits}-bit, "
        f"{report.n_entries} entries, {report.cases_run:,} cases"
    )
    if timing:
        title += f", {format_duration(report.wall_time_seconds)}"
    table = Table(title=title)
    table.add_column("property")
    for column in ("passed", "vacuous", "failed"):
        table.add_column(column, justify="right")
    for prop, tally in report.tallies.items():
        table.add_row(prop.value, f"{tally.passed:,}", f"{tally.vacuous:,}", f"{tally.failed:,}")
    console.print(table)
    console.print(f"{status} {report.violation_count} violation(s)")


def cmd_verify(args: argparse.Namespace, cfg: CliConfig) -> int:
    mode = CampaignMode.RANDOMIZED
    if args.exhaustive:
        mode = CampaignMode.EXHAUSTIVE
    elif args.sampled:
        mode = CampaignMode.SAMPLED
    campaign = CampaignConfig(
        paddr_bits=cfg.paddr_bits,
        n_entries=cfg.n_entries,
        mode=mode,
        trials=args.trials,
        seed=cfg.seed,
        cap=args.cap,
        workers=args.workers or cfg.workers,
        fail_fast=args.fail_fast,
    )

    reports = []
    try:
        for impl in args.impl or ["spec", "mask"]:
            reports.append(run_campaign(campaign, impl))
    except CampaignError as e:
        return usage_error(str(e))

    if cfg.json_output:
        emit_json({"reports": [r.to_dict(timing=args.timing) for r in reports]})
    else:
        for report in reports:
            _print_report(report, args.timing)
            if report.violations:
                ce = shrink(report.violations[0], report.checker)
                console.print("First counterexample, shrunk:", highlight=False)
                console.print(ce.describe(), highlight=False)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# -- emit-smt


def cmd_emit_smt(args: argparse.Namespace, cfg: CliConfig) -> int:
    if args.all:
        props = list(PropertyId)
    elif args.property:
        try:
            props = [PropertyId.parse(name) for name in args.property]
        except ValueError as e:
            return usage_error(str(e))
    else:
        return usage_error("Give --property NAME or --all")

    out_dir = Path(args.out) if args.out else cfg.output_root / "smt"
    solver = args.solver or cfg.solver
    results = []
    try:
        for prop in props:
            doc = compile_property_negation(prop, cfg.paddr_bits, cfg.n_entries, args.mutant)
            path = write_document(doc, out_dir, prop, cfg.paddr_bits, cfg.n_entries)
            result: dict[str, Any] = {"property": prop.value, "path": str(path)}
            if solver:
                verdict, message = run_solver(solver, path, cfg.solver_timeout)
                result["verdict"] = verdict
                if verdict == "unknown":
                    logger.warning(f"{prop.value}: {message}")
            results.append(result)
    except SmtError as e:
        return usage_error(str(e))
    except OSError as e:
        return usage_error(f"Cannot write to {out_dir}: {e}")

    if cfg.json_output:
        emit_json({"files": results})
    else:
        table = Table(title=f"SMT documents in {out_dir}")
        table.add_column("property")
        table.add_column("file")
        if solver:
            table.add_column("verdict")
        for r in results:
            row = [r["property"], Path(r["path"]).name]
            if solver:
                row.append(r["verdict"])
            table.add_row(*row)
        console.print(table)
    return EXIT_FAIL if any(r.get("verdict") == "sat" for r in results) else EXIT_OK


# -- scenario


def cmd_scenario(args: argparse.Namespace, cfg: CliConfig) -> int:
    try:
        text = Path(args.script).read_text(encoding="utf-8")
    except OSError as e:
        return usage_error(f"Cannot read script: {e}")
    try:
        commands = parse_script(text)
    except ScriptError as e:
        return usage_error(str(e))

    trace = replay(commands, ProbeConfig(samples_per_region=args.samples, seed=cfg.seed))
    if args.trace_out:
        trace.save(Path(args.trace_out))

    if cfg.json_output:
        emit_json(trace.to_dict())
    else:
        table = Table(title=f"Scenario {args.script}")
        table.add_column("line", justify="right")
        table.add_column("command")
        table.add_column("running")
        table.add_column("violations", justify="right")
        for step in trace.steps:
            table.add_row(str(step.line), step.command, step.running, str(len(step.violations)))
        console.print(table)
        for step in trace.steps:
            for v in step.violations[:5]:
                console.print(
                    f"line {step.line}: {v['actor']} gets access at "
                    f"{format_hex(v['addr'])} in {v['owner']} memory",
                    highlight=False,
                )

    if trace.error is not None:
        return usage_error(f"line {trace.error_line}: {trace.error}")
    return EXIT_OK if trace.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--paddr-bits", dest="paddr_bits", type=int, help="Physical address width")
    common.add_argument("--entries", type=int, help="Number of PMP entries")
    common.add_argument("--format", choices=OUTPUT_FORMATS, help="Output format")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="pmpcheck",
        description="RISC-V PMP checker model, property campaigns and SMT emission",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Environment Variables:
  PMPCHECK_PADDR_BITS, PMPCHECK_ENTRIES, PMPCHECK_SEED, PMPCHECK_WORKERS,
  PMPCHECK_OUTPUT_PATH, PMPCHECK_SOLVER, PMPCHECK_SOLVER_TIMEOUT,
  PMPCHECK_LOG_LEVEL
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", parents=[common], help="Decode raw pmpcfg/pmpaddr values")
    p.add_argument("--cfg", action="append", required=True, help="cfg byte(s), comma-separated")
    p.add_argument("--addr", action="append", help="pmpaddr value(s), comma-separated")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("check", parents=[common], help="Check one access")
    p.add_argument("--entry", action="append", help="Entry as CFG:ADDR, highest priority first")
    p.add_argument("--addr", required=True, help="Access address")
    p.add_argument("--size", type=int, choices=range(4), default=0, help="log2 access size")
    p.add_argument("--prv", default="U", help="Privilege: M, S or U")
    p.add_argument("--type", choices=["r", "w", "x"], help="Access type deciding the exit code")
    p.add_argument("--impl", choices=["spec", "mask"], default="spec")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("verify", parents=[common], help="Run a property campaign")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exhaustive", action="store_true")
    mode.add_argument("--sampled", action="store_true")
    mode.add_argument("--random", action="store_true", help="Randomized (default)")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--cap", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--impl", action="append", choices=sorted(CHECKERS))
    p.add_argument("--fail-fast", dest="fail_fast", action="store_true")
    p.add_argument("--timing", action="store_true", help="Include wall time in output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("emit-smt", parents=[common], help="Write SMT-LIB property documents")
    p.add_argument("--property", action="append", help="Property name or EqN")
    p.add_argument("--all", action="store_true")
    p.add_argument("--out", help="Output directory")
    p.add_argument("--solver", help="Solver binary, or z3py")
    p.add_argument("--mutant", choices=COMPILE_MUTANTS)
    p.set_defaults(func=cmd_emit_smt)

    p = sub.add_parser("scenario", parents=[common], help="Replay a Keystone scenario script")
    p.add_argument("script")
    p.add_argument("--trace-out", dest="trace_out")
    p.add_argument("--samples", type=int, default=64, help="Uniform probes per region")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    return args.func(args, _settings(args))


if __name__ == "__main__":
    sys.exit(main())
