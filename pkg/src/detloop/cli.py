"""Command-line front end.

Exit codes: 0 success, 1 runtime error or divergence, 2 bad configuration,
profile or trace file.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path
from typing import Any, Sequence

from detloop.attacks import (
    MATRIX,
    SCENARIOS,
    matrix_verdicts,
    reports_to_jsonl,
    run_matrix,
    standard_profiles,
)
from detloop.errors import ConfigError, DetloopError, TraceFormatError
from detloop.runtime import InputLog, Runtime, RuntimeConfig
from detloop.trace import Trace, trace_diff
from detloop.vmclock import ClockMode, EnvironmentProfile, machine_profile

EXIT_OK, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2

_MACHINE = re.compile(r"^cost(\d+)(?:\+j(\d+)s(\d+))?$")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR) -> None:
        super().__init__(message)
        self.code = code


def parse_profile(arg: str) -> EnvironmentProfile:
    """A profile JSON file, or a named machine such as ``cost3`` or ``cost2+j1s7``."""
    path = Path(arg)
    if path.is_file():
        return EnvironmentProfile.load(path)
    m = _MACHINE.match(arg)
    if m:
        speed, jitter, seed = int(m[1]), int(m[2] or 0), int(m[3] or 0)
        if speed < 1:
            raise ConfigError("profile", "speed must be at least 1")
        return machine_profile(speed, jitter, seed)
    raise ConfigError("profile", f"{arg}: no such profile file or machine name")


def _load_config(args: argparse.Namespace) -> RuntimeConfig:
    path = args.config or os.environ.get("DETLOOP_CONFIG")
    if path:
        if not Path(path).is_file():
            raise ConfigError("config", f"{path}: file not found")
        cfg = RuntimeConfig.load(path)
    else:
        cfg = RuntimeConfig()
    if getattr(args, "mode", None):
        cfg = cfg.with_mode(args.mode)
    return cfg


def _profiles(args: argparse.Namespace, cfg: RuntimeConfig) -> list[EnvironmentProfile]:
    names: list[str] = list(args.profile or [])
    for group in args.profiles or []:
        names.extend(p for p in group.split(",") if p)
    if not names and cfg.profile:
        names = [cfg.profile]
    profiles = [parse_profile(n) for n in names]
    if args.seed is not None:
        profiles = [p.with_seed(args.seed) for p in profiles]
    return profiles


def _read_script(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{path}: file not found")
    return p.read_text(encoding="utf-8")


def _parse_inputs(items: Sequence[str]) -> dict[str, Any]:
    inputs: dict[str, Any] = {}
    for item in items:
        name, sep, raw = item.partition("=")
        if not sep or not name:
            raise CliError(f"--input expects NAME=VALUE, got {item!r}")
        try:
            inputs[name] = json.loads(raw)
        except json.JSONDecodeError:
            inputs[name] = raw
    return inputs


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands -----------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    source = _read_script(args.script)
    cfg = _load_config(args)
    profiles = _profiles(args, cfg)
    if len(profiles) > 1:
        raise CliError("run takes a single profile")
    profile = profiles[0] if profiles else EnvironmentProfile()
    replay = None
    if args.replay:
        try:
            replay = InputLog.from_list(json.loads(Path(args.replay).read_text(encoding="utf-8")))
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError("replay", f"cannot read input log: {exc}") from None
    rt = Runtime(cfg, profile, replay)
    rt.load(source, _parse_inputs(args.input or []))
    trace = rt.run()
    if args.out:
        trace.dump(args.out)
    if args.record:
        Path(args.record).write_text(json.dumps(rt.input_log.to_list()) + "\n", encoding="utf-8")
    rep = rt.oracle_report()
    if args.format == "jsonl":
        sys.stdout.write(trace.to_jsonl())
        return EXIT_OK
    rows = [["#", "observer main", "oracle physical", "value"]]
    for i, (_, main, phys, value) in enumerate(rep.outputs):
        rows.append([str(i), str(main), str(phys), json.dumps(value) if not isinstance(value, str) else value])
    out = f"script {args.script}  mode {cfg.mode.value}  profile {profile.name}\n"
    out += _table(rows) if len(rows) > 1 else "(no outputs)\n"
    out += f"observer clock {rep.main_totals.get(0, 0)}  physical clock {rep.physical_total}  opcodes {rep.opcodes}\n"
    sys.stdout.write(out)
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if args.scenario == "all":
        scenarios = list(MATRIX)
    elif args.scenario in SCENARIOS:
        scenarios = [args.scenario]
    else:
        raise CliError(f"unknown scenario {args.scenario!r}; known: all, {', '.join(sorted(SCENARIOS))}")
    modes = [m for m in (args.modes or "legacy,det").split(",") if m]
    for m in modes:
        try:
            ClockMode(m)
        except ValueError:
            raise ConfigError("modes", f"unknown mode {m!r}") from None
    profiles = _profiles(args, cfg) or standard_profiles()
    if args.seed is not None and not (args.profile or args.profiles):
        profiles = [p.with_seed(args.seed) for p in profiles]
    reports = run_matrix(scenarios, modes, profiles, args.runs, None, cfg)
    jsonl = reports_to_jsonl(reports)
    if args.out:
        Path(args.out).write_text(jsonl, encoding="utf-8")
    if args.format == "jsonl":
        if not args.out:
            sys.stdout.write(jsonl)
        return EXIT_OK
    verdicts = matrix_verdicts(reports)
    rows = [["scenario"] + modes]
    for s in scenarios:
        rows.append([s] + ["robust" if verdicts[(s, m)] else "vulnerable" for m in modes])
    text = _table(rows) + f"profiles: {', '.join(p.name for p in profiles)}\n"
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    source = _read_script(args.script)
    cfg = _load_config(args)
    profiles = _profiles(args, cfg) or standard_profiles()
    modes = [m for m in (args.modes or cfg.mode.value).split(",") if m]
    rows = [["mode", "profile", "outputs", "physical", "replay vs first"]]
    records = []
    for m in modes:
        mcfg = cfg.with_mode(m)
        first: Trace | None = None
        for p in profiles:
            rt = Runtime(mcfg, p)
            rt.load(source, _parse_inputs(args.input or []))
            trace = rt.run()
            outs = rt.observer_outputs()
            if first is None:
                first, verdict = trace, "-"
            else:
                d = trace_diff(first, trace)
                verdict = f"offset {d.offset}" if d.ok else "diverges"
            rows.append([m, p.name, json.dumps(outs), str(rt.physical.now), verdict])
            records.append({"mode": m, "profile": p.name, "outputs": outs, "physical": rt.physical.now})
    if args.format == "jsonl":
        _write(args.out, "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records))
    else:
        _write(args.out, _table(rows))
    return EXIT_OK


def cmd_trace_diff(args: argparse.Namespace) -> int:
    traces = []
    for path in (args.trace_a, args.trace_b):
        if not Path(path).is_file():
            raise CliError(f"{path}: file not found", EXIT_CONFIG)
        try:
            traces.append(Trace.load(path))
        except TraceFormatError as exc:
            raise CliError(f"{path}: malformed trace: {exc}", EXIT_CONFIG) from None
    d = trace_diff(*traces)
    if d.ok:
        print(f"constant offset C = {d.offset} over {d.compared} opcode records")
        return EXIT_OK
    print(f"divergence: {d.message}")
    return EXIT_ERROR


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detloop", description="Deterministic event-loop simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, mode: bool = True) -> None:
        p.add_argument("--config", help="runtime config JSON (default: $DETLOOP_CONFIG)")
        p.add_argument("--profile", action="append", help="profile JSON or machine name like cost3; repeatable")
        p.add_argument("--profiles", action="append", help="comma-separated profiles")
        p.add_argument("--seed", type=int, help="override the jitter seed of every profile")
        p.add_argument("--format", choices=("table", "jsonl"), default="table")
        p.add_argument("--out", help="output file")
        if mode:
            p.add_argument("--mode", choices=("det", "legacy"))

    p = sub.add_parser("run", help="run a script and record its trace")
    p.add_argument("script")
    common(p)
    p.add_argument("--input", action="append", metavar="NAME=VALUE", help="script input; repeatable")
    p.add_argument("--record", metavar="PATH", help="write the physical-input log for replay")
    p.add_argument("--replay", metavar="PATH", help="replay a recorded physical-input log")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack", help="run attack scenarios over a profile matrix")
    p.add_argument("scenario", help="scenario name or 'all'")
    common(p, mode=False)
    p.add_argument("--modes", help="comma-separated clock modes (default legacy,det)")
    p.add_argument("--runs", type=int, default=1)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("compare", help="run one script under several profiles and modes")
    p.add_argument("script")
    common(p, mode=False)
    p.add_argument("--modes", help="comma-separated clock modes")
    p.add_argument("--input", action="append", metavar="NAME=VALUE")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trace-diff", help="check two traces differ by one constant offset")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.set_defaults(func=cmd_trace_diff)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "runs", 1) < 1:
        print("error: --runs must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DetloopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
