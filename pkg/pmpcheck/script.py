"""
Scenario scripts: parsing, replay, and JSON traces.

One command per line, `#` starts a comment:

    boot <memory_size> <sm_base> <sm_size> [entries=N] [paddr_bits=N] [invalidate=off|zero]
    create <id> <base> <size>
    enter <id>
    exit
    destroy <id>
    check
    corrupt <index> <cfg> <addr_reg>

Isolation is checked after every step; `check` only records a step.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from loguru import logger

from .common import parse_int
from .keystone import (
    InvalidateMode,
    MemoryLayout,
    ProbeConfig,
    Region,
    ScenarioError,
    ScenarioState,
    boot,
    check_isolation,
    create_enclave,
    destroy_enclave,
    enter_enclave,
    exit_enclave,
)
from .pmp import DEFAULT_ENTRIES, DEFAULT_PADDR_BITS, PmpEntry, PmpError, decode_cfg
from .report import perms_to_dict, state_to_dict


class ScriptError(ScenarioError):
    """Malformed script or failing step, with its 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


# command -> (positional argument count, allowed key=value options)
COMMANDS: dict[str, tuple[int, tuple[str, ...]]] = {
    "boot": (3, ("entries", "paddr_bits", "invalidate")),
    "create": (3, ()),
    "enter": (1, ()),
    "exit": (0, ()),
    "destroy": (1, ()),
    "check": (0, ()),
    "corrupt": (3, ()),
}


@dataclass(frozen=True)
class Command:
    line: int
    name: str
    args: tuple[int, ...] = ()
    options: dict[str, str] = field(default_factory=dict)
    text: str = ""


def parse_line(line_no: int, raw: str) -> Command | None:
    """Parse one script line; blank and comment-only lines give None."""
    try:
        words = shlex.split(raw, comments=True)
    except ValueError as e:
        raise ScriptError(line_no, str(e)) from None
    if not words:
        return None
    name, rest = words[0].lower(), words[1:]
    if name not in COMMANDS:
        raise ScriptError(line_no, f"Unknown command {words[0]!r}")
    n_args, allowed = COMMANDS[name]
    positional = [w for w in rest if "=" not in w]
    options = {}
    for word in rest:
        if "=" in word:
            key, _, value = word.partition("=")
            if key not in allowed:
                raise ScriptError(line_no, f"{name} does not take option {key!r}")
            options[key] = value
    if len(positional) != n_args:
        raise ScriptError(line_no, f"{name} takes {n_args} argument(s), got {len(positional)}")
    try:
        args = tuple(parse_int(w) for w in positional)
    except ValueError as e:
        raise ScriptError(line_no, str(e)) from None
    return Command(line_no, name, args, options, " ".join(words))


def parse_script(text: str) -> list[Command]:
    """Parse a whole script; the first command must be boot."""
    commands = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        cmd = parse_line(line_no, raw)
        if cmd is None:
            continue
        if (cmd.name == "boot") != (not commands):
            expected = "boot must be the first command"
            raise ScriptError(line_no, expected if not commands else "boot may appear only once")
        commands.append(cmd)
    if not commands:
        raise ScriptError(1, "Empty script")
    return commands


@dataclass
class TraceStep:
    """Observable outcome of one command."""

    line: int
    command: str
    running: str
    live_enclaves: list[int]
    pmp: dict[str, Any]
    violations: list[dict[str, Any]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "line": self.line,
            "command": self.command,
            "running": self.running,
            "live_enclaves": self.live_enclaves,
            "pmp": self.pmp,
            "violations": self.violations,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TraceStep":
        return cls(**data)


@dataclass
class ScenarioTrace:
    steps: list[TraceStep] = field(default_factory=list)
    error: str | None = None
    error_line: int | None = None

    @property
    def violation_count(self) -> int:
        return sum(len(step.violations) for step in self.steps)

    @property
    def passed(self) -> bool:
        return self.error is None and self.violation_count == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "violation_count": self.violation_count,
            "error": self.error,
            "error_line": self.error_line,
            "steps": [step.to_dict() for step in self.steps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioTrace":
        return cls(
            steps=[TraceStep.from_dict(s) for s in data["steps"]],
            error=data.get("error"),
            error_line=data.get("error_line"),
        )

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: Path) -> "ScenarioTrace":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _boot(cmd: Command) -> ScenarioState:
    memory, sm_base, sm_size = cmd.args
    try:
        entries = parse_int(cmd.options.get("entries", str(DEFAULT_ENTRIES)))
        paddr_bits = parse_int(cmd.options.get("paddr_bits", str(DEFAULT_PADDR_BITS)))
        invalidate = InvalidateMode(cmd.options.get("invalidate", "off").lower())
    except ValueError as e:
        raise ScriptError(cmd.line, str(e)) from None
    return boot(MemoryLayout(Region(sm_base, sm_size), memory), entries, paddr_bits, invalidate)


def apply_command(s: ScenarioState | None, cmd: Command) -> ScenarioState:
    """Apply one parsed command; scenario and PMP errors become ScriptErrors."""
    try:
        if cmd.name == "boot":
            return _boot(cmd)
        assert s is not None
        if cmd.name == "create":
            eid, base, size = cmd.args
            return create_enclave(s, eid, Region(base, size))
        if cmd.name == "enter":
            return enter_enclave(s, cmd.args[0])
        if cmd.name == "exit":
            return exit_enclave(s)
        if cmd.name == "destroy":
            return destroy_enclave(s, cmd.args[0])
        if cmd.name == "corrupt":
            index, cfg, addr_reg = cmd.args
            entry = PmpEntry(decode_cfg(cfg), addr_reg)
            return replace(s, pmp=s.pmp.replace_entry(index, entry))
        return s
    except ScriptError:
        raise
    except (ScenarioError, PmpError) as e:
        raise ScriptError(cmd.line, str(e)) from None


def _step(cmd: Command, s: ScenarioState, probe: ProbeConfig) -> TraceStep:
    violations = check_isolation(s, probe)
    return TraceStep(
        line=cmd.line,
        command=cmd.text,
        running=str(s.running),
        live_enclaves=sorted(s.live_enclaves),
        pmp=state_to_dict(s.pmp),
        violations=[
            {
                "actor": str(v.actor),
                "addr": v.addr,
                "size_exp": v.size_exp,
                "owner": str(v.protected_owner),
                "perms": perms_to_dict(v.perms),
            }
            for v in violations
        ],
    )


def replay(commands: list[Command], probe: ProbeConfig | None = None) -> ScenarioTrace:
    """
    Run commands in order, checking isolation after each.

    A failing step stops the replay; its message and line go in the trace.
    """
    probe = probe or ProbeConfig()
    trace = ScenarioTrace()
    s: ScenarioState | None = None
    for cmd in commands:
        try:
            s = apply_command(s, cmd)
        except ScriptError as e:
            logger.info(f"Scenario stopped: {e}")
            trace.error, trace.error_line = e.message, e.line
            break
        trace.steps.append(_step(cmd, s, probe))
    return trace


def replay_text(text: str, probe: ProbeConfig | None = None) -> ScenarioTrace:
    return replay(parse_script(text), probe)
