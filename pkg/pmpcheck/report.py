"""
Campaign report and counterexample records with JSON persistence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .pmp import AccessRequest, Permissions, PmpState, Privilege, encode_cfg
from .props import CaseOutcome, PropertyId


def state_to_dict(state: PmpState) -> dict[str, Any]:
    return {
        "paddr_bits": state.paddr_bits,
        "entries": [
            {"cfg": encode_cfg(e.cfg), "addr_reg": e.addr_reg} for e in state.entries
        ],
    }


def state_from_dict(data: dict[str, Any]) -> PmpState:
    return PmpState.from_raw(
        [e["cfg"] for e in data["entries"]],
        [e["addr_reg"] for e in data["entries"]],
        data["paddr_bits"],
    )


def request_to_dict(req: AccessRequest) -> dict[str, Any]:
    return {"addr": req.addr, "size_exp": req.size_exp, "prv": req.prv.name}


def request_from_dict(data: dict[str, Any]) -> AccessRequest:
    return AccessRequest(data["addr"], data["size_exp"], Privilege[data["prv"]])


def perms_to_dict(perms: Permissions) -> dict[str, bool]:
    return {"r": perms.r, "w": perms.w, "x": perms.x}


def perms_from_dict(data: dict[str, bool]) -> Permissions:
    return Permissions(data["r"], data["w"], data["x"])


@dataclass(frozen=True)
class CounterExample:
    """A case on which a checker violates a property."""

    state: PmpState
    request: AccessRequest
    expected: Permissions
    actual: Permissions
    property: PropertyId

    def to_dict(self) -> dict[str, Any]:
        return {
            "property": self.property.value,
            "state": state_to_dict(self.state),
            "request": request_to_dict(self.request),
            "expected": perms_to_dict(self.expected),
            "actual": perms_to_dict(self.actual),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CounterExample":
        return cls(
            state=state_from_dict(data["state"]),
            request=request_from_dict(data["request"]),
            expected=perms_from_dict(data["expected"]),
            actual=perms_from_dict(data["actual"]),
            property=PropertyId(data["property"]),
        )

    def describe(self) -> str:
        req = self.request
        lines = [
            f"{self.property.value}: addr={req.addr:#x} size={req.size} prv={req.prv.name}"
            f" expected={self.expected} actual={self.actual}"
        ]
        for i, entry in enumerate(self.state.entries):
            lines.append(f"  [{i}] cfg={encode_cfg(entry.cfg):#04x} pmpaddr={entry.addr_reg:#x}")
        return "\n".join(lines)


@dataclass
class PropertyTally:
    passed: int = 0
    vacuous: int = 0
    failed: int = 0

    def add(self, outcome: CaseOutcome) -> None:
        if outcome is CaseOutcome.PASS:
            self.passed += 1
        elif outcome is CaseOutcome.VACUOUS:
            self.vacuous += 1
        else:
            self.failed += 1

    def merged(self, other: "PropertyTally") -> "PropertyTally":
        return PropertyTally(
            self.passed + other.passed,
            self.vacuous + other.vacuous,
            self.failed + other.failed,
        )


def _empty_tallies() -> dict[PropertyId, PropertyTally]:
    return {p: PropertyTally() for p in PropertyId}


@dataclass
class CampaignReport:
    """Result of a verification campaign against one checker."""

    checker: str
    mode: str
    paddr_bits: int
    n_entries: int
    seed: int | None = None
    cases_run: int = 0
    violations: list[CounterExample] = field(default_factory=list)
    violation_count: int = 0
    tallies: dict[PropertyId, PropertyTally] = field(default_factory=_empty_tallies)
    wall_time_seconds: float = 0.0
    max_violations: int = 50

    @property
    def passed(self) -> bool:
        return self.violation_count == 0

    def record(self, outcomes: dict[PropertyId, CaseOutcome]) -> None:
        self.cases_run += 1
        for p, outcome in outcomes.items():
            self.tallies[p].add(outcome)

    def record_tallies(self, cases: int, tallies: dict[PropertyId, PropertyTally]) -> None:
        """Add the outcome counts of a batch of cases."""
        self.cases_run += cases
        for p, tally in tallies.items():
            self.tallies[p] = self.tallies[p].merged(tally)

    def add_violation(self, ce: CounterExample) -> None:
        self.violation_count += 1
        if len(self.violations) < self.max_violations:
            self.violations.append(ce)

    def merge(self, other: "CampaignReport") -> "CampaignReport":
        """
        Combine two partial reports of the same campaign.

        Counterexamples are kept in a canonical order so merging is
        independent of the order partial reports arrive in.
        """
        violations = sorted(
            self.violations + other.violations,
            key=lambda ce: json.dumps(ce.to_dict(), sort_keys=True),
        )[: self.max_violations]
        return CampaignReport(
            checker=self.checker,
            mode=self.mode,
            paddr_bits=self.paddr_bits,
            n_entries=self.n_entries,
            seed=self.seed,
            cases_run=self.cases_run + other.cases_run,
            violations=violations,
            violation_count=self.violation_count + other.violation_count,
            tallies={p: self.tallies[p].merged(other.tallies[p]) for p in PropertyId},
            wall_time_seconds=max(self.wall_time_seconds, other.wall_time_seconds),
            max_violations=self.max_violations,
        )

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        data: dict[str, Any] = {
            "checker": self.checker,
            "mode": self.mode,
            "paddr_bits": self.paddr_bits,
            "n_entries": self.n_entries,
            "seed": self.seed,
            "cases_run": self.cases_run,
            "violation_count": self.violation_count,
            "max_violations": self.max_violations,
            "properties": {
                p.value: {
                    "passed": t.passed,
                    "vacuous": t.vacuous,
                    "failed": t.failed,
                }
                for p, t in self.tallies.items()
            },
            "violations": [ce.to_dict() for ce in self.violations],
        }
        if timing:
            data["wall_time_seconds"] = round(self.wall_time_seconds, 3)
        return data

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CampaignReport":
        return cls(
            checker=data["checker"],
            mode=data["mode"],
            paddr_bits=data["paddr_bits"],
            n_entries=data["n_entries"],
            seed=data["seed"],
            cases_run=data["cases_run"],
            violations=[CounterExample.from_dict(v) for v in data["violations"]],
            violation_count=data["violation_count"],
            tallies={
                PropertyId(name): PropertyTally(**counts)
                for name, counts in data["properties"].items()
            },
            wall_time_seconds=data.get("wall_time_seconds", 0.0),
            max_violations=data.get("max_violations", 50),
        )

    def save(self, path: Path, timing: bool = False) -> None:
        """Save report to JSON file."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json(timing))

    @classmethod
    def load(cls, path: Path) -> "CampaignReport":
        """Load report from JSON file."""
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))
