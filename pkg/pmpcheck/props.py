"""
Executable forms of the checker properties.

Each property is an implication over a concrete (state, request, output) case.
A case whose antecedent is false satisfies the property vacuously; those are
tallied apart from real passes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .mask_checker import EntryMatch, entry_match
from .pmp import (
    AccessRequest,
    Permissions,
    PmpState,
    RegionBounds,
    expected_permissions,
)


class PropertyId(str, Enum):
    """The five checker properties."""

    RegionBoundsEq1 = "RegionBoundsEq1"
    AlignImplEq2 = "AlignImplEq2"
    MainLowEq3 = "MainLowEq3"
    NoMatchEq4 = "NoMatchEq4"
    HighPrivEq5 = "HighPrivEq5"

    @property
    def short(self) -> str:
        return self.value[-3:]

    @classmethod
    def parse(cls, text: str) -> "PropertyId":
        """Accept full names or the EqN shorthand, case-insensitively."""
        key = text.strip().lower()
        for prop in cls:
            if key in (prop.value.lower(), prop.short.lower()):
                return prop
        raise ValueError(
            f"Unknown property {text!r}; choose from "
            + ", ".join(f"{p.value} ({p.short})" for p in cls)
        )


class CaseOutcome(Enum):
    PASS = "pass"
    VACUOUS = "vacuous"
    FAIL = "fail"


@dataclass(frozen=True)
class CaseFacts:
    """Reference facts about one case, computed once and shared by all properties."""

    bounds: tuple[RegionBounds | None, ...]
    contains: tuple[bool, ...]
    comparators: tuple[EntryMatch, ...]
    match: int | None
    expected: Permissions

    @classmethod
    def compute(cls, state: PmpState, req: AccessRequest) -> "CaseFacts":
        bounds = state.bounds
        contains = tuple(b is not None and req.addr in b for b in bounds)
        comparators = tuple(
            entry_match(state, i, req.addr, req.size_exp) for i in range(state.n_entries)
        )
        match = next((i for i, hit in enumerate(contains) if hit), None)
        if match is None:
            expected = Permissions.all(req.prv.is_high)
        else:
            expected = expected_permissions(state, match, req)
        return cls(bounds, contains, comparators, match, expected)


def property_guard(p: PropertyId, state: PmpState, req: AccessRequest) -> bool:
    """Whether the antecedent of property p holds for this case."""
    return _guard(p, state, req, CaseFacts.compute(state, req))


def _guard(p: PropertyId, state: PmpState, req: AccessRequest, facts: CaseFacts) -> bool:
    if p is PropertyId.RegionBoundsEq1:
        return state.n_entries > 0
    if p is PropertyId.AlignImplEq2:
        return any(
            hit and cmp.aligned for hit, cmp in zip(facts.contains, facts.comparators)
        )
    if p is PropertyId.MainLowEq3:
        return not req.prv.is_high and facts.match is not None
    if p is PropertyId.NoMatchEq4:
        return facts.match is None
    return req.prv.is_high and facts.match is not None


def _holds(
    p: PropertyId,
    state: PmpState,
    req: AccessRequest,
    out: Permissions,
    facts: CaseFacts,
) -> bool:
    if p is PropertyId.RegionBoundsEq1:
        # bounds membership must agree with the mask comparator
        for bounds, hit, cmp in zip(facts.bounds, facts.contains, facts.comparators):
            in_bounds = bounds is not None and bounds.lo <= req.addr <= bounds.hi
            if hit != in_bounds or hit != cmp.hit:
                return False
        return True
    if p is PropertyId.AlignImplEq2:
        for bounds, hit, cmp in zip(facts.bounds, facts.contains, facts.comparators):
            if hit and cmp.aligned and bounds is not None and req.last_byte > bounds.hi:
                return False
        return True
    # privilege default, or the low or high privilege rule of the first match
    return out == facts.expected


def evaluate_case(
    state: PmpState, req: AccessRequest, out: Permissions
) -> dict[PropertyId, CaseOutcome]:
    """Evaluate all five properties on one case."""
    facts = CaseFacts.compute(state, req)
    outcomes = {}
    for p in PropertyId:
        if not _guard(p, state, req, facts):
            outcomes[p] = CaseOutcome.VACUOUS
        elif _holds(p, state, req, out, facts):
            outcomes[p] = CaseOutcome.PASS
        else:
            outcomes[p] = CaseOutcome.FAIL
    return outcomes


def eval_property(
    p: PropertyId, state: PmpState, req: AccessRequest, out: Permissions
) -> bool:
    """
    Check one property on a concrete case.

    Args:
        p: Property to check
        state: PMP state
        req: Access request
        out: Output of the checker under test for (state, req)

    Returns:
        True when the implication holds, including vacuously
    """
    facts = CaseFacts.compute(state, req)
    if not _guard(p, state, req, facts):
        return True
    return _holds(p, state, req, out, facts)
