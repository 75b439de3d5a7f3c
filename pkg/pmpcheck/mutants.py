"""
Deliberately broken checkers.

Each mutant drops one rule of the checker. Property campaigns must flag every
one of them; a campaign that passes a mutant is too weak.
"""

from typing import Callable

from .mask_checker import check_access_mask
from .pmp import (
    AccessRequest,
    Permissions,
    PmpState,
    access_aligned,
    check_access_spec,
    expected_permissions,
    highest_priority_match,
    matching_entries,
)

Checker = Callable[[PmpState, AccessRequest], Permissions]


def check_priority_reversed(state: PmpState, req: AccessRequest) -> Permissions:
    """Lowest priority matching entry wins."""
    hits = matching_entries(state, req.addr)
    if not hits:
        return Permissions.all(req.prv.is_high)
    return expected_permissions(state, hits[-1], req)


def check_lock_ignored(state: PmpState, req: AccessRequest) -> Permissions:
    """Machine mode treats every matching entry as unlocked."""
    i = highest_priority_match(state, req.addr)
    if i is None or not req.prv.is_high:
        return check_access_spec(state, req)
    return Permissions.all(access_aligned(state, i, req.addr, req.size_exp))


def check_alignment_ignored(state: PmpState, req: AccessRequest) -> Permissions:
    """Partially overlapping accesses are judged by the base byte alone."""
    return check_access_spec(state, AccessRequest(req.addr, 0, req.prv))


CHECKERS: dict[str, Checker] = {
    "spec": check_access_spec,
    "mask": check_access_mask,
    "priority_reversed": check_priority_reversed,
    "lock_ignored": check_lock_ignored,
    "alignment_ignored": check_alignment_ignored,
}

MUTANTS = ("priority_reversed", "lock_ignored", "alignment_ignored")


def get_checker(name: str) -> Checker:
    try:
        return CHECKERS[name]
    except KeyError:
        raise ValueError(
            f"Unknown checker {name!r}; choose from {', '.join(CHECKERS)}"
        ) from None
