"""
Hardware-style PMP checker.

Evaluates the same function as pmp.check_access_spec, but the way the Rocket
PMPChecker is built: NA4/NAPOT matching by masked comparison against the
comparand, TOR matching by two unsigned comparators, and priority resolved by
a cascaded mux chain folded from the lowest priority entry upward. It exists
as an independent implementation for differential testing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .pmp import AccessRequest, ArchParamError, PmpState, Permissions


@dataclass(frozen=True)
class EntryMatch:
    """Comparator outputs for one entry."""

    hit: bool
    aligned: bool


def comparand(state: PmpState, i: int) -> int:
    """pmpaddr shifted back to a byte address."""
    return state.entries[i].addr_reg << 2


def napot_mask(state: PmpState, i: int) -> int:
    """
    Low-bit mask of the pow2 region selected by entry i.

    base = {pmpaddr, A[0]}; the trailing ones of base, extended by the two
    implicit grain bits, give the mask. NA4 (A[0] = 0) yields 0b11.

    Args:
        state: PMP state
        i: Entry index

    Returns:
        Mask truncated to paddr_bits
    """
    entry = state.entries[i]
    base_bits = state.paddr_bits - 1
    a0 = int(entry.cfg.mode) & 1
    base = (entry.addr_reg << 1) | a0
    base_mask = (1 << base_bits) - 1
    ones = base & ~((base + 1) & base_mask) & base_mask
    return ((ones << 2) | 0b11) & state.max_addr


def entry_match(state: PmpState, i: int, addr: int, size_exp: int) -> EntryMatch:
    """Evaluate hit and alignment comparators of entry i."""
    mode = int(state.entry(i).cfg.mode)
    napot, tor = bool(mode & 0b10), bool(mode & 0b01)
    top = comparand(state, i)
    last = addr + (1 << size_exp) - 1

    if napot:
        keep = state.max_addr & ~napot_mask(state, i)
        # bit paddr_bits stays compared so a wrapped last byte never aligns
        keep_ext = keep | (1 << state.paddr_bits)
        hit = (addr & keep) == (top & keep)
        aligned = (last & keep_ext) == (top & keep_ext)
        return EntryMatch(hit, aligned)

    bottom = 0 if i == 0 else comparand(state, i - 1)
    lower_ok = not addr < bottom
    upper_ok = addr < top
    return EntryMatch(tor and lower_ok and upper_ok, last < top)


def check_access_mask(state: PmpState, req: AccessRequest) -> Permissions:
    """
    Evaluate the checker with comparators and a priority mux chain.

    Args:
        state: PMP state
        req: Access to check

    Returns:
        Granted permissions, identical to check_access_spec on every input
    """
    if req.addr > state.max_addr:
        raise ArchParamError(
            f"Address {req.addr:#x} exceeds {state.paddr_bits}-bit physical space"
        )
    high = req.prv.is_high
    result = Permissions.all(high)
    for i in reversed(range(state.n_entries)):
        match = entry_match(state, i, req.addr, req.size_exp)
        if not match.hit:
            continue
        cfg = state.entries[i].cfg
        ignore = high and not cfg.l
        result = Permissions(
            match.aligned and (cfg.r or ignore),
            match.aligned and (cfg.w or ignore),
            match.aligned and (cfg.x or ignore),
        )
    return result
