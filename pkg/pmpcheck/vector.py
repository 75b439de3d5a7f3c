"""
Vectorized checker evaluation.

Evaluates the reference checker, the mask checker, the mutants and the five
properties over numpy arrays of cases. Entry arrays have shape (..., n) and
broadcast against per-case arrays of shape (...,), so one PMP state can be
checked against many requests, or many states against one request each.

Outputs are packed as in Permissions.to_bits: r is bit 0, w bit 1, x bit 2.
Widths up to INT64_PADDR_BITS use int64 arrays; wider address spaces fall
back to object arrays of Python ints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .pmp import CFG_A_MASK, CFG_A_SHIFT, CFG_L, AddrMode, PmpState, Privilege
from .props import CaseOutcome, PropertyId

INT64_PADDR_BITS = 60
PERM_BITS = 0b111
HIGH_CODE = Privilege.M.value

# outcome codes, one column per property in PropertyId order
PASS, VACUOUS, FAIL = 0, 1, 2
OUTCOMES = {PASS: CaseOutcome.PASS, VACUOUS: CaseOutcome.VACUOUS, FAIL: CaseOutcome.FAIL}


def int_dtype(paddr_bits: int) -> type | np.dtype:
    return np.int64 if paddr_bits <= INT64_PADDR_BITS else object


@dataclass(frozen=True)
class EntryArrays:
    """Raw cfg bytes and pmpaddr values of one or many PMP states."""

    cfg: np.ndarray
    addr_reg: np.ndarray
    paddr_bits: int

    @classmethod
    def from_state(cls, state: PmpState) -> "EntryArrays":
        dtype = int_dtype(state.paddr_bits)
        return cls(
            np.array([e.raw_cfg for e in state.entries], dtype=np.int64),
            np.array([e.addr_reg for e in state.entries], dtype=dtype),
            state.paddr_bits,
        )

    @property
    def n_entries(self) -> int:
        return self.cfg.shape[-1]

    @property
    def max_addr(self) -> int:
        return (1 << self.paddr_bits) - 1

    @property
    def mode(self) -> np.ndarray:
        return (self.cfg & CFG_A_MASK) >> CFG_A_SHIFT

    @property
    def locked(self) -> np.ndarray:
        return (self.cfg & CFG_L) != 0

    @property
    def previous_reg(self) -> np.ndarray:
        """pmpaddr of entry i - 1, zero for entry 0."""
        zero = np.zeros_like(self.addr_reg[..., :1])
        return np.concatenate([zero, self.addr_reg[..., :-1]], axis=-1)


@dataclass(frozen=True)
class Bounds:
    lo: np.ndarray
    hi: np.ndarray
    valid: np.ndarray


def region_bounds(ea: EntryArrays) -> Bounds:
    """Inclusive [lo, hi] of every entry, with valid False where it never matches."""
    mode, reg = ea.mode, ea.addr_reg

    # lowest clear bit of pmpaddr is 2^k for k trailing ones
    low_zero = ~reg & (reg + 1)
    napot_lo = (reg & ~(low_zero - 1)) << 2
    napot_hi = np.minimum(napot_lo + (low_zero << 3) - 1, ea.max_addr)

    na4_lo = reg << 2
    tor_lo = ea.previous_reg << 2
    tor_hi = (reg << 2) - 1

    is_napot = mode == AddrMode.NAPOT
    is_na4 = mode == AddrMode.NA4
    lo = np.where(is_napot, napot_lo, np.where(is_na4, na4_lo, tor_lo))
    hi = np.where(is_napot, napot_hi, np.where(is_na4, na4_lo + 3, tor_hi))
    valid = is_napot | is_na4 | ((mode == AddrMode.TOR) & (tor_hi >= tor_lo))
    return Bounds(lo, hi, valid)


def last_byte(addr: np.ndarray, size_exp: np.ndarray) -> np.ndarray:
    return addr + (np.left_shift(1, size_exp) - 1)


def _first_index(hits: np.ndarray) -> np.ndarray:
    if hits.shape[-1] == 0:
        return np.zeros(hits.shape[:-1], dtype=np.int64)
    return np.argmax(hits, axis=-1)


def _last_index(hits: np.ndarray) -> np.ndarray:
    n = hits.shape[-1]
    if n == 0:
        return np.zeros(hits.shape[:-1], dtype=np.int64)
    return n - 1 - np.argmax(hits[..., ::-1], axis=-1)


def _pick(values: np.ndarray, index: np.ndarray, like: np.ndarray) -> np.ndarray:
    """values[..., index] per case, with values broadcast to the shape of like."""
    if like.shape[-1] == 0:
        return np.zeros(index.shape, dtype=values.dtype)
    full = np.broadcast_to(values, like.shape)
    return np.take_along_axis(full, index[..., None], axis=-1)[..., 0]


@dataclass(frozen=True)
class Matches:
    """Per-entry reference facts for a batch of requests, shape (..., n)."""

    bounds: Bounds
    contains: np.ndarray
    aligned: np.ndarray


def reference_matches(ea: EntryArrays, addr: np.ndarray, size_exp: np.ndarray) -> Matches:
    b = region_bounds(ea)
    a = addr[..., None]
    last = last_byte(addr, size_exp)[..., None]
    inside_lo = b.valid & (b.lo <= a)
    return Matches(b, inside_lo & (a <= b.hi), inside_lo & (last <= b.hi))


def _rule(
    cfg: np.ndarray, aligned: np.ndarray, high: np.ndarray, ignore_lock: bool = False
) -> np.ndarray:
    """Low or high privilege rule for the selected entry."""
    unlocked = np.ones_like(high) if ignore_lock else (cfg & CFG_L) == 0
    granted = np.where(high & unlocked, PERM_BITS, cfg & PERM_BITS)
    return np.where(aligned, granted, 0)


def _default(high: np.ndarray) -> np.ndarray:
    return np.where(high, PERM_BITS, 0)


def _resolve(
    ea: EntryArrays,
    m: Matches,
    index: np.ndarray,
    high: np.ndarray,
    ignore_lock: bool = False,
) -> np.ndarray:
    hit = m.contains.any(axis=-1)
    cfg = _pick(ea.cfg, index, m.contains)
    aligned = _pick(m.aligned, index, m.contains)
    return np.where(hit, _rule(cfg, aligned, high, ignore_lock), _default(high))


def check_spec(
    ea: EntryArrays, addr: np.ndarray, size_exp: np.ndarray, high: np.ndarray
) -> np.ndarray:
    """Priority scan: the first matching entry decides."""
    m = reference_matches(ea, addr, size_exp)
    return _resolve(ea, m, _first_index(m.contains), high)


def napot_mask(ea: EntryArrays) -> np.ndarray:
    """Low-bit region mask from the trailing ones of {pmpaddr, A[0]}."""
    base = (ea.addr_reg << 1) | (ea.mode & 1)
    base_mask = (1 << (ea.paddr_bits - 1)) - 1
    ones = base & ~((base + 1) & base_mask) & base_mask
    return ((ones << 2) | 0b11) & ea.max_addr


def mask_matches(
    ea: EntryArrays, addr: np.ndarray, size_exp: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Comparator hit and alignment of every entry, shape (..., n)."""
    mode = ea.mode
    napot, tor = (mode & 0b10) != 0, (mode & 0b01) != 0
    top = ea.addr_reg << 2
    bottom = ea.previous_reg << 2
    a = addr[..., None]
    last = last_byte(addr, size_exp)[..., None]

    keep = ea.max_addr & ~napot_mask(ea)
    # bit paddr_bits stays compared so a wrapped last byte never aligns
    keep_ext = keep | (1 << ea.paddr_bits)
    pow2_hit = (a & keep) == (top & keep)
    pow2_aligned = (last & keep_ext) == (top & keep_ext)

    tor_hit = tor & (a >= bottom) & (a < top)
    hit = np.where(napot, pow2_hit, tor_hit)
    aligned = np.where(napot, pow2_aligned, last < top)
    return hit, aligned


def check_mask(
    ea: EntryArrays, addr: np.ndarray, size_exp: np.ndarray, high: np.ndarray
) -> np.ndarray:
    """Comparators plus a priority mux chain folded from the last entry up."""
    hit, aligned = mask_matches(ea, addr, size_exp)
    cfg = np.broadcast_to(ea.cfg, hit.shape)
    result = _default(high)
    for i in reversed(range(ea.n_entries)):
        perms = _rule(cfg[..., i], aligned[..., i], high)
        result = np.where(hit[..., i], perms, result)
    return result


def check_priority_reversed(
    ea: EntryArrays, addr: np.ndarray, size_exp: np.ndarray, high: np.ndarray
) -> np.ndarray:
    m = reference_matches(ea, addr, size_exp)
    return _resolve(ea, m, _last_index(m.contains), high)


def check_lock_ignored(
    ea: EntryArrays, addr: np.ndarray, size_exp: np.ndarray, high: np.ndarray
) -> np.ndarray:
    m = reference_matches(ea, addr, size_exp)
    return _resolve(ea, m, _first_index(m.contains), high, ignore_lock=True)


def check_alignment_ignored(
    ea: EntryArrays, addr: np.ndarray, size_exp: np.ndarray, high: np.ndarray
) -> np.ndarray:
    return check_spec(ea, addr, np.zeros_like(size_exp), high)


BatchChecker = Callable[[EntryArrays, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

BATCH_CHECKERS: dict[str, BatchChecker] = {
    "spec": check_spec,
    "mask": check_mask,
    "priority_reversed": check_priority_reversed,
    "lock_ignored": check_lock_ignored,
    "alignment_ignored": check_alignment_ignored,
}


def evaluate_cases(
    ea: EntryArrays,
    addr: np.ndarray,
    size_exp: np.ndarray,
    high: np.ndarray,
    out: np.ndarray,
) -> np.ndarray:
    """
    Evaluate all five properties on a batch of cases.

    Region facts and comparator outputs are computed once per batch and shared
    by every property.

    Args:
        ea: Entry arrays, shape (m, n) or (n,)
        addr: Access addresses, shape (m,)
        size_exp: Access size exponents, shape (m,)
        high: Whether each access runs at high privilege, shape (m,)
        out: Packed outputs of the checker under test, shape (m,)

    Returns:
        Outcome codes (PASS, VACUOUS or FAIL), shape (m, 5) in PropertyId order
    """
    m = reference_matches(ea, addr, size_exp)
    mask_hit, mask_aligned = mask_matches(ea, addr, size_exp)
    match = m.contains.any(axis=-1)
    expected = _resolve(ea, m, _first_index(m.contains), high)
    agrees = out == expected
    last = last_byte(addr, size_exp)[..., None]

    both = m.contains & mask_aligned
    has_entries = np.full(addr.shape, ea.n_entries > 0)
    checks = {
        PropertyId.RegionBoundsEq1: (has_entries, (m.contains == mask_hit).all(axis=-1)),
        PropertyId.AlignImplEq2: (
            both.any(axis=-1),
            (~both | (last <= m.bounds.hi)).all(axis=-1),
        ),
        PropertyId.MainLowEq3: (~high & match, agrees),
        PropertyId.NoMatchEq4: (~match, agrees),
        PropertyId.HighPrivEq5: (high & match, agrees),
    }
    columns = [
        np.where(guard, np.where(holds, PASS, FAIL), VACUOUS)
        for guard, holds in (checks[p] for p in PropertyId)
    ]
    return np.stack(columns, axis=-1)
