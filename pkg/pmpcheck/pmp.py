"""
Reference model of the RISC-V PMP checker.

Decodes pmpcfg/pmpaddr CSR values, computes region bounds and evaluates the
checker's combinational function the straightforward way: scan entries in
priority order, compare the access against each inclusive region.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from functools import cached_property
from typing import Iterable, Sequence

MAX_ENTRIES = 16
MIN_PADDR_BITS = 3
MAX_PADDR_BITS = 64
DEFAULT_PADDR_BITS = 32
DEFAULT_ENTRIES = 8

# pmpcfg layout
CFG_R = 1 << 0
CFG_W = 1 << 1
CFG_X = 1 << 2
CFG_A_SHIFT = 3
CFG_A_MASK = 0b11 << CFG_A_SHIFT
CFG_L = 1 << 7
CFG_RESERVED = 0b11 << 5


class PmpError(ValueError):
    """Base class for PMP model errors."""


class EntryIndexError(PmpError, IndexError):
    """Entry index outside 0..n_entries-1."""


class ArchParamError(PmpError):
    """Architecture parameter or register value out of range."""


class AddrMode(IntEnum):
    """Addressing mode held in pmpcfg.A."""

    OFF = 0
    TOR = 1
    NA4 = 2
    NAPOT = 3


class Privilege(Enum):
    """Effective privilege of an access, with its architectural encoding."""

    U = 0
    S = 1
    M = 3

    @property
    def is_high(self) -> bool:
        return self is Privilege.M

    @classmethod
    def from_bits(cls, bits: int) -> "Privilege":
        """Decode a 2-bit privilege field; 2 is reserved."""
        try:
            return cls(bits)
        except ValueError:
            raise ArchParamError(f"Reserved privilege encoding: {bits}") from None

    @classmethod
    def parse(cls, text: str) -> "Privilege":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ArchParamError(f"Unknown privilege: {text!r} (expected M, S or U)") from None


@dataclass(frozen=True)
class PmpCfg:
    """Decoded pmpcfg byte."""

    l: bool = False  # noqa: E741
    mode: AddrMode = AddrMode.OFF
    x: bool = False
    w: bool = False
    r: bool = False

    def with_perms(self, r: bool, w: bool, x: bool) -> "PmpCfg":
        return replace(self, r=r, w=w, x=x)

    def __str__(self) -> str:
        flags = ("r" if self.r else "-") + ("w" if self.w else "-") + ("x" if self.x else "-")
        return f"{self.mode.name} {flags}{' L' if self.l else ''}"


def decode_cfg(raw: int) -> PmpCfg:
    """
    Decode a pmpcfg byte.

    Reserved bits 5-6 are ignored.

    Args:
        raw: 8-bit CSR value

    Returns:
        Decoded configuration

    Example:
        >>> decode_cfg(0x9F)
        PmpCfg(l=True, mode=<AddrMode.NAPOT: 3>, x=True, w=True, r=True)
    """
    if not 0 <= raw <= 0xFF:
        raise ArchParamError(f"pmpcfg value out of range: {raw:#x}")
    return PmpCfg(
        l=bool(raw & CFG_L),
        mode=AddrMode((raw & CFG_A_MASK) >> CFG_A_SHIFT),
        x=bool(raw & CFG_X),
        w=bool(raw & CFG_W),
        r=bool(raw & CFG_R),
    )


def encode_cfg(cfg: PmpCfg) -> int:
    """Encode a PmpCfg back into its byte; reserved bits are emitted as zero."""
    raw = int(cfg.mode) << CFG_A_SHIFT
    if cfg.l:
        raw |= CFG_L
    if cfg.x:
        raw |= CFG_X
    if cfg.w:
        raw |= CFG_W
    if cfg.r:
        raw |= CFG_R
    return raw


def meaningful_cfg_bytes() -> list[int]:
    """The 64 cfg bytes with reserved bits clear, in ascending order."""
    return [raw for raw in range(0x100) if not raw & CFG_RESERVED]


@dataclass(frozen=True)
class PmpEntry:
    """One PMP entry: configuration plus the raw pmpaddr value (address >> 2)."""

    cfg: PmpCfg = field(default_factory=PmpCfg)
    addr_reg: int = 0

    @classmethod
    def napot(cls, base: int, size: int, cfg: PmpCfg) -> "PmpEntry":
        """
        Encode a naturally aligned power-of-two region.

        Args:
            base: Region base address, aligned to size
            size: Region size in bytes, a power of two and at least 8
            cfg: Permissions and lock; mode is forced to NAPOT

        Returns:
            Entry whose bounds are [base, base + size - 1]
        """
        if size < 8 or size & (size - 1):
            raise ArchParamError(f"NAPOT size must be a power of two >= 8, got {size:#x}")
        if base % size:
            raise ArchParamError(f"NAPOT base {base:#x} not aligned to size {size:#x}")
        return cls(replace(cfg, mode=AddrMode.NAPOT), (base >> 2) | ((size >> 3) - 1))

    @classmethod
    def na4(cls, base: int, cfg: PmpCfg) -> "PmpEntry":
        if base % 4:
            raise ArchParamError(f"NA4 base {base:#x} not 4-byte aligned")
        return cls(replace(cfg, mode=AddrMode.NA4), base >> 2)

    @classmethod
    def tor(cls, top: int, cfg: PmpCfg) -> "PmpEntry":
        """Top-of-range entry whose region ends just below `top`."""
        if top % 4:
            raise ArchParamError(f"TOR top {top:#x} not 4-byte aligned")
        return cls(replace(cfg, mode=AddrMode.TOR), top >> 2)

    @property
    def raw_cfg(self) -> int:
        return encode_cfg(self.cfg)


@dataclass(frozen=True)
class RegionBounds:
    """Inclusive byte bounds of a matching region."""

    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, addr: int) -> bool:
        return self.lo <= addr <= self.hi


@dataclass(frozen=True)
class PmpState:
    """
    Ordered PMP entries plus architecture parameters.

    Index 0 is the highest priority entry. Immutable: use replace_entry to
    derive modified states.
    """

    entries: tuple[PmpEntry, ...] = ()
    paddr_bits: int = DEFAULT_PADDR_BITS

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        check_arch_params(self.paddr_bits, len(self.entries))
        limit = 1 << self.addr_reg_bits
        for i, entry in enumerate(self.entries):
            if not 0 <= entry.addr_reg < limit:
                raise ArchParamError(
                    f"pmpaddr{i} value {entry.addr_reg:#x} exceeds "
                    f"{self.addr_reg_bits} bits"
                )

    @property
    def n_entries(self) -> int:
        return len(self.entries)

    @property
    def addr_reg_bits(self) -> int:
        return self.paddr_bits - 2

    @property
    def max_addr(self) -> int:
        return (1 << self.paddr_bits) - 1

    @cached_property
    def bounds(self) -> tuple[RegionBounds | None, ...]:
        """Region bounds of every entry, decoded once per state."""
        return tuple(_entry_bounds(self, i) for i in range(self.n_entries))

    @classmethod
    def empty(
        cls, paddr_bits: int = DEFAULT_PADDR_BITS, n_entries: int = DEFAULT_ENTRIES
    ) -> "PmpState":
        """All-OFF state."""
        check_arch_params(paddr_bits, n_entries)
        return cls(tuple(PmpEntry() for _ in range(n_entries)), paddr_bits)

    @classmethod
    def from_raw(
        cls,
        cfg_bytes: Sequence[int],
        addr_regs: Sequence[int],
        paddr_bits: int = DEFAULT_PADDR_BITS,
    ) -> "PmpState":
        """Build a state from raw CSR values, one cfg byte per pmpaddr."""
        if len(cfg_bytes) != len(addr_regs):
            raise ArchParamError(
                f"{len(cfg_bytes)} cfg values but {len(addr_regs)} pmpaddr values"
            )
        entries = tuple(
            PmpEntry(decode_cfg(raw), addr) for raw, addr in zip(cfg_bytes, addr_regs)
        )
        return cls(entries, paddr_bits)

    def entry(self, i: int) -> PmpEntry:
        if not 0 <= i < self.n_entries:
            raise EntryIndexError(f"Entry index {i} out of range 0..{self.n_entries - 1}")
        return self.entries[i]

    def replace_entry(self, i: int, entry: PmpEntry) -> "PmpState":
        self.entry(i)
        entries = list(self.entries)
        entries[i] = entry
        return PmpState(tuple(entries), self.paddr_bits)

    def drop_entry(self, i: int) -> "PmpState":
        self.entry(i)
        return PmpState(self.entries[:i] + self.entries[i + 1 :], self.paddr_bits)

    def pmpcfg_csrs(self, xlen: int = 32) -> dict[str, int]:
        """
        Pack cfg bytes into pmpcfgN register words.

        RV32 holds 4 bytes per register (pmpcfg0..3); RV64 holds 8 and only uses
        even register numbers.

        Args:
            xlen: 32 or 64

        Returns:
            Mapping from CSR name to register value
        """
        if xlen not in (32, 64):
            raise ArchParamError(f"xlen must be 32 or 64, got {xlen}")
        per_reg = xlen // 8
        csrs: dict[str, int] = {}
        for i, entry in enumerate(self.entries):
            reg = (i // per_reg) * (per_reg // 4)
            name = f"pmpcfg{reg}"
            csrs[name] = csrs.get(name, 0) | (entry.raw_cfg << (8 * (i % per_reg)))
        return csrs


def check_arch_params(paddr_bits: int, n_entries: int) -> None:
    if not MIN_PADDR_BITS <= paddr_bits <= MAX_PADDR_BITS:
        raise ArchParamError(
            f"paddr_bits must be in {MIN_PADDR_BITS}..{MAX_PADDR_BITS}, got {paddr_bits}"
        )
    if not 0 <= n_entries <= MAX_ENTRIES:
        raise ArchParamError(f"n_entries must be in 0..{MAX_ENTRIES}, got {n_entries}")


@dataclass(frozen=True)
class AccessRequest:
    """A memory access presented to the checker."""

    addr: int
    size_exp: int = 0
    prv: Privilege = Privilege.U

    def __post_init__(self):
        if not 0 <= self.size_exp <= 3:
            raise ArchParamError(f"size_exp must be in 0..3, got {self.size_exp}")
        if self.addr < 0:
            raise ArchParamError(f"Negative address: {self.addr}")

    @property
    def size(self) -> int:
        return 1 << self.size_exp

    @property
    def last_byte(self) -> int:
        return self.addr + self.size - 1


@dataclass(frozen=True)
class Permissions:
    """Checker outputs O_r, O_w, O_x."""

    r: bool = False
    w: bool = False
    x: bool = False

    @classmethod
    def all(cls, value: bool = True) -> "Permissions":
        return cls(value, value, value)

    @classmethod
    def from_bits(cls, bits: int) -> "Permissions":
        return cls(bool(bits & 1), bool(bits & 2), bool(bits & 4))

    def to_bits(self) -> int:
        return int(self.r) | int(self.w) << 1 | int(self.x) << 2

    def allows(self, kind: str) -> bool:
        return {"r": self.r, "w": self.w, "x": self.x}[kind]

    def any(self) -> bool:
        return self.r or self.w or self.x

    def __str__(self) -> str:
        return ("r" if self.r else "-") + ("w" if self.w else "-") + ("x" if self.x else "-")


def trailing_ones(value: int) -> int:
    return ((value ^ (value + 1)).bit_length()) - 1


def region_bounds(state: PmpState, i: int) -> RegionBounds | None:
    """
    Inclusive byte range covered by entry i.

    Args:
        state: PMP state
        i: Entry index

    Returns:
        Inclusive bounds, or None for an entry that never matches (OFF, or a
        TOR entry whose top is not above its base)
    """
    state.entry(i)
    return state.bounds[i]


def _entry_bounds(state: PmpState, i: int) -> RegionBounds | None:
    entry = state.entries[i]
    mode = entry.cfg.mode
    if mode is AddrMode.OFF:
        return None
    if mode is AddrMode.NA4:
        lo = entry.addr_reg << 2
        return RegionBounds(lo, lo + 3)
    if mode is AddrMode.NAPOT:
        k = trailing_ones(entry.addr_reg)
        lo = (entry.addr_reg & ~((1 << (k + 1)) - 1)) << 2
        # all-ones pmpaddr encodes a region twice the address space
        hi = min(lo + (1 << (k + 3)) - 1, state.max_addr)
        return RegionBounds(lo, hi)
    lo = 0 if i == 0 else state.entries[i - 1].addr_reg << 2
    hi = (entry.addr_reg << 2) - 1
    if hi < lo:
        return None
    return RegionBounds(lo, hi)


def region_contains(state: PmpState, i: int, addr: int) -> bool:
    """Whether addr lies within the region of entry i."""
    bounds = region_bounds(state, i)
    return bounds is not None and addr in bounds


def access_aligned(state: PmpState, i: int, addr: int, size_exp: int) -> bool:
    """a(addr, i): every byte of the access lies within region i."""
    bounds = region_bounds(state, i)
    if bounds is None:
        return False
    return bounds.lo <= addr and addr + (1 << size_exp) - 1 <= bounds.hi


def highest_priority_match(state: PmpState, addr: int) -> int | None:
    """Least entry index whose region contains addr, or None."""
    for i in range(state.n_entries):
        if region_contains(state, i, addr):
            return i
    return None


def matching_entries(state: PmpState, addr: int) -> list[int]:
    return [i for i in range(state.n_entries) if region_contains(state, i, addr)]


def expected_permissions(
    state: PmpState, i: int, req: AccessRequest
) -> Permissions:
    """Outputs dictated by the low or high privilege rule for entry i."""
    cfg = state.entries[i].cfg
    aligned = access_aligned(state, i, req.addr, req.size_exp)
    if req.prv.is_high:
        return Permissions(
            (not cfg.l or cfg.r) and aligned,
            (not cfg.l or cfg.w) and aligned,
            (not cfg.l or cfg.x) and aligned,
        )
    return Permissions(cfg.r and aligned, cfg.w and aligned, cfg.x and aligned)


def check_access_spec(state: PmpState, req: AccessRequest) -> Permissions:
    """
    Evaluate the checker by priority scan.

    No match yields the privilege default (full for M, none otherwise);
    otherwise the highest priority match decides, gated by access alignment.

    Args:
        state: PMP state
        req: Access to check; req.addr must fit in state.paddr_bits

    Returns:
        Granted permissions
    """
    if req.addr > state.max_addr:
        raise ArchParamError(
            f"Address {req.addr:#x} exceeds {state.paddr_bits}-bit physical space"
        )
    i = highest_priority_match(state, req.addr)
    if i is None:
        return Permissions.all(req.prv.is_high)
    return expected_permissions(state, i, req)


def describe_entries(state: PmpState) -> Iterable[dict]:
    """Per-entry summary rows for display."""
    for i, entry in enumerate(state.entries):
        bounds = region_bounds(state, i)
        yield {
            "index": i,
            "cfg": entry.raw_cfg,
            "addr_reg": entry.addr_reg,
            "mode": entry.cfg.mode.name,
            "lo": None if bounds is None else bounds.lo,
            "hi": None if bounds is None else bounds.hi,
            "perms": str(Permissions(entry.cfg.r, entry.cfg.w, entry.cfg.x)),
            "locked": entry.cfg.l,
        }
