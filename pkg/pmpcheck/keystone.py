"""
Keystone-style enclave scenario on top of the PMP checker.

The security monitor (SM) protects itself with entry 0, gives the OS all of
memory through the last entry, and seals each enclave with one entry in
between. Context switches flip the enclave entry's permissions and invalidate
the OS entry. Every operation returns a new ScenarioState.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from loguru import logger

from .pmp import (
    DEFAULT_ENTRIES,
    DEFAULT_PADDR_BITS,
    AddrMode,
    PmpCfg,
    PmpEntry,
    PmpState,
    Permissions,
    Privilege,
)
from .validation import validate_layout
from .vector import EntryArrays, check_spec, int_dtype


class ScenarioError(Exception):
    """Base class for scenario precondition failures."""


class LayoutError(ScenarioError):
    """Region not encodable, outside memory, or too few entries."""


class NoFreeEntryError(ScenarioError):
    pass


class RegionOverlapError(ScenarioError):
    pass


class UnknownEnclaveError(ScenarioError):
    pass


class WrongActorError(ScenarioError):
    """Operation not allowed for the currently running actor."""


@dataclass(frozen=True)
class Region:
    """Naturally aligned power-of-two extent [base, base + size)."""

    base: int
    size: int

    @property
    def end(self) -> int:
        return self.base + self.size

    @property
    def last(self) -> int:
        return self.end - 1

    def overlaps(self, other: "Region") -> bool:
        return self.base < other.end and other.base < self.end

    def __contains__(self, addr: int) -> bool:
        return self.base <= addr < self.end

    def __str__(self) -> str:
        return f"[{self.base:#x}, {self.last:#x}]"


@dataclass(frozen=True)
class MemoryLayout:
    sm_region: Region
    total_memory: int
    enclave_regions: Mapping[int, Region] = field(default_factory=dict)

    def with_enclave(self, eid: int, region: Region) -> "MemoryLayout":
        return replace(self, enclave_regions={**self.enclave_regions, eid: region})

    def without_enclave(self, eid: int) -> "MemoryLayout":
        regions = {k: v for k, v in self.enclave_regions.items() if k != eid}
        return replace(self, enclave_regions=regions)


class ActorKind(Enum):
    SM = "SM"
    OS = "OS"
    ENCLAVE = "enclave"


@dataclass(frozen=True)
class Actor:
    kind: ActorKind
    enclave_id: int | None = None

    @classmethod
    def enclave(cls, eid: int) -> "Actor":
        return cls(ActorKind.ENCLAVE, eid)

    @property
    def privilege(self) -> Privilege:
        # enclaves run in U or S; both are low, U is used
        if self.kind is ActorKind.SM:
            return Privilege.M
        if self.kind is ActorKind.OS:
            return Privilege.S
        return Privilege.U

    @property
    def is_enclave(self) -> bool:
        return self.kind is ActorKind.ENCLAVE

    def __str__(self) -> str:
        return f"enclave {self.enclave_id}" if self.is_enclave else self.kind.value


SM = Actor(ActorKind.SM)
OS = Actor(ActorKind.OS)


class InvalidateMode(str, Enum):
    """How the OS entry is invalidated while an enclave runs."""

    OFF = "off"
    ZERO_PERMS = "zero"


NO_PERMS = PmpCfg()
ALL_PERMS = PmpCfg(r=True, w=True, x=True)


@dataclass(frozen=True)
class ScenarioState:
    pmp: PmpState
    layout: MemoryLayout
    running: Actor = OS
    live_enclaves: frozenset[int] = frozenset()
    entry_allocation: Mapping[int, Actor] = field(default_factory=dict)
    saved_last: PmpEntry | None = None
    invalidate: InvalidateMode = InvalidateMode.OFF

    @property
    def last_index(self) -> int:
        return self.pmp.n_entries - 1

    def entry_of(self, eid: int) -> int:
        for i, owner in self.entry_allocation.items():
            if owner == Actor.enclave(eid):
                return i
        raise UnknownEnclaveError(f"Enclave {eid} does not exist")

    def free_entries(self) -> list[int]:
        return [i for i in range(1, self.last_index) if i not in self.entry_allocation]

    def owner_of(self, addr: int) -> Actor:
        """Which actor's memory addr belongs to."""
        if addr in self.layout.sm_region:
            return SM
        for eid, region in self.layout.enclave_regions.items():
            if addr in region:
                return Actor.enclave(eid)
        return OS


def boot(
    layout: MemoryLayout,
    n_entries: int = DEFAULT_ENTRIES,
    paddr_bits: int = DEFAULT_PADDR_BITS,
    invalidate: InvalidateMode = InvalidateMode.OFF,
) -> ScenarioState:
    """
    Bring up the SM: entry 0 seals the SM region, the last entry gives the OS
    all of memory.

    Args:
        layout: Memory layout; enclaves are added later with create_enclave
        n_entries: PMP entries, at least 2
        paddr_bits: Physical address width
        invalidate: OS entry invalidation used by enter_enclave

    Returns:
        State with the OS running
    """
    if n_entries < 2:
        raise LayoutError(f"Need at least 2 PMP entries, got {n_entries}")
    if layout.enclave_regions:
        raise LayoutError("Boot layout must not contain enclaves")
    result = validate_layout(layout, paddr_bits)
    if not result.valid:
        raise LayoutError(result.message)

    pmp = PmpState.empty(paddr_bits, n_entries)
    sm = layout.sm_region
    pmp = pmp.replace_entry(0, PmpEntry.napot(sm.base, sm.size, NO_PERMS))
    pmp = pmp.replace_entry(n_entries - 1, PmpEntry.napot(0, layout.total_memory, ALL_PERMS))
    logger.debug(
        "Boot: SM {}, memory {:#x}, {} entries", sm, layout.total_memory, n_entries
    )
    return ScenarioState(
        pmp=pmp,
        layout=layout,
        entry_allocation={0: SM, n_entries - 1: OS},
        invalidate=invalidate,
    )


def _require_os(s: ScenarioState, action: str) -> None:
    if s.running != OS:
        raise WrongActorError(f"Cannot {action} while {s.running} is running")


def create_enclave(s: ScenarioState, eid: int, region: Region) -> ScenarioState:
    """Seal region for a new enclave in the first free entry, with no permissions."""
    _require_os(s, f"create enclave {eid}")
    if eid in s.live_enclaves:
        raise ScenarioError(f"Enclave {eid} already exists")
    others = [("SM", s.layout.sm_region)] + [
        (f"enclave {k}", r) for k, r in s.layout.enclave_regions.items()
    ]
    for name, other in others:
        if region.overlaps(other):
            raise RegionOverlapError(f"Region {region} overlaps {name} region {other}")
    layout = s.layout.with_enclave(eid, region)
    result = validate_layout(layout, s.pmp.paddr_bits)
    if not result.valid:
        raise LayoutError(result.message)

    free = s.free_entries()
    if not free:
        raise NoFreeEntryError(f"No free PMP entry for enclave {eid}")
    i = free[0]
    pmp = s.pmp.replace_entry(i, PmpEntry.napot(region.base, region.size, NO_PERMS))
    logger.debug("Create enclave {} at {} in entry {}", eid, region, i)
    return replace(
        s,
        pmp=pmp,
        layout=layout,
        live_enclaves=s.live_enclaves | {eid},
        entry_allocation={**s.entry_allocation, i: Actor.enclave(eid)},
    )


def _set_perms(pmp: PmpState, i: int, cfg: PmpCfg) -> PmpState:
    entry = pmp.entries[i]
    return pmp.replace_entry(i, replace(entry, cfg=entry.cfg.with_perms(cfg.r, cfg.w, cfg.x)))


def enter_enclave(s: ScenarioState, eid: int) -> ScenarioState:
    """Switch from the OS to enclave eid."""
    i = s.entry_of(eid)
    _require_os(s, f"enter enclave {eid}")
    pmp = _set_perms(s.pmp, i, ALL_PERMS)
    last = pmp.entries[s.last_index]
    if s.invalidate is InvalidateMode.OFF:
        invalid = replace(last, cfg=replace(last.cfg, mode=AddrMode.OFF))
    else:
        invalid = replace(last, cfg=last.cfg.with_perms(False, False, False))
    pmp = pmp.replace_entry(s.last_index, invalid)
    logger.debug("Enter enclave {}", eid)
    return replace(s, pmp=pmp, running=Actor.enclave(eid), saved_last=last)


def exit_enclave(s: ScenarioState) -> ScenarioState:
    """Switch back from the running enclave to the OS, restoring the OS entry exactly."""
    if not s.running.is_enclave:
        raise WrongActorError(f"Cannot exit: {s.running} is running")
    eid = s.running.enclave_id
    assert eid is not None and s.saved_last is not None
    pmp = _set_perms(s.pmp, s.entry_of(eid), NO_PERMS)
    pmp = pmp.replace_entry(s.last_index, s.saved_last)
    logger.debug("Exit enclave {}", eid)
    return replace(s, pmp=pmp, running=OS, saved_last=None)


def destroy_enclave(s: ScenarioState, eid: int) -> ScenarioState:
    """Free enclave eid's entry; its memory returns to the OS."""
    i = s.entry_of(eid)
    _require_os(s, f"destroy enclave {eid}")
    allocation = {k: v for k, v in s.entry_allocation.items() if k != i}
    logger.debug("Destroy enclave {}, freeing entry {}", eid, i)
    return replace(
        s,
        pmp=s.pmp.replace_entry(i, PmpEntry()),
        layout=s.layout.without_enclave(eid),
        live_enclaves=s.live_enclaves - {eid},
        entry_allocation=allocation,
    )


@dataclass(frozen=True)
class ProbeConfig:
    """Probe grid for check_isolation."""

    boundary_offsets: tuple[int, ...] = (0, 1, 8)
    samples_per_region: int = 64
    seed: int = 0
    size_exps: tuple[int, ...] = (0, 3)


@dataclass(frozen=True)
class IsolationViolation:
    actor: Actor
    addr: int
    size_exp: int
    protected_owner: Actor
    perms: Permissions

    def __str__(self) -> str:
        return (
            f"{self.actor} gets {self.perms} at {self.addr:#x} "
            f"(size {1 << self.size_exp}) in {self.protected_owner} memory"
        )


def _regions(layout: MemoryLayout) -> list[Region]:
    return [layout.sm_region, Region(0, layout.total_memory), *layout.enclave_regions.values()]


@lru_cache(maxsize=4096)
def _probe_grid(regions: tuple[Region, ...], total: int, probe: ProbeConfig) -> np.ndarray:
    addrs: set[int] = set()
    for region in regions:
        for edge in (region.base, region.end):
            for off in probe.boundary_offsets:
                addrs.update((edge - off, edge + off))
    rng = np.random.default_rng(probe.seed)
    for region in regions:
        if probe.samples_per_region:
            samples = rng.integers(
                region.base, region.end, size=probe.samples_per_region, dtype=np.uint64
            )
            addrs.update(int(a) for a in samples)
    return np.array(sorted(a for a in addrs if 0 <= a < total), dtype=object)


def probe_addresses(s: ScenarioState, probe: ProbeConfig) -> list[int]:
    """Region boundaries +/- offsets plus uniform samples per region, sorted."""
    regions = tuple(_regions(s.layout))
    return _probe_grid(regions, s.layout.total_memory, probe).tolist()


def _inside(addrs: np.ndarray, region: Region) -> np.ndarray:
    return (addrs >= region.base) & (addrs < region.end)


def _protected(s: ScenarioState, addrs: np.ndarray) -> np.ndarray:
    """Addresses the running actor must not reach."""
    actor, layout = s.running, s.layout
    if actor.is_enclave:
        assert actor.enclave_id is not None
        return ~_inside(addrs, layout.enclave_regions[actor.enclave_id])
    mask = _inside(addrs, layout.sm_region)
    for region in layout.enclave_regions.values():
        mask |= _inside(addrs, region)
    return mask


def _isolation_rows(s: ScenarioState, probe: ProbeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Protected accesses of the running actor: address-major, then size_exp."""
    grid = _probe_grid(tuple(_regions(s.layout)), s.layout.total_memory, probe)
    addrs = grid[_protected(s, grid)]
    sizes = np.array(probe.size_exps, dtype=np.int64)
    return np.repeat(addrs, len(sizes)), np.tile(sizes, len(addrs))


def sweep_isolation(
    states: Sequence[ScenarioState], probe: ProbeConfig | None = None
) -> list[list[IsolationViolation]]:
    """
    check_isolation over many states, evaluated as one batch.

    Returns:
        One violation list per state, in the order given
    """
    probe = probe or ProbeConfig()
    results: list[list[IsolationViolation]] = [[] for _ in states]
    picked = [k for k, s in enumerate(states) if not s.running.privilege.is_high]
    if not picked:
        return results

    rows = [_isolation_rows(states[k], probe) for k in picked]
    counts = [len(addrs) for addrs, _ in rows]
    entries = [EntryArrays.from_state(states[k].pmp) for k in picked]
    if len({(ea.paddr_bits, ea.n_entries) for ea in entries}) > 1:
        return [check_isolation(s, probe) for s in states]

    dtype = int_dtype(entries[0].paddr_bits)
    ea = EntryArrays(
        np.repeat(np.stack([e.cfg for e in entries]), counts, axis=0),
        np.repeat(np.stack([e.addr_reg for e in entries]), counts, axis=0),
        entries[0].paddr_bits,
    )
    addrs = np.concatenate([a for a, _ in rows]).astype(dtype)
    sizes = np.concatenate([z for _, z in rows])
    perms = check_spec(ea, addrs, sizes, np.zeros(len(addrs), dtype=bool))

    owner = np.repeat(picked, counts).tolist()
    for row in np.flatnonzero(perms).tolist():
        s = states[owner[row]]
        addr = int(addrs[row])
        results[owner[row]].append(
            IsolationViolation(
                s.running,
                addr,
                int(sizes[row]),
                s.owner_of(addr),
                Permissions.from_bits(int(perms[row])),
            )
        )
    for k in picked:
        if results[k]:
            logger.warning(
                "{} isolation violation(s) while {} runs", len(results[k]), states[k].running
            )
    return results


def check_isolation(
    s: ScenarioState, probe: ProbeConfig | None = None
) -> list[IsolationViolation]:
    """
    Probe memory as the running low-privilege actor.

    The OS must get nothing in SM or enclave memory; an enclave must get
    nothing outside its own region. Ownership is judged on the access base
    address.

    Returns:
        Violations in address order; empty when isolation holds
    """
    probe = probe or ProbeConfig()
    if s.running.privilege.is_high:
        return []
    addrs, sizes = _isolation_rows(s, probe)
    ea = EntryArrays.from_state(s.pmp)
    perms = check_spec(
        ea,
        addrs.astype(int_dtype(ea.paddr_bits)),
        sizes,
        np.zeros(len(addrs), dtype=bool),
    )
    violations = [
        IsolationViolation(
            s.running,
            int(addrs[row]),
            int(sizes[row]),
            s.owner_of(int(addrs[row])),
            Permissions.from_bits(int(perms[row])),
        )
        for row in np.flatnonzero(perms).tolist()
    ]
    if violations:
        logger.warning(
            "{} isolation violation(s) while {} runs", len(violations), s.running
        )
    return violations


def structural_problems(s: ScenarioState, boot_entry0: PmpEntry | None = None) -> list[str]:
    """Bookkeeping invariants of a state: entry 0, enclave ownership, running actor."""
    problems = []
    entry0 = s.pmp.entries[0]
    if boot_entry0 is not None and entry0 != boot_entry0:
        problems.append("entry 0 changed since boot")
    if entry0.cfg.r or entry0.cfg.w or entry0.cfg.x:
        problems.append("entry 0 grants permissions")
    owners = [o.enclave_id for o in s.entry_allocation.values() if o.is_enclave]
    if sorted(owners) != sorted(s.live_enclaves):
        problems.append("live enclaves and entry allocation disagree")
    if s.running.is_enclave and s.running.enclave_id not in s.live_enclaves:
        problems.append(f"running {s.running} is not live")
    return problems


def random_walk(
    seed: int,
    length: int = 50,
    total_memory: int = 1 << 12,
    n_entries: int = 6,
    paddr_bits: int = 16,
    invalidate: InvalidateMode = InvalidateMode.OFF,
) -> list[tuple[str, ScenarioState]]:
    """
    Drive a random sequence of valid operations from boot.

    Enclave regions are drawn from a fixed grid of sixteenth-of-memory slots,
    skipping slots that overlap SM memory or a live enclave.

    Returns:
        (command, state after command) pairs in script syntax, starting with boot
    """
    rng = np.random.default_rng(seed)
    slot = total_memory // 16
    sm_region = Region(0, slot)
    boot_cmd = (
        f"boot {total_memory:#x} {sm_region.base:#x} {sm_region.size:#x} "
        f"entries={n_entries} paddr_bits={paddr_bits} invalidate={invalidate.value}"
    )
    s = boot(MemoryLayout(sm_region, total_memory), n_entries, paddr_bits, invalidate)
    steps = [(boot_cmd, s)]
    next_id = 1

    for _ in range(length):
        options: list[tuple[str, object]] = []
        if s.running.is_enclave:
            options.append(("exit", None))
        else:
            taken = [s.layout.sm_region, *s.layout.enclave_regions.values()]
            slots = [
                Region(k * slot, slot)
                for k in range(16)
                if not any(Region(k * slot, slot).overlaps(t) for t in taken)
            ]
            if slots and s.free_entries():
                options.append(("create", slots[int(rng.integers(len(slots)))]))
            live = sorted(s.live_enclaves)
            if live:
                options.append(("enter", live[int(rng.integers(len(live)))]))
                options.append(("destroy", live[int(rng.integers(len(live)))]))
        if not options:
            break

        op, arg = options[int(rng.integers(len(options)))]
        if op == "create":
            assert isinstance(arg, Region)
            cmd = f"create {next_id} {arg.base:#x} {arg.size:#x}"
            s = create_enclave(s, next_id, arg)
            next_id += 1
        elif op == "enter":
            cmd = f"enter {arg}"
            s = enter_enclave(s, int(arg))  # type: ignore[arg-type]
        elif op == "destroy":
            cmd = f"destroy {arg}"
            s = destroy_enclave(s, int(arg))  # type: ignore[arg-type]
        else:
            cmd = "exit"
            s = exit_enclave(s)
        steps.append((cmd, s))
    return steps
