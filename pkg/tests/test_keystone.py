"""Tests for the enclave scenario."""

from dataclasses import replace

import pytest
from loguru import logger

from pmpcheck.keystone import (
    OS,
    SM,
    Actor,
    InvalidateMode,
    LayoutError,
    MemoryLayout,
    NoFreeEntryError,
    ProbeConfig,
    Region,
    RegionOverlapError,
    ScenarioError,
    UnknownEnclaveError,
    WrongActorError,
    boot,
    check_isolation,
    create_enclave,
    destroy_enclave,
    enter_enclave,
    exit_enclave,
    probe_addresses,
    random_walk,
    structural_problems,
    sweep_isolation,
)
from pmpcheck.pmp import (
    AccessRequest,
    AddrMode,
    PmpCfg,
    PmpEntry,
    Permissions,
    Privilege,
    check_access_spec,
)

PROBE = ProbeConfig(samples_per_region=8)


@pytest.fixture
def booted():
    layout = MemoryLayout(Region(0x0, 0x200), 0x1000)
    return boot(layout, n_entries=4, paddr_bits=16)


@pytest.fixture
def quiet():
    logger.disable("pmpcheck")
    yield
    logger.enable("pmpcheck")


def perms(s, addr, prv, size_exp=0):
    return check_access_spec(s.pmp, AccessRequest(addr, size_exp, prv))


def test_boot_layout(booted):
    """Test that boot seals the SM region and hands the OS all of memory."""
    sm, os_entry = booted.pmp.entries[0], booted.pmp.entries[3]
    assert sm == PmpEntry.napot(0x0, 0x200, PmpCfg())
    assert os_entry == PmpEntry.napot(0x0, 0x1000, PmpCfg(r=True, w=True, x=True))
    assert not sm.cfg.l
    assert booted.running == OS
    assert booted.free_entries() == [1, 2]
    assert check_isolation(booted, PROBE) == []


def test_sm_keeps_full_access(booted):
    """Test that M mode reaches SM memory while S mode does not."""
    assert perms(booted, 0x10, Privilege.M) == Permissions.all(True)
    assert perms(booted, 0x10, Privilege.S) == Permissions.all(False)
    assert perms(booted, 0x800, Privilege.S) == Permissions.all(True)


@pytest.mark.parametrize(
    "layout,n_entries",
    [
        (MemoryLayout(Region(0x0, 0x200), 0x1000), 1),
        (MemoryLayout(Region(0x100, 0x200), 0x1000), 4),
        (MemoryLayout(Region(0x0, 0x300), 0x1000), 4),
        (MemoryLayout(Region(0x0, 0x200), 0x1800), 4),
        (MemoryLayout(Region(0x0, 0x200), 0x1000, {1: Region(0x400, 0x100)}), 4),
    ],
)
def test_boot_rejects_bad_layouts(layout, n_entries):
    """Test boot with unencodable layouts or too few entries."""
    with pytest.raises(LayoutError):
        boot(layout, n_entries=n_entries, paddr_bits=16)


def test_create_seals_region(booted):
    """Test that a new enclave region is sealed from the OS."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    assert s.entry_of(1) == 1
    assert s.pmp.entries[1] == PmpEntry.napot(0x400, 0x100, PmpCfg())
    assert s.live_enclaves == {1}
    assert perms(s, 0x480, Privilege.S) == Permissions.all(False)
    assert perms(s, 0x500, Privilege.S) == Permissions.all(True)
    assert check_isolation(s, PROBE) == []


def test_create_errors(booted):
    """Test enclave creation failures."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    with pytest.raises(ScenarioError):
        create_enclave(s, 1, Region(0x800, 0x100))
    with pytest.raises(RegionOverlapError):
        create_enclave(s, 2, Region(0x400, 0x200))
    with pytest.raises(RegionOverlapError):
        create_enclave(s, 2, Region(0x100, 0x100))
    with pytest.raises(LayoutError):
        create_enclave(s, 2, Region(0x810, 0x100))
    s = create_enclave(s, 2, Region(0x800, 0x100))
    with pytest.raises(NoFreeEntryError):
        create_enclave(s, 3, Region(0xC00, 0x100))


def test_enter_and_exit(booted):
    """Test a context switch into an enclave and back."""
    created = create_enclave(booted, 1, Region(0x400, 0x100))
    inside = enter_enclave(created, 1)
    assert inside.running == Actor.enclave(1)
    assert inside.pmp.entries[1].cfg == PmpCfg(mode=AddrMode.NAPOT, r=True, w=True, x=True)
    assert inside.pmp.entries[3].cfg.mode is AddrMode.OFF
    assert perms(inside, 0x480, Privilege.U) == Permissions.all(True)
    assert perms(inside, 0x800, Privilege.U) == Permissions.all(False)
    assert perms(inside, 0x10, Privilege.U) == Permissions.all(False)
    assert check_isolation(inside, PROBE) == []

    back = exit_enclave(inside)
    assert back.running == OS
    assert back.pmp == created.pmp
    assert back.saved_last is None


def test_zero_perms_invalidation():
    """Test that zero-perms invalidation keeps the OS entry active but empty."""
    layout = MemoryLayout(Region(0x0, 0x200), 0x1000)
    s = boot(layout, n_entries=4, paddr_bits=16, invalidate=InvalidateMode.ZERO_PERMS)
    s = enter_enclave(create_enclave(s, 1, Region(0x400, 0x100)), 1)
    last = s.pmp.entries[3]
    assert last.cfg.mode is AddrMode.NAPOT
    assert not (last.cfg.r or last.cfg.w or last.cfg.x)
    assert check_isolation(s, PROBE) == []


def test_actor_preconditions(booted):
    """Test operations rejected for the running actor."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    with pytest.raises(WrongActorError):
        exit_enclave(s)
    with pytest.raises(UnknownEnclaveError):
        enter_enclave(s, 7)
    inside = enter_enclave(s, 1)
    with pytest.raises(WrongActorError):
        create_enclave(inside, 2, Region(0x800, 0x100))
    with pytest.raises(WrongActorError):
        destroy_enclave(inside, 1)
    with pytest.raises(WrongActorError):
        enter_enclave(inside, 1)


def test_destroy_returns_memory_to_os(booted):
    """Test that destroying an enclave frees its entry and memory."""
    s = destroy_enclave(create_enclave(booted, 1, Region(0x400, 0x100)), 1)
    assert s.pmp.entries[1] == PmpEntry()
    assert s.live_enclaves == frozenset()
    assert s.free_entries() == [1, 2]
    assert perms(s, 0x480, Privilege.S) == Permissions.all(True)
    assert s.owner_of(0x480) == OS
    with pytest.raises(UnknownEnclaveError):
        destroy_enclave(s, 1)


def test_owner_of(booted):
    """Test memory ownership lookup."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    assert s.owner_of(0x0) == SM
    assert s.owner_of(0x4FF) == Actor.enclave(1)
    assert s.owner_of(0x500) == OS


def test_probe_addresses_cover_boundaries(booted):
    """Test that the address grid covers region edges and stays in memory."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    addrs = probe_addresses(s, ProbeConfig(samples_per_region=0))
    assert {0x3FF, 0x400, 0x401, 0x4FF, 0x500, 0x1FF, 0x200} <= set(addrs)
    assert addrs == sorted(addrs)
    assert all(0 <= a < 0x1000 for a in addrs)


def test_broken_enclave_entry_is_detected(booted):
    """Test that an enclave entry readable by the OS is reported."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    leaky = replace(s.pmp.entries[1], cfg=PmpCfg(mode=AddrMode.NAPOT, r=True))
    broken = replace(s, pmp=s.pmp.replace_entry(1, leaky))
    violations = check_isolation(broken, PROBE)
    assert violations
    assert all(v.protected_owner == Actor.enclave(1) for v in violations)
    assert all(v.actor == OS and v.perms.r for v in violations)
    assert [(v.addr, v.size_exp) for v in violations] == sorted(
        (v.addr, v.size_exp) for v in violations
    )


def test_shadowed_enclave_entry_is_detected(booted):
    """Test that a higher-priority grant over enclave memory is reported."""
    s = create_enclave(booted, 2, Region(0x400, 0x100))
    s = replace(s, entry_allocation={2: s.entry_allocation[1], 0: SM, 3: OS})
    moved = s.pmp.replace_entry(2, s.pmp.entries[1])
    moved = moved.replace_entry(1, PmpEntry.napot(0x400, 0x100, PmpCfg(r=True, w=True, x=True)))
    violations = check_isolation(replace(s, pmp=moved), PROBE)
    assert {v.addr for v in violations} >= {0x400, 0x4FF}


def test_enclave_entry_shadowed_by_deny_stays_isolated(booted):
    """Test that a higher-priority deny over enclave memory yields no violations."""
    s = create_enclave(booted, 2, Region(0x400, 0x100))
    s = replace(s, entry_allocation={2: s.entry_allocation[1], 0: SM, 3: OS})
    moved = s.pmp.replace_entry(2, s.pmp.entries[1])
    moved = moved.replace_entry(1, PmpEntry.napot(0x400, 0x100, PmpCfg()))
    shadowed = replace(s, pmp=moved)
    assert check_isolation(shadowed, PROBE) == []

    inside = enter_enclave(shadowed, 2)
    assert inside.pmp.entries[2].cfg.r
    assert perms(inside, 0x480, Privilege.U) == Permissions.all(False)
    assert check_isolation(inside, PROBE) == []


def test_sweep_matches_per_state_checks(booted):
    """Test that a batched sweep returns the per-state isolation results."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    leaky = replace(s.pmp.entries[1], cfg=PmpCfg(mode=AddrMode.NAPOT, r=True))
    broken = replace(s, pmp=s.pmp.replace_entry(1, leaky))
    states = [booted, s, broken, enter_enclave(s, 1), broken]
    assert sweep_isolation(states, PROBE) == [check_isolation(x, PROBE) for x in states]
    assert sweep_isolation([], PROBE) == []


def test_check_isolation_skips_high_privilege(booted):
    """Test that the SM is never checked for isolation."""
    running_sm = replace(booted, running=SM, pmp=booted.pmp.replace_entry(3, PmpEntry()))
    assert check_isolation(running_sm, PROBE) == []
    assert sweep_isolation([running_sm], PROBE) == [[]]


def test_structural_problems(booted):
    """Test bookkeeping invariant reporting."""
    s = create_enclave(booted, 1, Region(0x400, 0x100))
    entry0 = booted.pmp.entries[0]
    assert structural_problems(s, entry0) == []
    bad0 = PmpEntry.napot(0x0, 0x200, PmpCfg(r=True))
    broken = replace(s, pmp=s.pmp.replace_entry(0, bad0))
    problems = structural_problems(broken, entry0)
    assert "entry 0 changed since boot" in problems
    assert "entry 0 grants permissions" in problems
    orphan = replace(s, live_enclaves=frozenset({1, 2}))
    assert "live enclaves and entry allocation disagree" in structural_problems(orphan)


@pytest.mark.parametrize("invalidate", list(InvalidateMode))
@pytest.mark.parametrize("seed", range(8))
def test_random_walks_keep_isolation(seed, invalidate):
    """Test isolation and bookkeeping after every step of a random walk."""
    steps = random_walk(seed, length=40, invalidate=invalidate)
    assert steps[0][0].startswith("boot 0x1000 0x0 0x100")
    entry0 = steps[0][1].pmp.entries[0]
    for cmd, s in steps:
        assert check_isolation(s, PROBE) == [], cmd
        assert structural_problems(s, entry0) == [], cmd


@pytest.mark.slow
def test_ten_thousand_random_walks_keep_isolation(quiet):
    """Test that 10^4 random walks of length 50 never break isolation."""
    modes = list(InvalidateMode)
    for seed in range(10_000):
        steps = random_walk(seed, length=50, invalidate=modes[seed % len(modes)])
        results = sweep_isolation([s for _, s in steps], PROBE)
        assert not any(results), (seed, [cmd for cmd, _ in steps])


def test_random_walk_is_reproducible():
    """Test that a walk depends only on its seed."""
    first = [cmd for cmd, _ in random_walk(3, length=30)]
    assert first == [cmd for cmd, _ in random_walk(3, length=30)]
