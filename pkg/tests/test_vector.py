"""Tests for vectorized checker and property evaluation."""

import numpy as np
import pytest

from pmpcheck.campaign import random_entries
from pmpcheck.mutants import CHECKERS
from pmpcheck.pmp import AccessRequest, PmpState, Privilege, region_bounds
from pmpcheck.props import evaluate_case
from pmpcheck.vector import (
    BATCH_CHECKERS,
    OUTCOMES,
    EntryArrays,
    evaluate_cases,
    int_dtype,
)
from pmpcheck.vector import region_bounds as batch_bounds

PRIVILEGES = list(Privilege)


def random_batch(paddr_bits, n_entries, count, seed=0):
    rng = np.random.default_rng(seed)
    cfg, regs = random_entries(rng, paddr_bits, (count, n_entries))
    dtype = int_dtype(paddr_bits)
    high_bits = rng.integers(0, 1 << min(paddr_bits, 62), size=count, dtype=np.int64)
    addr = high_bits.astype(dtype)
    if dtype is object:
        addr = (addr << (paddr_bits - 62)) | rng.integers(0, 1 << (paddr_bits - 62), size=count)
    # half the accesses start at a region edge
    edge = (regs[:, 0] << 2) if n_entries else addr
    addr = np.where(rng.random(count) < 0.5, addr, edge)
    size_exp = rng.integers(0, 4, size=count)
    prv = [PRIVILEGES[k] for k in rng.integers(0, 3, size=count).tolist()]
    return EntryArrays(cfg, regs, paddr_bits), addr, size_exp, prv


def rows(ea, addr, size_exp, prv):
    for k in range(len(addr)):
        state = PmpState.from_raw(ea.cfg[k].tolist(), ea.addr_reg[k].tolist(), ea.paddr_bits)
        yield state, AccessRequest(int(addr[k]), int(size_exp[k]), prv[k])


@pytest.mark.parametrize("paddr_bits,n_entries", [(3, 1), (8, 2), (32, 4), (64, 3), (16, 0)])
@pytest.mark.parametrize("name", sorted(BATCH_CHECKERS))
def test_batch_checkers_match_scalar_checkers(name, paddr_bits, n_entries):
    """Test every batch checker against its case-by-case counterpart."""
    ea, addr, size_exp, prv = random_batch(paddr_bits, n_entries, 400, seed=paddr_bits)
    high = np.array([p.is_high for p in prv])
    got = BATCH_CHECKERS[name](ea, addr, size_exp, high)
    expected = [CHECKERS[name](s, r).to_bits() for s, r in rows(ea, addr, size_exp, prv)]
    assert [int(v) for v in got] == expected


@pytest.mark.parametrize("paddr_bits,n_entries", [(4, 2), (32, 8), (64, 2)])
def test_batch_bounds_match_scalar_bounds(paddr_bits, n_entries):
    """Test batch region decoding against the reference model."""
    ea, addr, size_exp, prv = random_batch(paddr_bits, n_entries, 200, seed=1)
    b = batch_bounds(ea)
    for k, (state, _) in enumerate(rows(ea, addr, size_exp, prv)):
        for i in range(n_entries):
            bounds = region_bounds(state, i)
            assert bool(b.valid[k, i]) == (bounds is not None)
            if bounds is not None:
                assert (int(b.lo[k, i]), int(b.hi[k, i])) == (bounds.lo, bounds.hi)


@pytest.mark.parametrize("name", ["spec", "priority_reversed", "lock_ignored"])
def test_batch_outcomes_match_scalar_outcomes(name):
    """Test batch property evaluation against case-by-case evaluation."""
    ea, addr, size_exp, prv = random_batch(8, 3, 600, seed=4)
    high = np.array([p.is_high for p in prv])
    out = BATCH_CHECKERS[name](ea, addr, size_exp, high)
    codes = evaluate_cases(ea, addr, size_exp, high, out)
    for k, (state, req) in enumerate(rows(ea, addr, size_exp, prv)):
        outcomes = evaluate_case(state, req, CHECKERS[name](state, req))
        assert [OUTCOMES[int(c)] for c in codes[k]] == list(outcomes.values())


def test_one_state_against_many_requests():
    """Test broadcasting one state's entries against a batch of requests."""
    state = PmpState.from_raw([0x19, 0x1F], [0x7, 0x1F], 8)
    ea = EntryArrays.from_state(state)
    addr = np.arange(256)
    size_exp = np.full(256, 2)
    high = np.zeros(256, dtype=bool)
    got = BATCH_CHECKERS["spec"](ea, addr, size_exp, high)
    expected = [
        CHECKERS["spec"](state, AccessRequest(a, 2, Privilege.U)).to_bits() for a in range(256)
    ]
    assert got.tolist() == expected
