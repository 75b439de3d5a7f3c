"""
Verification campaigns over the checker input space.

A campaign enumerates (exhaustive), samples by index (sampled) or draws at
random (randomized) PMP states and access requests, runs a checker on each
case and evaluates all five properties. Work is cut into fixed-size shards
seeded from (seed, shard index), so results do not depend on how many
workers run them.

Each shard is generated as a CaseBatch of numpy arrays. Named checkers are
evaluated on the whole batch at once; checker callables are run case by case
on the same batch.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator

import numpy as np
from loguru import logger

from .mutants import Checker, get_checker
from .pmp import (
    AccessRequest,
    Permissions,
    PmpState,
    Privilege,
    check_access_spec,
    meaningful_cfg_bytes,
    region_bounds,
)
from .props import CaseOutcome, PropertyId, eval_property, evaluate_case
from .report import CampaignReport, CounterExample, PropertyTally
from .validation import validate_campaign
from .vector import (
    BATCH_CHECKERS,
    FAIL,
    HIGH_CODE,
    PASS,
    VACUOUS,
    EntryArrays,
    evaluate_cases,
    int_dtype,
)
from .vector import region_bounds as batch_bounds

CFG_BYTES = meaningful_cfg_bytes()
CFG_BYTE_ARRAY = np.array(CFG_BYTES, dtype=np.int64)
EXHAUSTIVE_PRIVILEGES = (Privilege.U, Privilege.M)
ALL_PRIVILEGES = (Privilege.U, Privilege.S, Privilege.M)
REQUESTS_PER_STATE = 16
BOUNDARY_SPAN = 8


class CampaignError(ValueError):
    """Base class for campaign errors."""


class IntractableCampaignError(CampaignError):
    """Exhaustive enumeration requested beyond the tractability guard."""


class CampaignMode(str, Enum):
    EXHAUSTIVE = "exhaustive"
    SAMPLED = "sampled"
    RANDOMIZED = "randomized"


@dataclass(frozen=True)
class CampaignConfig:
    """Parameters of a verification campaign."""

    paddr_bits: int = 32
    n_entries: int = 8
    mode: CampaignMode = CampaignMode.RANDOMIZED
    trials: int = 10_000
    seed: int = 0
    cap: int | None = None
    workers: int = 1
    shard_size: int = 10_000
    max_violations: int = 50
    fail_fast: bool = False
    boundary_bias: float = 0.25

    @property
    def entry_choices(self) -> int:
        return len(CFG_BYTES) << (self.paddr_bits - 2)

    @property
    def state_count(self) -> int:
        return self.entry_choices**self.n_entries

    @property
    def cases_per_state(self) -> int:
        return len(EXHAUSTIVE_PRIVILEGES) * 4 * (1 << self.paddr_bits)

    @property
    def space_size(self) -> int:
        """Size of the exhaustive cross-product."""
        return self.state_count * self.cases_per_state

    @property
    def effective_mode(self) -> CampaignMode:
        if (
            self.mode is CampaignMode.EXHAUSTIVE
            and self.cap is not None
            and self.cap < self.space_size
        ):
            return CampaignMode.SAMPLED
        return self.mode

    @property
    def total_cases(self) -> int:
        mode = self.effective_mode
        if mode is CampaignMode.EXHAUSTIVE:
            return self.space_size
        if mode is CampaignMode.SAMPLED:
            return self.cap if self.cap is not None else self.trials
        return self.trials


@dataclass(frozen=True)
class CaseBatch:
    """
    Cases as parallel arrays; row k is one (state, request) pair.

    cfg and addr_reg have shape (m, n_entries), the request arrays shape (m,).
    prv holds privilege encodings.
    """

    cfg: np.ndarray
    addr_reg: np.ndarray
    addr: np.ndarray
    size_exp: np.ndarray
    prv: np.ndarray
    paddr_bits: int

    def __len__(self) -> int:
        return len(self.addr)

    @property
    def entries(self) -> EntryArrays:
        return EntryArrays(self.cfg, self.addr_reg, self.paddr_bits)

    @property
    def high(self) -> np.ndarray:
        return self.prv == HIGH_CODE

    def head(self, count: int) -> "CaseBatch":
        return CaseBatch(
            self.cfg[:count],
            self.addr_reg[:count],
            self.addr[:count],
            self.size_exp[:count],
            self.prv[:count],
            self.paddr_bits,
        )

    def state(self, k: int) -> PmpState:
        return PmpState.from_raw(
            self.cfg[k].tolist(), self.addr_reg[k].tolist(), self.paddr_bits
        )

    def request(self, k: int) -> AccessRequest:
        return AccessRequest(
            int(self.addr[k]), int(self.size_exp[k]), Privilege(int(self.prv[k]))
        )

    def cases(self) -> Iterator[tuple[PmpState, AccessRequest]]:
        """Rows as model objects; consecutive rows of one state share it."""
        key, state = None, None
        for k in range(len(self)):
            row = (tuple(self.cfg[k].tolist()), tuple(self.addr_reg[k].tolist()))
            if row != key:
                key, state = row, self.state(k)
            assert state is not None
            yield state, self.request(k)


def _states_from_indices(
    cfg: CampaignConfig, index: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Decode mixed-radix state indices; entry 0 is the most significant digit."""
    addr_regs = 1 << (cfg.paddr_bits - 2)
    digits = []
    rest = index
    for _ in range(cfg.n_entries):
        rest, digit = np.divmod(rest, cfg.entry_choices)
        digits.append(digit)
    if digits:
        d = np.stack(digits[::-1], axis=-1)
    else:
        d = np.zeros((len(index), 0), dtype=np.int64)
    return CFG_BYTE_ARRAY[(d // addr_regs).astype(np.int64)], d % addr_regs


def state_from_index(cfg: CampaignConfig, index: int) -> PmpState:
    """The state at position index of the exhaustive enumeration."""
    dtype = np.int64 if cfg.state_count <= np.iinfo(np.int64).max else object
    cfg_bytes, regs = _states_from_indices(cfg, np.array([index], dtype=dtype))
    return PmpState.from_raw(cfg_bytes[0].tolist(), regs[0].tolist(), cfg.paddr_bits)


def _random_bits(
    rng: np.random.Generator, bits: int, shape: int | tuple[int, ...], dtype: type
) -> np.ndarray:
    """Uniform values below 2**bits."""
    if dtype is not object:
        return rng.integers(0, 1 << bits, size=shape, dtype=np.int64)
    low_bits = min(bits, 32)
    high = rng.integers(0, 1 << (bits - low_bits), size=shape, dtype=np.int64)
    low = rng.integers(0, 1 << low_bits, size=shape, dtype=np.int64)
    return (high.astype(object) << low_bits) | low.astype(object)


def random_entries(
    rng: np.random.Generator, paddr_bits: int, shape: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Random cfg bytes and pmpaddr values; about half the pmpaddr values are NAPOT-shaped."""
    dtype = int_dtype(paddr_bits)
    width = paddr_bits - 2
    cfg = CFG_BYTE_ARRAY[rng.integers(0, len(CFG_BYTES), size=shape)]
    uniform = _random_bits(rng, width, shape, dtype)
    # k trailing ones over a random base
    k = rng.integers(0, width, size=shape, endpoint=True)
    ones = (np.ones(shape, dtype=dtype) << k.astype(dtype)) - 1
    base = _random_bits(rng, width, shape, dtype) & ~(ones * 2 + 1)
    shaped = (base | ones) & ((1 << width) - 1)
    return cfg, np.where(rng.random(shape) < 0.5, uniform, shaped)


def random_state(rng: np.random.Generator, paddr_bits: int, n_entries: int) -> PmpState:
    cfg_bytes, regs = random_entries(rng, paddr_bits, (1, n_entries))
    return PmpState.from_raw(cfg_bytes[0].tolist(), regs[0].tolist(), paddr_bits)


def random_addrs(
    rng: np.random.Generator, ea: EntryArrays, boundary_bias: float
) -> np.ndarray:
    """
    One address per state row of ea.

    Uniform, or with probability boundary_bias within BOUNDARY_SPAN bytes of
    a randomly chosen region edge of that row's state.
    """
    count = ea.cfg.shape[0]
    uniform = _random_bits(rng, ea.paddr_bits, count, int_dtype(ea.paddr_bits))
    b = batch_bounds(ea)
    edges = np.concatenate([b.lo, b.hi], axis=-1)
    usable = np.concatenate([b.valid, b.valid], axis=-1)
    keys = np.where(usable, rng.random(usable.shape), -1.0)
    if usable.shape[-1]:
        edge = np.take_along_axis(edges, np.argmax(keys, axis=-1)[:, None], axis=-1)[:, 0]
    else:
        edge = np.zeros(count, dtype=uniform.dtype)
    offset = rng.integers(-BOUNDARY_SPAN, BOUNDARY_SPAN, size=count, endpoint=True)
    near = np.minimum(np.maximum(edge + offset, 0), ea.max_addr)
    biased = (rng.random(count) < boundary_bias) & usable.any(axis=-1)
    return np.where(biased, near, uniform)


def shard_count(cfg: CampaignConfig) -> int:
    if cfg.effective_mode is CampaignMode.EXHAUSTIVE:
        return -(-cfg.state_count // _states_per_shard(cfg))
    return -(-cfg.total_cases // cfg.shard_size)


def _states_per_shard(cfg: CampaignConfig) -> int:
    return max(1, cfg.shard_size // cfg.cases_per_state)


def _shard_rng(cfg: CampaignConfig, shard: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, shard]))


def _privilege_codes(privileges: tuple[Privilege, ...]) -> np.ndarray:
    return np.array([p.value for p in privileges], dtype=np.int64)


def shard_batch(cfg: CampaignConfig, shard: int) -> CaseBatch:
    """Generate the cases of one shard."""
    mode = cfg.effective_mode
    if mode is CampaignMode.EXHAUSTIVE:
        per_shard = _states_per_shard(cfg)
        start = shard * per_shard
        index = np.arange(start, min(start + per_shard, cfg.state_count), dtype=np.int64)
        cfg_bytes, regs = _states_from_indices(cfg, index)
        # request grid in (privilege, size_exp, addr) order, repeated per state
        grid = np.meshgrid(
            _privilege_codes(EXHAUSTIVE_PRIVILEGES),
            np.arange(4, dtype=np.int64),
            np.arange(1 << cfg.paddr_bits, dtype=np.int64),
            indexing="ij",
        )
        prv, size_exp, addr = (g.ravel() for g in grid)
        per_state, states = len(addr), len(index)
        return CaseBatch(
            np.repeat(cfg_bytes, per_state, axis=0),
            np.repeat(regs, per_state, axis=0),
            np.tile(addr, states),
            np.tile(size_exp, states),
            np.tile(prv, states),
            cfg.paddr_bits,
        )

    rng = _shard_rng(cfg, shard)
    count = min(cfg.shard_size, cfg.total_cases - shard * cfg.shard_size)
    if mode is CampaignMode.SAMPLED:
        # independent uniform digits give a uniform state index
        shape = (count, cfg.n_entries)
        cfg_bytes = CFG_BYTE_ARRAY[rng.integers(0, len(CFG_BYTES), size=shape)]
        regs = _random_bits(rng, cfg.paddr_bits - 2, shape, int_dtype(cfg.paddr_bits))
        privileges = EXHAUSTIVE_PRIVILEGES
    else:
        states = -(-count // REQUESTS_PER_STATE)
        cfg_bytes, regs = random_entries(rng, cfg.paddr_bits, (states, cfg.n_entries))
        cfg_bytes = np.repeat(cfg_bytes, REQUESTS_PER_STATE, axis=0)[:count]
        regs = np.repeat(regs, REQUESTS_PER_STATE, axis=0)[:count]
        privileges = ALL_PRIVILEGES
    codes = _privilege_codes(privileges)
    prv = codes[rng.integers(0, len(codes), size=count)]
    size_exp = rng.integers(0, 4, size=count, dtype=np.int64)
    ea = EntryArrays(cfg_bytes, regs, cfg.paddr_bits)
    addr = random_addrs(rng, ea, cfg.boundary_bias)
    return CaseBatch(cfg_bytes, regs, addr, size_exp, prv, cfg.paddr_bits)


def iter_shard_cases(
    cfg: CampaignConfig, shard: int
) -> Iterator[tuple[PmpState, AccessRequest]]:
    """Yield the cases of one shard."""
    return shard_batch(cfg, shard).cases()


def _run_batch(
    report: CampaignReport, cfg: CampaignConfig, name: str, batch: CaseBatch
) -> None:
    ea, high = batch.entries, batch.high
    out = BATCH_CHECKERS[name](ea, batch.addr, batch.size_exp, high)
    codes = evaluate_cases(ea, batch.addr, batch.size_exp, high, out)
    failed = codes == FAIL
    if cfg.fail_fast:
        rows = np.flatnonzero(failed.any(axis=1))
        if rows.size:
            stop = int(rows[0]) + 1
            batch, out = batch.head(stop), out[:stop]
            codes, failed = codes[:stop], failed[:stop]

    tallies = {
        p: PropertyTally(
            passed=int(np.count_nonzero(codes[:, j] == PASS)),
            vacuous=int(np.count_nonzero(codes[:, j] == VACUOUS)),
            failed=int(np.count_nonzero(failed[:, j])),
        )
        for j, p in enumerate(PropertyId)
    }
    report.record_tallies(len(batch), tallies)

    props = list(PropertyId)
    rows, cols = np.nonzero(failed)
    room = max(report.max_violations - len(report.violations), 0)
    for k, j in zip(rows[:room].tolist(), cols[:room].tolist()):
        state, req = batch.state(k), batch.request(k)
        actual = Permissions.from_bits(int(out[k]))
        report.add_violation(
            CounterExample(state, req, check_access_spec(state, req), actual, props[j])
        )
    report.violation_count += max(len(rows) - room, 0)


def _run_cases(
    report: CampaignReport, cfg: CampaignConfig, check: Checker, batch: CaseBatch
) -> None:
    for state, req in batch.cases():
        out = check(state, req)
        outcomes = evaluate_case(state, req, out)
        report.record(outcomes)
        failed = [p for p, o in outcomes.items() if o is CaseOutcome.FAIL]
        if not failed:
            continue
        expected = check_access_spec(state, req)
        for p in failed:
            report.add_violation(CounterExample(state, req, expected, out, p))
        if cfg.fail_fast:
            break


def run_shard(
    cfg: CampaignConfig, checker: str | Checker, shard: int
) -> CampaignReport:
    """Run one shard and return its partial report."""
    check = get_checker(checker) if isinstance(checker, str) else checker
    name = checker if isinstance(checker, str) else checker.__name__
    report = CampaignReport(
        checker=name,
        mode=cfg.effective_mode.value,
        paddr_bits=cfg.paddr_bits,
        n_entries=cfg.n_entries,
        seed=cfg.seed,
        max_violations=cfg.max_violations,
    )
    batch = shard_batch(cfg, shard)
    if isinstance(checker, str):
        _run_batch(report, cfg, checker, batch)
    else:
        _run_cases(report, cfg, check, batch)
    return report


def run_campaign(cfg: CampaignConfig, impl: str | Checker = "spec") -> CampaignReport:
    """
    Run a verification campaign against one checker.

    Args:
        cfg: Campaign parameters; exhaustive and sampled modes must satisfy the
            tractability guard
        impl: Checker name ("spec", "mask" or a mutant) or a checker callable

    Returns:
        Merged report; deterministic for a given config
    """
    result = validate_campaign(cfg)
    if not result.valid:
        raise IntractableCampaignError(result.message)
    for warning in result.warnings:
        logger.warning(warning)

    shards = shard_count(cfg)
    name = impl if isinstance(impl, str) else impl.__name__
    logger.info(
        "Campaign {} on {}: {} cases in {} shards, {} worker(s)",
        cfg.effective_mode.value,
        name,
        cfg.total_cases,
        shards,
        cfg.workers,
    )
    start = time.perf_counter()
    report = CampaignReport(
        checker=name,
        mode=cfg.effective_mode.value,
        paddr_bits=cfg.paddr_bits,
        n_entries=cfg.n_entries,
        seed=cfg.seed,
        max_violations=cfg.max_violations,
    )
    for partial in _run_shards(cfg, impl, shards):
        report = report.merge(partial)
        if cfg.fail_fast and not partial.passed:
            break
    report.wall_time_seconds = time.perf_counter() - start
    logger.info(
        "Campaign on {} finished: {} cases, {} violations in {:.2f}s",
        name,
        report.cases_run,
        report.violation_count,
        report.wall_time_seconds,
    )
    return report


def _run_shards(
    cfg: CampaignConfig, impl: str | Checker, shards: int
) -> Iterator[CampaignReport]:
    if cfg.workers <= 1 or not isinstance(impl, str):
        for shard in range(shards):
            yield run_shard(cfg, impl, shard)
        return
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(run_shard, cfg, impl, shard) for shard in range(shards)]
        try:
            for shard, future in enumerate(futures):
                logger.debug("Collecting shard {}/{}", shard + 1, shards)
                yield future.result()
        finally:
            for future in futures:
                future.cancel()


def _still_violates(
    state: PmpState, req: AccessRequest, prop: PropertyId, checker: Checker
) -> CounterExample | None:
    out = checker(state, req)
    if eval_property(prop, state, req, out):
        return None
    return CounterExample(state, req, check_access_spec(state, req), out, prop)


def _boundary_candidates(ce: CounterExample) -> list[int]:
    state, req = ce.state, ce.request
    candidates = {0}
    for i in range(state.n_entries):
        bounds = region_bounds(state, i)
        if bounds is None:
            continue
        candidates.update(
            (
                bounds.lo,
                bounds.lo - 1,
                bounds.hi,
                bounds.hi - req.size + 1,
                bounds.hi - req.size + 2,
            )
        )
    return sorted(a for a in candidates if 0 <= a < req.addr)


def shrink(
    ce: CounterExample, checker: str | Checker = check_access_spec
) -> CounterExample:
    """
    Minimize a counterexample.

    Drops entries that the violation does not need, lowers the access size and
    moves the address down to region boundaries, repeating until no step
    applies. Shrinking a fully shrunk counterexample returns it unchanged.

    Args:
        ce: Counterexample that violates its property under checker
        checker: The checker that produced the counterexample

    Returns:
        A counterexample violating the same property
    """
    check = get_checker(checker) if isinstance(checker, str) else checker
    current = _still_violates(ce.state, ce.request, ce.property, check)
    if current is None:
        raise CampaignError(f"Counterexample does not violate {ce.property.value}")

    changed = True
    while changed:
        changed = False
        for i in reversed(range(current.state.n_entries)):
            smaller = _still_violates(
                current.state.drop_entry(i), current.request, current.property, check
            )
            if smaller is not None:
                logger.debug("shrink: dropped entry {}", i)
                current, changed = smaller, True

        for size_exp in range(current.request.size_exp):
            req = replace(current.request, size_exp=size_exp)
            smaller = _still_violates(current.state, req, current.property, check)
            if smaller is not None:
                logger.debug("shrink: size_exp {} -> {}", current.request.size_exp, size_exp)
                current, changed = smaller, True
                break

        for addr in _boundary_candidates(current):
            req = replace(current.request, addr=addr)
            smaller = _still_violates(current.state, req, current.property, check)
            if smaller is not None:
                logger.debug("shrink: addr {:#x} -> {:#x}", current.request.addr, addr)
                current, changed = smaller, True
                break
    return current

