"""
Compilation of the checker and its properties to QF_BV documents.

The checker term mirrors the mask checker: masked comparison for NA4/NAPOT,
two comparators for TOR, and a priority mux chain. Property documents state
region membership and alignment from explicit bounds instead, so an unsat
answer shows the two formulations agree at the compiled parameters.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from loguru import logger

from ..pmp import (
    MAX_ENTRIES,
    MAX_PADDR_BITS,
    MIN_PADDR_BITS,
    AccessRequest,
    Permissions,
    PmpState,
)
from ..props import PropertyId
from .terms import (
    SmtError,
    SmtParamError,
    Sort,
    Term,
    and_,
    bit,
    bool_to_bv,
    bv,
    bvadd,
    bvand,
    bvnot,
    bvshl,
    bvsub,
    bvule,
    bvult,
    concat,
    eq,
    eval_term,
    extract,
    implies,
    ite,
    not_,
    or_,
    var,
    zext,
)

CHECKER_DEF = "checker_def"
OUT = "out"
COMPILE_MUTANTS = ("priority_reversed", "lock_ignored", "alignment_ignored")


def cfg_name(i: int) -> str:
    return f"cfg_{i}"


def addr_reg_name(i: int) -> str:
    return f"addr_reg_{i}"


def negated_name(p: PropertyId) -> str:
    return f"negated_{p.value}"


@dataclass(frozen=True)
class NamedAssertion:
    name: str
    term: Term


@dataclass(frozen=True)
class SmtDocument:
    """A QF_BV problem: declarations, named assertions and a check-sat."""

    declarations: tuple[tuple[str, Sort], ...]
    assertions: tuple[NamedAssertion, ...] = ()
    logic: str = "QF_BV"
    check_sat: bool = True

    def __post_init__(self):
        names = [name for name, _ in self.declarations]
        if len(set(names)) != len(names):
            raise SmtError("Variable declared more than once")
        if names != sorted(names):
            raise SmtError("Declarations must be sorted by name")
        labels = [a.name for a in self.assertions]
        if len(set(labels)) != len(labels):
            raise SmtError("Assertion names must be unique")
        declared = set(self.declarations)
        for a in self.assertions:
            if not a.term.sort.is_bool:
                raise SmtError(f"Assertion {a.name} is not Bool")
            undeclared = {name for name, _ in a.term.free_vars} - set(names)
            if undeclared:
                raise SmtError(
                    f"Assertion {a.name} uses undeclared {', '.join(sorted(undeclared))}"
                )
            if not a.term.free_vars <= declared:
                raise SmtError(f"Assertion {a.name} uses a variable at the wrong width")

    def free_variables(self) -> set[str]:
        out: set[str] = set()
        for a in self.assertions:
            out |= {name for name, _ in a.term.free_vars}
        return out

    def assertion(self, name: str) -> NamedAssertion:
        for a in self.assertions:
            if a.name == name:
                return a
        raise KeyError(name)


class Assignment(Mapping[str, int]):
    """Values for the declared variables of a document."""

    def __init__(self, values: Mapping[str, int]):
        self._values = dict(values)

    def __getitem__(self, name: str) -> int:
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"Assignment({self._values!r})"

    def with_value(self, name: str, value: int) -> "Assignment":
        return Assignment({**self._values, name: value})

    def covers(self, doc: SmtDocument) -> bool:
        return all(name in self._values for name, _ in doc.declarations)

    @classmethod
    def random(cls, doc: SmtDocument, rng: np.random.Generator) -> "Assignment":
        values = {}
        for name, sort in doc.declarations:
            width = max(sort.width, 1)
            raw = int.from_bytes(rng.bytes((width + 7) // 8), "little")
            values[name] = raw & ((1 << width) - 1)
        return cls(values)


def assignment_for(
    state: PmpState, req: AccessRequest, out: Permissions | None = None
) -> Assignment:
    """Map concrete checker inputs (and optionally an output) to an Assignment."""
    values = {"addr": req.addr, "size": req.size_exp, "prv": req.prv.value}
    for i, entry in enumerate(state.entries):
        values[cfg_name(i)] = entry.raw_cfg
        values[addr_reg_name(i)] = entry.addr_reg
    if out is not None:
        values[OUT] = out.to_bits()
    return Assignment(values)


def check_compile_params(paddr_bits: int, n_entries: int) -> None:
    if not MIN_PADDR_BITS <= paddr_bits <= MAX_PADDR_BITS:
        raise SmtParamError(
            f"paddr_bits must be in {MIN_PADDR_BITS}..{MAX_PADDR_BITS}, got {paddr_bits}"
        )
    if not 0 <= n_entries <= MAX_ENTRIES:
        raise SmtParamError(f"n_entries must be in 0..{MAX_ENTRIES}, got {n_entries}")


@dataclass
class _Circuit:
    """Shared subterms of the checker and property terms for one parameterization."""

    paddr_bits: int
    n_entries: int
    addr: Term = field(init=False)
    size: Term = field(init=False)
    prv: Term = field(init=False)
    cfgs: list[Term] = field(init=False)
    regs: list[Term] = field(init=False)

    def __post_init__(self):
        p = self.paddr_bits
        self.addr = var("addr", p)
        self.size = var("size", 2)
        self.prv = var("prv", 2)
        self.cfgs = [var(cfg_name(i), 8) for i in range(self.n_entries)]
        self.regs = [var(addr_reg_name(i), p - 2) for i in range(self.n_entries)]

    def declarations(self, with_out: bool) -> tuple[tuple[str, Sort], ...]:
        decls = [("addr", Sort(self.paddr_bits)), ("size", Sort(2)), ("prv", Sort(2))]
        decls += [(cfg_name(i), Sort(8)) for i in range(self.n_entries)]
        decls += [(addr_reg_name(i), Sort(self.paddr_bits - 2)) for i in range(self.n_entries)]
        if with_out:
            decls.append((OUT, Sort(3)))
        return tuple(sorted(decls))

    @property
    def high(self) -> Term:
        # only M is high; the reserved encoding 2 counts as low
        return eq(self.prv, bv(3, 2))

    def default_out(self) -> Term:
        return ite(self.high, bv(7, 3), bv(0, 3))

    def last_byte(self, extra: int, size: Term | None = None) -> Term:
        """addr + 2^size - 1, computed paddr_bits + extra bits wide."""
        width = self.paddr_bits + extra
        size = self.size if size is None else size
        one = bv(1, width)
        span = bvshl(one, zext(size, width - 2))
        return bvsub(bvadd(zext(self.addr, extra), span), one)

    def top(self, i: int) -> Term:
        return concat(self.regs[i], bv(0, 2))

    # -- comparator formulation

    def mask_hit(self, i: int) -> Term:
        p = self.paddr_bits
        cfg = self.cfgs[i]
        keep = self._keep(i)
        pow2_hit = eq(bvand(self.addr, keep), bvand(self.top(i), keep))
        bottom = bv(0, p) if i == 0 else self.top(i - 1)
        tor_hit = and_(not_(bvult(self.addr, bottom)), bvult(self.addr, self.top(i)))
        return ite(bit(cfg, 4), pow2_hit, and_(bit(cfg, 3), tor_hit))

    def mask_aligned(self, i: int, size: Term | None = None) -> Term:
        last = self.last_byte(1, size)
        keep_ext = concat(bv(1, 1), self._keep(i))
        top_ext = zext(self.top(i), 1)
        pow2_aligned = eq(bvand(last, keep_ext), bvand(top_ext, keep_ext))
        tor_aligned = bvult(last, top_ext)
        return ite(bit(self.cfgs[i], 4), pow2_aligned, tor_aligned)

    def _keep(self, i: int) -> Term:
        p = self.paddr_bits
        base = concat(self.regs[i], extract(self.cfgs[i], 3, 3))
        ones = bvand(base, bvnot(bvadd(base, bv(1, p - 1))))
        mask = extract(concat(ones, bv(3, 2)), p - 1, 0)
        return bvnot(mask)

    # -- bounds formulation, paddr_bits + 2 bits wide

    def bounds(self, i: int) -> tuple[Term, Term, Term]:
        """(valid, lo, hi) of entry i's region."""
        width = self.paddr_bits + 2
        mode = extract(self.cfgs[i], 4, 3)
        reg = zext(self.regs[i], 4)
        two = bv(2, width)

        na4_lo = bvshl(reg, two)
        na4_hi = bvadd(na4_lo, bv(3, width))

        ones = bvand(reg, bvnot(bvadd(reg, bv(1, width))))
        low_bits = bvadd(bvadd(ones, ones), bv(1, width))
        napot_lo = bvshl(bvand(reg, bvnot(low_bits)), two)
        span = bvshl(bvadd(ones, bv(1, width)), bv(3, width))
        napot_raw = bvsub(bvadd(napot_lo, span), bv(1, width))
        max_addr = bv((1 << self.paddr_bits) - 1, width)
        napot_hi = ite(bvult(max_addr, napot_raw), max_addr, napot_raw)

        tor_lo = bv(0, width) if i == 0 else bvshl(zext(self.regs[i - 1], 4), two)
        tor_top = bvshl(reg, two)
        tor_hi = bvsub(tor_top, bv(1, width))

        is_tor, is_na4, is_napot = (eq(mode, bv(k, 2)) for k in (1, 2, 3))
        valid = or_(is_na4, is_napot, and_(is_tor, bvult(tor_lo, tor_top)))
        lo = ite(is_na4, na4_lo, ite(is_napot, napot_lo, tor_lo))
        hi = ite(is_na4, na4_hi, ite(is_napot, napot_hi, tor_hi))
        return valid, lo, hi

    def region(self, i: int) -> Term:
        valid, lo, hi = self.bounds(i)
        addr = zext(self.addr, 2)
        return and_(valid, bvule(lo, addr), bvule(addr, hi))

    def aligned(self, i: int) -> Term:
        valid, lo, hi = self.bounds(i)
        return and_(valid, bvule(lo, zext(self.addr, 2)), bvule(self.last_byte(2), hi))

    def rule_out(self, i: int, high_rule: bool) -> Term:
        """Output vector of the low or high privilege rule for entry i."""
        cfg = self.cfgs[i]
        a = self.aligned(i)
        unlocked = not_(bit(cfg, 7))
        bits = []
        for b in (2, 1, 0):
            grant = or_(unlocked, bit(cfg, b)) if high_rule else bit(cfg, b)
            bits.append(bool_to_bv(and_(grant, a)))
        return concat(bits[0], concat(bits[1], bits[2]))

    def first_match(self, i: int) -> Term:
        earlier = [self.region(j) for j in range(i)]
        return and_(self.region(i), not_(or_(*earlier))) if earlier else self.region(i)


def _checker_term(c: _Circuit, mutant: str | None) -> Term:
    if mutant is not None and mutant not in COMPILE_MUTANTS:
        raise SmtParamError(
            f"Unknown mutant {mutant!r}; choose from {', '.join(COMPILE_MUTANTS)}"
        )
    high = c.high
    result = c.default_out()
    order = range(c.n_entries) if mutant == "priority_reversed" else reversed(range(c.n_entries))
    for i in order:
        cfg = c.cfgs[i]
        size = bv(0, 2) if mutant == "alignment_ignored" else None
        aligned = c.mask_aligned(i, size)
        ignore = high if mutant == "lock_ignored" else and_(high, not_(bit(cfg, 7)))
        x, w, r = (bool_to_bv(and_(aligned, or_(bit(cfg, b), ignore))) for b in (2, 1, 0))
        result = ite(c.mask_hit(i), concat(x, concat(w, r)), result)
    return result


def compile_checker(paddr_bits: int, n_entries: int, mutant: str | None = None) -> Term:
    """
    Compile the checker into a 3-bit term (x, w, r from high to low bit).

    Args:
        paddr_bits: Physical address width
        n_entries: Number of PMP entries (0 gives the privilege default alone)
        mutant: Optional mutant name from COMPILE_MUTANTS

    Returns:
        Term over addr, size, prv, cfg_i and addr_reg_i
    """
    check_compile_params(paddr_bits, n_entries)
    return _checker_term(_Circuit(paddr_bits, n_entries), mutant)


def _property_term(p: PropertyId, c: _Circuit) -> Term:
    out = var(OUT, 3)
    n = c.n_entries
    if p is PropertyId.RegionBoundsEq1:
        return and_(*(eq(c.region(i), c.mask_hit(i)) for i in range(n)))
    if p is PropertyId.AlignImplEq2:
        parts = []
        for i in range(n):
            _, _, hi = c.bounds(i)
            parts.append(
                implies(and_(c.region(i), c.mask_aligned(i)), bvule(c.last_byte(2), hi))
            )
        return and_(*parts)
    if p is PropertyId.NoMatchEq4:
        any_match = or_(*(c.region(i) for i in range(n)))
        return implies(not_(any_match), eq(out, c.default_out()))
    high_rule = p is PropertyId.HighPrivEq5
    guard = c.high if high_rule else not_(c.high)
    rules = [implies(c.first_match(i), eq(out, c.rule_out(i, high_rule))) for i in range(n)]
    return implies(guard, and_(*rules))


def compile_property_negation(
    p: PropertyId, paddr_bits: int, n_entries: int, mutant: str | None = None
) -> SmtDocument:
    """
    Build the document asserting the checker definition and NOT(p).

    The document is unsat exactly when p holds for every input at these
    parameters.
    """
    check_compile_params(paddr_bits, n_entries)
    c = _Circuit(paddr_bits, n_entries)
    checker = _checker_term(c, mutant)
    prop = _property_term(p, c)
    logger.debug(f"Compiled {p.value} at {paddr_bits} bits, {n_entries} entries")
    return SmtDocument(
        declarations=c.declarations(with_out=True),
        assertions=(
            NamedAssertion(CHECKER_DEF, eq(var(OUT, 3), checker)),
            NamedAssertion(negated_name(p), not_(prop)),
        ),
    )


def eval_checker(term: Term, state: PmpState, req: AccessRequest) -> Permissions:
    """Evaluate a compiled checker term on concrete inputs."""
    return Permissions.from_bits(eval_term(term, assignment_for(state, req)))


def eval_document(doc: SmtDocument, assignment: Mapping[str, int]) -> bool:
    """Whether every assertion of doc holds under the assignment."""
    return all(eval_term(a.term, assignment) for a in doc.assertions)


def document_filename(p: PropertyId, paddr_bits: int, n_entries: int) -> str:
    return f"pmp_{p.value}_{paddr_bits}b_{n_entries}e.smt2"


def write_document(
    doc: SmtDocument, out_dir: Path, p: PropertyId, paddr_bits: int, n_entries: int
) -> Path:
    """Render doc into out_dir under the standard file name."""
    from .text import render

    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / document_filename(p, paddr_bits, n_entries)
    with open(path, "w", encoding="utf-8") as f:
        f.write(render(doc))
    logger.info(f"Wrote {path}")
    return path
