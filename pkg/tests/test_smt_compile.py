"""Tests for compiling the checker and its properties to QF_BV."""

import numpy as np
import pytest

from pmpcheck.campaign import random_state
from pmpcheck.mutants import get_checker
from pmpcheck.pmp import (
    AccessRequest,
    Permissions,
    PmpState,
    Privilege,
    check_access_spec,
    meaningful_cfg_bytes,
)
from pmpcheck.props import PropertyId
from pmpcheck.smt import (
    Assignment,
    SmtDocument,
    SmtError,
    SmtParamError,
    Sort,
    assignment_for,
    compile_checker,
    compile_property_negation,
    document_filename,
    eval_checker,
    eval_document,
    eval_term,
    eval_term_batch,
    write_document,
)
from pmpcheck.smt.compile import CHECKER_DEF, COMPILE_MUTANTS, NamedAssertion, negated_name
from pmpcheck.smt.terms import bv, eq, var


def random_cases(paddr_bits, n_entries, count, seed=0):
    rng = np.random.default_rng(seed)
    privileges = list(Privilege)
    for k in range(count):
        if k % 16 == 0:
            state = random_state(rng, paddr_bits, n_entries)
        addr = int(rng.integers(0, 1 << paddr_bits))
        req = AccessRequest(addr, int(rng.integers(0, 4)), privileges[int(rng.integers(0, 3))])
        yield state, req


def test_checker_term_matches_reference_on_random_cases():
    """Test the compiled checker against the reference on random cases."""
    term = compile_checker(8, 2)
    for state, req in random_cases(8, 2, 10_000):
        assert eval_checker(term, state, req) == check_access_spec(state, req)


@pytest.mark.parametrize("paddr_bits", [5, pytest.param(6, marks=pytest.mark.slow)])
def test_checker_term_matches_reference_exhaustively(paddr_bits):
    """Test the compiled checker against the reference over a whole one-entry space."""
    term = compile_checker(paddr_bits, 1)
    cfgs = meaningful_cfg_bytes()
    regs = range(1 << (paddr_bits - 2))
    privileges = (Privilege.U, Privilege.M)
    grid = np.meshgrid(
        np.array(cfgs),
        np.array(regs),
        np.array([p.value for p in privileges]),
        np.arange(4),
        np.arange(1 << paddr_bits),
        indexing="ij",
    )
    cfg, reg, prv, size, addr = (g.ravel() for g in grid)
    got = eval_term_batch(
        term, {"cfg_0": cfg, "addr_reg_0": reg, "prv": prv, "size": size, "addr": addr}
    )

    expected = []
    for c in cfgs:
        for r in regs:
            state = PmpState.from_raw([c], [r], paddr_bits)
            for p in privileges:
                for size_exp in range(4):
                    for a in range(1 << paddr_bits):
                        req = AccessRequest(a, size_exp, p)
                        expected.append(check_access_spec(state, req).to_bits())
    assert got.tolist() == expected


def test_batch_evaluation_matches_single_cases():
    """Test that batch term evaluation agrees with case-by-case evaluation."""
    term = compile_checker(12, 3)
    cases = list(random_cases(12, 3, 500, seed=2))
    envs = [assignment_for(state, req) for state, req in cases]
    batch = {name: np.array([env[name] for env in envs]) for name in envs[0]}
    got = eval_term_batch(term, batch)
    assert got.tolist() == [eval_checker(term, s, r).to_bits() for s, r in cases]


def test_checker_without_entries_is_privilege_default():
    """Test that a zero-entry checker returns the privilege default."""
    term = compile_checker(4, 0)
    assert {name for name, _ in term.free_vars} == {"prv"}
    assert eval_term(term, {"prv": 3}) == 7
    for prv in (0, 1, 2):
        assert eval_term(term, {"prv": prv}) == 0


@pytest.mark.parametrize("mutant", COMPILE_MUTANTS)
def test_mutant_terms_match_mutant_checkers(mutant):
    """Test compiled mutants against their Python counterparts."""
    term = compile_checker(8, 2, mutant)
    check = get_checker(mutant)
    for state, req in random_cases(8, 2, 2_000, seed=5):
        assert eval_checker(term, state, req) == check(state, req)


def test_unknown_mutant():
    """Test compiling an unknown mutant."""
    with pytest.raises(SmtParamError):
        compile_checker(8, 1, "off_by_one")


@pytest.mark.parametrize("paddr_bits,n_entries", [(2, 1), (65, 1), (8, -1), (8, 17)])
def test_parameters_out_of_range(paddr_bits, n_entries):
    """Test compile parameter validation."""
    with pytest.raises(SmtParamError):
        compile_checker(paddr_bits, n_entries)
    with pytest.raises(ValueError):
        compile_property_negation(PropertyId.NoMatchEq4, paddr_bits, n_entries)


def test_document_structure():
    """Test declarations and assertion names of a property document."""
    doc = compile_property_negation(PropertyId.HighPrivEq5, 16, 2)
    names = [name for name, _ in doc.declarations]
    assert names == sorted(
        ["addr", "size", "prv", "out", "cfg_0", "cfg_1", "addr_reg_0", "addr_reg_1"]
    )
    sorts = dict(doc.declarations)
    assert sorts["addr"] == Sort(16)
    assert sorts["addr_reg_1"] == Sort(14)
    assert sorts["cfg_0"] == Sort(8)
    assert sorts["out"] == Sort(3)
    assert [a.name for a in doc.assertions] == [CHECKER_DEF, "negated_HighPrivEq5"]
    assert doc.free_variables() <= set(names)
    assert doc.logic == "QF_BV" and doc.check_sat


@pytest.mark.parametrize("prop", list(PropertyId))
def test_negated_properties_false_on_reference_outputs(prop):
    """Test that negated properties are false on reference outputs."""
    doc = compile_property_negation(prop, 8, 2)
    for state, req in random_cases(8, 2, 1_500, seed=11):
        env = assignment_for(state, req, check_access_spec(state, req))
        assert not eval_document(doc, env)


@pytest.mark.parametrize("prop", list(PropertyId))
def test_negated_properties_false_on_random_assignments(prop):
    """Test negated properties on random inputs with the pinned checker output."""
    doc = compile_property_negation(prop, 8, 2)
    checker = doc.assertion(CHECKER_DEF).term.args[1]
    rng = np.random.default_rng(3)
    for _ in range(1_500):
        env = Assignment.random(doc, rng)
        env = env.with_value("out", eval_term(checker, env))
        assert eval_document(doc, env) is False


def test_checker_def_pins_output():
    """Test that the checker definition fixes the output variable."""
    doc = compile_property_negation(PropertyId.NoMatchEq4, 8, 1)
    state = PmpState.empty(paddr_bits=8, n_entries=1)
    req = AccessRequest(0x10, 0, Privilege.M)
    good = assignment_for(state, req, Permissions.all(True))
    assert eval_term(doc.assertion(CHECKER_DEF).term, good)
    assert not eval_term(doc.assertion(CHECKER_DEF).term, good.with_value("out", 0))


def test_priority_mutant_document_has_witness():
    """Test that the priority mutant document is satisfied by a known witness."""
    doc = compile_property_negation(PropertyId.MainLowEq3, 8, 2, "priority_reversed")
    # entry 0: NAPOT [0, 0x3F] no permissions; entry 1: NAPOT [0, 0xFF] rwx
    state = PmpState.from_raw([0x18, 0x1F], [0x7, 0x1F], 8)
    req = AccessRequest(0x10, 0, Privilege.U)
    mutant_out = get_checker("priority_reversed")(state, req)
    assert mutant_out == Permissions.all(True)
    assert check_access_spec(state, req) == Permissions.all(False)
    assert eval_document(doc, assignment_for(state, req, mutant_out))


def test_compilation_is_deterministic():
    """Test that compiling twice gives equal documents."""
    first = compile_property_negation(PropertyId.AlignImplEq2, 12, 3)
    second = compile_property_negation(PropertyId.AlignImplEq2, 12, 3)
    assert first == second


def test_document_rejects_unsorted_or_undeclared():
    """Test document validation of declarations and assertion sorts."""
    x = var("x", 4)
    with pytest.raises(SmtError):
        SmtDocument(declarations=(("y", Sort(4)), ("x", Sort(4))))
    with pytest.raises(SmtError):
        SmtDocument(
            declarations=(("y", Sort(4)),),
            assertions=(NamedAssertion("a", eq(x, bv(0, 4))),),
        )
    with pytest.raises(SmtError):
        SmtDocument(
            declarations=(("x", Sort(4)),),
            assertions=(NamedAssertion("a", x),),
        )


def test_assignment_mapping():
    """Test the Assignment mapping interface."""
    doc = compile_property_negation(PropertyId.NoMatchEq4, 8, 1)
    env = Assignment.random(doc, np.random.default_rng(0))
    assert env.covers(doc)
    assert set(env) == {name for name, _ in doc.declarations}
    assert all(0 <= env[name] < (1 << max(sort.width, 1)) for name, sort in doc.declarations)
    assert env.with_value("out", 5)["out"] == 5


def test_write_document(tmp_path):
    """Test writing a document under its canonical file name."""
    doc = compile_property_negation(PropertyId.MainLowEq3, 8, 1)
    path = write_document(doc, tmp_path / "smt", PropertyId.MainLowEq3, 8, 1)
    assert path.name == document_filename(PropertyId.MainLowEq3, 8, 1)
    assert path.name == "pmp_MainLowEq3_8b_1e.smt2"
    assert path.read_text().startswith("(set-logic QF_BV)\n")
    assert negated_name(PropertyId.MainLowEq3) in path.read_text()
