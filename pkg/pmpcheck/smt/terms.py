"""
QF_BV term trees.

Terms are immutable and width-checked on construction. Operator names are the
SMT-LIB ones; `eq` and `implies` build `=` and `=>` applications.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Callable, Mapping, Union

import numpy as np

Value = Union[int, bool]
ArrayValue = Union[np.ndarray, int, bool]


class SmtError(Exception):
    """Base class for SMT errors, optionally positioned in source text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}, column {self.column}: {self.message}"


class SmtSyntaxError(SmtError):
    """Malformed or out-of-fragment text."""


class SmtArityError(SmtSyntaxError):
    """Operator applied to the wrong number of arguments."""


class SmtWidthError(SmtError):
    """Operand sorts violate the operator's width rules."""


class SmtUndeclaredError(SmtError):
    """Reference to an undeclared variable."""


class SmtEvalError(SmtError):
    """Evaluation without a value for some free variable."""


class SmtParamError(SmtError, ValueError):
    """Compilation parameters out of range."""


@dataclass(frozen=True)
class Sort:
    """Bitvector sort of the given width; width 0 is Bool."""

    width: int

    @property
    def is_bool(self) -> bool:
        return self.width == 0

    def __str__(self) -> str:
        return "Bool" if self.is_bool else f"(_ BitVec {self.width})"


BOOL = Sort(0)


def bv_sort(width: int) -> Sort:
    if width < 1:
        raise SmtWidthError(f"Bitvector width must be positive, got {width}")
    return Sort(width)


class Term:
    """Base class of term nodes."""

    sort: Sort

    @cached_property
    def free_vars(self) -> frozenset[tuple[str, Sort]]:
        if isinstance(self, Var):
            return frozenset({(self.name, self.sort)})
        if isinstance(self, App):
            out: frozenset[tuple[str, Sort]] = frozenset()
            for arg in self.args:
                out |= arg.free_vars
            return out
        return frozenset()

    @cached_property
    def evaluator(self) -> Callable[[Mapping[str, int]], Value]:
        return _build_evaluator(self)

    @cached_property
    def array_evaluator(self) -> Callable[[Mapping[str, np.ndarray]], ArrayValue]:
        return _build_array_evaluator(self)


@dataclass(frozen=True, eq=True)
class BvConst(Term):
    value: int
    width: int

    def __post_init__(self):
        bv_sort(self.width)
        if not 0 <= self.value < 1 << self.width:
            raise SmtWidthError(f"Constant {self.value} does not fit in {self.width} bits")

    @property
    def sort(self) -> Sort:  # type: ignore[override]
        return Sort(self.width)


@dataclass(frozen=True, eq=True)
class BoolConst(Term):
    value: bool

    @property
    def sort(self) -> Sort:  # type: ignore[override]
        return BOOL


@dataclass(frozen=True, eq=True)
class Var(Term):
    """Free constant symbol; width 0 declares a Bool."""

    name: str
    width: int

    def __post_init__(self):
        if self.width != 0:
            bv_sort(self.width)

    @property
    def sort(self) -> Sort:  # type: ignore[override]
        return Sort(self.width)


# operator -> (min args, max args); None means unbounded
ARITY: dict[str, tuple[int, int | None]] = {
    "concat": (2, 2),
    "extract": (1, 1),
    "bvadd": (2, 2),
    "bvsub": (2, 2),
    "bvshl": (2, 2),
    "bvlshr": (2, 2),
    "bvand": (2, 2),
    "bvor": (2, 2),
    "bvnot": (1, 1),
    "bvule": (2, 2),
    "bvult": (2, 2),
    "=": (2, 2),
    "ite": (3, 3),
    "and": (2, None),
    "or": (2, None),
    "not": (1, 1),
    "=>": (2, 2),
}

_SAME_WIDTH_BV = {"bvadd", "bvsub", "bvshl", "bvlshr", "bvand", "bvor"}


def check_arity(op: str, count: int) -> None:
    if op not in ARITY:
        raise SmtSyntaxError(f"Unsupported operator: {op}")
    low, high = ARITY[op]
    if count < low or (high is not None and count > high):
        expected = f"{low}" if low == high else f"at least {low}"
        raise SmtArityError(f"{op} takes {expected} argument(s), got {count}")


@dataclass(frozen=True, eq=True)
class App(Term):
    op: str
    args: tuple[Term, ...]
    params: tuple[int, ...] = ()
    sort: Sort = field(init=False, repr=False, compare=False)  # type: ignore[misc]

    def __post_init__(self):
        check_arity(self.op, len(self.args))
        object.__setattr__(self, "sort", _infer_sort(self.op, self.args, self.params))


def _infer_sort(op: str, args: tuple[Term, ...], params: tuple[int, ...]) -> Sort:
    sorts = [a.sort for a in args]
    if op in ("and", "or", "not", "=>"):
        if not all(s.is_bool for s in sorts):
            raise SmtWidthError(f"{op} expects Bool operands, got {', '.join(map(str, sorts))}")
        return BOOL
    if op == "=":
        if sorts[0] != sorts[1]:
            raise SmtWidthError(f"= operands differ: {sorts[0]} vs {sorts[1]}")
        return BOOL
    if op == "ite":
        if not sorts[0].is_bool:
            raise SmtWidthError(f"ite condition must be Bool, got {sorts[0]}")
        if sorts[1] != sorts[2]:
            raise SmtWidthError(f"ite branches differ: {sorts[1]} vs {sorts[2]}")
        return sorts[1]
    if any(s.is_bool for s in sorts):
        raise SmtWidthError(f"{op} expects bitvector operands")
    if op == "concat":
        return Sort(sorts[0].width + sorts[1].width)
    if op == "extract":
        if len(params) != 2:
            raise SmtSyntaxError("extract needs (hi, lo) indices")
        hi, lo = params
        if not 0 <= lo <= hi < sorts[0].width:
            raise SmtWidthError(
                f"extract [{hi}:{lo}] out of range for width {sorts[0].width}"
            )
        return Sort(hi - lo + 1)
    if op == "bvnot":
        return sorts[0]
    if sorts[0] != sorts[1]:
        raise SmtWidthError(f"{op} operands differ: {sorts[0]} vs {sorts[1]}")
    if op in ("bvule", "bvult"):
        return BOOL
    assert op in _SAME_WIDTH_BV
    return sorts[0]


TRUE = BoolConst(True)
FALSE = BoolConst(False)


def bv(value: int, width: int) -> BvConst:
    return BvConst(value & ((1 << width) - 1), width)


def var(name: str, width: int) -> Var:
    return Var(name, width)


def concat(hi: Term, lo: Term) -> App:
    return App("concat", (hi, lo))


def extract(t: Term, hi: int, lo: int) -> App:
    return App("extract", (t,), (hi, lo))


def zext(t: Term, extra: int) -> Term:
    return t if extra == 0 else concat(bv(0, extra), t)


def bit(t: Term, i: int) -> App:
    """Bit i of t as a Bool."""
    return eq(extract(t, i, i), bv(1, 1))


def bvadd(a: Term, b: Term) -> App:
    return App("bvadd", (a, b))


def bvsub(a: Term, b: Term) -> App:
    return App("bvsub", (a, b))


def bvshl(a: Term, b: Term) -> App:
    return App("bvshl", (a, b))


def bvlshr(a: Term, b: Term) -> App:
    return App("bvlshr", (a, b))


def bvand(a: Term, b: Term) -> App:
    return App("bvand", (a, b))


def bvor(a: Term, b: Term) -> App:
    return App("bvor", (a, b))


def bvnot(a: Term) -> App:
    return App("bvnot", (a,))


def bvule(a: Term, b: Term) -> App:
    return App("bvule", (a, b))


def bvult(a: Term, b: Term) -> App:
    return App("bvult", (a, b))


def eq(a: Term, b: Term) -> App:
    return App("=", (a, b))


def ite(c: Term, a: Term, b: Term) -> App:
    return App("ite", (c, a, b))


def and_(*args: Term) -> Term:
    if not args:
        return TRUE
    if len(args) == 1:
        return args[0]
    return App("and", args)


def or_(*args: Term) -> Term:
    if not args:
        return FALSE
    if len(args) == 1:
        return args[0]
    return App("or", args)


def not_(a: Term) -> App:
    return App("not", (a,))


def implies(a: Term, b: Term) -> App:
    return App("=>", (a, b))


def bool_to_bv(b: Term) -> App:
    return ite(b, bv(1, 1), bv(0, 1))


def _mask(width: int) -> int:
    return (1 << width) - 1


def _build_evaluator(t: Term) -> Callable[[Mapping[str, int]], Value]:
    """Compile a term into a closure over an assignment."""
    if isinstance(t, (BvConst, BoolConst)):
        value = t.value
        return lambda env: value
    if isinstance(t, Var):
        name, width = t.name, t.width

        def lookup(env: Mapping[str, int]) -> Value:
            try:
                value = env[name]
            except KeyError:
                raise SmtEvalError(f"No value for variable {name}") from None
            return bool(value) if width == 0 else value & _mask(width)

        return lookup

    assert isinstance(t, App)
    fs = [a.evaluator for a in t.args]
    op = t.op
    width = t.sort.width
    m = _mask(width) if width else 0

    if op == "concat":
        f, g = fs
        low = t.args[1].sort.width
        return lambda env: (f(env) << low) | g(env)
    if op == "extract":
        (f,) = fs
        hi, lo = t.params
        sel = _mask(hi - lo + 1)
        return lambda env: (f(env) >> lo) & sel
    if op == "bvnot":
        (f,) = fs
        return lambda env: ~f(env) & m
    if op == "not":
        (f,) = fs
        return lambda env: not f(env)
    if op == "and":
        return lambda env: all(f(env) for f in fs)
    if op == "or":
        return lambda env: any(f(env) for f in fs)
    if op == "ite":
        c, f, g = fs
        return lambda env: f(env) if c(env) else g(env)

    f, g = fs
    if op == "bvadd":
        return lambda env: (f(env) + g(env)) & m
    if op == "bvsub":
        return lambda env: (f(env) - g(env)) & m
    if op == "bvshl":
        return lambda env: (f(env) << g(env)) & m if g(env) < width else 0
    if op == "bvlshr":
        return lambda env: f(env) >> g(env) if g(env) < width else 0
    if op == "bvand":
        return lambda env: f(env) & g(env)
    if op == "bvor":
        return lambda env: f(env) | g(env)
    if op == "bvule":
        return lambda env: f(env) <= g(env)
    if op == "bvult":
        return lambda env: f(env) < g(env)
    if op == "=":
        return lambda env: f(env) == g(env)
    if op == "=>":
        return lambda env: (not f(env)) or g(env)
    raise SmtSyntaxError(f"Unsupported operator: {op}")


def eval_term(t: Term, assignment: Mapping[str, int]) -> Value:
    """
    Evaluate a term under QF_BV semantics.

    Args:
        t: Width-correct term
        assignment: Values for (at least) every free variable of t

    Returns:
        int for bitvector terms, bool for Bool terms
    """
    missing = sorted(name for name, _ in t.free_vars if name not in assignment)
    if missing:
        raise SmtEvalError(f"No value for variable(s): {', '.join(missing)}")
    return t.evaluator(assignment)


def _build_array_evaluator(t: Term) -> Callable[[Mapping[str, np.ndarray]], ArrayValue]:
    """Like _build_evaluator, but over numpy arrays of assignments."""
    if isinstance(t, (BvConst, BoolConst)):
        value = t.value
        return lambda env: value
    if isinstance(t, Var):
        name, width = t.name, t.width

        def lookup(env: Mapping[str, np.ndarray]) -> ArrayValue:
            try:
                value = np.asarray(env[name])
            except KeyError:
                raise SmtEvalError(f"No value for variable {name}") from None
            return value != 0 if width == 0 else value & _mask(width)

        return lookup

    assert isinstance(t, App)
    fs = [a.array_evaluator for a in t.args]
    op = t.op
    width = t.sort.width
    m = _mask(width) if width else 0

    if op == "concat":
        f, g = fs
        low = t.args[1].sort.width
        return lambda env: (f(env) << low) | g(env)
    if op == "extract":
        (f,) = fs
        hi, lo = t.params
        sel = _mask(hi - lo + 1)
        return lambda env: (f(env) >> lo) & sel
    if op == "bvnot":
        (f,) = fs
        return lambda env: ~f(env) & m
    if op == "not":
        (f,) = fs
        return lambda env: np.logical_not(f(env))
    if op == "and":
        return lambda env: reduce(np.logical_and, (f(env) for f in fs))
    if op == "or":
        return lambda env: reduce(np.logical_or, (f(env) for f in fs))
    if op == "ite":
        c, f, g = fs
        return lambda env: np.where(c(env), f(env), g(env))

    f, g = fs
    if op == "bvadd":
        return lambda env: (f(env) + g(env)) & m
    if op == "bvsub":
        return lambda env: (f(env) - g(env)) & m
    if op == "bvshl":
        return lambda env: _shift(f(env), g(env), width, left=True)
    if op == "bvlshr":
        return lambda env: _shift(f(env), g(env), width, left=False)
    if op == "bvand":
        return lambda env: f(env) & g(env)
    if op == "bvor":
        return lambda env: f(env) | g(env)
    if op == "bvule":
        return lambda env: f(env) <= g(env)
    if op == "bvult":
        return lambda env: f(env) < g(env)
    if op == "=":
        return lambda env: f(env) == g(env)
    if op == "=>":
        return lambda env: np.logical_or(np.logical_not(f(env)), g(env))
    raise SmtSyntaxError(f"Unsupported operator: {op}")


def _shift(value: ArrayValue, amount: ArrayValue, width: int, left: bool) -> ArrayValue:
    # shifts by width or more give zero
    amount = np.asarray(amount)
    capped = np.minimum(amount, width)
    shifted = (value << capped) & _mask(width) if left else value >> capped
    return np.where(amount < width, shifted, 0)


def eval_term_batch(t: Term, assignment: Mapping[str, np.ndarray]) -> np.ndarray:
    """
    Evaluate a term on many assignments at once.

    Each variable maps to an integer array; arrays broadcast against each
    other. Intermediate values must fit the array dtype, so int64 arrays
    suit terms no wider than 62 bits.

    Returns:
        Integer array for bitvector terms, bool array for Bool terms
    """
    missing = sorted(name for name, _ in t.free_vars if name not in assignment)
    if missing:
        raise SmtEvalError(f"No value for variable(s): {', '.join(missing)}")
    return np.asarray(t.array_evaluator(assignment))
