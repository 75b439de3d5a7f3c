"""QF_BV compilation of the PMP checker and its properties."""

from .compile import (
    Assignment,
    NamedAssertion,
    SmtDocument,
    assignment_for,
    compile_checker,
    compile_property_negation,
    document_filename,
    eval_checker,
    eval_document,
    write_document,
)
from .terms import (
    SmtArityError,
    SmtError,
    SmtEvalError,
    SmtParamError,
    SmtSyntaxError,
    SmtUndeclaredError,
    SmtWidthError,
    Sort,
    Term,
    eval_term,
    eval_term_batch,
)
from .text import parse, render
