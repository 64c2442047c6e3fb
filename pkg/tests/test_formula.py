import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ailtl.errors import GroundnessError, SemanticError
from ailtl.formula import (
    OPERATORS,
    ContextualFormula,
    IntervalOp,
    RuleSet,
    RuleSpec,
    free_variables,
    ground_op,
    interest_interval,
    plan_binding,
    substitute,
    with_check_freq,
)
from ailtl.kb import FactAtom
from ailtl.parser import parse_rules
from ailtl.terms import BinOp, Duration, Term, Var

INF = math.inf


@pytest.mark.parametrize("op, a, want", [
    (IntervalOp("NOW", (7,)), 3, (7, 7, 7)),
    (IntervalOp("NEXT", (2,)), 3, (5, 5, 5)),
    (IntervalOp("EVENTUALLY", (4,)), 3, (3, 7, 7)),
    (IntervalOp("EVENTUALLY", (2, 9)), 3, (2, 9, 9)),
    (IntervalOp("ALWAYS", (2, 9)), 3, (2, 9, 9)),
    (IntervalOp("ALWAYS", (2,)), 3, (2, INF, INF)),
    (IntervalOp("ALWAYS_S", (2,)), 3, (0, INF, INF)),
    (IntervalOp("ALWAYS_S", (2, 9)), 3, (0, 9, 10)),
    (IntervalOp("NEVER", (2, 9)), 3, (2, 9, 9)),
    (IntervalOp("NEVER_B", (5,)), 3, (0, 4, 4)),
    (IntervalOp("NEVER_A", (5,)), 3, (6, INF, INF)),
    (IntervalOp("SOMETIMES", (2,), 3), 0, (2, INF, INF)),
    (IntervalOp("SOMETIMES", (2, 10), 3), 0, (2, 8, 8)),
])
def test_interest_intervals(op, a, want):
    ii = interest_interval(op, a)
    assert (ii.v, ii.w, ii.crucial) == want


def test_sometimes_checkpoints():
    assert interest_interval(IntervalOp("SOMETIMES", (0, 1800), 300), 0).checkpoints == tuple(range(0, 1801, 300))
    assert interest_interval(IntervalOp("SOMETIMES", (0,), 5), 0).checkpoints is None


def test_never_b_at_zero_is_empty():
    assert interest_interval(IntervalOp("NEVER_B", (0,)), 0).empty


@pytest.mark.parametrize("make", [
    lambda: IntervalOp("NOW", (1, 2)),
    lambda: IntervalOp("NEVER", (1,)),
    lambda: IntervalOp("FOO", (1,)),
    lambda: IntervalOp("SOMETIMES", (1, 2)),
    lambda: IntervalOp("SOMETIMES", (1, 2), 1, check_freq=2),
    lambda: IntervalOp("ALWAYS", (1,), 2),
    lambda: IntervalOp("ALWAYS", (5, 2)),
    lambda: IntervalOp("ALWAYS", (2, 5), check_freq=0),
    lambda: IntervalOp("SOMETIMES", (2, 5), 0),
])
def test_malformed_operators(make):
    with pytest.raises(SemanticError):
        make()


def test_nested_or_empty_formula_rejected():
    op = IntervalOp("NOW", (0,))
    with pytest.raises(SemanticError):
        ContextualFormula(op, (op,))
    with pytest.raises(SemanticError):
        ContextualFormula(op, ())


def test_improvement_needs_repair():
    cf = ContextualFormula(IntervalOp("NOW", (0,)), (FactAtom(Term("p")),))
    with pytest.raises(SemanticError):
        RuleSpec("r", cf, improvement=(Term("x"),))


def test_duplicate_names_rejected():
    cf = ContextualFormula(IntervalOp("NOW", (0,)), (FactAtom(Term("p")),))
    with pytest.raises(SemanticError):
        RuleSet((RuleSpec("r", cf), RuleSpec("r", cf)))


def test_check_frequency_default():
    op = IntervalOp("ALWAYS", (0, 10))
    assert with_check_freq(op, 3).check_freq == 3
    assert with_check_freq(IntervalOp("ALWAYS", (0, 10), check_freq=2), 3).check_freq == 2
    s = IntervalOp("SOMETIMES", (0, 10), 2)
    assert with_check_freq(s, 3) is s


def test_ground_op_evaluates_durations_and_variables():
    op = IntervalOp("EVENTUALLY", (Var("T"), BinOp("+", Var("T"), Duration(5, "m"))), check_freq=Duration(30, "s"))
    assert free_variables(op) == {"T"}
    assert not op.is_ground()
    g = ground_op(op, {"T": 100})
    assert g == IntervalOp("EVENTUALLY", (100, 400), check_freq=30)
    with pytest.raises(GroundnessError):
        interest_interval(op, 0)


def test_substitute_requires_full_binding():
    op = IntervalOp("NOW", (Var("T"),))
    assert substitute(op, {"T": 4}).bounds == (4,)
    with pytest.raises(GroundnessError):
        substitute(op, {})


def _cf(text):
    return parse_rules(text).items[0].body


def test_binding_plan_splits_context():
    cf = _cf("rule r: ALWAYS(T, T1) (level(B), B > M) :: start_P(T), T1 = T + 1h, min(M).")
    plan = plan_binding(cf)
    assert set(plan.key_vars) == {"T", "T1", "M"}
    assert plan.local == frozenset({"B"})
    assert plan.deferred == ()


def test_context_constraint_on_local_variable_is_deferred():
    cf = _cf("rule r: NOW(0) level(B) :: B > 3.")
    plan = plan_binding(cf)
    assert len(plan.deferred) == 1 and plan.context == ()


@pytest.mark.parametrize("text", [
    "rule r: NOW(T) p.",
    "rule r: NOW(0) p :: X > 3.",
    "rule r: NOW(0) (p, X > 2).",
    "rule r: NOW(0) p :: not q(X).",
    "rule r: NOW(0) p :: T1 = T + 1, s_P(T).",
])
def test_binding_discipline_violations(text):
    with pytest.raises(SemanticError):
        parse_rules(text)


@given(st.sampled_from(sorted(OPERATORS)), st.lists(st.integers(0, 50), min_size=2, max_size=2),
       st.integers(0, 60))
def test_interest_interval_well_formed(name, bs, a):
    n = OPERATORS[name][-1]
    bounds = tuple(sorted(bs))[:n] if n == 2 else (bs[0],)
    op = IntervalOp(name, bounds, 1 if name == "SOMETIMES" else None)
    ii = interest_interval(op, a)
    assert ii.crucial >= ii.w or ii.empty
    assert ii.v >= 0
