"""AST for interval operators, contextual formulas, rules and expressions."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import GroundnessError, SemanticError
from .kb import Builtin, FactAtom, NowAtom, PastEventAtom, binding_vars, literal_vars
from .terms import BinOp, Duration, Term, Var, evaluate, normalize, subst_value, term_vars

INF = math.inf

# operator name -> accepted bound counts
OPERATORS = {
    "NOW": (1,),
    "NEXT": (1,),
    "EVENTUALLY": (1, 2),
    "ALWAYS": (1, 2),
    "ALWAYS_S": (1, 2),
    "NEVER_B": (1,),
    "NEVER_A": (1,),
    "NEVER": (2,),
    "SOMETIMES": (1, 2),
}

# single-bound forms whose bound is an offset from the activation time
RELATIVE = {("NEXT", 1), ("EVENTUALLY", 1)}

LITERAL_TYPES = (FactAtom, PastEventAtom, Builtin, NowAtom)


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1


def _no_span():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IntervalOp:
    """``OP(m[,n][;k])``; for SOMETIMES the value after ``;`` is the frequency."""

    name: str
    bounds: tuple
    freq: Any = None
    check_freq: Any = None

    def __post_init__(self):
        if self.name not in OPERATORS:
            raise SemanticError(f"unknown operator {self.name}")
        if len(self.bounds) not in OPERATORS[self.name]:
            raise SemanticError(f"{self.name} takes {' or '.join(map(str, OPERATORS[self.name]))} bound(s)")
        if self.name == "SOMETIMES":
            if self.freq is None:
                raise SemanticError("SOMETIMES needs a frequency after ';'")
            if self.check_freq is not None:
                raise SemanticError("SOMETIMES carries its frequency, not a check frequency")
        elif self.freq is not None:
            raise SemanticError(f"{self.name} has no frequency argument")
        plain = (*self.bounds, self.freq, self.check_freq)
        if all(x is None or type(x) is int for x in plain):
            # already integers: skip the generic evaluation
            object.__setattr__(self, "_ground", True)
            object.__setattr__(self, "_values", {"bounds": self.bounds, "freq": self.freq,
                                                 "check_freq": self.check_freq})
        if self.is_ground():
            vals = self.__dict__.get("_values") or self.values()
            if len(vals["bounds"]) == 2 and vals["bounds"][0] > vals["bounds"][1]:
                raise SemanticError(f"{self.name}: lower bound {vals['bounds'][0]} exceeds upper {vals['bounds'][1]}")
            for key in ("freq", "check_freq"):
                if vals[key] is not None and vals[key] <= 0:
                    raise SemanticError(f"{self.name}: {key} must be positive")
            if any(b < 0 for b in vals["bounds"]):
                raise SemanticError(f"{self.name}: negative bound")

    @property
    def arity(self) -> int:
        return len(self.bounds)

    @property
    def relative(self) -> bool:
        return (self.name, self.arity) in RELATIVE

    def is_ground(self) -> bool:
        g = self.__dict__.get("_ground")
        if g is None:
            g = not free_variables(self)
            object.__setattr__(self, "_ground", g)
        return g

    def values(self) -> dict:
        """Integer values of bounds and frequencies (op must be ground)."""
        got = self.__dict__.get("_values")
        if got is None:
            got = self._values_uncached()
            object.__setattr__(self, "_values", got)
        return dict(got)

    def _values_uncached(self) -> dict:
        def val(x):
            if x is None:
                return None
            v = evaluate(x, {})
            if not isinstance(v, int) or isinstance(v, bool):
                raise SemanticError(f"{self.name}: non-integer bound {v!r}")
            return v

        return {
            "bounds": tuple(val(b) for b in self.bounds),
            "freq": val(self.freq),
            "check_freq": val(self.check_freq),
        }

    @property
    def key(self) -> str:
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class ContextualFormula:
    op: IntervalOp
    phi: tuple
    context: tuple = ()

    def __post_init__(self):
        for lit in self.phi + self.context:
            if isinstance(lit, (IntervalOp, ContextualFormula)):
                raise SemanticError("interval operators cannot be nested")
            if not isinstance(lit, LITERAL_TYPES):
                raise SemanticError(f"not a literal: {lit!r}")
        if not self.phi:
            raise SemanticError("monitored formula is empty")


@dataclass(frozen=True)
class RuleSpec:
    name: str
    body: ContextualFormula
    repair: tuple = ()
    improvement: tuple = ()
    priority: int = 100
    span: SourceSpan | None = _no_span()

    def __post_init__(self):
        if self.improvement and not self.repair:
            raise SemanticError("improvement given without a repair", self.name)


WILDCARD = None
MULTIPLICITIES = ("one", "star", "plus")
CONNECTIVES = ("any", "before", "immediate")


@dataclass(frozen=True)
class PatternElement:
    """One event of a pattern; ``term is None`` is the wildcard."""

    term: Term | None
    mult: str = "one"
    conn: str | None = None  # connective to the next element; None on the last
    time: Any = None  # variable bound to the event time (``at T``)

    def __post_init__(self):
        if self.mult not in MULTIPLICITIES:
            raise SemanticError(f"bad multiplicity {self.mult}")
        if self.conn is not None and self.conn not in CONNECTIVES:
            raise SemanticError(f"bad connective {self.conn}")
        if self.term is None and self.mult != "one":
            raise SemanticError("the wildcard cannot be repeated")

    @property
    def wildcard(self) -> bool:
        return self.term is None


@dataclass(frozen=True)
class EventPattern:
    elements: tuple

    def __post_init__(self):
        if not self.elements:
            raise SemanticError("empty event pattern")
        for e in self.elements[:-1]:
            if e.conn is None:
                raise SemanticError("missing connective inside pattern")
        if self.elements[-1].conn is not None:
            object.__setattr__(self, "elements", self.elements[:-1] + (dataclasses.replace(self.elements[-1], conn=None),))

    def groups(self) -> list[tuple[list[int], str | None]]:
        """Maximal any-order runs as (element indices, connective to next group)."""
        out, cur = [], []
        for i, e in enumerate(self.elements):
            cur.append(i)
            if e.conn != "any":
                out.append((cur, e.conn))
                cur = []
        return out


@dataclass(frozen=True)
class EvolutionaryExpr:
    name: str
    precond: EventPattern
    body: ContextualFormula
    expected: EventPattern | None = None
    breaking: EventPattern | None = None
    repair_violation: tuple = ()
    repair_broken: tuple = ()
    priority: int = 100
    span: SourceSpan | None = _no_span()


@dataclass(frozen=True)
class RuleSet:
    items: tuple = ()
    default_check_freq: Any = None
    default_priority: int = 100

    def __post_init__(self):
        seen = set()
        for it in self.items:
            if it.name in seen:
                raise SemanticError(f"duplicate name {it.name}")
            seen.add(it.name)

    @property
    def rules(self) -> list[RuleSpec]:
        return [i for i in self.items if isinstance(i, RuleSpec)]

    @property
    def expressions(self) -> list[EvolutionaryExpr]:
        return [i for i in self.items if isinstance(i, EvolutionaryExpr)]

    def get(self, name: str):
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)


@dataclass(frozen=True)
class InterestInterval:
    v: int
    w: float
    crucial: float
    checkpoints: tuple | None = None  # SOMETIMES only; unbounded forms list none

    @property
    def empty(self) -> bool:
        return self.w < self.v


def interest_interval(op: IntervalOp, activation_time: int) -> InterestInterval:
    """Times of the first and last checked states and of the crucial state."""
    if not op.is_ground():
        raise GroundnessError(free_variables(op), f"{op.name} bounds")
    vals = op.values()
    b = vals["bounds"]
    a = activation_time
    name, n = op.name, op.arity
    if name == "NOW":
        return InterestInterval(b[0], b[0], b[0])
    if name == "NEXT":
        return InterestInterval(a + b[0], a + b[0], a + b[0])
    if name == "EVENTUALLY" and n == 1:
        return InterestInterval(a, a + b[0], a + b[0])
    if name in ("EVENTUALLY", "ALWAYS", "NEVER") and n == 2:
        return InterestInterval(b[0], b[1], b[1])
    if name == "ALWAYS" and n == 1:
        return InterestInterval(b[0], INF, INF)
    if name == "ALWAYS_S" and n == 1:
        return InterestInterval(0, INF, INF)
    if name == "ALWAYS_S":
        return InterestInterval(0, b[1], b[1] + 1)
    if name == "NEVER_B":
        return InterestInterval(0, b[0] - 1, b[0] - 1)
    if name == "NEVER_A":
        return InterestInterval(b[0] + 1, INF, INF)
    if name == "SOMETIMES":
        f = vals["freq"]
        if n == 1:
            return InterestInterval(b[0], INF, INF)
        last = b[0] + ((b[1] - b[0]) // f) * f
        return InterestInterval(b[0], last, last, tuple(range(b[0], last + 1, f)))
    raise AssertionError(op)


def with_check_freq(op: IntervalOp, k) -> IntervalOp:
    """Apply a ruleset-wide default check frequency where none is given."""
    if k is None or op.check_freq is not None or op.name == "SOMETIMES":
        return op
    return dataclasses.replace(op, check_freq=k)


# ---------------------------------------------------------- variables


def free_variables(node) -> set[str]:
    """Named variables occurring anywhere in an AST node."""
    if node is None or isinstance(node, (int, str, Duration)):
        return set()
    if isinstance(node, (Var, Term, BinOp)):
        return term_vars(node)
    if isinstance(node, (tuple, list)):
        out = set()
        for x in node:
            out |= free_variables(x)
        return out
    if isinstance(node, LITERAL_TYPES):
        return literal_vars(node)
    if dataclasses.is_dataclass(node):
        out = set()
        for f in dataclasses.fields(node):
            if f.name in ("span", "name"):
                continue
            out |= free_variables(getattr(node, f.name))
        return out
    return set()


def substitute(node, binding: Mapping[str, Any]):
    """Ground ``node`` under ``binding``; every free variable must be covered."""
    missing = free_variables(node) - set(binding)
    if missing:
        raise GroundnessError(missing, "substitute")
    return _subst(node, binding)


_SKIP = ("span", "name", "negated", "op", "kind", "mult", "conn")
_FIELDS: dict = {}


def _subst_fields(cls) -> tuple:
    names = _FIELDS.get(cls)
    if names is None:
        names = tuple(f.name for f in dataclasses.fields(cls))
        _FIELDS[cls] = names
    return names


def _subst(node, binding):
    if node is None or isinstance(node, (int, str, Duration)):
        return node
    if isinstance(node, (Var, Term, BinOp)):
        return subst_value(node, binding)
    if isinstance(node, tuple):
        return tuple(_subst(x, binding) for x in node)
    if dataclasses.is_dataclass(node):
        changes = {}
        for name in _subst_fields(type(node)):
            old = getattr(node, name)
            if name in _SKIP and not dataclasses.is_dataclass(old):
                continue
            new = _subst(old, binding)
            if new is not old:
                changes[name] = new
        return dataclasses.replace(node, **changes) if changes else node
    return node


def ground_op(op: IntervalOp, binding: Mapping[str, Any]) -> IntervalOp:
    """Evaluate every bound and frequency of ``op`` to an integer."""
    if all(type(x) is int or x is None for x in (*op.bounds, op.freq, op.check_freq)):
        return op

    def g(x):
        return None if x is None else normalize(evaluate(x, binding))

    return IntervalOp(op.name, tuple(g(b) for b in op.bounds), g(op.freq), g(op.check_freq))


def partial_substitute(node, binding: Mapping[str, Any]):
    """Substitute the bound variables only, leaving the rest free."""
    return _subst(node, binding)


# ---------------------------------------------------------- context binding


def bindable(literals, bound: set[str]) -> set[str]:
    """Fixpoint of variables bound by the positive literals in ``literals``."""
    bound = set(bound)
    changed = True
    while changed:
        changed = False
        for lit in literals:
            if lit.negated:
                continue
            if isinstance(lit, Builtin):
                if lit.op == "=" and isinstance(lit.left, Var) and not lit.left.anonymous:
                    if lit.left.name not in bound and term_vars(lit.right) <= bound:
                        bound.add(lit.left.name)
                        changed = True
                continue
            new = binding_vars(lit) - bound
            if new:
                bound |= new
                changed = True
    return bound


@dataclass(frozen=True)
class BindingPlan:
    """How a contextual formula is grounded at activation."""

    context: tuple  # literals evaluated to bind the formula
    deferred: tuple  # context constraints over monitored-formula-local variables
    local: frozenset  # variables bound inside the monitored formula itself
    key_vars: tuple  # variables identifying one activation


def plan_binding(cf: ContextualFormula, prebound=frozenset(), owner: str | None = None) -> BindingPlan:
    """Check the binding discipline and split the context.

    Variables in bounds and frequencies must be bound by the context (or
    ``prebound``, e.g. by a precondition pattern). Variables of the
    monitored formula may also be bound by its own positive literals; any
    context constraint mentioning such a variable is deferred and checked
    together with the monitored formula.
    """
    ctx_bound = bindable(cf.context, set(prebound))
    op_vars = free_variables(cf.op)
    missing = op_vars - ctx_bound
    if missing:
        raise SemanticError(
            f"variable(s) {', '.join(sorted(missing))} in operator bounds not bound by a positive context literal",
            owner,
        )
    local = bindable(cf.phi, ctx_bound) - ctx_bound
    allowed = ctx_bound | local
    phi_missing = free_variables(cf.phi) - allowed
    if phi_missing:
        raise SemanticError(
            f"variable(s) {', '.join(sorted(phi_missing))} in monitored formula not bound by the context",
            owner,
        )
    ctx, deferred = [], []
    for lit in cf.context:
        if literal_vars(lit) & local:
            deferred.append(lit)
        else:
            ctx.append(lit)
    # the context proper must be evaluable left to right
    bound = set(prebound)
    for lit in ctx:
        from .kb import required_vars

        need = required_vars(lit, bound)
        if need:
            raise SemanticError(
                f"variable(s) {', '.join(sorted(need))} used before being bound in the context",
                owner,
            )
        bound |= binding_vars(lit)
    leftover = free_variables(tuple(deferred)) - (allowed)
    if leftover:
        raise SemanticError(f"variable(s) {', '.join(sorted(leftover))} never bound", owner)
    key = tuple(sorted(bound | set(prebound)))
    return BindingPlan(tuple(ctx), tuple(deferred), frozenset(local), key)
