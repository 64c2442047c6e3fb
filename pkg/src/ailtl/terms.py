"""Terms, variables, durations and arithmetic expressions.

Values inside terms are plain Python objects: ``str`` for symbolic
constants, ``int`` for integers and times (seconds), :class:`Term` for
compound terms, :class:`Var` for logic variables.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import GroundnessError, TimeOverflowError

MAX_TIME = 2**63 - 1

UNIT_SECONDS = {
    "s": 1,
    "m": 60,
    "h": 3600,
    "d": 86400,
    "mo": 2592000,
}
# long spellings accepted on input, rendered with the short suffix
UNIT_ALIASES = {
    "sec": "s", "secs": "s", "seconds": "s",
    "min": "m", "mins": "m", "minutes": "m",
    "hour": "h", "hours": "h",
    "day": "d", "days": "d",
    "month": "mo", "months": "mo",
}


def check_time(value: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise TypeError(f"time must be an integer, got {value!r}")
    if value < 0:
        raise ValueError(f"time must be non-negative, got {value}")
    if value > MAX_TIME:
        raise TimeOverflowError(f"time {value} exceeds {MAX_TIME}")
    return value


def add_time(a: int, b: int) -> int:
    total = a + b
    if total > MAX_TIME:
        raise TimeOverflowError(f"{a} + {b} overflows the time range")
    return total


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    @property
    def anonymous(self) -> bool:
        return self.name == "_"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Duration:
    """An integer count of some time unit, kept for faithful rendering."""

    amount: int
    unit: str

    @property
    def seconds(self) -> int:
        return self.amount * UNIT_SECONDS[self.unit]

    def __str__(self) -> str:
        return f"{self.amount}{self.unit}"


@dataclass(frozen=True, slots=True)
class Term:
    functor: str
    args: tuple = ()

    def __post_init__(self):
        if not self.functor:
            raise ValueError("functor must be non-empty")

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def key(self) -> tuple[str, int]:
        return (self.functor, len(self.args))

    def is_ground(self) -> bool:
        return not term_vars(self)

    def __str__(self) -> str:
        return render_value(self)


@dataclass(frozen=True, slots=True)
class BinOp:
    """Integer arithmetic: ``+``, ``-``, ``*``, ``/`` (floor division)."""

    op: str
    left: Any
    right: Any

    def __str__(self) -> str:
        return render_value(self)


_ATOM_RE = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


def render_value(v) -> str:
    if isinstance(v, Term):
        if not v.args:
            return v.functor
        return f"{v.functor}({','.join(render_value(a) for a in v.args)})"
    if isinstance(v, Var):
        return v.name
    if isinstance(v, bool):
        raise TypeError("booleans are not term values")
    if isinstance(v, int):
        return str(v) if v >= 0 else f"({v})"
    if isinstance(v, Duration):
        return str(v)
    if isinstance(v, BinOp):
        return _render_arith(v, 0)
    if isinstance(v, str):
        if _ATOM_RE.match(v):
            return v
        return "'" + v.replace("\\", "\\\\").replace("'", "\\'") + "'"
    raise TypeError(f"cannot render {v!r}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _render_arith(v, parent_prec: int, right_side: bool = False) -> str:
    if not isinstance(v, BinOp):
        return render_value(v)
    prec = _PREC[v.op]
    text = f"{_render_arith(v.left, prec)} {v.op} {_render_arith(v.right, prec, True)}"
    if prec < parent_prec or (right_side and prec == parent_prec):
        return f"({text})"
    return text


def term_vars(v, acc: set | None = None) -> set[str]:
    """Names of the named (non-anonymous) variables occurring in ``v``."""
    if acc is None:
        acc = set()
    if isinstance(v, Var):
        if not v.anonymous:
            acc.add(v.name)
    elif isinstance(v, Term):
        for a in v.args:
            term_vars(a, acc)
    elif isinstance(v, BinOp):
        term_vars(v.left, acc)
        term_vars(v.right, acc)
    return acc


def has_anonymous(v) -> bool:
    if isinstance(v, Var):
        return v.anonymous
    if isinstance(v, Term):
        return any(has_anonymous(a) for a in v.args)
    if isinstance(v, BinOp):
        return has_anonymous(v.left) or has_anonymous(v.right)
    return False


def subst_value(v, binding: Mapping[str, Any], strict: bool = False):
    """Replace bound variables; durations are kept as written."""
    if isinstance(v, Var):
        if not v.anonymous and v.name in binding:
            return binding[v.name]
        if strict and not v.anonymous:
            raise GroundnessError({v.name})
        return v
    if isinstance(v, Term):
        if not v.args:
            return v
        return Term(v.functor, tuple(subst_value(a, binding, strict) for a in v.args))
    if isinstance(v, BinOp):
        return BinOp(v.op, subst_value(v.left, binding, strict), subst_value(v.right, binding, strict))
    return v


def evaluate(v, binding: Mapping[str, Any]):
    """Evaluate an arithmetic expression to a value under ``binding``."""
    if isinstance(v, Var):
        if v.anonymous or v.name not in binding:
            raise GroundnessError({v.name}, "arithmetic")
        return binding[v.name]
    if isinstance(v, Duration):
        return v.seconds
    if isinstance(v, BinOp):
        a = evaluate(v.left, binding)
        b = evaluate(v.right, binding)
        if not (isinstance(a, int) and isinstance(b, int)):
            raise TypeError(f"non-integer operand in {render_value(v)}")
        if v.op == "+":
            r = a + b
        elif v.op == "-":
            r = a - b
        elif v.op == "*":
            r = a * b
        else:
            if b == 0:
                raise ZeroDivisionError(render_value(v))
            r = a // b
        if abs(r) > MAX_TIME:
            raise TimeOverflowError(f"{render_value(v)} overflows")
        return r
    if isinstance(v, Term) and v.args:
        return Term(v.functor, tuple(evaluate(a, binding) for a in v.args))
    if isinstance(v, Term):
        return v.functor
    return v


def unify(pattern, value, binding: dict) -> dict | None:
    """One-way match of ``pattern`` against the ground ``value``.

    Returns the extended binding (a new dict) or ``None``. Anonymous
    variables match anything without binding.
    """
    out = binding
    stack = [(pattern, value)]
    copied = False
    while stack:
        p, x = stack.pop()
        if isinstance(p, Var):
            if p.anonymous:
                continue
            if p.name in out:
                if out[p.name] != x:
                    return None
                continue
            if not copied:
                out = dict(out)
                copied = True
            out[p.name] = x
        elif isinstance(p, Term):
            if p.args:
                if not isinstance(x, Term) or x.functor != p.functor or len(x.args) != len(p.args):
                    return None
                stack.extend(zip(p.args, x.args))
            else:
                # a zero-arity term is the same constant as the bare symbol
                if isinstance(x, Term):
                    if x.functor != p.functor or x.args:
                        return None
                elif x != p.functor:
                    return None
        elif isinstance(p, Duration):
            if x != p.seconds:
                return None
        elif isinstance(p, BinOp):
            try:
                if evaluate(p, out) != x:
                    return None
            except GroundnessError:
                return None
        else:
            if isinstance(x, Term) and not x.args:
                x = x.functor
            if p != x or type(p) is not type(x):
                return None
    return out if copied else dict(binding)


def normalize(v):
    """Canonical ground value: zero-arity terms become bare symbols."""
    if isinstance(v, Term):
        if not v.args:
            return v.functor
        return Term(v.functor, tuple(normalize(a) for a in v.args))
    if isinstance(v, Duration):
        return v.seconds
    return v


def ground_term(t: Term, binding: Mapping[str, Any]) -> Term:
    """Ground a term for storage: evaluates arithmetic, normalises args."""
    if term_vars(t) - set(binding) or has_anonymous(t):
        missing = term_vars(t) - set(binding)
        raise GroundnessError(missing or {"_"}, render_value(t))
    return Term(t.functor, tuple(normalize(evaluate(a, binding)) for a in t.args))
