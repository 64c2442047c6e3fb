"""Rule-file and trace-file front end, plus the canonical renderer.

Rule-file surface syntax::

    default check 30s
    rule exit_check prio 10: EVENTUALLY(T, T1; 30s) exit_customer_P(T2)
        :: enter_customer_P(T), T1 = T + 5m, T2 > T, T2 <= T1 / alert_operator
    expr refill: fill_machine_P(Q) at T : ALWAYS(T, T1) (machine_content(B), B > M)
        :: minimum(M), T1 = T + 8h ::: withdraw(_,_)+ :::: robbery
        | fill_machine(Q) || call_police

``/`` and ``//`` introduce repair and improvement atoms of a rule, ``|``
and ``||`` the violation and broken repairs of an expression. Inside event
patterns ``,`` is any-order, ``>>`` before, ``>`` immediately before and
``_`` the wildcard. Comments start with ``#`` or ``%``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, TextIO

from .errors import ParseError, SemanticError, TraceError
from .formula import (
    OPERATORS,
    ContextualFormula,
    EventPattern,
    EvolutionaryExpr,
    IntervalOp,
    PatternElement,
    RuleSet,
    RuleSpec,
    SourceSpan,
    plan_binding,
)
from .kb import Builtin, EventKind, FactAtom, NowAtom, PastEventAtom, TraceEvent
from .terms import (
    UNIT_ALIASES,
    UNIT_SECONDS,
    BinOp,
    Duration,
    Term,
    Var,
    normalize,
    render_value,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>[#%][^\n]*)
  | (?P<duration>\d+(?:months|month|mo|minutes|mins|min|seconds|secs|sec|hours|hour|days|day|s|m|h|d)(?![A-Za-z0-9_]))
  | (?P<int>\d+)
  | (?P<string>'(?:[^'\\]|\\.)*')
  | (?P<var>[A-Z][A-Za-z0-9_]*|_[A-Za-z0-9_]+)
  | (?P<anon>_)
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<op>::::|:::|::|\|\||//|>>|>=|<=|!=|==|[:|/>,<=+*\-();.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", SourceSpan(line, col, 1))
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, SourceSpan(line, col, len(chunk))))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(line, col, 0)))
    return tokens


def _duration(text: str) -> Duration:
    m = re.match(r"(\d+)([a-z]+)", text)
    unit = m.group(2)
    unit = UNIT_ALIASES.get(unit, unit)
    if unit not in UNIT_SECONDS:
        raise ValueError(unit)
    return Duration(int(m.group(1)), unit)


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


_KIND_POSTFIX = {"": None, "E": EventKind.EXTERNAL, "A": EventKind.ACTION, "I": EventKind.INTERNAL}


def _past_functor(functor: str):
    """``name_P`` or ``name_PE``/``_PA``/``_PI`` -> (name, kind or None)."""
    head, sep, tail = functor.rpartition("_P")
    if sep and head and tail in _KIND_POSTFIX:
        return head, _KIND_POSTFIX[tail]
    return None


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts) -> bool:
        t = self.tok
        return t.kind in ("op", "name") and t.text in texts

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def fail(self, msg, expected=()):
        raise ParseError(msg, self.tok.span, expected)

    def expect(self, text) -> Token:
        if not self.at(text):
            self.fail(f"unexpected {self._desc()}", [repr(text)])
        return self.advance()

    def expect_kind(self, kind, what) -> Token:
        if self.tok.kind != kind:
            self.fail(f"unexpected {self._desc()}", [what])
        return self.advance()

    def _desc(self):
        t = self.tok
        return "end of input" if t.kind == "eof" else repr(t.text)

    # -- file level
    def ruleset(self) -> RuleSet:
        items = []
        default_k = None
        default_prio = 100
        while self.tok.kind != "eof":
            if self.at("default"):
                self.advance()
                if self.at("check"):
                    self.advance()
                    default_k = self.time_const()
                elif self.at("prio"):
                    self.advance()
                    default_prio = int(self.expect_kind("int", "integer").text)
                else:
                    self.fail(f"unexpected {self._desc()}", ["'check'", "'prio'"])
            elif self.at("rule"):
                items.append(self.rule(default_prio))
            elif self.at("expr"):
                items.append(self.expr(default_prio))
            else:
                self.fail(f"unexpected {self._desc()}", ["'rule'", "'expr'", "'default'"])
            if self.at("."):
                self.advance()
        try:
            return RuleSet(tuple(items), default_k, default_prio)
        except SemanticError as e:
            raise ParseError(str(e)) from None

    def time_const(self):
        t = self.tok
        if t.kind == "duration":
            self.advance()
            return _duration(t.text)
        if t.kind == "int":
            self.advance()
            return int(t.text)
        self.fail(f"unexpected {self._desc()}", ["time constant"])

    def header(self, default_prio):
        start = self.advance().span
        name = self.expect_kind("name", "name").text
        prio = default_prio
        if self.at("prio"):
            self.advance()
            prio = int(self.expect_kind("int", "integer").text)
        self.expect(":")
        return name, prio, start

    def rule(self, default_prio) -> RuleSpec:
        name, prio, span = self.header(default_prio)
        body = self.contextual(name, stop=("/", "//"))
        repair = improvement = ()
        if self.at("/"):
            self.advance()
            repair = self.atoms()
            if self.at("//"):
                self.advance()
                improvement = self.atoms()
        elif self.at("//"):
            self.fail("improvement without repair", ["'/'"])
        try:
            rs = RuleSpec(name, body, repair, improvement, prio, span)
            plan_binding(body, owner=name)
        except SemanticError as e:
            e.span = span
            raise
        return rs

    def expr(self, default_prio) -> EvolutionaryExpr:
        name, prio, span = self.header(default_prio)
        pre = self.pattern()
        self.expect(":")
        body = self.contextual(name, stop=(":::", "::::", "|", "||"))
        expected = breaking = None
        rv = rb = ()
        if self.at(":::"):
            self.advance()
            expected = self.pattern()
        if self.at("::::"):
            self.advance()
            breaking = self.pattern()
        if self.at("|"):
            self.advance()
            rv = self.atoms()
        if self.at("||"):
            self.advance()
            rb = self.atoms()
        try:
            ex = EvolutionaryExpr(name, pre, body, expected, breaking, rv, rb, prio, span)
            plan_binding(body, pattern_vars(pre), owner=name)
        except SemanticError as e:
            e.span = span
            raise
        return ex

    def contextual(self, owner, stop) -> ContextualFormula:
        op = self.interval_op()
        if self.at("("):
            self.advance()
            phi = self.literals()
            self.expect(")")
        else:
            phi = self.literals()
        ctx = ()
        if self.at("::"):
            self.advance()
            ctx = self.literals()
        try:
            return ContextualFormula(op, phi, ctx)
        except SemanticError as e:
            raise ParseError(str(e), self.tok.span) from None

    def interval_op(self) -> IntervalOp:
        t = self.tok
        name = t.text.upper() if t.kind == "name" else t.text
        if t.kind not in ("name", "var") or name not in OPERATORS:
            self.fail(f"unexpected {self._desc()}", sorted(OPERATORS))
        self.advance()
        self.expect("(")
        bounds = [self.arith()]
        while self.at(","):
            self.advance()
            bounds.append(self.arith())
        extra = None
        if self.at(";"):
            self.advance()
            extra = self.arith()
        self.expect(")")
        try:
            if name == "SOMETIMES":
                return IntervalOp(name, tuple(bounds), freq=extra)
            return IntervalOp(name, tuple(bounds), check_freq=extra)
        except SemanticError as e:
            raise ParseError(str(e), t.span) from None

    # -- literals
    def literals(self) -> tuple:
        out = [self.literal()]
        while self.at(","):
            self.advance()
            out.append(self.literal())
        return tuple(out)

    def literal(self):
        negated = False
        if self.at("not"):
            self.advance()
            negated = True
        t = self.tok
        if t.kind == "name" and t.text == "now" and self.peek().text == "(":
            self.advance()
            self.expect("(")
            v = self.arith()
            self.expect(")")
            return NowAtom(v, negated)
        if t.kind == "name" and not self._starts_comparison():
            term = self.compound()
            past = _past_functor(term.functor)
            if past is not None:
                name, kind = past
                time = None
                if self.at("at"):
                    self.advance()
                    time = self.arith()
                return PastEventAtom(Term(name, term.args), time, negated, kind)
            return FactAtom(term, negated)
        left = self.arith()
        if not (self.tok.kind == "op" and self.tok.text in ("=", "==", "!=", "<", "<=", ">", ">=")):
            self.fail(f"unexpected {self._desc()}", ["comparison operator"])
        op = self.advance().text
        if op == "==":
            op = "="
        right = self.arith()
        return Builtin(op, left, right, negated)

    def _starts_comparison(self) -> bool:
        # a bare lowercase constant directly compared, e.g. ``minimum < B``
        nxt = self.peek()
        return nxt.kind == "op" and nxt.text in ("=", "==", "!=", "<", "<=", ">", ">=")

    def compound(self) -> Term:
        t = self.expect_kind("name", "name")
        args = ()
        if self.at("(") and self.tok.span.column == t.span.column + len(t.text) and self.tok.span.line == t.span.line:
            self.advance()
            args = [self.arith()]
            while self.at(","):
                self.advance()
                args.append(self.arith())
            self.expect(")")
            args = tuple(args)
        return Term(t.text, args)

    def atoms(self) -> tuple:
        out = [self.compound()]
        while self.at(","):
            self.advance()
            out.append(self.compound())
        return tuple(out)

    # -- arithmetic
    def arith(self):
        left = self.product()
        while self.at("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.product())
        return left

    def product(self):
        left = self.primary()
        # ``/`` before a lowercase atom separates repairs, it is not division
        while self.at("*", "/") and (self.peek().kind in ("int", "duration", "var", "anon") or self.peek().text == "("):
            op = self.advance().text
            left = BinOp(op, left, self.primary())
        return left

    def primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return int(t.text)
        if t.kind == "duration":
            self.advance()
            return _duration(t.text)
        if t.kind == "var":
            self.advance()
            return Var(t.text)
        if t.kind == "anon":
            self.advance()
            return Var("_")
        if t.kind == "string":
            self.advance()
            return _unquote(t.text)
        if t.kind == "name":
            term = self.compound()
            return term if term.args else term.functor
        if self.at("-") and self.peek().kind == "int":
            self.advance()
            return -int(self.advance().text)
        if self.at("("):
            self.advance()
            v = self.arith()
            self.expect(")")
            return v
        self.fail(f"unexpected {self._desc()}", ["term", "number", "variable"])

    # -- event patterns
    def pattern(self) -> EventPattern:
        elems = [self.pattern_element()]
        while self.at(",", ">>", ">"):
            conn = {",": "any", ">>": "before", ">": "immediate"}[self.advance().text]
            elems[-1] = PatternElement(elems[-1].term, elems[-1].mult, conn, elems[-1].time)
            elems.append(self.pattern_element())
        return EventPattern(tuple(elems))

    def pattern_element(self) -> PatternElement:
        t = self.tok
        if t.kind == "anon":
            self.advance()
            term = None
        elif t.kind == "name":
            term = self.compound()
            past = _past_functor(term.functor)
            if past is not None:
                term = Term(past[0], term.args)
        else:
            self.fail(f"unexpected {self._desc()}", ["event", "'_'"])
        mult = "one"
        if self.at("*", "+") and term is not None:
            mult = "star" if self.advance().text == "*" else "plus"
        time = None
        if self.at("at"):
            self.advance()
            time = self.primary()
        try:
            return PatternElement(term, mult, None, time)
        except SemanticError as e:
            raise ParseError(str(e), t.span) from None


def pattern_vars(p: EventPattern | None) -> set[str]:
    from .formula import free_variables

    return free_variables(p) if p is not None else set()


def parse_rules(text: str) -> RuleSet:
    return _Parser(text).ruleset()


def parse_term(text: str) -> Term:
    """Parse one ground term such as ``withdraw(c7,200)``."""
    p = _Parser(text)
    t = p.compound()
    if p.tok.kind != "eof":
        p.fail(f"trailing input {p._desc()}", ["end of term"])
    if not t.is_ground():
        raise ParseError(f"term {text!r} is not ground")
    return Term(t.functor, tuple(normalize(a) for a in t.args))


# ------------------------------------------------------------- trace files

KINDS = {k.value: k for k in EventKind}


def _parse_time(raw, lineno) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        if isinstance(raw, str) and re.fullmatch(r"\d+", raw):
            return int(raw)
        raise TraceError(f"time must be a non-negative integer, got {raw!r}", lineno)
    if raw < 0:
        raise TraceError(f"negative time {raw}", lineno)
    return raw


def parse_trace_line(line: str, lineno: int) -> TraceEvent | None:
    s = line.strip()
    if not s or s.startswith("#"):
        return None
    if s.startswith("{"):
        try:
            obj = json.loads(s)
        except json.JSONDecodeError as e:
            raise TraceError(f"bad JSON: {e.msg}", lineno) from None
        if not isinstance(obj, dict) or set(obj) != {"t", "kind", "term"}:
            raise TraceError("JSON event needs exactly the keys t, kind, term", lineno)
        t, kind, term = obj["t"], obj["kind"], obj["term"]
        if not isinstance(kind, str) or not isinstance(term, str):
            raise TraceError("kind and term must be strings", lineno)
    else:
        parts = s.split(None, 2)
        if len(parts) != 3:
            raise TraceError("expected `t kind term`", lineno)
        t, kind, term = parts
    t = _parse_time(t, lineno)
    if kind not in KINDS:
        raise TraceError(f"unknown kind `{kind}`", lineno)
    try:
        parsed = parse_term(term)
    except ParseError as e:
        raise TraceError(f"bad term {term!r}: {e}", lineno) from None
    return TraceEvent(t, KINDS[kind], parsed)


def parse_trace(stream: TextIO | str | Iterable[str]) -> list[TraceEvent]:
    if isinstance(stream, str):
        stream = stream.splitlines()
    out = []
    for lineno, line in enumerate(stream, 1):
        ev = parse_trace_line(line, lineno)
        if ev is not None:
            out.append(ev)
    return out


def render_event(ev: TraceEvent, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps({"t": ev.t, "kind": ev.kind.value, "term": render_value(ev.term)})
    return f"{ev.t} {ev.kind.value} {render_value(ev.term)}"


def render_trace(events: Iterable[TraceEvent], fmt: str = "text") -> str:
    return "".join(render_event(e, fmt) + "\n" for e in events)


# ------------------------------------------------------------- rendering


def render_literal(lit) -> str:
    neg = "not " if lit.negated else ""
    if isinstance(lit, FactAtom):
        return neg + render_value(lit.term)
    if isinstance(lit, PastEventAtom):
        t = Term(lit.term.functor + "_P" + (lit.kind.postfix if lit.kind else ""), lit.term.args)
        s = render_value(t)
        if lit.time is not None:
            s += " at " + render_value(lit.time)
        return neg + s
    if isinstance(lit, NowAtom):
        return f"{neg}now({render_value(lit.var)})"
    if isinstance(lit, Builtin):
        return f"{neg}{render_value(lit.left)} {lit.op} {render_value(lit.right)}"
    raise TypeError(lit)


def render_op(op: IntervalOp) -> str:
    inner = ", ".join(render_value(b) for b in op.bounds)
    extra = op.freq if op.freq is not None else op.check_freq
    if extra is not None:
        inner += "; " + render_value(extra)
    return f"{op.name}({inner})"


def render_pattern(p: EventPattern) -> str:
    sep = {"any": ", ", "before": " >> ", "immediate": " > "}
    out = []
    for e in p.elements:
        if e.term is None:
            s = "_"
        else:
            s = render_value(e.term)
        s += {"one": "", "star": "*", "plus": "+"}[e.mult]
        if e.time is not None:
            s += " at " + render_value(e.time)
        out.append(s)
        if e.conn is not None:
            out.append(sep[e.conn])
    return "".join(out)


def render_contextual(cf: ContextualFormula) -> str:
    phi = ", ".join(render_literal(l) for l in cf.phi)
    if len(cf.phi) > 1 or cf.phi and isinstance(cf.phi[0], Builtin):
        phi = f"({phi})"
    s = f"{render_op(cf.op)} {phi}"
    if cf.context:
        s += " :: " + ", ".join(render_literal(l) for l in cf.context)
    return s


def _atoms(atoms) -> str:
    return ", ".join(render_value(a) for a in atoms)


def render(node) -> str:
    """Canonical text; rule sets and statements are newline-terminated."""
    if isinstance(node, RuleSet):
        lines = []
        if node.default_check_freq is not None:
            lines.append(f"default check {render_value(node.default_check_freq)}\n")
        if node.default_priority != 100:
            lines.append(f"default prio {node.default_priority}\n")
        for it in node.items:
            lines.append(_render_item(it, node.default_priority))
        return "".join(lines)
    if isinstance(node, (RuleSpec, EvolutionaryExpr)):
        return _render_item(node, 100)
    if isinstance(node, ContextualFormula):
        return render_contextual(node)
    if isinstance(node, IntervalOp):
        return render_op(node)
    if isinstance(node, EventPattern):
        return render_pattern(node)
    if isinstance(node, TraceEvent):
        return render_event(node)
    if isinstance(node, (FactAtom, PastEventAtom, NowAtom, Builtin)):
        return render_literal(node)
    return render_value(node)


def _render_item(node, default_prio) -> str:
    prio = f" prio {node.priority}" if node.priority != default_prio else ""
    if isinstance(node, RuleSpec):
        s = f"rule {node.name}{prio}: {render_contextual(node.body)}"
        if node.repair:
            s += " / " + _atoms(node.repair)
        if node.improvement:
            s += " // " + _atoms(node.improvement)
        return s + "\n"
    if isinstance(node, EvolutionaryExpr):
        s = f"expr {node.name}{prio}: {render_pattern(node.precond)} : {render_contextual(node.body)}"
        if node.expected is not None:
            s += " ::: " + render_pattern(node.expected)
        if node.breaking is not None:
            s += " :::: " + render_pattern(node.breaking)
        if node.repair_violation:
            s += " | " + _atoms(node.repair_violation)
        if node.repair_broken:
            s += " || " + _atoms(node.repair_broken)
        return s + "\n"
    raise TypeError(node)
