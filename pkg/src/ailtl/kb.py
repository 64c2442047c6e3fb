"""Timed knowledge timeline: facts, past events and literal queries.

The timeline is a monotonic sequence of immutable :class:`Snapshot`
values. Each snapshot carries the ground facts true at that state and the
agent history: the current version of every past event plus the
superseded versions.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Sequence

from .errors import GroundnessError, TraceError
from .terms import (
    BinOp,
    Duration,
    Term,
    Var,
    check_time,
    evaluate,
    normalize,
    render_value,
    term_vars,
    unify,
)


class EventKind(enum.Enum):
    EXTERNAL = "external"
    ACTION = "action"
    INTERNAL = "internal"
    ASSERT = "assert"
    RETRACT = "retract"

    @property
    def is_event(self) -> bool:
        return self in (EventKind.EXTERNAL, EventKind.ACTION, EventKind.INTERNAL)

    @property
    def postfix(self) -> str:
        return {"external": "E", "action": "A", "internal": "I"}.get(self.value, "")


_EVENT_KINDS = (EventKind.EXTERNAL, EventKind.ACTION, EventKind.INTERNAL)


@dataclass(frozen=True, slots=True)
class TraceEvent:
    t: int
    kind: EventKind
    term: Term

    def __post_init__(self):
        check_time(self.t)
        if not self.term.is_ground():
            raise TraceError(f"event term {self.term} is not ground")


@dataclass(frozen=True, slots=True)
class PastEvent:
    term: Term
    kind: EventKind
    t: int

    @property
    def key(self):
        return (self.term.functor, len(self.term.args), self.kind)

    def __str__(self):
        return f"{self.term}_P{self.kind.postfix}:{self.t}"


class History:
    """The pair (current past events, superseded past events).

    All snapshots of one timeline share a single append-only occurrence
    log; a history only remembers how much of it is visible, so producing
    a successor is cheap.
    """

    __slots__ = ("_current", "_log", "_upto")

    def __init__(self, current=None, log=None, upto=0):
        self._current: dict = current if current is not None else {}
        self._log: list[PastEvent] = log if log is not None else []
        self._upto = upto

    @property
    def p(self) -> frozenset[PastEvent]:
        return frozenset(self._current.values())

    @property
    def pnv(self) -> list[PastEvent]:
        """Superseded versions: every visible occurrence that is not current."""
        current = {id(e) for e in self._current.values()}
        return [e for e in self._log[: self._upto] if id(e) not in current]

    def occurrences(self, since: int = 0) -> list[PastEvent]:
        """Every recorded occurrence with ``t >= since`` in arrival order."""
        log = self._log[: self._upto]
        if since <= 0:
            return list(log)
        i = bisect.bisect_left(log, since, key=lambda e: e.t)
        return log[i:]

    def current(self, functor=None, arity=None):
        for e in self._current.values():
            if functor is not None and e.term.functor != functor:
                continue
            if arity is not None and len(e.term.args) != arity:
                continue
            yield e

    def versions(self, functor: str, arities, kind=None) -> list:
        """Current versions of ``functor`` at the given arities, optionally of one kind."""
        kinds = _EVENT_KINDS if kind is None else (kind,)
        cur = self._current
        out = []
        for n in arities:
            for k in kinds:
                e = cur.get((functor, n, k))
                if e is not None:
                    out.append(e)
        return out

    def record(self, ev: PastEvent) -> "History":
        cur = dict(self._current)
        cur[ev.key] = ev
        if len(self._log) != self._upto:
            # a fork of an older history: copy the visible prefix
            log = self._log[: self._upto]
        else:
            log = self._log
        log.append(ev)
        return History(cur, log, self._upto + 1)

    def __eq__(self, other):
        if not isinstance(other, History):
            return NotImplemented
        return self._current == other._current and self._log[: self._upto] == other._log[: other._upto]

    def __len__(self):
        return self._upto

    def __repr__(self):
        return f"History(p={sorted(map(str, self.p))}, pnv={[str(e) for e in self.pnv]})"


@dataclass(frozen=True)
class Snapshot:
    index: int
    t: int
    facts: frozenset
    history: History = field(compare=False)
    events: tuple = ()
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def holds_fact(self, term: Term) -> bool:
        return term in self.facts

    def facts_of(self, functor: str, arity: int, first=None) -> list:
        """Facts with this functor and arity, in canonical order (cached).

        ``first``, if given, keeps only facts with that first argument.
        """
        key = (functor, arity, first)
        got = self._index.get(key)
        if got is None:
            got = [f for f in self.facts if f.functor == functor and len(f.args) == arity
                   and (first is None or f.args[0] == first)]
            if len(got) > 1:
                got.sort(key=render_value)
            self._index[key] = got
        return got


class Timeline:
    """Single-writer builder of the snapshot sequence."""

    def __init__(self):
        self.snapshots: list[Snapshot] = []
        self._times: list[int] = []

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    @property
    def last(self) -> Snapshot | None:
        return self.snapshots[-1] if self.snapshots else None

    def ingest(self, ev: TraceEvent) -> Snapshot:
        """Apply one event; events sharing the latest timestamp fold into its state."""
        return self.ingest_batch(ev.t, [ev])

    def ingest_batch(self, t: int, events: Sequence[TraceEvent]) -> Snapshot:
        check_time(t)
        last = self.last
        if last is not None and t < last.t:
            raise TraceError(f"non-monotonic timestamp {t} after {last.t}")
        for ev in events:
            if ev.t != t:
                raise TraceError(f"event at {ev.t} folded into state at {t}")
        if last is not None and t == last.t:
            base_facts, base_hist, prior = last.facts, last.history, last.events
            index = last.index
            self.snapshots.pop()
            self._times.pop()
        elif last is not None:
            base_facts, base_hist, prior = last.facts, last.history, ()
            index = last.index + 1
        else:
            base_facts, base_hist, prior = frozenset(), History(), ()
            index = 0
        facts = set(base_facts)
        hist = base_hist
        for ev in events:
            if ev.kind is EventKind.ASSERT:
                facts.add(ev.term)
            elif ev.kind is EventKind.RETRACT:
                if ev.term not in facts:
                    raise TraceError(f"retract of absent fact {ev.term} at t={ev.t}")
                facts.discard(ev.term)
            else:
                hist = hist.record(PastEvent(ev.term, ev.kind, ev.t))
        snap = Snapshot(index, t, frozenset(facts), hist, prior + tuple(events))
        self.snapshots.append(snap)
        self._times.append(t)
        return snap

    def snapshot_at(self, t: int, mode: str = "first_at_or_after") -> Snapshot | None:
        if not self.snapshots:
            raise ValueError("empty timeline")
        if mode == "first_at_or_after":
            i = bisect.bisect_left(self._times, t)
            return self.snapshots[i] if i < len(self.snapshots) else None
        if mode == "last_at_or_before":
            i = bisect.bisect_right(self._times, t) - 1
            return self.snapshots[i] if i >= 0 else None
        raise ValueError(f"unknown mode {mode!r}")


def ingest_event(timeline: Timeline, ev: TraceEvent) -> Snapshot:
    return timeline.ingest(ev)


def snapshot_at(timeline: Timeline, t: int, mode: str = "first_at_or_after") -> Snapshot | None:
    return timeline.snapshot_at(t, mode)


def build_timeline(events: Sequence[TraceEvent]) -> Timeline:
    tl = Timeline()
    for ev in events:
        tl.ingest(ev)
    return tl


def trace_from_valuations(times: Sequence[int], rows: Sequence[Mapping[str, bool]],
                          tick: str = "tick") -> list[TraceEvent]:
    """Trace whose state at ``times[i]`` makes exactly the true atoms of
    ``rows[i]`` hold. Each state also records a ``tick`` event so that
    states with no fact change still exist.
    """
    events = []
    current: set = set()
    for t, row in zip(times, rows):
        events.append(TraceEvent(t, EventKind.EXTERNAL, Term(tick)))
        for atom, value in sorted(row.items()):
            if value and atom not in current:
                events.append(TraceEvent(t, EventKind.ASSERT, Term(atom)))
                current.add(atom)
            elif not value and atom in current:
                events.append(TraceEvent(t, EventKind.RETRACT, Term(atom)))
                current.discard(atom)
    return events


# ---------------------------------------------------------------- literals


@dataclass(frozen=True, slots=True)
class FactAtom:
    term: Term
    negated: bool = False


@dataclass(frozen=True, slots=True)
class PastEventAtom:
    """``name_P(args)`` optionally ``at T``.

    Without an explicit time, a call with one argument more than the
    recorded event reads the extra trailing argument as the timestamp.
    """

    term: Term
    time: Any = None
    negated: bool = False
    kind: EventKind | None = None


@dataclass(frozen=True, slots=True)
class Builtin:
    """Comparison ``left op right``; ``X = expr`` binds an unbound ``X``."""

    op: str
    left: Any
    right: Any
    negated: bool = False


@dataclass(frozen=True, slots=True)
class NowAtom:
    var: Any
    negated: bool = False


Literal = FactAtom | PastEventAtom | Builtin | NowAtom

COMPARISONS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def literal_vars(lit) -> set[str]:
    if isinstance(lit, FactAtom):
        return term_vars(lit.term)
    if isinstance(lit, PastEventAtom):
        return term_vars(lit.term) | term_vars(lit.time)
    if isinstance(lit, Builtin):
        return term_vars(lit.left) | term_vars(lit.right)
    if isinstance(lit, NowAtom):
        return term_vars(lit.var)
    raise TypeError(lit)


def binding_vars(lit) -> set[str]:
    """Variables a positive literal can bind when evaluated."""
    if lit.negated:
        return set()
    if isinstance(lit, Builtin):
        if lit.op == "=" and isinstance(lit.left, Var) and not lit.left.anonymous:
            return {lit.left.name}
        return set()
    return literal_vars(lit)


def required_vars(lit, bound: set[str]) -> set[str]:
    """Variables that must already be bound before ``lit`` is evaluated."""
    if isinstance(lit, Builtin):
        needed = literal_vars(lit)
        if not lit.negated and lit.op == "=" and isinstance(lit.left, Var):
            if lit.left.name not in bound:
                needed = term_vars(lit.right)
        return needed - bound
    if lit.negated:
        return literal_vars(lit) - bound
    return set()


def _render_lit(lit) -> str:
    from .parser import render_literal

    return render_literal(lit)


def _compare(op, a, b) -> bool:
    try:
        return COMPARISONS[op](a, b)
    except TypeError:
        return False


_LIT_INFO: dict = {}


def _info(lit) -> tuple:
    """(literal, variables, pattern is ground, positive version), cached per literal object."""
    hit = _LIT_INFO.get(id(lit))
    if hit is not None and hit[0] is lit:
        return hit
    if len(_LIT_INFO) > 100_000:
        _LIT_INFO.clear()
    vs = frozenset(literal_vars(lit))
    ground = isinstance(lit, FactAtom) and not term_vars(lit.term) and not _has_anon(lit.term)
    pos = _positive_version(lit) if lit.negated else lit
    hit = _LIT_INFO[id(lit)] = (lit, vs, ground, pos)
    return hit


def _positive_matches(snapshot: Snapshot, lit, binding: dict) -> Iterator[dict]:
    if isinstance(lit, FactAtom):
        pat = lit.term
        if _info(lit)[2]:
            g = _ground_pattern(pat, binding)
            if g in snapshot.facts:
                yield dict(binding)
            return
        # partial grounding narrows the scan to one functor/arity
        first = _ground_first(pat, binding)
        for fact in snapshot.facts_of(pat.functor, len(pat.args), first):
            b = unify(pat, fact, binding)
            if b is not None:
                yield b
        return
    if isinstance(lit, PastEventAtom):
        pat = lit.term
        n = len(pat.args)
        evs = snapshot.history.versions(pat.functor, (n, n - 1) if n else (0,), lit.kind)
        if len(evs) > 1:
            evs.sort(key=_pe_order)
        for ev in evs:
            if lit.kind is not None and ev.kind is not lit.kind:
                continue
            m = len(ev.term.args)
            if m == n:
                b = unify(pat, ev.term, binding)
                if b is not None and lit.time is not None:
                    b = unify(lit.time, ev.t, b)
                if b is not None:
                    yield b
            elif m == n - 1 and lit.time is None:
                b = unify(Term(pat.functor, pat.args[:-1]), ev.term, binding)
                if b is not None:
                    b = unify(pat.args[-1], ev.t, b)
                if b is not None:
                    yield b
        return
    if isinstance(lit, NowAtom):
        b = unify(lit.var, snapshot.t, binding)
        if b is not None:
            yield b
        return
    if isinstance(lit, Builtin):
        if lit.op == "=" and isinstance(lit.left, Var) and not lit.left.anonymous and lit.left.name not in binding:
            value = _eval(lit.right, binding, lit)
            b = dict(binding)
            b[lit.left.name] = value
            yield b
            return
        a = _eval(lit.left, binding, lit)
        c = _eval(lit.right, binding, lit)
        if _compare(lit.op, a, c):
            yield dict(binding)
        return
    raise TypeError(f"not a literal: {lit!r}")


def _pe_order(e: PastEvent):
    return (e.t, render_value(e.term), e.kind.value)


def _has_anon(v) -> bool:
    from .terms import has_anonymous

    return has_anonymous(v)


def _ground_pattern(pat: Term, binding):
    return Term(pat.functor, tuple(normalize(evaluate(a, binding)) for a in pat.args))


def _ground_first(pat: Term, binding: Mapping):
    """Value of the first argument when it is a constant or a bound variable."""
    if not pat.args:
        return None
    a = pat.args[0]
    if isinstance(a, Var):
        return None if a.anonymous else binding.get(a.name)
    if isinstance(a, (int, str)):
        return a
    if isinstance(a, Term) and not a.args:
        return a.functor
    return None


def _eval(expr, binding, lit):
    try:
        value = evaluate(expr, binding)
    except GroundnessError:
        raise GroundnessError(term_vars(expr) - set(binding) or {"_"}, _render_lit(lit)) from None
    return normalize(value)


def query_literal(snapshot: Snapshot, lit, binding: Mapping | None = None) -> Iterator[dict]:
    """Yield every extension of ``binding`` under which ``lit`` holds.

    ``binding`` is never mutated; yielded bindings may share it.
    """
    if binding is None:
        binding = {}
    if lit.negated:
        _, vs, _, positive = _info(lit)
        if not vs <= binding.keys():
            raise GroundnessError(set(vs - binding.keys()), _render_lit(lit))
        for _ in _positive_matches(snapshot, positive, binding):
            return
        yield binding
        return
    yield from _positive_matches(snapshot, lit, binding)


def _positive_version(lit):
    cls = type(lit)
    kwargs = {f: getattr(lit, f) for f in lit.__slots__}
    kwargs["negated"] = False
    return cls(**kwargs)


def query(snapshot: Snapshot, literals: Sequence, binding: Mapping | None = None) -> Iterator[dict]:
    """Left-to-right conjunctive query with variable binding."""
    def go(i, b):
        if i == len(literals):
            yield b
            return
        for b2 in query_literal(snapshot, literals[i], b):
            yield from go(i + 1, b2)

    yield from go(0, dict(binding or {}))


def holds(snapshot: Snapshot, literals: Sequence, binding: Mapping | None = None) -> bool:
    """Whether some extension of ``binding`` satisfies every literal."""
    n = len(literals)

    def go(i, b):
        if i == n:
            return True
        for b2 in query_literal(snapshot, literals[i], b):
            if go(i + 1, b2):
                return True
        return False

    return go(0, dict(binding or {}))


__all__ = [
    "Builtin", "Duration", "EventKind", "FactAtom", "History", "NowAtom", "PastEvent",
    "PastEventAtom", "Snapshot", "Timeline", "TraceEvent", "BinOp", "Var", "Term",
    "build_timeline", "holds", "ingest_event", "query", "query_literal", "snapshot_at",
    "trace_from_valuations",
]
