"""The check layer over a trace: activation, stepping, repairs, report.

Each tick (a distinct timestamp) is processed as follows:

1. the tick's events are ingested, producing the new snapshot;
2. every event is fed, in order, to the live expression instances
   (breaking and expected patterns) and then to the expression
   preconditions, which may spawn new instances;
3. rule contexts are evaluated and new ground bindings spawn instances;
4. operator instances are stepped against the snapshot;
5. instances that finished in this tick dispatch their repair or
   improvement atoms, in (priority, declaration, creation) order.

Atoms dispatched at a tick become events of the next state, which is the
next trace timestamp if it is one second later, or a fresh state at
``t + 1`` otherwise.

Instances are only visited when something they read changed, when a
boundary of their interval is reached, or when a check time is due; on
the other ticks stepping them would be a no-op.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import AiltlError, GroundnessError, TraceError
from .evaluator import OpInstance, Verdict, due, finalize, observe, probe, wake_time
from .formula import (
    INF,
    EvolutionaryExpr,
    EventPattern,
    RuleSet,
    RuleSpec,
    free_variables,
    ground_op,
    plan_binding,
    with_check_freq,
)
from .kb import (
    EventKind,
    FactAtom,
    NowAtom,
    PastEventAtom,
    Snapshot,
    Timeline,
    TraceEvent,
    holds,
    query,
)
from .matcher import MatcherState, Status, advance, exported_vars, start
from .terms import Term, Var, evaluate, ground_term, has_anonymous, normalize, render_value


class Lifecycle(enum.Enum):
    WAITING = "Waiting"
    ACTIVE = "Active"
    DONE = "Done"


class Cause(enum.Enum):
    VIOLATION = "Violation"
    IMPROVEMENT = "Improvement"
    BROKEN = "Broken"


class Coherence(enum.Enum):
    COHERENT = "Coherent"
    WEAKLY_COHERENT = "WeaklyCoherent"
    INCOHERENT = "Incoherent"


@dataclass(frozen=True)
class RepairAction:
    atom: Term
    cause: Cause
    issued_at: int
    source: str = ""


# ------------------------------------------------------------- handlers


def _as_term(v) -> Term:
    if isinstance(v, Term):
        return v
    if isinstance(v, str):
        return Term(v)
    raise AiltlError(f"{render_value(v)} is not a term")


def _assert(atom: Term):
    return [(EventKind.ASSERT, _as_term(a)) for a in atom.args]


def _retract(atom: Term):
    return [(EventKind.RETRACT, _as_term(a)) for a in atom.args]


def _emit(atom: Term):
    return [(EventKind.ACTION, _as_term(a)) for a in atom.args]


class HandlerRegistry:
    """Maps repair functors to callables returning ``(kind, term)`` pairs.

    ``assert(f)``, ``retract(f)`` and ``emit(e)`` are built in; any other
    atom is performed as an action event carrying the atom itself.
    """

    def __init__(self, handlers: Mapping[str, Callable] | None = None, builtins: bool = True):
        self._handlers: dict[str, Callable] = {}
        if builtins:
            self._handlers.update({"assert": _assert, "retract": _retract, "emit": _emit})
        for name, fn in (handlers or {}).items():
            self.register(name, fn)

    def register(self, functor: str, fn: Callable) -> None:
        self._handlers[functor] = fn

    def dispatch(self, atom: Term) -> list[tuple[EventKind, Term]]:
        fn = self._handlers.get(atom.functor)
        if fn is None:
            return [(EventKind.ACTION, atom)]
        return list(fn(atom) or ())


# ------------------------------------------------------------ instances


def _dep_key(term: Term, env: Mapping):
    """Subscription key of an atom: its functor, narrowed by a ground first argument."""
    if term.args:
        a = term.args[0]
        if isinstance(a, Var) and not a.anonymous and a.name in env:
            a = env[a.name]
        if not free_variables(a) and not has_anonymous(a):
            try:
                return (term.functor, normalize(evaluate(a, env)))
            except (AiltlError, ArithmeticError, TypeError):
                pass
    return term.functor


def _touch_keys(term: Term) -> tuple:
    if term.args:
        return (term.functor, (term.functor, term.args[0]))
    return (term.functor,)


def _deps(literals, env: Mapping | None = None) -> tuple[frozenset, bool]:
    """Keys read by ``literals`` and whether they read the clock."""
    env = env or {}
    keys = set()
    clock = False
    for lit in literals:
        if isinstance(lit, (FactAtom, PastEventAtom)):
            keys.add(_dep_key(lit.term, env))
        elif isinstance(lit, NowAtom):
            clock = True
    return frozenset(keys), clock


def _pattern_index(p: EventPattern | None):
    """Functors of a pattern and whether every event must be fed to it."""
    if p is None:
        return frozenset(), False
    keys = frozenset(_dep_key(e.term, {}) for e in p.elements if e.term is not None)
    needs_all = any(e.term is None or e.conn == "immediate" for e in p.elements)
    return keys, needs_all


def _route(templates, indexes) -> tuple[dict, tuple]:
    """Touch key -> positions of the templates whose patterns it may advance."""
    route: dict = {}
    always = []
    for pos, tpl in enumerate(templates):
        idx = indexes(tpl)
        if any(needs_all for _, needs_all in idx):
            always.append(pos)
            continue
        for keys, _ in idx:
            for k in keys:
                route.setdefault(k, set()).add(pos)
    return route, tuple(always)


def _candidates(route, always, touch_keys) -> list[int]:
    hit = set(always)
    for k in touch_keys:
        s = route.get(k)
        if s:
            hit |= s
    return sorted(hit)


def _hits(index, touch_keys) -> bool:
    keys, needs_all = index
    return needs_all or any(k in keys for k in touch_keys)


@dataclass(eq=False)
class MonitorInstance:
    source: str
    order: tuple  # (priority, declaration index, creation index)
    binding: dict  # key binding identifying the activation
    op_instance: OpInstance
    expr: EvolutionaryExpr | None = None
    full_binding: dict = field(default_factory=dict)
    expected: MatcherState | None = None
    breaking: MatcherState | None = None
    lifecycle: Lifecycle = Lifecycle.ACTIVE
    outcome: str | None = None
    outcome_at: int | None = None
    deps: frozenset = frozenset()
    clock: bool = False
    wake: float = INF
    dispatched: bool = False
    phi_id: int = 0

    @property
    def final(self) -> str:
        if self.outcome is not None:
            return self.outcome
        return finalize(self.op_instance).value

    def verdicts(self) -> list[tuple[int, str]]:
        out = [(t, v.value) for t, v in self.op_instance.timeline]
        if self.outcome is not None and (not out or out[-1][1] != self.outcome):
            out.append((self.outcome_at, self.outcome))
        return out


_COMPILED: dict = {}


def _compile(item, k) -> dict:
    """Trace-independent data of one rule or expression (memoised by identity)."""
    hit = _COMPILED.get((id(item), k))
    if hit is not None and hit[0] is item:
        return hit[1]
    if isinstance(item, EvolutionaryExpr):
        plan = plan_binding(item.body, exported_vars(item.precond), owner=item.name)
    else:
        plan = plan_binding(item.body, owner=item.name)
    ctx_deps, ctx_clock = _deps(plan.context)
    op = with_check_freq(item.body.op, k)
    phi = item.body.phi + plan.deferred
    static = {
        "plan": plan, "ctx_deps": ctx_deps, "ctx_clock": ctx_clock,
        "op": op, "op_vars": frozenset(free_variables(op)),
        "phi": phi, "phi_deps": _deps(phi),
        "phi_vars": tuple(sorted(free_variables(phi) - plan.local)),
    }
    if isinstance(item, EvolutionaryExpr):
        pre_keys, pre_all = _pattern_index(item.precond)
        static.update(pre_keys=pre_keys, pre_all=pre_all, exp_index=_pattern_index(item.expected),
                      brk_index=_pattern_index(item.breaking))
    if len(_COMPILED) > 10_000:
        _COMPILED.clear()
    _COMPILED[(id(item), k)] = (item, static)
    return static


@dataclass
class _Template:
    item: RuleSpec | EvolutionaryExpr
    decl: int
    plan: object
    ctx_deps: frozenset
    ctx_clock: bool
    seen: set = field(default_factory=set)
    instances: list = field(default_factory=list)
    precond: MatcherState | None = None
    pre_keys: frozenset = frozenset()
    pre_all: bool = False
    exp_index: tuple = (frozenset(), False)
    brk_index: tuple = (frozenset(), False)
    active: list = field(default_factory=list)  # live expression instances
    op: object = None  # operator with the default check frequency applied
    op_vars: frozenset = frozenset()
    phi: tuple = ()
    phi_deps: tuple = (frozenset(), False)
    phi_vars: tuple = ()  # context variables phi reads
    phi_id: int = 0  # shared by templates with an identical phi

    @property
    def is_expr(self) -> bool:
        return isinstance(self.item, EvolutionaryExpr)

    @property
    def name(self) -> str:
        return self.item.name

    @property
    def priority(self) -> int:
        return self.item.priority


def _jsonable(v):
    if isinstance(v, int) and not isinstance(v, bool):
        return v
    return render_value(v)


# --------------------------------------------------------------- report


@dataclass
class MonitorReport:
    rules: list  # [{"name", "activations": [...]}]
    repairs: list[RepairAction]
    coherence: Coherence
    diagnostics: list  # [{"t", "kind", "source", "message"}]
    timeline: Timeline | None = field(default=None, repr=False, compare=False)
    instances: list = field(default_factory=list, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "rules": self.rules,
            "repairs": [
                {"t": r.issued_at, "atom": render_value(r.atom), "cause": r.cause.value}
                for r in self.repairs
            ],
            "coherence": self.coherence.value,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_text(self, color: bool | None = None) -> str:
        return render_text(self.to_dict(), color)


_STYLE = {
    "Holds": "32", "Coherent": "32", "Discharged": "36",
    "WeakHolds": "33", "WeaklyCoherent": "33", "Provisional": "33",
    "Violated": "31", "Broken": "31", "Incoherent": "31", "PatternIncompatible": "35",
}


def color_enabled(stream=None) -> bool:
    flag = os.environ.get("AILTL_COLOR")
    if flag == "0":
        return False
    if flag == "1":
        return True
    return bool(stream is not None and hasattr(stream, "isatty") and stream.isatty())


def render_text(doc: dict, color: bool | None = None) -> str:
    """Aligned plain-text rendering of a report document."""
    if color is None:
        color = False

    def paint(s: str) -> str:
        code = _STYLE.get(s)
        return f"\x1b[{code}m{s}\x1b[0m" if color and code else s

    lines = [f"coherence: {paint(doc['coherence'])}"]
    rows = []
    for rule in doc["rules"]:
        if not rule["activations"]:
            rows.append((rule["name"], "-", "never activated", ""))
        for act in rule["activations"]:
            binding = " ".join(f"{k}={v}" for k, v in act["binding"].items()) or "-"
            steps = " ".join(f"{v['value']}@{v['t']}" for v in act["verdicts"])
            rows.append((rule["name"], binding, steps, act["final"]))
    if rows:
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines.append("")
        lines.append("  ".join(h.ljust(w) for h, w in zip(("rule", "binding", "verdicts"), widths)) + "  final")
        for r in rows:
            cells = [r[i].ljust(widths[i]) for i in range(3)]
            lines.append(("  ".join(cells) + "  " + paint(r[3])).rstrip())
    if doc["repairs"]:
        lines.append("")
        lines.append("repairs:")
        tw = max(len(str(r["t"])) for r in doc["repairs"])
        aw = max(len(r["atom"]) for r in doc["repairs"])
        for r in doc["repairs"]:
            lines.append(f"  {str(r['t']).rjust(tw)}  {r['atom'].ljust(aw)}  {r['cause']}")
    if doc["diagnostics"]:
        lines.append("")
        lines.append("diagnostics:")
        for d in doc["diagnostics"]:
            t = "-" if d["t"] is None else str(d["t"])
            src = f" {d['source']}" if d["source"] else ""
            lines.append(f"  [{t}] {d['kind']}{src}: {d['message']}")
    return "\n".join(lines) + "\n"


def coherence(report: MonitorReport | Iterable[str]) -> Coherence:
    """Trace-level verdict from the final outcomes of all activations."""
    if isinstance(report, MonitorReport):
        finals = [a["final"] for r in report.rules for a in r["activations"]]
    else:
        finals = list(report)
    if any(f in ("Violated", "Broken") for f in finals):
        return Coherence.INCOHERENT
    if any(f == "WeakHolds" for f in finals):
        return Coherence.WEAKLY_COHERENT
    return Coherence.COHERENT


# -------------------------------------------------------------- monitor


class Monitor:
    """Incremental check layer; feed ticks with :meth:`tick`, then :meth:`report`."""

    def __init__(self, rules: RuleSet, handlers: HandlerRegistry | Mapping | None = None):
        if not isinstance(handlers, HandlerRegistry):
            handlers = HandlerRegistry(handlers)
        self.rules = rules
        self.handlers = handlers
        self.timeline = Timeline()
        self.repairs: list[RepairAction] = []
        self.diagnostics: list[dict] = []
        self.pending: list[TraceEvent] = []  # dispatched, for the next state
        self.k = rules.default_check_freq
        self._seq = itertools.count()
        self._heap: list = []
        self._subs: dict[str, list] = {}
        self._clocked: list = []
        self._fresh: list = []
        self._first = True
        self._pattern_vars: dict = {}
        self._starts: dict = {}
        self._adv: dict = {}
        self._interned: dict = {}
        self.failed = False
        self._prev_t: int | None = None
        self.templates: list[_Template] = []
        phi_ids: dict = {}
        for decl, item in enumerate(rules.items):
            static = _compile(item, self.k)
            tpl = _Template(item, decl, static["plan"], static["ctx_deps"], static["ctx_clock"])
            for key, value in static.items():
                setattr(tpl, key, value)
            tpl.phi_id = phi_ids.setdefault(tpl.phi, len(phi_ids))
            if tpl.is_expr:
                tpl.precond = start(item.precond)
            self.templates.append(tpl)
        self._exprs = [tp for tp in self.templates if tp.is_expr]
        self._live_route = _route(self._exprs, lambda tp: (tp.exp_index, tp.brk_index))
        self._pre_route = _route(self._exprs, lambda tp: ((tp.pre_keys, tp.pre_all),))
        self._rules_by_prio = sorted((tp for tp in self.templates if not tp.is_expr),
                                     key=lambda tp: (tp.priority, tp.decl))

    # -- diagnostics

    def _diag(self, t, kind: str, source: str, message: str) -> None:
        self.diagnostics.append({"t": t, "kind": kind, "source": source, "message": message})

    # -- activation

    def _spawn(self, tpl: _Template, binding: dict, snap: Snapshot):
        key = tuple(sorted((k, binding[k]) for k in tpl.plan.key_vars if k in binding))
        if key in tpl.seen:
            return None
        tpl.seen.add(key)
        try:
            missing = tpl.op_vars - binding.keys()
            if missing:
                raise GroundnessError(missing, "substitute")
            op = ground_op(tpl.op, binding)
            env = {v: binding[v] for v in tpl.phi_vars if v in binding}
            op_inst = OpInstance(op, tpl.phi, snap.t, env=env)
        except (AiltlError, ArithmeticError) as exc:
            self._diag(snap.t, "groundness", tpl.name, str(exc))
            return None
        deps, clock = _deps(tpl.phi, env) if env else tpl.phi_deps
        inst = MonitorInstance(
            tpl.name,
            (tpl.priority, tpl.decl, next(self._seq)),
            dict(key),
            op_inst,
            tpl.item if tpl.is_expr else None,
            dict(binding),
            deps=deps,
            clock=clock,
            phi_id=tpl.phi_id,
        )
        if tpl.is_expr:
            expr = tpl.item
            inst.expected = self._start(expr.expected, binding)
            inst.breaking = self._start(expr.breaking, binding)
        tpl.instances.append(inst)
        if tpl.is_expr:
            tpl.active.append(inst)
        for d in deps:
            self._subs.setdefault(d, []).append(inst)
        if clock:
            self._clocked.append(inst)
        self._fresh.append(inst)
        return inst

    def _start(self, pattern: EventPattern | None, binding: dict) -> MatcherState | None:
        # only the pattern's own variables matter, so equal starts are shared
        if pattern is None:
            return None
        pv = self._pattern_vars.get(id(pattern))
        if pv is None:
            pv = self._pattern_vars[id(pattern)] = tuple(sorted(free_variables(pattern)))
        key = (id(pattern),) + tuple((v, binding[v]) for v in pv if v in binding)
        st = self._starts.get(key)
        if st is None:
            st = self._starts[key] = start(pattern, dict(key[1:]))
        return st

    def _advance(self, st: MatcherState, ev: Term, t: int) -> MatcherState:
        # shared states advance once per event
        hit = self._adv.get(id(st))
        if hit is not None and hit[0] is st:
            return hit[1]
        nxt = advance(st, ev, t)
        if len(self._interned) > 100_000:
            self._interned.clear()
        nxt = self._interned.setdefault((id(nxt.pattern), nxt.base, nxt.configs, nxt.status), nxt)
        self._adv[id(st)] = (st, nxt)
        return nxt

    def activate(self, tpl: _Template, snap: Snapshot, binding: Mapping | None = None) -> list[MonitorInstance]:
        """Evaluate the context on ``snap`` and spawn every new ground activation."""
        out = []
        try:
            answers = list(query(snap, tpl.plan.context, binding or {}))
        except (AiltlError, ArithmeticError, TypeError) as exc:
            self._diag(snap.t, "groundness" if isinstance(exc, GroundnessError) else "context", tpl.name, str(exc))
            return out
        for b in answers:
            inst = self._spawn(tpl, b, snap)
            if inst is not None:
                out.append(inst)
        return out

    # -- expressions

    def _finish(self, inst: MonitorInstance, outcome: str, t: int, done: list) -> None:
        inst.outcome = outcome
        inst.outcome_at = t
        inst.lifecycle = Lifecycle.DONE
        done.append(inst)

    def step_expression(self, inst: MonitorInstance, snap: Snapshot, ev: Term, t: int, done: list) -> None:
        """Feed one event of the current tick to an active expression."""
        tpl = self.templates[inst.order[1]]
        tk = _touch_keys(ev)
        if inst.breaking is not None and _hits(tpl.brk_index, tk):
            inst.breaking = self._advance(inst.breaking, ev, t)
            if inst.breaking.status is Status.COMPLETE:
                v = probe(inst.op_instance, snap)
                self._finish(inst, "Broken" if v is Verdict.VIOLATED else "Discharged", snap.t, done)
                return
        if inst.expected is not None and _hits(tpl.exp_index, tk):
            inst.expected = self._advance(inst.expected, ev, t)
            if inst.expected.status is Status.INCOMPATIBLE:
                self._finish(inst, "PatternIncompatible", snap.t, done)
                self._diag(snap.t, "pattern-incompatible", inst.source,
                           f"expected events out of order at {render_value(ev)}")

    def _feed_precond(self, tpl: _Template, snap: Snapshot, ev: Term, t: int) -> None:
        if not _hits((tpl.pre_keys, tpl.pre_all), _touch_keys(ev)):
            return
        pattern = tpl.item.precond
        st = advance(tpl.precond, ev, t)
        if st.status is Status.INCOMPATIBLE:
            # restart at the offending event
            st = advance(start(pattern), ev, t)
            if st.status is Status.INCOMPATIBLE:
                st = start(pattern)
        if st.status is Status.COMPLETE:
            self.activate(tpl, snap, st.binding)
            st = start(pattern)
        tpl.precond = st

    # -- ticks

    def tick(self, t: int, events: Sequence[TraceEvent]) -> Snapshot:
        """Process one state made of ``events`` (all at time ``t``)."""
        incoming = list(self.pending)
        self.pending = []
        if incoming and incoming[0].t != t:
            raise AiltlError("dispatched events must be folded into the next state")
        prev = self.timeline.last
        snap = self.timeline.ingest_batch(t, incoming + list(events))
        all_events = incoming + list(events)
        touched = {k for ev in all_events for k in _touch_keys(ev.term)}
        if prev is not None:
            # a new event version also changes what read the one it supersedes
            cur = prev.history._current
            for ev in all_events:
                if ev.kind.is_event:
                    old = cur.get((ev.term.functor, len(ev.term.args), ev.kind))
                    if old is not None:
                        touched.update(_touch_keys(old.term))
        done: list[MonitorInstance] = []

        # expressions: live instances first, then preconditions
        for ev in all_events:
            if not ev.kind.is_event:
                continue
            tk = _touch_keys(ev.term)
            self._adv = {}
            for pos in _candidates(*self._live_route, tk):
                tpl = self._exprs[pos]
                if not tpl.active:
                    continue
                # instances spawned by this very event only see later ones
                for inst in list(tpl.active):
                    if inst.lifecycle is Lifecycle.ACTIVE:
                        self.step_expression(inst, snap, ev.term, ev.t, done)
                tpl.active = [i for i in tpl.active if i.lifecycle is Lifecycle.ACTIVE]
            for pos in _candidates(*self._pre_route, tk):
                self._feed_precond(self._exprs[pos], snap, ev.term, ev.t)

        # rule activation
        for tpl in self._rules_by_prio:
            if self._first or tpl.ctx_clock or (tpl.ctx_deps & touched):
                self.activate(tpl, snap)
        self._first = False

        # operator stepping
        visit = {id(i): i for i in self._fresh}
        for d in touched:
            subs = self._subs.get(d)
            if subs:
                subs[:] = [i for i in subs if i.lifecycle is not Lifecycle.DONE]
                for inst in subs:
                    visit[id(inst)] = inst
        for inst in self._clocked:
            visit[id(inst)] = inst
        while self._heap and self._heap[0][0] <= t:
            w, _, _, inst = heapq.heappop(self._heap)
            if inst.wake == w:
                visit[id(inst)] = inst
        self._fresh = []
        prev = self._prev_t
        memo: dict = {}  # phi -> truth at this snapshot
        for inst in sorted(visit.values(), key=lambda i: i.order):
            if inst.lifecycle is Lifecycle.DONE:
                continue
            op = inst.op_instance
            checked = due(op, t, prev)
            op.last_seen = t
            if checked:
                key = (inst.phi_id, tuple(op.env.values()))
                val = memo.get(key)
                if val is None:
                    try:
                        val = holds(snap, op.phi, op.env)
                    except (AiltlError, ArithmeticError, TypeError) as exc:
                        self._diag(t, "evaluation", inst.source, str(exc))
                        val = False
                    else:
                        memo[key] = val
                observe(op, t, val)
            if op.verdict.final:
                self._finish(inst, op.verdict.value, op.decided_at, done)
                continue
            w = wake_time(op, t, checked)
            inst.wake = w
            if w != INF:
                heapq.heappush(self._heap, (w, inst.order, next(self._seq), inst))

        self._prev_t = t
        if any(i.outcome in ("Violated", "Broken") for i in done):
            self.failed = True
        self._dispatch(done, t)
        return snap

    # -- dispatch

    def dispatch(self, inst: MonitorInstance, t: int) -> list[TraceEvent]:
        """Repair/improvement atoms of a finished instance, as next-state events."""
        if inst.dispatched:
            return []
        inst.dispatched = True
        item = inst.expr if inst.expr is not None else self.templates[inst.order[1]].item
        outcome = inst.outcome
        if isinstance(item, EvolutionaryExpr):
            atoms = {"Violated": (item.repair_violation, Cause.VIOLATION),
                     "Broken": (item.repair_broken, Cause.BROKEN)}.get(outcome)
        else:
            atoms = {"Violated": (item.repair, Cause.VIOLATION),
                     "Holds": (item.improvement, Cause.IMPROVEMENT)}.get(outcome)
        if not atoms:
            return []
        out = []
        for atom in atoms[0]:
            try:
                ground = ground_term(atom, inst.full_binding)
            except (AiltlError, ArithmeticError, TypeError) as exc:
                self._diag(t, "groundness", inst.source, f"repair {render_value(atom)}: {exc}")
                continue
            self.repairs.append(RepairAction(ground, atoms[1], t, inst.source))
            try:
                produced = self.handlers.dispatch(ground)
            except Exception as exc:  # handler failures never abort a run
                self._diag(t, "handler", inst.source, f"{render_value(ground)}: {exc}")
                continue
            for kind, term in produced:
                try:
                    out.append(TraceEvent(t + 1, kind, term))
                except AiltlError as exc:
                    self._diag(t, "handler", inst.source, str(exc))
        return out

    def _dispatch(self, done: list, t: int) -> None:
        facts = set(self.timeline.last.facts)
        for inst in sorted(done, key=lambda i: i.order):
            for ev in self.dispatch(inst, t):
                if ev.kind is EventKind.RETRACT:
                    if ev.term not in facts:
                        self._diag(t, "retract", inst.source, f"retract of absent fact {render_value(ev.term)}")
                        continue
                    facts.discard(ev.term)
                elif ev.kind is EventKind.ASSERT:
                    facts.add(ev.term)
                self.pending.append(ev)

    # -- report

    def report(self) -> MonitorReport:
        rules = []
        instances = []
        for tpl in self.templates:
            acts = []
            for inst in tpl.instances:
                instances.append(inst)
                acts.append({
                    "binding": {k: _jsonable(v) for k, v in inst.binding.items()},
                    "verdicts": [{"t": t, "value": v} for t, v in inst.verdicts()],
                    "final": inst.final,
                })
            rules.append({"name": tpl.name, "activations": acts})
            if not acts:
                self._diag(None, "never-activated", tpl.name, "no activation")
        report = MonitorReport(rules, list(self.repairs), Coherence.COHERENT, self.diagnostics,
                               self.timeline, instances)
        report.coherence = coherence(report)
        return report


def _ticks(trace: Sequence[TraceEvent]):
    group: list[TraceEvent] = []
    for ev in trace:
        if group and ev.t != group[0].t:
            if ev.t < group[0].t:
                raise TraceError(f"non-monotonic timestamp {ev.t} after {group[0].t}")
            yield group[0].t, group
            group = []
        group.append(ev)
    if group:
        yield group[0].t, group


MAX_REPAIR_CHAIN = 1000


def run(rules: RuleSet, trace: Sequence[TraceEvent], handlers: HandlerRegistry | Mapping | None = None,
        until: int | None = None, stop_on_violation: bool = False) -> MonitorReport:
    """Replay ``trace`` through the check layer and build the report.

    ``until`` drops states after that time; ``stop_on_violation`` ends
    the replay after the first tick that produced a Violated or Broken
    outcome. Repairs that keep producing states on their own are cut
    after ``MAX_REPAIR_CHAIN`` consecutive such states.
    """
    mon = Monitor(rules, handlers)
    ticks = _ticks(trace)
    nxt = next(ticks, None)
    chain = 0
    while True:
        if mon.pending:
            te = mon.timeline.last.t + 1
            if nxt is not None and nxt[0] == te:
                t, evs = nxt
                nxt = next(ticks, None)
                chain = 0
            else:
                t, evs = te, []
                chain += 1
                if chain > MAX_REPAIR_CHAIN:
                    mon._diag(mon.timeline.last.t, "repair-loop", "",
                              f"repairs kept producing new states for {MAX_REPAIR_CHAIN} seconds; dropped")
                    mon.pending = []
                    continue
        elif nxt is not None:
            t, evs = nxt
            nxt = next(ticks, None)
            chain = 0
        else:
            break
        if until is not None and t > until:
            break
        mon.tick(t, evs)
        if stop_on_violation and mon.failed:
            break
    return mon.report()
