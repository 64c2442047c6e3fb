"""Incremental event-sequence matching with consumption.

A pattern is split into maximal any-order groups joined by ``>>``
(before, gaps allowed) or ``>`` (immediately before). The matcher keeps
every viable way of reading the events seen so far (a small set of
configurations); each incoming event is either consumed by an admissible
element or, if it is irrelevant to the pattern, skipped. A relevant event
that no configuration can consume is an order violation.

Bindings made by repeatable (``*``/``+``) elements are local to each
occurrence and are not exported.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .formula import EventPattern, PatternElement, partial_substitute
from .kb import History
from .terms import Term, render_value, unify


class Status(enum.Enum):
    EMPTY = "Empty"
    PARTIAL = "Partial"
    COMPLETE = "Complete"
    INCOMPATIBLE = "Incompatible"


@dataclass(frozen=True)
class _Config:
    group: int
    counts: tuple  # per element of the current group; 0 or 1 (1 = at least once)
    pending: bool  # the next event must be consumed (``>`` entry)
    fresh: bool  # the latest event was consumed on this path
    consumed: bool  # anything consumed at all
    binding: tuple  # sorted items


def _groups(pattern: EventPattern):
    return pattern.groups()


def element_matches(elem: PatternElement, ev: Term, t: int, binding: dict):
    """Binding after ``elem`` consumes ``ev`` at time ``t``, or None."""
    if elem.term is None:
        b = binding
    else:
        b = unify(elem.term, ev, binding)
        if b is None:
            return None
    if elem.time is not None:
        b = unify(elem.time, t, b)
        if b is None:
            return None
    if elem.mult != "one":
        return binding
    return b


def is_relevant(pattern: EventPattern, ev: Term, base: Mapping) -> bool:
    base = dict(base)
    for e in pattern.elements:
        if e.term is not None and unify(e.term, ev, base) is not None:
            return True
    return False


def _group_satisfied(pattern, idxs, counts) -> bool:
    for i, c in zip(idxs, counts):
        m = pattern.elements[i].mult
        if m in ("one", "plus") and c == 0:
            return False
    return True


@dataclass(frozen=True)
class MatcherState:
    pattern: EventPattern
    base: tuple = ()
    configs: tuple = field(default=None, repr=False)
    status: Status = Status.EMPTY
    binding: Mapping = field(default_factory=dict, compare=False)

    @property
    def complete(self) -> bool:
        return self.status is Status.COMPLETE

    @property
    def incompatible(self) -> bool:
        return self.status is Status.INCOMPATIBLE


def _closure(pattern, groups, configs):
    out = []
    seen = set()
    stack = list(configs)
    while stack:
        c = stack.pop(0)
        key = (c.group, c.counts, c.pending, c.fresh, c.consumed, c.binding)
        if key in seen:
            continue
        seen.add(key)
        out.append(c)
        idxs, conn = groups[c.group]
        if conn is None or not _group_satisfied(pattern, idxs, c.counts):
            continue
        started = any(c.counts)
        if conn == "immediate":
            if c.consumed and not c.fresh and not c.pending:
                continue
            # a skipped (empty) group keeps the adjacency obligation of its entry
            pending = c.consumed and (c.fresh or c.pending)
        else:
            pending = c.pending and not started
        nxt = groups[c.group + 1][0]
        stack.append(_Config(c.group + 1, (0,) * len(nxt), pending, c.fresh, c.consumed, c.binding))
    return out


def _is_final(pattern, groups, c) -> bool:
    idxs, conn = groups[c.group]
    return conn is None and _group_satisfied(pattern, idxs, c.counts)


def binding_key(binding) -> tuple:
    """Canonical order among alternative bindings of one match."""
    items = binding.items() if isinstance(binding, Mapping) else binding
    return tuple((k, render_value(v)) for k, v in sorted(items))


def _summarize(pattern, groups, configs, base):
    if not configs:
        return Status.INCOMPATIBLE, dict(base)
    done = [c for c in configs if c.consumed and _is_final(pattern, groups, c)]
    if done:
        return Status.COMPLETE, dict(min((c.binding for c in done), key=binding_key))
    progressed = [c for c in configs if c.consumed]
    if progressed:
        best = max(progressed, key=lambda c: (c.group, sum(c.counts)))
        return Status.PARTIAL, dict(best.binding)
    return Status.EMPTY, dict(configs[0].binding)


def start(pattern: EventPattern, binding: Mapping | None = None, *, fresh=False, pending=False, consumed=False) -> MatcherState:
    """Initial matcher state, optionally resuming with inherited flags."""
    base = tuple(sorted((binding or {}).items()))
    groups = _groups(pattern)
    init = _Config(0, (0,) * len(groups[0][0]), pending, fresh, consumed, base)
    configs = tuple(_closure(pattern, groups, [init]))
    status, b = _summarize(pattern, groups, configs, base)
    return MatcherState(pattern, base, configs, status, b)


def advance(state: MatcherState, ev: Term, t: int) -> MatcherState:
    """Feed one event; returns the successor state."""
    if state.status is Status.INCOMPATIBLE:
        return state
    pattern = state.pattern
    groups = _groups(pattern)
    relevant = is_relevant(pattern, ev, dict(state.base))
    new = []
    for c in state.configs:
        binding = dict(c.binding)
        idxs, _ = groups[c.group]
        for pos, i in enumerate(idxs):
            elem = pattern.elements[i]
            if elem.mult == "one" and c.counts[pos]:
                continue
            b = element_matches(elem, ev, t, binding)
            if b is None:
                continue
            counts = c.counts[:pos] + (1,) + c.counts[pos + 1:]
            new.append(_Config(c.group, counts, False, True, True, tuple(sorted(b.items()))))
        if not relevant and not c.pending:
            new.append(replace(c, fresh=False))
    configs = tuple(_closure(pattern, groups, new))
    status, b = _summarize(pattern, groups, configs, state.base)
    return MatcherState(pattern, state.base, configs, status, b)


def feed(state: MatcherState, events: Iterable[tuple[int, Term]]) -> MatcherState:
    for t, ev in events:
        state = advance(state, ev, t)
        if state.status is Status.INCOMPATIBLE:
            break
    return state


def satisfies(history: History, pattern: EventPattern, since: int = 0, binding: Mapping | None = None) -> MatcherState:
    """Fold :func:`advance` over the recorded occurrences at/after ``since``."""
    state = start(pattern, binding)
    return feed(state, ((e.t, e.term) for e in history.occurrences(since)))


# ----------------------------------------------------------------- residuals


@dataclass(frozen=True)
class Residual:
    """What remains to be matched after some events were consumed."""

    pattern: EventPattern | None  # None: nothing left to consume
    binding: tuple
    pending: bool
    fresh: bool
    consumed: bool
    stuck: bool = False  # used up, but the way on was cut by a gap


def residuals(state: MatcherState) -> list[Residual]:
    """Cancel consumed events from the pattern, one residual per reading.

    Consumed single elements disappear, consumed ``+`` elements become
    ``*``. Bindings made so far are substituted into what remains.
    """
    pattern = state.pattern
    groups = _groups(pattern)
    out = []
    for c in state.configs or ():
        idxs, _ = groups[c.group]
        keep = []
        for pos, i in enumerate(idxs):
            e = pattern.elements[i]
            if c.counts[pos]:
                if e.mult == "one":
                    continue
                e = replace(e, mult="star")
            keep.append(e)
        rest = [pattern.elements[i] for g in groups[c.group + 1:] for i in g[0]]
        conn_out = groups[c.group][1]
        if not keep and any(c.counts):
            if conn_out is None:
                out.append(Residual(None, c.binding, c.pending, c.fresh, c.consumed))
            elif conn_out == "immediate":
                # moving on is the closure's job; this reading survives only
                # by skipping irrelevant events
                out.append(Residual(None, c.binding, False, c.fresh, c.consumed, stuck=True))
            continue
        elems = keep + rest
        if not elems:
            out.append(Residual(None, c.binding, c.pending, c.fresh, c.consumed))
            continue
        # the last kept element of the current group takes its outgoing connective
        fixed = []
        for j, e in enumerate(keep):
            fixed.append(replace(e, conn="any" if j < len(keep) - 1 else conn_out))
        fixed.extend(rest)
        b = dict(c.binding)
        fixed = [replace(e, term=partial_substitute(e.term, b) if e.term is not None else None,
                         time=partial_substitute(e.time, b) if e.time is not None else None) for e in fixed]
        out.append(Residual(EventPattern(tuple(fixed)), c.binding, c.pending, c.fresh, c.consumed))
    return out


# --------------------------------------------------------------- batch check


def batch_status(pattern: EventPattern | None, events, binding: Mapping | None = None, *,
                 pending=False, fresh=False, consumed=False, stuck=False,
                 relevance: EventPattern | None = None, relevance_binding: Mapping | None = None,
                 _found: list | None = None) -> Status:
    """Whole-list status by exhaustive backtracking over readings.

    Written independently of :func:`advance`: it walks the element list
    directly instead of maintaining configurations. ``relevance`` is the
    pattern that decides which events are relevant (defaults to
    ``pattern``; residuals pass the original).
    """
    events = list(events)
    rel_pat = relevance if relevance is not None else pattern
    base = dict(binding or {})
    rel_base = dict(relevance_binding) if relevance_binding is not None else base
    relevant = [is_relevant(rel_pat, ev, rel_base) if rel_pat is not None else False for _, ev in events]
    elems = list(pattern.elements) if pattern is not None else []
    outcomes = set()
    found = _found if _found is not None else []

    # segment bounds: runs of any-order elements
    segs = []
    start_i = 0
    for i, e in enumerate(elems):
        if e.conn != "any":
            segs.append((start_i, i + 1, e.conn))
            start_i = i + 1

    def seg_done(si, used):
        lo, hi, _ = segs[si]
        return all(used[i - lo] or elems[i].mult == "star" for i in range(lo, hi))

    def walk(pos, si, used, pend, fr, cons, b):
        # explicit stack with a visited set: readings sharing a search
        # state share their futures, and long lists cannot overflow
        todo = [(pos, si, tuple(used), pend, fr, cons, tuple(sorted(b.items())))]
        seen = set()
        while todo:
            key = todo.pop()
            if key in seen:
                continue
            seen.add(key)
            pos, si, used, pend, fr, cons, bt = key
            # epsilon: leave the current segment if it is done
            if si < len(segs) and seg_done(si, used):
                lo, hi, conn = segs[si]
                if si + 1 < len(segs):
                    fresh_used = (False,) * (segs[si + 1][1] - segs[si + 1][0])
                    if conn == "immediate":
                        if not (cons and not fr and not pend):
                            todo.append((pos, si + 1, fresh_used, cons and (fr or pend), fr, cons, bt))
                    else:
                        todo.append((pos, si + 1, fresh_used, pend and not any(used), fr, cons, bt))
            if pos == len(events):
                final = si == len(segs) - 1 and seg_done(si, used) if segs else True
                outcomes.add((cons, final and cons, bt if final and cons else None))
                continue
            t, ev = events[pos]
            if si < len(segs):
                lo, hi, _ = segs[si]
                b = dict(bt)
                for i in range(lo, hi):
                    e = elems[i]
                    if e.mult == "one" and used[i - lo]:
                        continue
                    nb = element_matches(e, ev, t, b)
                    if nb is None:
                        continue
                    nu = used[: i - lo] + (True,) + used[i - lo + 1:]
                    todo.append((pos + 1, si, nu, False, True, True, tuple(sorted(nb.items()))))
            if not relevant[pos] and not pend:
                todo.append((pos + 1, si, used, pend, False, cons, bt))

    if not segs:
        # nothing left: only irrelevant events may follow
        ok = all(not r for r in relevant) and not (pending and events)
        if not ok:
            return Status.INCOMPATIBLE
        if stuck:
            return Status.PARTIAL
        return Status.COMPLETE if consumed else Status.EMPTY
    walk(0, 0, [False] * (segs[0][1] - segs[0][0]), pending, fresh, consumed, base)
    found[:] = sorted({b for _, done, b in outcomes if done}, key=binding_key)
    if not outcomes:
        return Status.INCOMPATIBLE
    if found:
        return Status.COMPLETE
    if any(c for c, _, _ in outcomes):
        return Status.PARTIAL
    return Status.EMPTY


def batch_match(pattern: EventPattern, events, binding: Mapping | None = None) -> tuple[Status, dict]:
    """Status of a fresh match plus the canonical binding when Complete."""
    found = []
    status = batch_status(pattern, events, binding, _found=found)
    if status is Status.COMPLETE:
        return status, dict(found[0])
    return status, dict(binding or {})


def combine(statuses: Iterable[Status]) -> Status:
    """Status of a union of readings."""
    statuses = list(statuses)
    for s in (Status.COMPLETE, Status.PARTIAL, Status.EMPTY):
        if s in statuses:
            return s
    return Status.INCOMPATIBLE


def exported_vars(pattern: EventPattern | None) -> set[str]:
    """Variables a complete match binds for later use (single elements only)."""
    from .formula import free_variables

    out = set()
    for e in pattern.elements if pattern is not None else ():
        if e.mult == "one":
            out |= free_variables(e.term) | free_variables(e.time)
    return out
