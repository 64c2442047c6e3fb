"""Reference semantics by direct quantifier evaluation over a whole trace.

Nothing here is incremental: every question is answered by scanning the
complete list of states. The monitor is tested against these functions,
so they deliberately avoid the evaluator's code paths.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .formula import (
    ContextualFormula,
    EvolutionaryExpr,
    IntervalOp,
    RuleSet,
    partial_substitute,
    plan_binding,
    substitute,
    with_check_freq,
)
from .kb import Snapshot, TraceEvent, build_timeline, holds, query
from .matcher import Status, batch_match, batch_status, exported_vars


class Truth(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNDETERMINED = "undetermined"


class BatchModel:
    """A finite state sequence with per-state interpretations.

    ``upto`` restricts the model to a prefix; prefixes share the cache of
    truth values with the model they were cut from.
    """

    def __init__(self, snapshots: Sequence[Snapshot], upto: int | None = None, _cache=None):
        self.snapshots = tuple(snapshots)
        self.upto = len(self.snapshots) if upto is None else upto
        self._cache = {} if _cache is None else _cache

    @classmethod
    def from_trace(cls, events: Sequence[TraceEvent]) -> "BatchModel":
        return cls(build_timeline(events).snapshots)

    def __len__(self):
        return self.upto

    @property
    def times(self) -> list[int]:
        return [s.t for s in self.snapshots[: self.upto]]

    def interpretation(self, i: int) -> frozenset:
        """Ground facts true at state ``i``."""
        return self.snapshots[i].facts

    def truth(self, phi: tuple) -> tuple:
        """Truth of the conjunction ``phi`` at every state (whole trace)."""
        phi = tuple(phi)
        got = self._cache.get(phi)
        if got is None:
            got = tuple(holds(s, phi) for s in self.snapshots)
            self._cache[phi] = got
        return got

    def prefix(self, n: int) -> "BatchModel":
        return BatchModel(self.snapshots, min(n, len(self.snapshots)), self._cache)

    def events(self) -> list[tuple[int, int, object]]:
        """(state index, time, term) of every event occurrence, in order."""
        out = []
        for i, s in enumerate(self.snapshots[: self.upto]):
            for ev in s.events:
                if ev.kind.is_event:
                    out.append((i, ev.t, ev.term))
        return out


def _grid_count(t: int, a: int, k: int) -> int:
    """Number of grid times ``a, a+k, ...`` that are <= t."""
    return 0 if t < a else (t - a) // k + 1


def checked_states(model: BatchModel, activation: int, k: int | None, force_last: bool = False) -> list[int]:
    """Indices of the states an operator with check frequency ``k`` reads."""
    times = model.times
    universe = [i for i, t in enumerate(times) if t >= activation]
    if k is None:
        return universe
    out = []
    prev = None
    for i in universe:
        if prev is None or _grid_count(times[i], activation, k) > _grid_count(times[prev], activation, k):
            out.append(i)
        prev = i
    if force_last and universe and (not out or out[-1] != universe[-1]):
        out.append(universe[-1])
    return out


def oracle_formula(model: BatchModel, op: IntervalOp, phi, activation: int | None = None,
                   force_last: bool = False) -> Truth:
    """Truth of a ground operator over the model, or UNDETERMINED when the
    model is too short to settle it.

    ``force_last`` reads the final state even if it is off the check grid.
    """
    times = model.times
    if activation is None:
        activation = times[0] if times else 0
    vals = op.values()
    b = vals["bounds"]
    k = vals["check_freq"]
    truth = model.truth(tuple(phi))
    states = [(times[i], truth[i]) for i in checked_states(model, activation, k, force_last)]
    T, F, U = Truth.TRUE, Truth.FALSE, Truth.UNDETERMINED

    def first_from(x):
        for t, v in states:
            if t >= x:
                return v
        return None

    def reached(x):
        return bool(states) and states[-1][0] >= x

    def window(lo, hi):
        return [v for t, v in states if lo <= t <= hi]

    name, arity = op.name, len(b)
    if name in ("NOW", "NEXT"):
        at = b[0] if name == "NOW" else activation + b[0]
        v = first_from(at)
        return U if v is None else (T if v else F)
    if name == "EVENTUALLY":
        lo, hi = (activation, activation + b[0]) if arity == 1 else b
        if any(window(lo, hi)):
            return T
        return F if reached(hi) else U
    if name == "ALWAYS":
        if arity == 1:
            return F if not all(window(b[0], float("inf"))) else U
        if not all(window(*b)):
            return F
        return T if reached(b[1]) else U
    if name == "ALWAYS_S":
        m = b[0]
        if any(window(float("-inf"), m - 1)):
            return F
        if arity == 1:
            return F if not all(window(m, float("inf"))) else U
        if not all(window(m, b[1])):
            return F
        after = first_from(b[1] + 1)
        if after is None:
            return U
        return F if after else T
    if name in ("NEVER", "NEVER_B", "NEVER_A"):
        if name == "NEVER":
            lo, hi = b
        elif name == "NEVER_B":
            lo, hi = float("-inf"), b[0] - 1
        else:
            lo, hi = b[0] + 1, float("inf")
        if any(window(lo, hi)):
            return F
        return T if hi != float("inf") and reached(hi) else U
    if name == "SOMETIMES":
        m, f = b[0], vals["freq"]
        last = m + ((b[1] - m) // f) * f if arity == 2 else None
        # a state reads every checkpoint in (previous state, this state]
        prev_t = None
        for t, v in states:
            hi = t if last is None else min(t, last)
            lo = m if prev_t is None else max(m, prev_t + 1)
            has_cp = hi >= lo and (hi - m) // f >= (lo - m + f - 1) // f
            if has_cp and not v:
                return F
            prev_t = t
        if last is not None and reached(last):
            return T
        return U
    raise AssertionError(op)


# --------------------------------------------------------------- rules


@dataclass(frozen=True)
class OracleActivation:
    name: str
    binding: tuple  # sorted (variable, value) pairs
    activation: int
    value: str


def _key(binding: dict, names) -> tuple:
    return tuple(sorted((k, binding[k]) for k in names if k in binding))


def _ground(cf: ContextualFormula, plan, binding: dict, k):
    op = substitute(with_check_freq(cf.op, k), binding)
    phi = tuple(partial_substitute(lit, binding) for lit in cf.phi + plan.deferred)
    return op, phi


def oracle_rule(model: BatchModel, rule, default_check_freq=None) -> list[OracleActivation]:
    """Truth of every activation of a plain rule."""
    cf = rule.body
    plan = plan_binding(cf, owner=rule.name)
    seen = set()
    out = []
    for i, snap in enumerate(model.snapshots[: model.upto]):
        for b in query(snap, plan.context, {}):
            key = _key(b, plan.key_vars)
            if key in seen:
                continue
            seen.add(key)
            op, phi = _ground(cf, plan, b, default_check_freq)
            out.append(OracleActivation(rule.name, key, snap.t, oracle_formula(model, op, phi, snap.t).value))
    return out


# --------------------------------------------------------- expressions


def _decision(model: BatchModel, op, phi, a: int, i: int, force: bool = False) -> Truth:
    return oracle_formula(model.prefix(i + 1), op, phi, a, force_last=force)


def _outcome(model, expr, op, phi, a, events, j, binding) -> str:
    later = events[j + 1:]
    seq = [(t, term) for _, t, term in later]
    brk = exp = None
    if expr.breaking is not None:
        for e in range(len(seq)):
            st = batch_status(expr.breaking, seq[: e + 1], binding)
            if st is Status.COMPLETE:
                brk = e
                break
            if st is Status.INCOMPATIBLE:
                break
    if expr.expected is not None:
        for e in range(len(seq)):
            if batch_status(expr.expected, seq[: e + 1], binding) is Status.INCOMPATIBLE:
                exp = e
                break
    i_a = events[j][0]
    for i in range(i_a, len(model)):
        for e, (si, _, _) in enumerate(later):
            if si != i:
                continue
            if e == brk:
                verdict = _decision(model, op, phi, a, i, force=True)
                return "Broken" if verdict is Truth.FALSE else "Discharged"
            if e == exp:
                return "PatternIncompatible"
        verdict = _decision(model, op, phi, a, i)
        if verdict is Truth.TRUE:
            return "Holds"
        if verdict is Truth.FALSE:
            return "Violated"
    return "Undetermined"


def oracle_expression(model: BatchModel, expr: EvolutionaryExpr, default_check_freq=None) -> list[OracleActivation]:
    """Outcome of every activation of an expression; empty if never activated.

    The precondition is matched afresh after each completion; an order
    violation restarts it at the offending event.
    """
    cf = expr.body
    plan = plan_binding(cf, exported_vars(expr.precond), owner=expr.name)
    events = model.events()
    seen = set()
    out = []
    s = j = 0
    while j < len(events):
        status, b = batch_match(expr.precond, [(t, term) for _, t, term in events[s: j + 1]])
        if status is Status.COMPLETE:
            i_a, a, _ = events[j]
            for cb in query(model.snapshots[i_a], plan.context, b):
                key = _key(cb, plan.key_vars)
                if key in seen:
                    continue
                seen.add(key)
                op, phi = _ground(cf, plan, cb, default_check_freq)
                out.append(OracleActivation(expr.name, key, a, _outcome(model, expr, op, phi, a, events, j, cb)))
            s = j = j + 1
        elif status is Status.INCOMPATIBLE:
            s = j if j > s else j + 1
            j = s
        else:
            j += 1
    return out


def oracle_ruleset(model: BatchModel, rules: RuleSet) -> list[OracleActivation]:
    out = []
    for item in rules.items:
        if isinstance(item, EvolutionaryExpr):
            out.extend(oracle_expression(model, item, rules.default_check_freq))
        else:
            out.extend(oracle_rule(model, item, rules.default_check_freq))
    return out
