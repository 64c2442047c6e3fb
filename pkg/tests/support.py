"""Shared generators for the test suite."""
from __future__ import annotations

import itertools
import random

from ailtl.formula import OPERATORS, EventPattern, IntervalOp, PatternElement
from ailtl.kb import FactAtom
from ailtl.terms import Term

# monitor final verdict -> oracle truths it agrees with
AGREES = {
    "Holds": {"true"},
    "Violated": {"false"},
    "WeakHolds": {"undetermined", "true"},
    "Inactive": {"undetermined"},
}


def agrees(final: str, truth: str) -> bool:
    return truth in AGREES[final]


def all_ground_ops(times, freqs=(1, 2)):
    """Every operator form with bounds drawn from ``times``."""
    ts = sorted(set(times))
    for name, arities in OPERATORS.items():
        for n in arities:
            bound_sets = [(m,) for m in ts] if n == 1 else list(itertools.combinations_with_replacement(ts, 2))
            for bs in bound_sets:
                if name == "SOMETIMES":
                    for f in freqs:
                        yield IntervalOp(name, bs, f)
                else:
                    yield IntervalOp(name, bs)


def random_op(rng: random.Random, horizon: int) -> IntervalOp:
    """Any operator form, with an optional check frequency."""
    name = rng.choice(sorted(OPERATORS))
    n = rng.choice(OPERATORS[name])
    bs = tuple(sorted(rng.randint(0, horizon) for _ in range(n)))
    if name == "SOMETIMES":
        return IntervalOp(name, bs, rng.randint(1, 6))
    k = rng.choice([None, None, rng.randint(1, 7)])
    return IntervalOp(name, bs, check_freq=k)


def random_phi(rng: random.Random, atoms) -> tuple:
    """A conjunction of one to three possibly negated atoms."""
    chosen = rng.sample(list(atoms), rng.randint(1, min(3, len(atoms))))
    lits = [FactAtom(Term(a), negated=rng.random() < 0.3) for a in chosen]
    if all(l.negated for l in lits) and rng.random() < 0.5:
        lits[0] = FactAtom(lits[0].term)
    return tuple(lits)


def random_times(rng: random.Random, n: int, span: int) -> list[int]:
    return sorted(rng.sample(range(span), n))


# ------------------------------------------------------------- patterns

EVENT_NAMES = ("a", "b", "c", "d")


def random_pattern(rng: random.Random, names=EVENT_NAMES, max_len: int = 4) -> EventPattern:
    n = rng.randint(1, max_len)
    elems = []
    for i in range(n):
        wildcard = rng.random() < 0.1
        mult = "one" if wildcard else rng.choice(["one", "one", "star", "plus"])
        conn = None if i == n - 1 else rng.choice(["any", "before", "immediate"])
        elems.append(PatternElement(None if wildcard else Term(rng.choice(names)), mult, conn, None))
    return EventPattern(tuple(elems))


def random_events(rng: random.Random, n: int, names=EVENT_NAMES + ("x",)) -> list:
    return [(i, Term(rng.choice(names))) for i in range(n)]


# ---------------------------------------------------------- rule files

_DURATIONS = ["30s", "5m", "2h", "1d", "26d", "1mo", "45", "90s"]


def _bound(rng, bound_vars):
    if bound_vars and rng.random() < 0.5:
        v = rng.choice(bound_vars)
        return rng.choice([v, f"{v} + {rng.choice(_DURATIONS)}", f"{v} + 2 * 3"])
    return str(rng.randint(0, 50))


def random_rule_text(rng: random.Random, name: str) -> str:
    """One valid rule or expression covering most surface syntax."""
    is_expr = rng.random() < 0.35
    prio = f" prio {rng.randint(0, 200)}" if rng.random() < 0.3 else ""
    ctx = []
    bound = []
    pre = ""
    if is_expr:
        elems = []
        for i in range(rng.randint(1, 3)):
            ev = rng.choice(["go", "start(X)", "stop(X, Y)", "_"])
            mult = rng.choice(["", "", "*", "+"]) if ev != "_" else ""
            if mult:
                ev = ev.replace("X", "_").replace("Y", "_")
            at = " at T" if i == 0 and rng.random() < 0.5 and not mult else ""
            elems.append(ev + mult + at)
            if at:
                bound.append("T")
            if not mult:
                bound += [v for v in ("X", "Y") if v in ev]
        seps = [rng.choice([", ", " >> ", " > "]) for _ in elems[1:]]
        pre = elems[0] + "".join(s + e for s, e in zip(seps, elems[1:]))
        bound = sorted(set(bound))
    else:
        if rng.random() < 0.7:
            ctx.append(rng.choice(["start_P(T)", "start_P(T) at T0", "begin_P(T)"]))
            bound.append("T")
            if "T0" in ctx[-1]:
                bound.append("T0")
        if rng.random() < 0.5:
            ctx.append("level(N)")
            bound.append("N")
    if "T" in bound and rng.random() < 0.5:
        ctx.append(f"T1 = T + {rng.choice(_DURATIONS)}")
        bound.append("T1")
    if bound and rng.random() < 0.3:
        ctx.append(f"{rng.choice(bound)} >= {rng.randint(0, 5)}")
    if rng.random() < 0.2:
        ctx.append("not blocked")
    op = rng.choice(sorted(OPERATORS))
    arity = rng.choice(OPERATORS[op])
    if arity == 1:
        bounds = [_bound(rng, bound)]
    else:
        lo = _bound(rng, bound)
        bounds = [lo, f"{lo} + {rng.choice(_DURATIONS)}"]
    extra = ""
    if op == "SOMETIMES":
        extra = f"; {rng.choice(['5m', '1', '30s', '2'])}"
    elif rng.random() < 0.25:
        extra = f"; {rng.choice(['30s', '1', '10'])}"
    phi = [rng.choice(["p", "q(a)", "r(Z)", "not p", "p2"])]
    if "r(Z)" in phi:
        phi.append(rng.choice(["Z > 3", "Z != -1", "Z * 2 < 40"]))
    if rng.random() < 0.3:
        phi.append(rng.choice(["seen_P(W)", "now(C)", "s('x y')"]))
    if bound and rng.random() < 0.3:
        phi.append(f"lvl({rng.choice(bound)})")
    body = f"{op}({', '.join(bounds)}{extra}) "
    body += f"({', '.join(phi)})" if len(phi) > 1 or rng.random() < 0.3 else phi[0]
    if ctx:
        body += " :: " + ", ".join(ctx)
    atoms = lambda: ", ".join(rng.sample(["alert", "fix(1)", "log('done')", "notify(ops, 2)"], rng.randint(1, 2)))
    bound_atom = f"note({bound[0]})" if bound else "note"
    if is_expr:
        text = f"expr {name}{prio}: {pre} : {body}"
        if rng.random() < 0.6:
            text += f" ::: {rng.choice(['tick+', 'a > b', 'a, b*', 'tick(_)+'])}"
        if rng.random() < 0.6:
            text += f" :::: {rng.choice(['crash', 'abort(_)', 'x >> y'])}"
        if rng.random() < 0.6:
            text += f" | {atoms()}, {bound_atom}"
            if rng.random() < 0.5:
                text += f" || {atoms()}"
        return text + "."
    text = f"rule {name}{prio}: {body}"
    if rng.random() < 0.6:
        text += f" / {atoms()}, {bound_atom}"
        if rng.random() < 0.5:
            text += f" // {atoms()}"
    return text + "."


def random_rule_file(rng: random.Random) -> str:
    lines = []
    if rng.random() < 0.3:
        lines.append(f"default check {rng.choice(['10s', '1', '1m'])}")
    if rng.random() < 0.2:
        lines.append(f"default prio {rng.randint(1, 99)}")
    if rng.random() < 0.3:
        lines.append("# a comment")
    for i in range(rng.randint(1, 5)):
        lines.append(random_rule_text(rng, f"r{i}"))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------ random worlds

_OPS = ["NOW(T)", "NEXT(2)", "EVENTUALLY(3)", "ALWAYS(T)", "ALWAYS_S(T)", "NEVER_B(T1)", "NEVER_A(T)",
        "SOMETIMES(T; 2)", "EVENTUALLY(T, T1)", "ALWAYS(T, T1)", "ALWAYS_S(T, T1)", "NEVER(T, T1)",
        "SOMETIMES(T, T1; 2)"]
_PHIS = ["flag(X)", "not flag(X)", "(level(X, N), N > 2)", "(level(X, N), N >= M)", "go_P(X)",
         "(flag(X), not stop_P(X))", "on"]


def random_world(rng: random.Random, max_steps: int = 12) -> tuple[str, str]:
    """Rules and expressions over argument-carrying atoms, plus a trace.

    Contexts bind variables through past events, facts, ``now`` and
    arithmetic; traces interleave events with fact updates.
    """
    ids = ["a", "b", "c"][: rng.randint(1, 3)]
    lines = []
    for i in range(rng.randint(1, 4)):
        op = rng.choice(_OPS)
        if "SOMETIMES" not in op and rng.random() < 0.3:
            op = op[:-1] + f"; {rng.randint(1, 4)})"
        phi = rng.choice(_PHIS)
        d = rng.randint(0, 6)
        lim = ", lim(M)" if "M" in phi else ""
        if rng.random() < 0.5:
            ctx = f"go_P(X) at T, T1 = T + {d}" if rng.random() < 0.6 else f"ready(X), now(T), T1 = T + {d}"
            if rng.random() < 0.25:
                ctx += ", not blocked(X)"
            # a clock-anchored context activates at every state: a repair
            # there would create the next state and feed back forever
            repair = "" if "now(T)" in ctx else " / fix(X)"
            lines.append(f"rule r{i}: {op} {phi} :: {ctx}{lim}{repair}.")
            continue
        pre = rng.choice(["go(X) at T", "go(X) >> stop(X)", "go(X), tick"])
        ctx = f"T1 = T + {d}" if " at T" in pre else f"now(T), T1 = T + {d}"
        text = f"expr e{i}: {pre} : {op} {phi} :: {ctx}{lim}"
        if rng.random() < 0.6:
            text += " ::: " + rng.choice(["tick+", "tick*", "ping(X) >> tick"])
        if rng.random() < 0.6:
            text += " :::: " + rng.choice(["crash", "stop(X)", "crash(X)"])
        lines.append(text + ".")
    events = []
    t = 0
    facts: set = set()
    for _ in range(rng.randint(1, max_steps)):
        t += rng.randint(0, 3)
        for _ in range(rng.randint(1, 3)):
            r = rng.random()
            x = rng.choice(ids)
            if r < 0.3:
                events.append(f"{t} external {rng.choice(['go', 'stop', 'ping', 'crash'])}({x})")
            elif r < 0.4:
                events.append(f"{t} external {rng.choice(['tick', 'crash'])}")
            else:
                f = rng.choice([f"flag({x})", f"ready({x})", f"blocked({x})", f"level({x},{rng.randint(0, 5)})",
                                "on", f"lim({rng.randint(1, 4)})"])
                events.append(f"{t} {'retract' if f in facts else 'assert'} {f}")
                facts ^= {f}
    return "\n".join(lines) + "\n", "\n".join(events) + "\n"
