"""Incremental evaluator versus batch oracle on random boolean traces.

Every operator is run state by state through the evaluator and then
judged once over the whole trace by the oracle. The two must agree:
Holds with true, Violated with false, WeakHolds with undetermined or true.

Run: python3 demos/oracle_check.py [cases]
"""
import random
import sys
from collections import Counter

from ailtl.evaluator import finalize, new_instance, step
from ailtl.formula import IntervalOp
from ailtl.kb import FactAtom, build_timeline, trace_from_valuations
from ailtl.oracle import BatchModel, oracle_formula
from ailtl.terms import Term

PHI = (FactAtom(Term("p")),)
AGREES = {"Holds": {"true"}, "Violated": {"false"}, "WeakHolds": {"undetermined", "true"},
          "Inactive": {"undetermined"}}


def random_op(rng, horizon):
    a, b = sorted(rng.randint(0, horizon) for _ in range(2))
    return rng.choice([
        IntervalOp("NOW", (a,)), IntervalOp("NEXT", (a,)), IntervalOp("EVENTUALLY", (a, b)),
        IntervalOp("ALWAYS", (a, b)), IntervalOp("ALWAYS", (a,)), IntervalOp("ALWAYS_S", (a, b)),
        IntervalOp("NEVER_B", (a,)), IntervalOp("NEVER_A", (a,)), IntervalOp("NEVER", (a, b)),
        IntervalOp("SOMETIMES", (a, b), rng.randint(1, 3)),
    ])


def main(cases=2000, seed=1):
    rng = random.Random(seed)
    tally, bad = Counter(), 0
    for _ in range(cases):
        n = rng.randint(1, 10)
        times = sorted(rng.sample(range(3 * n), n))
        tl = build_timeline(trace_from_valuations(times, [{"p": rng.random() < 0.6} for _ in times]))
        op = random_op(rng, times[-1] + 2)
        inst = new_instance(op, PHI, times[0])
        for snap in tl:
            if not inst.final:
                step(inst, snap)
        got = finalize(inst).value
        truth = oracle_formula(BatchModel(tl.snapshots), op, PHI, times[0]).value
        tally[(op.name, got)] += 1
        if truth not in AGREES[got]:
            bad += 1
            print("disagreement:", op, times, got, truth)
    for (name, verdict), count in sorted(tally.items()):
        print(f"{name:<10} {verdict:<10} {count:>5}")
    print(f"{cases} cases, {bad} disagreements")
    return bad


if __name__ == "__main__":
    sys.exit(1 if main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000) else 0)
