"""Feeding a monitor tick by tick, with a repair handler that acts on the world.

The diet rule wants five kilograms lost within 26 days. When it fails, the
repair ``new_stricter_diet(D2, D3)`` is handed to a Python handler that
records the new plan as a fact, so the next state already contains it.

Run: python3 demos/live_diet.py
"""
from ailtl.kb import EventKind, TraceEvent
from ailtl.monitor import Monitor
from ailtl.parser import parse_rules, parse_term
from ailtl.terms import Term

DAY = 86400
RULES = parse_rules(
    "rule diet: EVENTUALLY(D1, D2) lose_five_kilograms :: start_diet_P(D1), D2 = D1 + 26d, "
    "D3 = D2 + 20d / new_stricter_diet(D2, D3) // resume_normal_diet.\n"
)


def stricter(atom: Term):
    start, end = atom.args
    print(f"   handler: stricter plan from day {start // DAY} to day {end // DAY}")
    return [(EventKind.ASSERT, Term("plan", ("strict", end)))]


def main():
    mon = Monitor(RULES, {"new_stricter_diet": stricter})
    weigh_ins = [(0, "start_diet"), (10 * DAY, "weigh_in(88)"), (20 * DAY, "weigh_in(86)"),
                 (27 * DAY, "weigh_in(85)")]
    for t, ev in weigh_ins:
        if mon.pending:  # dispatched repairs form their own state first
            mon.tick(mon.pending[0].t, [])
        mon.tick(t, [TraceEvent(t, EventKind.EXTERNAL, parse_term(ev))])
        print(f"day {t // DAY:>2}: {ev:<14} verdict {current(mon)}")
    if mon.pending:
        mon.tick(mon.pending[0].t, [])
    report = mon.report()
    print("repairs:", [str(r.atom) for r in report.repairs])
    print("plan facts:", sorted(str(f) for f in mon.timeline.last.facts if f.functor == "plan"))
    print("coherence:", report.coherence.value)


def current(mon):
    """Latest verdict of each diet activation so far."""
    return [i.op_instance.verdict.value for tpl in mon.templates for i in tpl.instances]


if __name__ == "__main__":
    main()
