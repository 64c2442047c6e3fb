import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ailtl.formula import RuleSet
from ailtl.kb import EventKind, FactAtom, holds
from ailtl.monitor import MAX_REPAIR_CHAIN, Cause, Coherence, Monitor, coherence, run
from ailtl.parser import parse_rules, parse_term, parse_trace
from ailtl.terms import Term

from support import random_world

EXIT = ("rule exit_check: EVENTUALLY(T, T1; 30s) exit_customer_P(T2) :: enter_customer_P(T), "
        "T1 = T + 5m, T2 > T, T2 <= T1 / alert_operator.\n")


def ticks(lo, hi, step, **extra):
    lines = {t: [f"{t} external tick"] for t in range(lo, hi + 1, step)}
    for t, ev in extra.items():
        lines.setdefault(int(t[1:]), []).insert(0, f"{int(t[1:])} external {ev}")
    return parse_trace("\n".join(x for t in sorted(lines) for x in lines[t]))


def finals(report, name=None):
    return [i.final for i in report.instances if name is None or i.source == name]


# ------------------------------------------------------------- activation


def test_customer_never_exits():
    report = run(parse_rules(EXIT), ticks(150, 600, 50, t100="enter_customer"))
    [inst] = report.instances
    assert inst.binding == {"T": 100, "T1": 400}
    assert inst.verdicts() == [(100, "Provisional"), (400, "Violated")]
    assert [(str(r.atom), r.cause, r.issued_at) for r in report.repairs] == [
        ("alert_operator", Cause.VIOLATION, 400)]
    nxt = report.timeline.snapshot_at(401)
    assert nxt.t == 401 and [(e.kind, str(e.term)) for e in nxt.events] == [(EventKind.ACTION, "alert_operator")]
    assert report.coherence is Coherence.INCOHERENT


def test_no_entry_no_instance():
    report = run(parse_rules(EXIT), ticks(0, 500, 50))
    assert report.instances == []
    assert [d["kind"] for d in report.diagnostics] == ["never-activated"]
    assert report.coherence is Coherence.COHERENT


def test_re_entry_spawns_a_second_instance():
    report = run(parse_rules(EXIT), ticks(150, 1000, 50, t100="enter_customer", t900="enter_customer",
                                          t950="exit_customer"))
    assert [(i.binding["T"], i.final) for i in report.instances] == [(100, "Violated"), (900, "Holds")]


def test_static_context_activates_once():
    report = run(parse_rules("rule r: ALWAYS(T, T1) p :: ready, now(T0), T = 0, T1 = 100.\n"
                             "rule s: ALWAYS(0, 100) p :: ready.\n"),
                 parse_trace("0 assert ready\n0 assert p\n5 external tick\n9 external tick\n"))
    # r's key includes the clock reading, s has none
    assert len([i for i in report.instances if i.source == "r"]) == 3
    assert len([i for i in report.instances if i.source == "s"]) == 1


@settings(max_examples=150)
@given(st.integers(0, 2**32))
def test_no_two_instances_share_a_binding(seed):
    rules_text, trace_text = random_world(random.Random(seed))
    report = run(parse_rules(rules_text), parse_trace(trace_text))
    keys = [(i.source, tuple(sorted(i.binding.items()))) for i in report.instances]
    assert len(keys) == len(set(keys))


# ----------------------------------------------------------------- repairs


def test_diet_improvement_and_repair():
    rules = parse_rules("rule diet: EVENTUALLY(D1, D2) lose_five_kilograms :: start_diet_P(D1), "
                        "D2 = D1 + 26d, D3 = D2 + 1mo / new_stricter_diet(D2, D3) // resume_normal_diet.\n")
    day = 86400
    met = run(rules, parse_trace(f"0 external start_diet\n{20 * day} assert lose_five_kilograms\n{30 * day} external tick"))
    assert [(str(r.atom), r.cause) for r in met.repairs] == [("resume_normal_diet", Cause.IMPROVEMENT)]
    missed = run(rules, parse_trace(f"0 external start_diet\n{27 * day} external tick"))
    assert [(str(r.atom), r.cause) for r in missed.repairs] == [
        (f"new_stricter_diet({26 * day},{56 * day})", Cause.VIOLATION)]


def test_money_expression():
    rules = parse_rules("expr money: have_money_P(M) at T : EVENTUALLY(T, T1) have_money(M1) "
                        ":: T1 = T + 1mo, M1 = M + M / 10 | complain.\n")
    month = 30 * 86400
    bad = run(rules, parse_trace(f"0 external have_money(1000)\n{month} external tick\n"))
    assert bad.instances[0].final == "Violated" and bad.instances[0].outcome_at == month
    good = run(rules, parse_trace(f"0 external have_money(1000)\n100 assert have_money(1100)\n"))
    assert good.instances[0].final == "Holds" and not good.repairs


def test_assert_repair_is_visible_from_the_next_state():
    rules = parse_rules("rule r: ALWAYS(0, 10) p / assert(fixed(1)), emit(beep).\n")
    report = run(rules, parse_trace("0 assert p\n4 retract p\n5 external tick\n"))
    f = (FactAtom(parse_term("fixed(1)")),)
    seen = [(s.t, holds(s, f)) for s in report.timeline]
    assert seen == [(0, False), (4, False), (5, True)]
    # repair events come first within a state shared with trace events
    assert [str(e.term) for e in report.timeline[2].events] == ["fixed(1)", "beep", "tick"]


def test_repair_creates_a_state_when_the_trace_has_none():
    report = run(parse_rules("rule r: NOW(0) p / assert(p).\n"), parse_trace("0 external tick\n"))
    assert [s.t for s in report.timeline] == [0, 1]
    assert holds(report.timeline[1], (FactAtom(Term("p")),))


def test_repair_diagnostics():
    report = run(parse_rules("rule r: NOW(0) p / note(Z).\nrule s: ALWAYS(0, 5) q / retract(zz).\n"),
                 parse_trace("0 assert q\n3 retract q\n"))
    kinds = [(d["kind"], d["source"]) for d in report.diagnostics]
    assert kinds == [("groundness", "r"), ("retract", "s")]


def test_custom_and_failing_handlers():
    def boom(atom):
        raise RuntimeError("no operator on duty")

    report = run(parse_rules("rule r: NOW(0) p / page(ops), alert.\n"), parse_trace("0 external tick\n"),
                 handlers={"page": lambda a: [(EventKind.INTERNAL, Term("paged", a.args))], "alert": boom})
    assert [str(e.term) for e in report.timeline[1].events] == ["paged(ops)"]
    assert [d["kind"] for d in report.diagnostics] == ["handler"]
    assert len(report.repairs) == 2


def test_repair_loop_is_cut():
    report = run(parse_rules("rule r: ALWAYS(T) p :: now(T) / emit(again).\n"), parse_trace("0 external go\n"))
    assert any(d["kind"] == "repair-loop" for d in report.diagnostics)
    assert report.timeline.last.t <= MAX_REPAIR_CHAIN + 1


# -------------------------------------------------------------- priorities


def test_priority_orders_repairs_within_a_tick():
    text = ("rule a prio 50: NOW(0) p / first.\n"
            "rule b prio 10: NOW(0) p / second.\n"
            "rule c: NOW(0) p / third.\n"
            "rule d prio 10: NOW(0) p / fourth.\n")
    report = run(parse_rules(text), parse_trace("0 external tick\n"))
    assert [str(r.atom) for r in report.repairs] == ["second", "fourth", "first", "third"]


@settings(max_examples=100)
@given(st.integers(0, 2**32))
def test_declaration_order_does_not_change_verdicts(seed):
    rng = random.Random(seed)
    rules_text, trace_text = random_world(rng)
    rules = parse_rules(rules_text)
    items = list(rules.items)
    rng.shuffle(items)
    trace = parse_trace(trace_text)

    def outcome(rs):
        return sorted((i.source, tuple(sorted(i.binding.items())), tuple(i.verdicts())) for i in run(rs, trace).instances)

    assert outcome(rules) == outcome(RuleSet(tuple(items), rules.default_check_freq))


# ------------------------------------------------------------- expressions

REFILL = ("expr refill: fill_machine_P(Q) at T : ALWAYS(T, T1) (content(B), B > M) "
          ":: T1 = T + 8h, minimum(M) ::: withdraw(_)+ :::: robbery "
          "| order_cash(Q) || call_police.\n")


def machine(*lines):
    return parse_trace("0 assert minimum(200)\n0 assert content(2000)\n0 action fill_machine(2000)\n"
                       + "\n".join(lines) + "\n")


def test_refill_violated():
    report = run(parse_rules(REFILL), machine("600 external withdraw(1000)", "600 retract content(2000)",
                                               "600 assert content(1000)", "1200 external withdraw(900)",
                                               "1200 retract content(1000)", "1200 assert content(100)"))
    [inst] = report.instances
    assert inst.final == "Violated" and inst.outcome_at == 1200
    assert [str(r.atom) for r in report.repairs] == ["order_cash(2000)"]


def test_robbery_with_tau_intact_discharges():
    report = run(parse_rules(REFILL), machine("600 external withdraw(100)", "700 external robbery"))
    [inst] = report.instances
    assert inst.final == "Discharged" and not report.repairs
    assert report.coherence is Coherence.WEAKLY_COHERENT or report.coherence is Coherence.COHERENT


def test_robbery_after_failure_is_broken():
    report = run(parse_rules(REFILL.replace("ALWAYS(T, T1)", "ALWAYS(T, T1; 1h)")),
                 machine("600 external withdraw(1900)", "600 retract content(2000)", "600 assert content(100)",
                         "700 external robbery"))
    [inst] = report.instances
    assert inst.final == "Broken"
    assert [(str(r.atom), r.cause) for r in report.repairs] == [("call_police", Cause.BROKEN)]


def test_expected_order_violation_is_reported():
    rules = parse_rules("expr e: go at T : ALWAYS(T, 100) p ::: a >> b.\n")
    report = run(rules, parse_trace("0 assert p\n1 external go\n2 external b\n3 external a\n"))
    assert report.instances[0].final == "PatternIncompatible"
    assert [d["kind"] for d in report.diagnostics] == ["pattern-incompatible"]
    assert not report.repairs


def test_precondition_never_completes():
    rules = parse_rules("expr e: go >> stop : NOW(0) p.\n")
    report = run(rules, parse_trace("0 external go\n5 external tick\n"))
    assert report.instances == []
    assert report.rules == [{"name": "e", "activations": []}]


@given(st.lists(st.tuples(st.integers(1, 400), st.sampled_from(["withdraw", "robbery", "tick"]),
                          st.integers(0, 900)), max_size=12))
def test_discharge_never_repairs(steps):
    lines, t, content = [], 0, 2000
    for dt, kind, amount in steps:
        t += dt
        if kind == "withdraw":
            lines += [f"{t} external withdraw({amount})", f"{t} retract content({content})"]
            content = max(content - amount, 0)
            lines.append(f"{t} assert content({content})")
        else:
            lines.append(f"{t} external {kind}")
    report = run(parse_rules(REFILL), machine(*lines))
    [inst] = report.instances
    causes = [r.cause for r in report.repairs]
    if inst.final == "Discharged":
        assert causes == []
    elif inst.final == "Broken":
        assert causes == [Cause.BROKEN]
    elif inst.final == "Violated":
        assert causes == [Cause.VIOLATION]
    else:
        assert causes == []


# ------------------------------------------------------ coherence, report


@pytest.mark.parametrize("finals, want", [
    (["Holds", "Discharged"], Coherence.COHERENT),
    ([], Coherence.COHERENT),
    (["Holds", "Violated"], Coherence.INCOHERENT),
    (["WeakHolds", "Broken"], Coherence.INCOHERENT),
    (["WeakHolds", "Holds"], Coherence.WEAKLY_COHERENT),
    (["WeakHolds"], Coherence.WEAKLY_COHERENT),
])
def test_coherence(finals, want):
    assert coherence(finals) is want


@settings(max_examples=100)
@given(st.integers(0, 2**32))
def test_reports_are_deterministic(seed):
    rules_text, trace_text = random_world(random.Random(seed))
    a = run(parse_rules(rules_text), parse_trace(trace_text)).to_json()
    b = run(parse_rules(rules_text), parse_trace(trace_text)).to_json()
    assert a == b


def test_report_schema():
    doc = run(parse_rules(EXIT), ticks(150, 600, 50, t100="enter_customer")).to_dict()
    assert list(doc) == ["rules", "repairs", "coherence", "diagnostics"]
    assert list(doc["rules"][0]) == ["name", "activations"]
    assert list(doc["rules"][0]["activations"][0]) == ["binding", "verdicts", "final"]
    assert doc["repairs"] == [{"t": 400, "atom": "alert_operator", "cause": "Violation"}]


def test_until_and_stop_on_violation():
    rules = parse_rules(EXIT)
    trace = ticks(150, 1000, 50, t100="enter_customer")
    assert run(rules, trace, until=300).timeline.last.t == 300
    stopped = run(rules, trace, stop_on_violation=True)
    assert stopped.timeline.last.t == 400


def test_incremental_ticks():
    mon = Monitor(parse_rules(EXIT))
    mon.tick(100, parse_trace("100 external enter_customer"))
    mon.tick(200, [])
    assert [i.final for i in mon.report().instances] == ["WeakHolds"]
