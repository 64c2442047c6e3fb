"""Seeded fixtures for the worked examples: a trace plus its rule file.

The object layer of the cash-machine agent (light switching, withdrawal
handling with trust and balance checks, filling) is simulated here
directly; only the check layer is written in the rule language.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .kb import EventKind, TraceEvent
from .parser import render_trace
from .terms import Term

MINUTE, HOUR, DAY, MONTH = 60, 3600, 86400, 2592000

CASH_RULES = """\
# Cash machine check layer.
rule exit_check: EVENTUALLY(T, T1; 30s) exit_customer_P(T2) :: enter_customer_P(T), T1 = T + 5m, T2 > T, T2 <= T1 / alert_operator.

expr refill: fill_machine_P(Q) at T : ALWAYS(T, T1) (machine_content(B), B > M) :: T1 = T + 8h, minimum(M), Q1 = Q + Q / 2 ::: withdraw(_, _)+ :::: robbery | fill_machine(Q), reconsider_quantity(Q, Q1) || call_police.
"""

DIET_RULES = """\
# Lose five kilograms within 26 days of starting the diet.
rule diet: EVENTUALLY(D1, D2) lose_five_kilograms :: start_diet_P(D1), D2 = D1 + 26d, D3 = D2 + 20d / new_stricter_diet(D2, D3) // resume_normal_diet.
"""

MAIL_RULES = """\
# Once expecting mail, check the mailbox every five minutes.
rule mail: SOMETIMES(T; 5m) (check_mail_P(C), now(C)) :: expect_mail_P(T).
"""

MONEY_RULES = """\
# Within a month, own ten percent more money than now.
expr money: have_money_P(S) at T : EVENTUALLY(D) have_money(S1) :: S1 = S + S / 10, D = 1mo.
"""

CHECKUP_RULES = """\
# After a checkup a car works for six months, long trips or not, unless it has an accident.
expr checkup: checkup_P(Car) at T : ALWAYS(T, T1) work_ok(Car) :: T1 = T + 6mo ::: long_trip(Car)+ :::: accident(Car).
"""


@dataclass(frozen=True)
class Scenario:
    name: str
    rules: str
    events: tuple

    @property
    def trace(self) -> str:
        return render_trace(self.events)


def _t(text: str) -> Term:
    from .parser import parse_term

    return parse_term(text)


class _Log:
    def __init__(self):
        self.events: list[TraceEvent] = []

    def add(self, t: int, kind: str, term: str) -> None:
        self.events.append(TraceEvent(t, EventKind(kind), _t(term)))

    def sorted(self) -> tuple:
        # stable: same-time events keep insertion order
        return tuple(sorted(self.events, key=lambda e: e.t))


class CashMachine:
    """Object layer of the cash-machine agent.

    Reactions happen at the time of perception. ``refill_on_empty``
    models the operator restocking the machine right after the check
    layer asks for it (one second after the content drops below the
    minimum).
    """

    def __init__(self, log: _Log, minimum=200, quantity=2000, threshold=5, trust=None,
                 refill_on_empty=False):
        self.log = log
        self.minimum = minimum
        self.quantity = quantity
        self.threshold = threshold
        self.trust = dict(trust or {})
        self.content = None
        self.refill_on_empty = refill_on_empty

    def setup(self, t: int) -> None:
        self.log.add(t, "assert", f"minimum({self.minimum})")
        self.log.add(t, "assert", f"standard_quantity({self.quantity})")
        for c, level in sorted(self.trust.items()):
            self.log.add(t, "assert", f"trust({c},{level})")

    def _set_content(self, t: int, value: int) -> None:
        if self.content is not None:
            self.log.add(t, "retract", f"machine_content({self.content})")
        self.content = value
        self.log.add(t, "assert", f"machine_content({value})")

    def fill(self, t: int, q: int | None = None) -> None:
        self.log.add(t, "action", f"fill_machine({q or self.quantity})")
        self._set_content(t, q or self.quantity)

    def enter(self, t: int) -> None:
        self.log.add(t, "external", "enter_customer")
        self.log.add(t, "action", "switch_on_light")

    def exit(self, t: int) -> None:
        self.log.add(t, "external", "exit_customer")
        self.log.add(t, "action", "switch_off_light")

    def withdraw(self, t: int, customer: str, amount: int) -> None:
        self.log.add(t, "external", f"withdraw({customer},{amount})")
        self.log.add(t, "action", f"check_trust({customer})")
        if self.trust.get(customer, 0) <= self.threshold:
            self.log.add(t, "action", "alert_operator")
            return
        account = f"acc_{customer}"
        if self.content is None or self.content < amount:
            self.log.add(t, "action", "print_error_msg_iw")
            return
        self._set_content(t, self.content - amount)
        self.log.add(t, "action", f"give_money({account},{amount})")
        if self.refill_on_empty and self.content < self.minimum:
            # restocked in reaction to the check layer's fill_machine request
            self._set_content(t + 1, self.quantity)

    def robbery(self, t: int, emptied: bool) -> None:
        self.log.add(t, "external", "robbery")
        if emptied:
            self._set_content(t, 0)


def _visit(m: CashMachine, rng: random.Random, t: int, customer: str, amount: int, stay: int | None = None) -> int:
    """Enter, withdraw, exit; returns the exit time."""
    m.enter(t)
    m.withdraw(t + rng.randint(20, 60), customer, amount)
    out = t + (stay if stay is not None else rng.randint(90, 240))
    m.exit(out)
    return out


_CUSTOMERS = {"c7": 8, "c9": 7, "c12": 9}


def cash_happy(seed: int) -> Scenario:
    rng = random.Random(seed)
    log = _Log()
    m = CashMachine(log, trust=_CUSTOMERS)
    m.setup(0)
    m.fill(0)
    t = 600
    while t < 8 * HOUR:
        c = rng.choice(sorted(_CUSTOMERS))
        _visit(m, rng, t, c, rng.choice([50, 100, 150]))
        t += rng.randint(50, 70) * MINUTE
    # a last customer after the eight hours closes the refill window
    _visit(m, rng, max(t, 8 * HOUR + 10 * MINUTE), "c12", 50)
    return Scenario("cash-machine-happy", CASH_RULES, log.sorted())


def cash_no_exit(seed: int) -> Scenario:
    rng = random.Random(seed)
    log = _Log()
    m = CashMachine(log, trust=_CUSTOMERS)
    m.setup(0)
    m.fill(0)
    m.enter(100)
    m.withdraw(100 + rng.randint(30, 90), "c7", 100)
    m.withdraw(400 + rng.randint(10, 40), "c7", 50)
    _visit(m, rng, 900 + rng.randint(0, 60), "c9", 100)
    return Scenario("cash-machine-no-exit", CASH_RULES, log.sorted())


def _drain(m: CashMachine, rng: random.Random, times, amount=500) -> None:
    for t in times:
        m.enter(t - 30)
        m.withdraw(t, "c7", amount)
        m.exit(t + rng.randint(60, 120))


def cash_refill(seed: int) -> Scenario:
    rng = random.Random(seed)
    log = _Log()
    m = CashMachine(log, trust=_CUSTOMERS, refill_on_empty=True)
    m.setup(0)
    m.fill(0)
    _drain(m, rng, [600, 1200, 1800, 2400])
    _visit(m, rng, 3000, "c9", 100)
    return Scenario("cash-machine-refill", CASH_RULES, log.sorted())


def _robbery(seed: int, emptied: bool, name: str) -> Scenario:
    rng = random.Random(seed)
    log = _Log()
    m = CashMachine(log, trust=_CUSTOMERS)
    m.setup(0)
    m.fill(0)
    _drain(m, rng, [600, 1200, 1800])
    m.robbery(2000, emptied)
    _drain(m, rng, [2400])
    return Scenario(name, CASH_RULES, log.sorted())


def cash_robbery(seed: int) -> Scenario:
    return _robbery(seed, True, "cash-machine-robbery")


def cash_robbery_foiled(seed: int) -> Scenario:
    return _robbery(seed, False, "cash-machine-robbery-foiled")


def _diet(seed: int, met: bool, name: str) -> Scenario:
    rng = random.Random(seed)
    log = _Log()
    log.add(0, "external", "start_diet")
    weight = 82
    for day in range(1, 28):
        weight -= rng.choice([0, 0, 1]) if not met else rng.choice([0, 1])
        log.add(day * DAY, "external", f"weigh({weight})")
        if met and day == 20:
            log.add(day * DAY, "assert", "lose_five_kilograms")
    return Scenario(name, DIET_RULES, log.sorted())


def diet(seed: int) -> Scenario:
    return _diet(seed, True, "diet")


def diet_missed(seed: int) -> Scenario:
    return _diet(seed, False, "diet-missed")


def mail(seed: int, skip: int | None = None) -> Scenario:
    """30 minutes of polling; ``skip`` drops the check at that checkpoint."""
    rng = random.Random(seed)
    log = _Log()
    log.add(0, "external", "expect_mail")
    for t in range(0, 30 * MINUTE + 1, MINUTE):
        if t % (5 * MINUTE) == 0 and t != skip:
            log.add(t, "action", "check_mail")
        else:
            log.add(t, "internal", "idle")
        if rng.random() < 0.2:
            log.add(t, "external", f"new_mail(m{t})")
    return Scenario("mail" if skip is None else "mail-missed", MAIL_RULES, log.sorted())


def mail_missed(seed: int) -> Scenario:
    return mail(seed, skip=15 * MINUTE)


def money(seed: int) -> Scenario:
    rng = random.Random(seed)
    log = _Log()
    log.add(0, "external", "have_money(1000)")
    log.add(0, "assert", "have_money(1000)")
    t = rng.randint(10, 16) * DAY
    log.add(t, "retract", "have_money(1000)")
    log.add(t, "assert", "have_money(1050)")
    log.add(MONTH + DAY, "internal", "month_end")
    return Scenario("money", MONEY_RULES, log.sorted())


def _checkup(seed: int, accident: bool, name: str) -> Scenario:
    rng = random.Random(seed)
    log = _Log()
    log.add(10, "external", "checkup(car1)")
    log.add(10, "assert", "work_ok(car1)")
    for d in sorted(rng.sample(range(5, 50), 3)):
        log.add(d * DAY, "external", "long_trip(car1)")
    log.add(52 * DAY, "external", "long_trip(car2)")
    if accident:
        log.add(55 * DAY, "external", "accident(car1)")
    log.add(60 * DAY, "retract", "work_ok(car1)")
    log.add(61 * DAY, "external", "breakdown(car1)")
    return Scenario(name, CHECKUP_RULES, log.sorted())


def checkup(seed: int) -> Scenario:
    return _checkup(seed, False, "checkup")


def checkup_accident(seed: int) -> Scenario:
    return _checkup(seed, True, "checkup-accident")


SCENARIOS = {
    "cash-machine-happy": cash_happy,
    "cash-machine-no-exit": cash_no_exit,
    "cash-machine-refill": cash_refill,
    "cash-machine-robbery": cash_robbery,
    "cash-machine-robbery-foiled": cash_robbery_foiled,
    "diet": diet,
    "diet-missed": diet_missed,
    "mail": mail,
    "mail-missed": mail_missed,
    "money": money,
    "checkup": checkup,
    "checkup-accident": checkup_accident,
}


def generate(name: str, seed: int = 0) -> Scenario:
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    return fn(seed)


def bulk(seed: int = 0, n_events: int = 100_000, n_rules: int = 50) -> tuple[str, tuple]:
    """A bank network of machines under a large check layer, for throughput runs.

    Every machine gets five rules (exit deadline, content floor, robbery
    ban, periodic power check, refill expression), so ``n_rules // 5``
    machines are simulated. Their customer visits interleave into one
    trace with strictly increasing timestamps.
    """
    rng = random.Random(seed)
    n_machines = max(1, n_rules // 5)
    families = [
        "rule exit_{i}: EVENTUALLY(T, T1; 30s) exit_customer_P(m{i}, T2) :: enter_customer_P(m{i}, T), "
        "T1 = T + 30m, T2 > T, T2 <= T1 / alert_operator(m{i}).",
        "rule floor_{i}: ALWAYS(0, 100000000) (content(m{i}, B), B >= 0) / fill_machine(m{i}, 2000).",
        "rule calm_{i}: NEVER(0, 100000000) robbery_P(m{i}).",
        "rule power_{i}: SOMETIMES(0; 10m) power_ok(m{i}).",
        "expr refill_{i}: fill_machine_P(m{i}, Q) at T : ALWAYS(T, T1) (content(m{i}, B), B > 0) "
        ":: T1 = T + 8h ::: withdraw(m{i}, _, _)+ :::: robbery(m{i}).",
    ]
    rules = [families[j % 5].format(i=j // 5) for j in range(n_rules)]
    content = {m: 0 for m in range(n_machines)}
    queues: dict = {m: [] for m in range(n_machines)}
    out: list[TraceEvent] = []
    t = 0

    def emit(kind: str, term: str) -> None:
        out.append(TraceEvent(t, EventKind(kind), _t(term)))

    for m in range(n_machines):
        emit("assert", f"power_ok(m{m})")
        emit("assert", f"content(m{m}, 0)")

    def script(m: int) -> list:
        steps = []
        if content[m] < 600:
            old, content[m] = content[m], 5000
            steps.append([("external", f"fill_machine(m{m}, 5000)"), ("retract", f"content(m{m}, {old})"),
                          ("assert", f"content(m{m}, 5000)")])
        c = rng.choice(sorted(_CUSTOMERS))
        s = rng.choice([50, 100, 200])
        old, content[m] = content[m], content[m] - s
        steps.append([("external", f"enter_customer(m{m})")])
        steps.append([("external", f"withdraw(m{m}, {c}, {s})"), ("retract", f"content(m{m}, {old})"),
                      ("assert", f"content(m{m}, {content[m]})")])
        steps.append([("external", f"exit_customer(m{m})")])
        return steps

    while len(out) < n_events:
        t += rng.randint(1, 20)
        m = rng.randrange(n_machines)
        if not queues[m]:
            queues[m] = script(m)
        for kind, term in queues[m].pop(0):
            emit(kind, term)
    return "\n".join(rules) + "\n", tuple(out[:n_events])
