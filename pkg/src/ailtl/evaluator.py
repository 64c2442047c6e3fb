"""Per-instance verdict machine for a ground interval operator.

An instance sees the states from its activation onwards. With a check
frequency ``k`` only the checked states count: the first state at or
after each grid time ``activation + j*k``. Each checked state contributes
one truth value of the monitored conjunction and may move the verdict

    Inactive -> Provisional -> Holds | Violated | WeakHolds

where the last three are final. WeakHolds is only produced by
:func:`finalize`, for obligations the finite trace could not settle.
"""
from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field

from .errors import AiltlError, GroundnessError
from .formula import INF, IntervalOp, InterestInterval, free_variables, interest_interval
from .kb import Snapshot, holds


class Verdict(enum.Enum):
    INACTIVE = "Inactive"
    PROVISIONAL = "Provisional"
    HOLDS = "Holds"
    VIOLATED = "Violated"
    WEAK_HOLDS = "WeakHolds"

    @property
    def final(self) -> bool:
        return self in (Verdict.HOLDS, Verdict.VIOLATED, Verdict.WEAK_HOLDS)


@dataclass(eq=False)
class OpInstance:
    """Mutable state of one ground operator application.

    ``phi`` may keep variables of its own (existentially read at each
    state) and may read context variables from ``env``; the operator
    itself must be ground.
    """

    op: IntervalOp
    phi: tuple
    activation: int
    interval: InterestInterval = None
    verdict: Verdict = Verdict.INACTIVE
    last_checked: int | None = None
    last_seen: int | None = None
    phi_history: list = field(default_factory=list)  # (t, bool) at checked states
    timeline: list = field(default_factory=list)  # (t, Verdict) on every change
    decided_at: int | None = None
    _next_cp: int = 0  # SOMETIMES: index of the next checkpoint
    env: dict = field(default_factory=dict)  # values of phi's context variables

    def __post_init__(self):
        if not self.op.is_ground():
            raise GroundnessError(free_variables(self.op), f"{self.op.name} bounds")
        vals = self.op.values()
        self.bounds = vals["bounds"]
        self.freq = vals["freq"]
        self.k = vals["check_freq"]
        if self.interval is None:
            self.interval = interest_interval(self.op, self.activation)

    @property
    def final(self) -> bool:
        return self.verdict.final


def new_instance(op: IntervalOp, phi, activation: int) -> OpInstance:
    return OpInstance(op, tuple(phi), activation)


def _next_grid(inst: OpInstance, t: int) -> int:
    """Smallest grid time strictly after ``t``."""
    a, k = inst.activation, inst.k
    if t < a:
        return a
    return a + ((t - a) // k + 1) * k


def due(inst: OpInstance, t: int, prev: int | None = None) -> bool:
    """Whether the state at time ``t`` is a checked state for ``inst``.

    ``prev`` is the time of the preceding state (defaults to the last
    state this instance was offered). Without a check frequency every new
    state is checked; with one, a state is checked iff a grid time falls in
    ``(prev, t]``.
    """
    if t < inst.activation:
        return False
    if prev is None:
        prev = inst.last_seen
    if inst.k is None:
        return prev is None or t > prev
    if prev is None or prev < inst.activation:
        return True
    return _next_grid(inst, prev) <= t


def _decide(inst: OpInstance, verdict: Verdict, t: int) -> None:
    inst.verdict = verdict
    if verdict.final:
        inst.decided_at = t


def _observe(inst: OpInstance, t: int, val: bool) -> None:
    name = inst.op.name
    iv = inst.interval
    if name in ("NOW", "NEXT"):
        if t >= iv.crucial:
            _decide(inst, Verdict.HOLDS if val else Verdict.VIOLATED, t)
        return
    if name == "SOMETIMES":
        m, f = inst.bounds[0], inst.freq
        last = iv.w
        while True:
            c = m + inst._next_cp * f
            if c > last or c > t:
                break
            if not val:
                _decide(inst, Verdict.VIOLATED, t)
                return
            inst._next_cp += 1
        if m + inst._next_cp * f > last:
            _decide(inst, Verdict.HOLDS, t)
        elif t >= m:
            _decide(inst, Verdict.PROVISIONAL, t)
        return
    if name == "ALWAYS_S":
        m = inst.bounds[0]
        if t < m:
            bad = val
        elif t <= iv.w:
            bad = not val
        else:
            _decide(inst, Verdict.VIOLATED if val else Verdict.HOLDS, t)
            return
        _decide(inst, Verdict.VIOLATED if bad else Verdict.PROVISIONAL, t)
        return
    in_window = iv.v <= t <= iv.w
    if name == "EVENTUALLY":
        if in_window and val:
            _decide(inst, Verdict.HOLDS, t)
            return
    else:  # ALWAYS, NEVER, NEVER_B, NEVER_A
        wanted = name == "ALWAYS"
        if in_window and val != wanted:
            _decide(inst, Verdict.VIOLATED, t)
            return
    if t >= iv.w:
        _decide(inst, Verdict.VIOLATED if name == "EVENTUALLY" else Verdict.HOLDS, t)
    elif t >= iv.v:
        _decide(inst, Verdict.PROVISIONAL, t)


def _record(inst: OpInstance, t: int) -> None:
    if not inst.timeline or inst.timeline[-1][1] is not inst.verdict:
        inst.timeline.append((t, inst.verdict))


def observe(inst: OpInstance, t: int, val: bool) -> OpInstance:
    """Feed the truth value of phi at a checked state at time ``t``."""
    if inst.verdict.final:
        raise AiltlError("cannot step a finished instance")
    if inst.last_checked is not None and t <= inst.last_checked:
        raise AiltlError(f"state at {t} is not after the last checked state {inst.last_checked}")
    inst.last_checked = t
    inst.phi_history.append((t, val))
    _observe(inst, t, val)
    _record(inst, t)
    return inst


def step(inst: OpInstance, snapshot: Snapshot, prev: int | None = None) -> OpInstance:
    """Offer one state; evaluates phi only if the state is a checked one."""
    if inst.verdict.final:
        raise AiltlError("cannot step a finished instance")
    t = snapshot.t
    if inst.last_seen is not None and t < inst.last_seen:
        raise AiltlError(f"state at {t} precedes the last seen state {inst.last_seen}")
    is_due = due(inst, t, prev)
    inst.last_seen = t
    if is_due:
        observe(inst, t, holds(snapshot, inst.phi, inst.env))
    return inst


def probe(inst: OpInstance, snapshot: Snapshot) -> Verdict:
    """Verdict the instance would reach if ``snapshot`` were checked now.

    The instance itself is left untouched.
    """
    if inst.verdict.final:
        return inst.verdict
    if inst.last_checked is not None and snapshot.t <= inst.last_checked:
        return inst.verdict
    trial = copy.copy(inst)
    trial.phi_history = list(inst.phi_history)
    trial.timeline = list(inst.timeline)
    observe(trial, snapshot.t, holds(snapshot, inst.phi, inst.env))
    return trial.verdict


def wake_time(inst: OpInstance, t: int, checked: bool = True) -> float:
    """Earliest time after ``t`` at which the verdict may change with phi
    unchanged. After an unchecked visit, that is the next grid time.
    """
    if inst.verdict.final:
        return INF
    if not checked:
        return _next_grid(inst, t) if inst.k is not None else t + 1
    iv = inst.interval
    cands = [iv.v, iv.w, iv.crucial]
    name = inst.op.name
    if name == "ALWAYS_S":
        cands.append(inst.bounds[0])
    elif name == "SOMETIMES":
        cands.append(inst.bounds[0] + inst._next_cp * inst.freq)
    return min((c for c in cands if c > t), default=INF)


def finalize(inst: OpInstance, end_of_trace: int | None = None) -> Verdict:
    """Verdict at the end of the trace; does not mutate the instance."""
    if inst.verdict.final:
        return inst.verdict
    if inst.verdict is Verdict.PROVISIONAL:
        return Verdict.WEAK_HOLDS
    return Verdict.INACTIVE
