"""Cash machine walkthrough: generate each scenario, replay it, tell the story.

Run: python3 demos/cash_machine.py
"""
from ailtl.monitor import run
from ailtl.parser import parse_rules, parse_trace
from ailtl.scenarios import generate

STORIES = {
    "cash-machine-happy": "customers come and go within five minutes",
    "cash-machine-no-exit": "a customer enters and never leaves",
    "cash-machine-refill": "withdrawals drain the machine below its minimum",
    "cash-machine-robbery": "the machine is emptied, then robbed",
    "cash-machine-robbery-foiled": "a robbery hits a machine that is still stocked",
}


def main():
    for name, story in STORIES.items():
        sc = generate(name, seed=0)
        report = run(parse_rules(sc.rules), parse_trace(sc.trace))
        print(f"== {name}: {story}")
        for inst in report.instances:
            binding = ", ".join(f"{k}={v}" for k, v in sorted(inst.binding.items())) or "-"
            print(f"   {inst.source:<11} {binding:<24} -> {inst.final}")
        for r in report.repairs:
            print(f"   repair at t={r.issued_at}: {r.atom} ({r.cause.value})")
        print(f"   coherence: {report.coherence.value}\n")


if __name__ == "__main__":
    main()
