"""Command-line front end: ``check``, ``oracle``, ``gen`` and ``explain``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import AiltlError
from .formula import EvolutionaryExpr, RuleSet, free_variables, plan_binding
from .matcher import exported_vars
from .monitor import Coherence, color_enabled, render_text, run
from .oracle import BatchModel, oracle_ruleset
from .parser import parse_rules, parse_trace, render_contextual, render_literal, render_op, render_pattern
from .scenarios import SCENARIOS, generate
from .terms import render_value

EXIT_OK, EXIT_INCOHERENT, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Unreadable or invalid input; maps to exit status 2."""


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {what} {path}: {e.strerror}") from None


def _load(args):
    try:
        rules = parse_rules(_read(args.rules, "rule file"))
    except AiltlError as e:
        raise InputError(f"{args.rules}: {e}") from None
    try:
        trace = parse_trace(_read(args.trace, "trace"))
    except AiltlError as e:
        raise InputError(f"{args.trace}: {e}") from None
    return rules, trace


def _emit(text: str, out: str | None) -> None:
    if out:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as e:
            raise InputError(f"cannot write {out}: {e.strerror}") from None
    else:
        sys.stdout.write(text)


def _render(doc: dict, fmt: str, out: str | None) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    return render_text(doc, color=out is None and color_enabled(sys.stdout))


def _monitor(args):
    rules, trace = _load(args)
    try:
        return run(rules, trace, until=args.until, stop_on_violation=args.fail_on_violation), rules
    except AiltlError as e:
        raise InputError(str(e)) from None


def cmd_check(args) -> int:
    report, _ = _monitor(args)
    _emit(_render(report.to_dict(), args.format, args.out), args.out)
    return EXIT_INCOHERENT if report.coherence is Coherence.INCOHERENT else EXIT_OK


def cmd_oracle(args) -> int:
    """Monitor report with the batch truth of every activation added."""
    report, rules = _monitor(args)
    model = BatchModel(report.timeline.snapshots)
    truth = {}
    for act in oracle_ruleset(model, rules):
        truth.setdefault((act.name, act.binding), act.value)
    doc = report.to_dict()
    for rule in doc["rules"]:
        for act, inst in zip(rule["activations"], [i for i in report.instances if i.source == rule["name"]]):
            key = tuple(sorted(inst.binding.items()))
            act["oracle"] = truth.get((rule["name"], key), "undetermined")
    _emit(_render(doc, args.format, args.out), args.out)
    return EXIT_INCOHERENT if report.coherence is Coherence.INCOHERENT else EXIT_OK


def cmd_gen(args) -> int:
    try:
        sc = generate(args.scenario, args.seed)
    except ValueError as e:
        raise InputError(str(e)) from None
    if args.out:
        _emit(sc.trace, args.out)
        rules_path = args.rules or str(Path(args.out).with_suffix(".ailtl"))
        _emit(sc.rules, rules_path)
    else:
        if args.rules:
            _emit(sc.rules, args.rules)
        sys.stdout.write(sc.trace)
    return EXIT_OK


_INTERVALS = {
    ("NOW", 1): ("[m, m]", "first checked state at or after m"),
    ("NEXT", 1): ("[a+m, a+m]", "first checked state at or after a+m"),
    ("EVENTUALLY", 1): ("[a, a+m]", "first checked state at or after a+m; earlier success holds at once"),
    ("EVENTUALLY", 2): ("[m, n]", "first checked state at or after n; earlier success holds at once"),
    ("ALWAYS", 1): ("[m, inf)", "none; a failure violates at once, otherwise weak at trace end"),
    ("ALWAYS", 2): ("[m, n]", "first checked state at or after n; a failure violates at once"),
    ("ALWAYS_S", 1): ("[0, inf)", "none; false before m and true from m on, otherwise violated"),
    ("ALWAYS_S", 2): ("[0, n+1]", "first checked state after n, where phi must be false"),
    ("NEVER_B", 1): ("[0, m-1]", "first checked state at or after m-1"),
    ("NEVER_A", 1): ("[m+1, inf)", "none; an occurrence violates at once, otherwise weak at trace end"),
    ("NEVER", 2): ("[m, n]", "first checked state at or after n; an occurrence violates at once"),
    ("SOMETIMES", 1): ("checkpoints m + j*f", "none; a false checkpoint violates at once"),
    ("SOMETIMES", 2): ("checkpoints m + j*f <= n", "the last checkpoint"),
}


def _names(vs) -> str:
    return ", ".join(sorted(vs)) or "-"


def explain(rules: RuleSet, name: str) -> str:
    """Human-readable decomposition of one rule or expression."""
    item = rules.get(name)
    cf = item.body
    is_expr = isinstance(item, EvolutionaryExpr)
    prebound = exported_vars(item.precond) if is_expr else set()
    plan = plan_binding(cf, prebound, owner=name)
    op = cf.op
    interval, crucial = _INTERVALS[(op.name, op.arity)]
    names = ["m", "n"]
    lines = [f"{'expr' if is_expr else 'rule'} {name} (prio {item.priority})"]
    lines.append(f"  operator:      {render_op(op)}")
    bounds = ", ".join(f"{names[i]} = {render_value(b)}" for i, b in enumerate(op.bounds))
    if op.freq is not None:
        bounds += f", f = {render_value(op.freq)}"
    lines.append(f"  bounds:        {bounds}")
    lines.append(f"  interval:      {interval}  (a = activation time)")
    lines.append(f"  crucial state: {crucial}")
    k = op.check_freq if op.check_freq is not None else rules.default_check_freq
    lines.append(f"  checked:       {'every ' + render_value(k) + ' from activation' if k is not None else 'every state'}")
    lines.append(f"  monitored:     {render_contextual(cf).split(' :: ')[0]}")
    if is_expr:
        lines.append(f"  precondition:  {render_pattern(item.precond)}")
    lines.append(f"  context:       {', '.join(render_literal(l) for l in plan.context) or '-'}")
    if plan.deferred:
        lines.append(f"  checked with phi: {', '.join(render_literal(l) for l in plan.deferred)}")
    lines.append(f"  bound by context: {_names(set(plan.key_vars))}")
    lines.append(f"  local to phi:     {_names(plan.local)}")
    if is_expr:
        lines.append(f"  expected:      {render_pattern(item.expected) if item.expected else '-'}")
        lines.append(f"  breaking:      {render_pattern(item.breaking) if item.breaking else '-'}")
        lines.append(f"  on violation:  {', '.join(map(render_value, item.repair_violation)) or '-'}")
        lines.append(f"  on broken:     {', '.join(map(render_value, item.repair_broken)) or '-'}")
    else:
        lines.append(f"  on violation:  {', '.join(map(render_value, item.repair)) or '-'}")
        lines.append(f"  on success:    {', '.join(map(render_value, item.improvement)) or '-'}")
    unbound = set().union(*(free_variables(a) for a in getattr(item, "repair", ()) + getattr(item, "improvement", ())
                            + getattr(item, "repair_violation", ()) + getattr(item, "repair_broken", ()))) \
        - set(plan.key_vars)
    if unbound:
        lines.append(f"  warning:       repair variables {_names(unbound)} are not bound by the context")
    return "\n".join(lines) + "\n"


def cmd_explain(args) -> int:
    try:
        rules = parse_rules(_read(args.rules, "rule file"))
    except AiltlError as e:
        raise InputError(f"{args.rules}: {e}") from None
    try:
        text = explain(rules, args.name)
    except KeyError:
        raise InputError(f"no rule or expression named {args.name!r}") from None
    _emit(text, args.out)
    return EXIT_OK


def _seconds(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer number of seconds: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ailtl", description="Check timed agent traces against A-ILTL rules.")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("--rules", required=True, metavar="PATH", help="rule file")
        sp.add_argument("--trace", required=True, metavar="PATH", help="trace file (text or JSON lines)")
        sp.add_argument("--format", choices=("json", "text"), default="json")
        sp.add_argument("--until", type=_seconds, metavar="SECONDS", help="ignore states after this time")
        sp.add_argument("--fail-on-violation", action="store_true",
                        help="stop at the first tick that produced a violation")
        sp.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")

    c = sub.add_parser("check", help="monitor a trace and report")
    run_opts(c)
    c.set_defaults(func=cmd_check)
    o = sub.add_parser("oracle", help="monitor report plus the batch truth of each activation")
    run_opts(o)
    o.set_defaults(func=cmd_oracle)
    g = sub.add_parser("gen", help="generate a scenario trace and its rule file")
    g.add_argument("scenario", choices=sorted(SCENARIOS))
    g.add_argument("--seed", type=int, default=0, metavar="N")
    g.add_argument("--out", metavar="PATH", help="trace destination (rules go next to it as .ailtl)")
    g.add_argument("--rules", metavar="PATH", help="rule file destination")
    g.set_defaults(func=cmd_gen)
    e = sub.add_parser("explain", help="describe one rule or expression")
    e.add_argument("--rules", required=True, metavar="PATH")
    e.add_argument("name")
    e.add_argument("--out", metavar="PATH")
    e.set_defaults(func=cmd_explain)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as e:
        print(f"ailtl: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
