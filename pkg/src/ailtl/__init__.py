"""Runtime verification of timed agent traces against A-ILTL rules."""
from .errors import AiltlError, GroundnessError, ParseError, SemanticError, TimeOverflowError, TraceError
from .evaluator import OpInstance, Verdict, due, finalize, probe, step
from .formula import (
    ContextualFormula,
    EventPattern,
    EvolutionaryExpr,
    IntervalOp,
    PatternElement,
    RuleSet,
    RuleSpec,
    free_variables,
    interest_interval,
    substitute,
)
from .kb import EventKind, History, Snapshot, Timeline, TraceEvent, build_timeline, holds, query
from .matcher import MatcherState, Status, advance, satisfies, start
from .monitor import Coherence, HandlerRegistry, Monitor, MonitorReport, coherence, run
from .oracle import BatchModel, Truth, oracle_expression, oracle_formula, oracle_rule
from .parser import parse_rules, parse_term, parse_trace, render

__version__ = "0.1.0"

__all__ = [
    "AiltlError", "BatchModel", "Coherence", "ContextualFormula", "EventKind", "EventPattern",
    "EvolutionaryExpr", "GroundnessError", "HandlerRegistry", "History", "IntervalOp", "MatcherState",
    "Monitor", "MonitorReport", "OpInstance", "ParseError", "PatternElement", "RuleSet", "RuleSpec",
    "SemanticError", "Snapshot", "Status", "TimeOverflowError", "Timeline", "TraceError", "TraceEvent",
    "Truth", "Verdict", "advance", "build_timeline", "coherence", "due", "finalize", "free_variables",
    "holds", "interest_interval", "oracle_expression", "oracle_formula", "oracle_rule", "parse_rules",
    "parse_term", "parse_trace", "probe", "query", "render", "run", "satisfies", "start", "step",
    "substitute",
]
