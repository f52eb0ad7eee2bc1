"""Daemons, atomic steps, round accounting, traces and replay."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

from .protocol_core import RuleId, decide
from .topology_config import (
    ConfigError,
    Configuration,
    decode_config,
    encode_config,
    encode_states,
)

TRACE_HEADER = "clering-trace v1"

Predicate = Callable[[Configuration], bool]


@dataclass(frozen=True)
class DaemonPolicy:
    kind: str
    inclusion: float = 0.5
    fairness_bound: Optional[int] = None
    script: Tuple[FrozenSet[int], ...] = ()

    @classmethod
    def synchronous(cls) -> "DaemonPolicy":
        return cls("synchronous")

    @classmethod
    def random_distributed(cls, inclusion: float = 0.5,
                           fairness_bound: Optional[int] = None) -> "DaemonPolicy":
        if not 0.0 < inclusion <= 1.0:
            raise ValueError("inclusion probability must be in (0, 1]")
        if fairness_bound is not None and fairness_bound < 1:
            raise ValueError("fairness bound must be positive")
        return cls("random_distributed", inclusion, fairness_bound)

    @classmethod
    def central(cls) -> "DaemonPolicy":
        return cls("central")

    @classmethod
    def scripted(cls, selections: Sequence[Sequence[int]]) -> "DaemonPolicy":
        return cls("scripted", script=tuple(frozenset(s) for s in selections))

    def bound_for(self, n: int) -> int:
        return self.fairness_bound if self.fairness_bound is not None else 8 * n


def enabled_moves(cfg: Configuration) -> Dict[int, Tuple[RuleId, object]]:
    """Node index -> (rule, successor state) for every enabled node."""
    out = {}
    for i in range(cfg.ring.n):
        rule, nxt = decide(cfg.view(i))
        if rule is not None:
            out[i] = (rule, nxt)
    return out


def refresh_moves(cfg: Configuration, moves, selected):
    """Enabled moves after a step, recomputed only where a view changed."""
    out = dict(moves)
    touched = set(selected)
    for i in selected:
        touched.update(j for j, _ in cfg.ring.wiring[i])
    for i in touched:
        rule, nxt = decide(cfg.view(i))
        if rule is None:
            out.pop(i, None)
        else:
            out[i] = (rule, nxt)
    return out


def enabled_nodes(cfg: Configuration) -> List[int]:
    return sorted(enabled_moves(cfg))


def step(cfg: Configuration, selected, moves=None):
    """Apply the selected nodes' rules atomically against one snapshot.

    Returns (new configuration, rule per selected node in index order).
    """
    if moves is None:
        moves = enabled_moves(cfg)
    sel = sorted(set(selected))
    if not sel:
        raise ValueError("a step must select at least one node")
    states = list(cfg.states)
    rules = []
    for i in sel:
        if i not in moves:
            raise ValueError(f"node {i} is not enabled")
        rule, nxt = moves[i]
        states[i] = nxt
        rules.append(rule)
    return cfg.replace(states), tuple(rules)


def digest(cfg: Configuration) -> str:
    """First 16 hex digits of SHA-256 over the canonical state encoding."""
    return hashlib.sha256(encode_states(cfg.states).encode()).hexdigest()[:16]


@dataclass
class Trace:
    initial: Configuration
    steps: List[Tuple[Tuple[int, ...], Tuple[RuleId, ...], str]] = field(default_factory=list)
    round_marks: List[int] = field(default_factory=list)
    final: Optional[Configuration] = None
    reached: bool = False
    silent: bool = False
    budget_exhausted: bool = False
    step_count: int = 0
    rules_seen: Dict[RuleId, int] = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return len(self.round_marks)

    @property
    def outcome(self) -> str:
        if self.reached:
            return "reached"
        if self.silent:
            return "silent"
        return "budget"


class _RoundTracker:
    """Opportunity-based rounds: a round ends once every node enabled when it
    opened has been activated or disabled at least once."""

    def __init__(self, enabled):
        self.pending = set(enabled)

    def update(self, selected, enabled_after) -> bool:
        self.pending.difference_update(selected)
        self.pending.intersection_update(enabled_after)
        if not self.pending:
            self.pending = set(enabled_after)
            return True
        return False


class _Selector:
    def __init__(self, policy: DaemonPolicy, n: int, rng: random.Random):
        self.policy = policy
        self.rng = rng
        self.bound = policy.bound_for(n)
        self.waiting: Dict[int, int] = {}
        self.cursor = 0

    def choose(self, enabled: List[int]) -> List[int]:
        kind = self.policy.kind
        if kind == "synchronous":
            return list(enabled)
        if kind == "central":
            return [self.rng.choice(enabled)]
        if kind == "scripted":
            if self.cursor >= len(self.policy.script):
                return []
            sel = sorted(self.policy.script[self.cursor])
            self.cursor += 1
            bad = set(sel) - set(enabled)
            if bad:
                raise ValueError(f"scripted step selects disabled nodes {sorted(bad)}")
            return sel
        if kind == "random_distributed":
            p = self.policy.inclusion
            sel = [i for i in enabled
                   if self.waiting.get(i, 0) + 1 >= self.bound or self.rng.random() < p]
            if not sel:
                sel = [self.rng.choice(enabled)]
            return sel
        raise ValueError(f"unknown daemon kind {kind!r}")

    def note(self, selected, enabled_after):
        chosen = set(selected)
        waiting = {}
        for i in enabled_after:
            waiting[i] = 0 if i in chosen else self.waiting.get(i, 0) + 1
        self.waiting = waiting

    def max_wait(self) -> int:
        return max(self.waiting.values(), default=0)


def run(cfg: Configuration, policy: DaemonPolicy, *, seed: int = 0,
        max_steps: Optional[int] = None, max_rounds: Optional[int] = None,
        until: Optional[Predicate] = None, hold_rounds: int = 0,
        record: bool = True, on_step: Optional[Callable] = None,
        on_round: Optional[Callable] = None) -> Trace:
    """Execute from ``cfg`` until a stop criterion or the budget is met.

    ``until`` stops once the predicate holds; with ``hold_rounds > 0`` it must
    keep holding for that many completed rounds (quiescence of the predicate).
    ``on_step(index, config, selected, rules)`` and ``on_round(round, config)``
    observe the run. A configuration with no enabled node ends the run as silent.
    """
    if max_steps is None and max_rounds is None and until is None:
        raise ValueError("a stop criterion or budget is required")
    rng = random.Random(seed)
    selector = _Selector(policy, cfg.ring.n, rng)
    trace = Trace(initial=cfg)
    held_since = None

    def satisfied(c, rounds_done):
        nonlocal held_since
        if until is None:
            return False
        if not until(c):
            held_since = None
            return False
        if held_since is None:
            held_since = rounds_done
        return rounds_done - held_since >= hold_rounds

    moves = enabled_moves(cfg)
    tracker = _RoundTracker(moves)
    if satisfied(cfg, 0):
        trace.reached = True
        trace.final = cfg
        return trace
    current = cfg
    steps = 0
    while True:
        if max_steps is not None and steps >= max_steps:
            trace.budget_exhausted = True
            break
        if max_rounds is not None and trace.rounds >= max_rounds:
            trace.budget_exhausted = True
            break
        if not moves:
            trace.silent = True
            break
        sel = selector.choose(sorted(moves))
        if not sel:
            trace.budget_exhausted = True
            break
        current, rules = step(current, sel, moves)
        for r in rules:
            trace.rules_seen[r] = trace.rules_seen.get(r, 0) + 1
        moves = refresh_moves(current, moves, sel)
        selector.note(sel, moves)
        if policy.kind == "random_distributed":
            assert selector.max_wait() < selector.bound, "fairness bound violated"
        if record:
            trace.steps.append((tuple(sel), rules, digest(current)))
        if on_step is not None:
            on_step(steps, current, sel, rules)
        steps += 1
        if tracker.update(sel, moves):
            trace.round_marks.append(steps - 1)
            if on_round is not None:
                on_round(trace.rounds, current)
        if satisfied(current, trace.rounds):
            trace.reached = True
            break
    trace.step_count = steps
    trace.final = current
    return trace


def round_boundaries(trace: Trace) -> List[int]:
    """Recompute round-closing step indices by replaying the selections."""
    if not trace.steps:
        return []
    cur = trace.initial
    moves = enabled_moves(cur)
    tracker = _RoundTracker(moves)
    marks = []
    for idx, (sel, _rules, _dg) in enumerate(trace.steps):
        cur, _ = step(cur, sel, moves)
        moves = enabled_moves(cur)
        if tracker.update(sel, moves):
            marks.append(idx)
    return marks


# ----- trace files -----

def encode_trace(trace: Trace) -> str:
    lines = [TRACE_HEADER, "begin-config"]
    lines.extend(encode_config(trace.initial).rstrip("\n").splitlines())
    lines.append("end-config")
    for idx, (sel, rules, dg) in enumerate(trace.steps):
        lines.append(f"step {idx} {','.join(map(str, sel))} "
                     f"{','.join(r.value for r in rules)} {dg}")
    lines.append("rounds " + " ".join(map(str, trace.round_marks)))
    lines.append(f"outcome {trace.outcome}")
    return "\n".join(lines) + "\n"


class TraceError(ValueError):
    pass


def decode_trace(text: str) -> Trace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceError(f"line 1: expected header {TRACE_HEADER!r}")
    try:
        start = lines.index("begin-config")
        end = lines.index("end-config")
    except ValueError:
        raise TraceError("missing begin-config/end-config block") from None
    try:
        initial = decode_config("\n".join(lines[start + 1:end]))
    except ConfigError as exc:
        raise TraceError(f"embedded configuration: {exc}") from None
    trace = Trace(initial=initial)
    seen_outcome = False
    for lineno, ln in enumerate(lines[end + 1:], start=end + 2):
        parts = ln.split()
        if not parts:
            continue
        if seen_outcome:
            raise TraceError(f"line {lineno}: record after outcome")
        try:
            if parts[0] == "step":
                if int(parts[1]) != len(trace.steps):
                    raise TraceError(f"line {lineno}: step index out of sequence")
                sel = tuple(int(x) for x in parts[2].split(","))
                rules = tuple(RuleId(x) for x in parts[3].split(","))
                trace.steps.append((sel, rules, parts[4]))
            elif parts[0] == "rounds":
                trace.round_marks = [int(x) for x in parts[1:]]
            elif parts[0] == "outcome":
                if parts[1] not in ("reached", "silent", "budget"):
                    raise TraceError(f"line {lineno}: unknown outcome {parts[1]!r}")
                seen_outcome = True
                trace.reached = parts[1] == "reached"
                trace.silent = parts[1] == "silent"
                trace.budget_exhausted = parts[1] == "budget"
            else:
                raise TraceError(f"line {lineno}: unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, TraceError):
                raise
            raise TraceError(f"line {lineno}: {exc}") from None
    if not seen_outcome:
        raise TraceError(f"line {len(lines)}: truncated, no outcome record")
    trace.step_count = len(trace.steps)
    return trace


@dataclass
class ReplayVerdict:
    ok: bool
    mismatch_step: Optional[int] = None
    reason: str = ""


def replay(trace: Trace) -> ReplayVerdict:
    """Re-execute every selection and compare rules and digests."""
    cur = trace.initial
    for idx, (sel, rules, dg) in enumerate(trace.steps):
        moves = enabled_moves(cur)
        try:
            cur, got = step(cur, sel, moves)
        except ValueError as exc:
            return ReplayVerdict(False, idx, str(exc))
        if got != tuple(rules):
            return ReplayVerdict(False, idx, "rule mismatch")
        if digest(cur) != dg:
            return ReplayVerdict(False, idx, "digest mismatch")
    return ReplayVerdict(True)
