"""Potential functions, legitimacy predicates and empirical property checks."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .identifiers import bit_position, msb_position
from .protocol_core import NodeEval, best, trivial_error
from .scheduler import DaemonPolicy, Trace, run
from .topology_config import Configuration

GAMMAS = ("TRUE", "TEF", "CF", "IEF", "LE")


@dataclass(frozen=True)
class HyperNodeChain:
    members: Tuple[int, ...]
    length: int
    complete: bool
    parent_chain: Optional[int] = None


@dataclass(frozen=True)
class PotentialReport:
    L: int
    Psi: int
    Phi: int
    Lambda: int
    Xi: int
    Pi: int
    P: int
    E: int
    memory_bits_max: int

    def to_line(self) -> str:
        vals = " ".join(f"{k}={getattr(self, k)}" for k in
                        ("L", "Psi", "Phi", "Lambda", "Xi", "Pi", "P", "E", "memory_bits_max"))
        flags = ",".join(k for k, ok in self.gamma_flags.items() if ok) or "-"
        return f"{vals} gammas={flags}"

    @property
    def gamma_flags(self) -> Dict[str, bool]:
        return {
            "TEF": self.Psi == 0,
            "CF": self.Psi == 0 and self.Phi == 0 and self.Lambda == 0 and self.L > 0,
            "IEF": self.Psi == 0 and self.P == 0 and self.E == 0,
            "LE": self.L == 1,
        }


def _parent_index(cfg: Configuration, i: int) -> Optional[int]:
    p = cfg.states[i].p
    return None if p is None else cfg.ring.wiring[i][p][0]


def _is_child_of(cfg: Configuration, u: int, v: int) -> bool:
    return _parent_index(cfg, u) == v


def hyper_nodes(cfg: Configuration) -> List[HyperNodeChain]:
    """Maximal parent-linked runs with d = 1, 2, ... starting at d = 1.

    The target length of a chain is the B-hat of its first member.
    """
    n, st = cfg.ring.n, cfg.states
    chains = []
    last_of = {}
    for start in range(n):
        s = st[start]
        if s.d != 1 or s.p is None or s.b_hat < 1:
            continue
        k = s.b_hat
        members = [start]
        while len(members) < k:
            cur = members[-1]
            nxt = [j for j, _ in cfg.ring.wiring[cur]
                   if _is_child_of(cfg, j, cur) and st[j].d == st[cur].d + 1
                   and j not in members]
            if not nxt:
                break
            members.append(nxt[0])
        complete = len(members) == k
        chains.append((tuple(members), k, complete))
        if complete:
            last_of[members[-1]] = len(chains) - 1
    out = []
    for members, k, complete in chains:
        par = _parent_index(cfg, members[0])
        out.append(HyperNodeChain(members, k, complete, last_of.get(par)))
    return out


def chain_value(chain: HyperNodeChain, cfg: Configuration) -> int:
    if not chain.complete:
        raise ValueError("value of an incomplete hyper-node is undefined")
    value = 0
    for i in chain.members:
        value = 2 * value + cfg.states[i].dB
    return value


def _coherence_gap(cfg: Configuration, i: int) -> int:
    v = cfg.states[i]
    if v.d <= 0 or v.p is None:
        return 0
    par = cfg.states[_parent_index(cfg, i)]
    if best(cfg.view(i)) is not None:
        return 0
    # a parent inside a hyper-node continues it; anything else starts a new one
    if 1 <= par.d < v.b_hat:
        return abs(v.d - par.d - 1)
    return abs(v.d - 1)


def _psi(cfg: Configuration) -> int:
    return sum(1 for i in range(cfg.ring.n) if trivial_error(cfg.view(i)))


def _phi(cfg: Configuration) -> int:
    return sum(_coherence_gap(cfg, i) for i in range(cfg.ring.n))


def _lambda(cfg: Configuration) -> int:
    chains = hyper_nodes(cfg)
    total = 0
    for ch in chains:
        if ch.complete and ch.parent_chain is not None:
            total += abs(chain_value(ch, cfg) - chain_value(chains[ch.parent_chain], cfg) - 1)
    return total


def _p(cfg: Configuration) -> int:
    max_fb = max(msb_position(x) for x in cfg.ring.ids)
    return sum(abs(max_fb - s.b_hat) for s in cfg.states)


def _e(cfg: Configuration) -> int:
    st, ids = cfg.states, cfg.ring.ids
    min_ph = min(s.elec.phase for s in st)
    if min_ph < 1:
        return 0
    ref = bit_position(min_ph, max(ids))
    return sum(1 for i, s in enumerate(st) if s.d == 0 and bit_position(min_ph, ids[i]) < ref)


def potentials(cfg: Configuration) -> PotentialReport:
    st = cfg.states
    max_bhat = max(s.b_hat for s in st)
    Xi = sum(abs(max_bhat - s.b_hat) for s in st)
    # reference quadruplet: max phase, then max bit position and control within it
    max_ph = max(s.elec.phase for s in st)
    top_phase = [s for s in st if s.elec.phase == max_ph]
    max_bp = max(s.elec.bit_position for s in top_phase)
    max_c = max(s.elec.control for s in top_phase)
    Pi = sum(abs(s.elec.bit_strong - max_bhat) + abs(s.elec.phase - max_ph)
             + abs(s.elec.bit_position - max_bp) + abs(s.elec.control - max_c) for s in st)
    return PotentialReport(sum(s.leader for s in st), _psi(cfg), _phi(cfg), _lambda(cfg), Xi,
                           Pi, _p(cfg), _e(cfg), memory_bits(cfg)[0])


# ----- legitimacy predicates -----

def in_tef(cfg: Configuration) -> bool:
    return not any(trivial_error(cfg.view(i)) for i in range(cfg.ring.n))


def in_gamma(name: str, cfg: Configuration) -> bool:
    """Same truth value as ``potentials(cfg).gamma_flags[name]``, evaluating
    only the potentials the predicate needs."""
    if name == "TRUE":
        return True
    if name == "TEF":
        return in_tef(cfg)
    if name == "CF":
        return (sum(s.leader for s in cfg.states) > 0 and in_tef(cfg)
                and _phi(cfg) == 0 and _lambda(cfg) == 0)
    if name == "IEF":
        return _p(cfg) == 0 and _e(cfg) == 0 and in_tef(cfg)
    if name == "LE":
        return sum(s.leader for s in cfg.states) == 1
    raise KeyError(f"unknown legitimacy predicate {name!r}")


def spanning_tree_root(cfg: Configuration) -> Optional[int]:
    """Root index if parent pointers of non-leaders form a spanning tree."""
    leaders = [i for i, s in enumerate(cfg.states) if s.leader == 1]
    if len(leaders) != 1 or cfg.states[leaders[0]].p is not None:
        return None
    root = leaders[0]
    n = cfg.ring.n
    for i in range(n):
        cur, hops = i, 0
        while cur != root:
            cur = _parent_index(cfg, cur)
            hops += 1
            if cur is None or hops > n:
                return None
    return root


def is_converged(cfg: Configuration) -> bool:
    """Unique leader, equal to the maximum id, rooting a spanning tree."""
    root = spanning_tree_root(cfg)
    return root is not None and cfg.ring.ids[root] == max(cfg.ring.ids)


# ----- memory -----

CONSTANT_FIELD_BITS = {
    "leader": 1, "p": 2, "dB": 1, "add": 2, "control": 2,
    "pl_tag": 2, "hc_tag": 2, "lost": 1,
}
BOUNDED_FIELDS = ("b_hat", "d", "bit_strong", "phase", "bit_position", "prev_position",
                  "pl_pos", "hc_pos")


def bounded_domain(max_id: int) -> int:
    """Values per position-bounded field: -1 .. K+1 with K = msb(max id) + 1."""
    return msb_position(max_id) + 1 + 3


def memory_bits_for(max_id: int) -> int:
    """Bits per node: constant fields plus the bounded fields packed together
    in one mixed-radix number."""
    size = bounded_domain(max_id)
    return sum(CONSTANT_FIELD_BITS.values()) + math.ceil(len(BOUNDED_FIELDS) * math.log2(size))


def field_domains(max_id: int) -> Dict[str, tuple]:
    """Explicit value set of every register field."""
    top = msb_position(max_id) + 2
    pos = tuple(range(-1, top + 1))
    return {
        "leader": (0, 1),
        "p": (None, 0, 1),
        "dB": (0, 1),
        "add": (None, "+", "ok"),
        "control": (-1, 0, 1),
        "pl_tag": ("none", "clean", 0, 1),
        "hc_tag": ("none", "clean", 0, 1),
        "lost": (0, 1),
        "b_hat": pos,
        "d": pos,
        "bit_strong": pos,
        "phase": tuple(range(0, top + 2)),
        "bit_position": pos,
        "prev_position": pos,
        "pl_pos": pos,
        "hc_pos": pos,
    }


def memory_bits_recount(max_id: int) -> int:
    """Independent recount: integer bit lengths over the explicit domains."""
    doms = field_domains(max_id)
    packed = 1
    for name in BOUNDED_FIELDS:
        packed *= len(doms[name])
    const = sum((len(doms[name]) - 1).bit_length() for name in CONSTANT_FIELD_BITS)
    return const + (packed - 1).bit_length()


def memory_bits(cfg: Configuration) -> Tuple[int, float]:
    """Every node's register has the same width, fixed by the id set."""
    bits = memory_bits_for(max(cfg.ring.ids))
    return bits, float(bits)


# ----- dynamic checks -----

@dataclass
class ClosureVerdict:
    held: bool
    precondition_failed: bool = False
    step: Optional[int] = None
    config: Optional[Configuration] = None


def check_closure(gamma: str, cfg: Configuration, policy: DaemonPolicy, steps: int,
                  seed: int = 0, predicate: Optional[Callable] = None) -> ClosureVerdict:
    pred = predicate or (lambda c: in_gamma(gamma, c))
    if not pred(cfg):
        return ClosureVerdict(False, precondition_failed=True, config=cfg)
    bad = {}

    def watch(idx, c, _sel, _rules):
        if not bad and not pred(c):
            bad["step"], bad["config"] = idx, c

    tr = run(cfg, policy, seed=seed, max_steps=steps, until=lambda c: bool(bad), record=False,
             on_step=watch)
    del tr
    if bad:
        return ClosureVerdict(False, step=bad["step"], config=bad["config"])
    return ClosureVerdict(True)


@dataclass
class AttractorVerdict:
    ok: bool
    rounds: int
    trace: Optional[Trace] = None
    precondition_failed: bool = False


def check_attractor(from_gamma: str, to_gamma: str, cfg: Configuration, policy: DaemonPolicy,
                    round_budget: int, seed: int = 0) -> AttractorVerdict:
    if not in_gamma(from_gamma, cfg):
        return AttractorVerdict(False, 0, precondition_failed=True)
    target = is_converged if to_gamma == "LE*" else (lambda c: in_gamma(to_gamma, c))
    tr = run(cfg, policy, seed=seed, max_rounds=round_budget, until=target, record=False)
    if tr.reached:
        return AttractorVerdict(True, tr.rounds)
    return AttractorVerdict(False, tr.rounds, trace=tr)


@dataclass
class NonSilenceVerdict:
    non_silent: bool
    quiet_window: Optional[Tuple[int, int]] = None
    longest_quiet: int = 0
    rounds: int = 0


def check_nonsilence(cfg: Configuration, policy: DaemonPolicy, window_rounds: int,
                     repetitions: int = 1, total_rounds: Optional[int] = None,
                     seed: int = 0, scope: str = "any") -> NonSilenceVerdict:
    """Every window of ``window_rounds`` rounds must contain a register change.

    With ``scope="every"`` each node's own register must change within every
    window. A configuration without enabled nodes is silent by definition.
    """
    if scope not in ("any", "every"):
        raise ValueError(f"unknown scope {scope!r}")
    n = cfg.ring.n
    total = total_rounds or window_rounds * max(repetitions, 1)
    last = [0] * n
    prev = [cfg]
    now = [0]
    longest = 0
    worst = None

    def on_step(_i, c, sel, _rules):
        for j in sel:
            if c.states[j] != prev[0].states[j]:
                last[j] = now[0] + 1
        prev[0] = c

    def on_round(r, _c):
        nonlocal longest, worst
        now[0] = r
        stale = min(last) if scope == "every" else max(last)
        gap = r - stale
        if gap > longest:
            longest = gap
            worst = (stale, r)

    tr = run(cfg, policy, seed=seed, max_rounds=total, record=False, on_step=on_step,
             on_round=on_round)
    if tr.silent:
        return NonSilenceVerdict(False, (tr.rounds, total), total, tr.rounds)
    ok = longest < window_rounds
    return NonSilenceVerdict(ok, None if ok else worst, longest, tr.rounds)


def sample_members(gamma: str, ring_factory, count: int, seed: int = 0,
                   max_rounds: int = 2000, nested: bool = False) -> List[Configuration]:
    """Configurations satisfying ``gamma``, each the first one hit by a run
    from a random start under the random daemon.

    With ``nested`` a member must also satisfy every predicate before
    ``gamma`` in TEF, CF, IEF, LE.
    """
    from .topology_config import random_configuration

    names = GAMMAS[1:GAMMAS.index(gamma) + 1] if nested and gamma != "TRUE" else (gamma,)

    def member(c):
        return all(in_gamma(g, c) for g in names)

    rng = random.Random(seed)
    out: List[Configuration] = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 20 * count + 20:
            raise RuntimeError(f"could not sample members of {gamma}")
        ring = ring_factory(rng)
        tr = run(random_configuration(ring, rng), DaemonPolicy.random_distributed(),
                 seed=rng.randrange(1 << 30), max_rounds=max_rounds, record=False,
                 until=member)
        if tr.reached:
            out.append(tr.final)
    return out


# ----- hyper-node increment probe -----

@dataclass(frozen=True)
class PipelineResult:
    bits: Optional[Tuple[int, ...]]  # cells read by the next hyper-node, position order
    overflow: bool
    steps: int


def pipeline_configuration(k: int, value: int) -> Tuple[Configuration, Tuple[int, ...], int]:
    """A root, one idle hyper-node of length ``k`` holding ``value``, and the
    first node of the next hyper-node below it.

    Returns the configuration, the chain indices and the consumer index. The
    consumer's own bit is set to the top bit of ``value + 1`` so that its
    position-1 check stays quiet; the later positions are unconstrained. It
    starts as if it had already published its own first cell, so that with
    ``k = 1`` it reads instead of starting its own addition.
    """
    from .protocol_core import Elec, NodeState
    from .topology_config import make_ring

    if k < 1 or not 0 <= value < 2 ** k:
        raise ValueError("need k >= 1 and 0 <= value < 2**k")
    root_id = 2 ** (k + 1) - 1
    ids = [root_id] + list(range(1, k + 2))
    ring = make_ring(ids, port_seed=k * 1000 + value)  # index order is ring order
    top = msb_position(root_id)
    elec = Elec(top, 1, bit_position(1, root_id), 1, bit_position(top + 1, root_id))
    bits = [(value >> (k - 1 - i)) & 1 for i in range(k)]
    nxt_top = ((value + 1) % 2 ** k) >> (k - 1)
    states = [NodeState(leader=1, p=None, d=0, b_hat=top, elec=elec)]
    for i in range(1, k + 2):
        d = i if i <= k else 1
        dB = bits[i - 1] if i <= k else nxt_top
        states.append(NodeState(leader=0, p=ring.port_towards(i, i - 1), d=d, dB=dB,
                                b_hat=top, elec=elec, lost=1,
                                pl=None if i <= k else (1, dB)))
    return Configuration(ring, tuple(states)), tuple(range(1, k + 1)), k + 1


def pipeline_increment(k: int, value: int, max_steps: int = 10_000) -> PipelineResult:
    """Drive one hyper-node's addition and broadcast into the next hyper-node.

    The daemon activates chain members whose enabled rule is BinAdd or Broad
    and the consumer's Verif, nothing else. Overflow is the carry-out error
    at the first member.
    """
    from .protocol_core import RuleId
    from .scheduler import enabled_moves, step

    cfg, chain, consumer = pipeline_configuration(k, value)
    wanted = {i: (RuleId.HYPER_BINADD, RuleId.HYPER_BROAD) for i in chain}
    wanted[consumer] = (RuleId.HYPER_VERIF,)
    read = []
    for steps in range(max_steps):
        if any(NodeEval(cfg.view(i)).er_add() for i in chain):
            return PipelineResult(None, True, steps)
        moves = enabled_moves(cfg)
        sel = [i for i, rules in wanted.items() if i in moves and moves[i][0] in rules]
        if not sel:
            break
        cfg, _ = step(cfg, sel, moves)
        cell = cfg.states[consumer].hc
        if cell is not None and (not read or read[-1] != cell):
            read.append(cell)
    else:
        raise RuntimeError("pipeline did not settle")
    if [pos for pos, _ in read] != list(range(1, k + 1)):
        return PipelineResult(None, False, steps)
    return PipelineResult(tuple(b for _, b in read), False, steps)
