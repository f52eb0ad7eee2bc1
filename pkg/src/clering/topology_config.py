"""Rings, configurations, generators and the ``clering-config v1`` format."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from .identifiers import bit_position, msb_position
from .protocol_core import CLEAN, OK, PLUS, RESET_STATE, Elec, NodeState, NodeView, previous_phase

CONFIG_HEADER = "clering-config v1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Ring:
    """Ring of ``n`` nodes; ``wiring[i][port] = (neighbour, neighbour_port)``."""

    ids: Tuple[int, ...]
    wiring: Tuple[Tuple[Tuple[int, int], Tuple[int, int]], ...]

    @property
    def n(self) -> int:
        return len(self.ids)

    def __post_init__(self):
        validate_ring(self)

    def port_towards(self, i: int, j: int) -> int:
        for port in (0, 1):
            if self.wiring[i][port][0] == j:
                return port
        raise ValueError(f"{j} is not a neighbour of {i}")

    @property
    def max_index(self) -> int:
        return max(range(self.n), key=lambda i: self.ids[i])

    @property
    def k(self) -> int:
        """Hyper-node length used by an error-free run (msb of the largest id)."""
        return msb_position(max(self.ids))


def validate_ring(ring: Ring) -> None:
    n = len(ring.ids)
    if n < 3:
        raise ConfigError(f"a ring needs at least 3 nodes, got {n}")
    if len(set(ring.ids)) != n:
        raise ConfigError("identifiers must be pairwise distinct")
    if any((not isinstance(x, int)) or x < 1 for x in ring.ids):
        raise ConfigError("identifiers must be positive integers")
    if len(ring.wiring) != n:
        raise ConfigError("wiring must list every node")
    for i in range(n):
        for port in (0, 1):
            j, back = ring.wiring[i][port]
            if not (0 <= j < n) or back not in (0, 1) or ring.wiring[j][back] != (i, port):
                raise ConfigError(f"wiring of node {i} port {port} is not reciprocal")
        if ring.wiring[i][0][0] == ring.wiring[i][1][0]:
            raise ConfigError(f"node {i} has the same neighbour on both ports")
    # single cycle through all nodes
    seen, prev, cur = {0}, None, 0
    for _ in range(n - 1):
        a, b = ring.wiring[cur][0][0], ring.wiring[cur][1][0]
        nxt = a if a != prev else b
        prev, cur = cur, nxt
        if cur in seen:
            raise ConfigError("wiring does not form a single ring")
        seen.add(cur)


def make_ring(ids: Sequence[int], port_seed: Optional[int] = 0) -> Ring:
    """Ring over ``ids`` in list order with pseudo-random port labels."""
    ids = tuple(int(x) for x in ids)
    n = len(ids)
    if n < 3:
        raise ConfigError(f"a ring needs at least 3 nodes, got {n}")
    if len(set(ids)) != n:
        raise ConfigError("identifiers must be pairwise distinct")
    rng = random.Random(port_seed)
    # succ_port[i]: port of node i that leads to node i+1
    succ_port = [rng.randrange(2) for _ in range(n)]
    wiring = []
    for i in range(n):
        nxt, prv = (i + 1) % n, (i - 1) % n
        ports = [None, None]
        ports[succ_port[i]] = (nxt, 1 - succ_port[nxt])
        ports[1 - succ_port[i]] = (prv, succ_port[prv])
        wiring.append(tuple(ports))
    return Ring(ids, tuple(wiring))


def cycle_ids(n: int) -> List[int]:
    """Sequential ids plus one large id whose msb divides ``n``."""
    for k in range(1, 64):
        if n % k == 0 and (1 << k) > n - 1 and n // k < (1 << k):
            return list(range(1, n)) + [1 << k]
    raise ConfigError(f"no cycle-compatible id set for n={n}")


def ids_for(n: int, policy: str = "sequential", seed: int = 0,
            explicit: Optional[Sequence[int]] = None) -> List[int]:
    if policy == "sequential":
        return list(range(1, n + 1))
    if policy == "random":
        rng = random.Random(seed)
        return rng.sample(range(1, max(4 * n, 16) + 1), n)
    if policy == "explicit":
        if explicit is None or len(explicit) != n:
            raise ConfigError("explicit ids must list exactly n identifiers")
        return list(explicit)
    raise ConfigError(f"unknown id policy {policy!r}")


@dataclass(frozen=True)
class Configuration:
    ring: Ring
    states: Tuple[NodeState, ...]

    def view(self, i: int) -> NodeView:
        w = self.ring.wiring[i]
        s = self.states
        return NodeView(s[i], self.ring.ids[i], (s[w[0][0]], s[w[1][0]]), (w[0][1], w[1][1]))

    def replace(self, states: Iterable[NodeState]) -> "Configuration":
        return Configuration(self.ring, tuple(states))


def state_bound(ring: Ring) -> int:
    """Largest value any position-valued field may take in a valid state."""
    return msb_position(max(ring.ids)) + 2


def validate_configuration(cfg: Configuration) -> None:
    if len(cfg.states) != cfg.ring.n:
        raise ConfigError("one state per node is required")
    top = state_bound(cfg.ring)
    for i, s in enumerate(cfg.states):
        where = f"node {i}"
        e = s.elec
        checks = [
            (s.leader in (0, 1), "leader"),
            (s.p in (None, 0, 1), "p"),
            (-1 <= s.d <= top, "d"),
            (s.dB in (0, 1), "dB"),
            (-1 <= s.b_hat <= top, "b_hat"),
            (-1 <= e.bit_strong <= top, "bit_strong"),
            (0 <= e.phase <= top + 1, "phase"),
            (-1 <= e.bit_position <= top, "bit_position"),
            (e.control in (-1, 0, 1), "control"),
            (-1 <= e.prev_position <= top, "prev_position"),
            (s.add in (None, PLUS, OK), "add"),
            (s.lost in (0, 1), "lost"),
        ]
        for cell, name in ((s.pl, "pl"), (s.hc, "hc")):
            ok = cell is None or cell == CLEAN or (1 <= cell[0] <= top and cell[1] in (0, 1))
            checks.append((ok, name))
        for ok, name in checks:
            if not ok:
                raise ConfigError(f"{where}: field {name} out of domain in {s}")


# ----- generators -----

def reset_configuration(ring: Ring) -> Configuration:
    return Configuration(ring, tuple(RESET_STATE for _ in range(ring.n)))


def _random_cell(rng: random.Random, top: int, allow_clean: bool = True):
    r = rng.random()
    if r < 0.3:
        return None
    if allow_clean and r < 0.4:
        return CLEAN
    return (rng.randint(1, top), rng.randrange(2))


def random_state(rng: random.Random, top: int) -> NodeState:
    return NodeState(
        leader=rng.randrange(2),
        p=rng.choice((None, 0, 1)),
        d=rng.randint(-1, top),
        dB=rng.randrange(2),
        b_hat=rng.randint(-1, top),
        elec=Elec(rng.randint(-1, top), rng.randint(0, top + 1), rng.randint(-1, top),
                  rng.choice((-1, 0, 1)), rng.randint(-1, top)),
        add=rng.choice((None, PLUS, OK)),
        pl=_random_cell(rng, top),
        hc=_random_cell(rng, top),
        lost=rng.randrange(2),
    )


def random_configuration(ring: Ring, rng: random.Random) -> Configuration:
    """Every variable drawn independently from its full domain."""
    top = state_bound(ring)
    return Configuration(ring, tuple(random_state(rng, top) for _ in range(ring.n)))


def _walk(ring: Ring, start: int, first_port: int) -> List[int]:
    """Node indices visited going around the ring from ``start`` via ``first_port``."""
    order = [start]
    prev, cur = start, ring.wiring[start][first_port][0]
    while cur != start:
        order.append(cur)
        a, b = ring.wiring[cur][0][0], ring.wiring[cur][1][0]
        prev, cur = cur, (a if a != prev else b)
    return order


def _chain_bits(value: int, k: int) -> List[int]:
    return [(value >> (k - 1 - i)) & 1 for i in range(k)]


def cycle_adversarial_configuration(ring: Ring) -> Configuration:
    """All nodes passive on one parent cycle, hyper-node values consecutive.

    Only the wrap-around pair of hyper-nodes is inconsistent.
    """
    k = ring.k
    n = ring.n
    if k < 1 or n % k:
        raise ConfigError(f"n={n} must be a multiple of the hyper-node length k={k}")
    m = n // k
    if m >= 2 ** k:
        raise ConfigError(f"{m} hyper-nodes do not fit in {k}-bit counters")
    order = _walk(ring, 0, 0)  # order[t+1] is the child of order[t]
    elec = Elec(k, 1, k, 0, bit_position(k + 1, max(ring.ids)))
    states = [None] * n
    for t, node in enumerate(order):
        parent = order[t - 1]
        chain, pos = divmod(t, k)
        bits = _chain_bits(chain, k)
        top = msb_position(ring.ids[node])
        lost = 0 if top == k else 1
        states[node] = NodeState(leader=0, p=ring.port_towards(node, parent), d=pos + 1,
                                 dB=bits[pos], b_hat=k, elec=elec, lost=lost)
    cfg = Configuration(ring, tuple(states))
    validate_configuration(cfg)
    return cfg


def impostor_configuration(ring: Ring, phase: int = 2) -> Configuration:
    """Spanning tree rooted at the largest id other than the true maximum.

    The hyper-node bits are consistent with the impostor as root, so only
    the identifier comparison can reveal it.
    """
    n = ring.n
    if n < 4:
        raise ConfigError("impostor configuration needs n >= 4")
    ranked = sorted(range(n), key=lambda i: ring.ids[i], reverse=True)
    true_max, fake = ranked[0], ranked[1]
    k = msb_position(ring.ids[true_max])
    if msb_position(ring.ids[fake]) != k:
        raise ConfigError("second-largest id must share the msb of the largest id")
    if k < 1:
        raise ConfigError("hyper-node length must be positive")
    if n - 1 > k * (2 ** k):
        raise ConfigError("ring too long for consistent hyper-node counters")
    # stay strictly before the first phase at which the true maximum differs
    first_diff = next((ph for ph in range(1, k + 2)
                       if bit_position(ph, ring.ids[true_max]) != bit_position(ph, ring.ids[fake])),
                      k + 2)
    phase = max(1, min(phase, k + 1, first_diff - 1))
    fake_id = ring.ids[fake]
    elec = Elec(k, phase, bit_position(phase, fake_id), 0,
                bit_position(previous_phase(phase, k + 1), fake_id))
    # tree is the path going around the ring from the impostor
    order = _walk(ring, fake, 0)
    states = [None] * n
    states[fake] = NodeState(leader=1, p=None, d=0, dB=0, b_hat=k, elec=elec, pl=(1, 0))
    for t in range(1, n):
        node, parent = order[t], order[t - 1]
        chain, pos = divmod(t - 1, k)
        bits = _chain_bits(chain, k) if chain < 2 ** k else [0] * k
        ident = ring.ids[node]
        lost = 1
        if msb_position(ident) == k:
            lost = 0
            for ph in range(1, phase + 1):
                if bit_position(ph, ident) != bit_position(ph, fake_id):
                    lost = 1 if bit_position(ph, ident) < bit_position(ph, fake_id) else 0
                    break
        states[node] = NodeState(leader=0, p=ring.port_towards(node, parent), d=pos + 1,
                                 dB=bits[pos], b_hat=k, elec=elec, lost=lost)
    cfg = Configuration(ring, tuple(states))
    validate_configuration(cfg)
    return cfg


def legitimate_configuration(ring: Ring, max_rounds: Optional[int] = None,
                             extra_rounds: Optional[int] = None) -> Configuration:
    """Run from the all-reset configuration under the synchronous daemon until
    the max-id node leads a spanning tree, then a while longer."""
    from .checkers import is_converged
    from .scheduler import DaemonPolicy, run

    n = ring.n
    budget = max_rounds or 200 * n * max(1, n.bit_length()) ** 2
    tr = run(reset_configuration(ring), DaemonPolicy.synchronous(), until=is_converged,
             max_rounds=budget, record=False)
    if not tr.reached:
        raise RuntimeError(f"no convergence within {budget} rounds (n={n})")
    extra = extra_rounds if extra_rounds is not None else 4 * n
    tr2 = run(tr.final, DaemonPolicy.synchronous(), max_rounds=extra, record=False)
    final = tr2.final
    if not is_converged(final):
        raise RuntimeError("legitimate configuration left the leader-election set")
    return final


# ----- serialization -----

def _tok_cell(cell) -> str:
    return "BOT" if cell is None else f"{cell[0]},{cell[1]}"


def _parse_cell(tok: str):
    if tok == "BOT":
        return None
    a, b = tok.split(",")
    return (int(a), int(b))


def encode_state(s: NodeState) -> str:
    e = s.elec
    return " ".join([
        str(s.leader),
        "NOPARENT" if s.p is None else str(s.p),
        str(s.d), str(s.dB), str(s.b_hat),
        str(e.bit_strong), str(e.phase), str(e.bit_position), str(e.control),
        str(e.prev_position),
        "BOT" if s.add is None else s.add,
        _tok_cell(s.pl), _tok_cell(s.hc), str(s.lost),
    ])


def decode_state(text: str) -> NodeState:
    t = text.split()
    if len(t) != 14:
        raise ConfigError(f"node record needs 14 fields, got {len(t)}")
    return NodeState(
        leader=int(t[0]),
        p=None if t[1] == "NOPARENT" else int(t[1]),
        d=int(t[2]), dB=int(t[3]), b_hat=int(t[4]),
        elec=Elec(int(t[5]), int(t[6]), int(t[7]), int(t[8]), int(t[9])),
        add=None if t[10] == "BOT" else t[10],
        pl=_parse_cell(t[11]), hc=_parse_cell(t[12]), lost=int(t[13]),
    )


def encode_states(states: Sequence[NodeState]) -> str:
    return "\n".join(f"node {i} {encode_state(s)}" for i, s in enumerate(states))


def encode_config(cfg: Configuration) -> str:
    r = cfg.ring
    lines = [CONFIG_HEADER, f"n {r.n}", "ids " + " ".join(map(str, r.ids))]
    for i in range(r.n):
        (a, pa), (b, pb) = r.wiring[i]
        lines.append(f"wire {i} {a} {pa} {b} {pb}")
    lines.append(encode_states(cfg.states))
    return "\n".join(lines) + "\n"


def decode_config(text: str) -> Configuration:
    """Parse a clering-config v1 document; errors name the offending line."""
    lines = [(no, ln.strip()) for no, ln in enumerate(text.splitlines(), start=1)
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0][1] != CONFIG_HEADER:
        raise ConfigError(f"line {lines[0][0] if lines else 1}: expected header {CONFIG_HEADER!r}")
    if len(lines) < 3:
        raise ConfigError(f"line {lines[-1][0] + 1}: unexpected end of file")
    (n_no, n_line), (id_no, id_line) = lines[1], lines[2]
    parts = n_line.split()
    if len(parts) != 2 or parts[0] != "n" or not parts[1].isdigit():
        raise ConfigError(f"line {n_no}: expected 'n <count>'")
    n = int(parts[1])
    parts = id_line.split()
    try:
        if parts[0] != "ids":
            raise ValueError
        ids = tuple(int(x) for x in parts[1:])
    except (IndexError, ValueError):
        raise ConfigError(f"line {id_no}: expected 'ids <id> ...'") from None
    if len(ids) != n:
        raise ConfigError(f"line {id_no}: {len(ids)} ids for n={n}")
    wiring = [None] * n
    states = [None] * n
    for lineno, ln in lines[3:]:
        parts = ln.split(maxsplit=2)
        try:
            if parts[0] == "wire":
                vals = [int(x) for x in ln.split()[1:]]
                if len(vals) != 5:
                    raise ValueError("wire record needs 5 integers")
                wiring[vals[0]] = ((vals[1], vals[2]), (vals[3], vals[4]))
            elif parts[0] == "node":
                states[int(parts[1])] = decode_state(parts[2])
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    missing = [i for i in range(n) if wiring[i] is None or states[i] is None]
    if missing:
        raise ConfigError(f"missing wire or node records for nodes {missing}")
    cfg = Configuration(Ring(ids, tuple(wiring)), tuple(states))
    validate_configuration(cfg)
    return cfg
