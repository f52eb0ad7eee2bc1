import random

import pytest
from hypothesis import given, settings, strategies as st

from clering.identifiers import bit_position, msb_position
from clering.protocol_core import (
    PREDICATES,
    RESET_STATE,
    Elec,
    NodeState,
    NodeView,
    RuleId,
    apply_rule,
    best,
    children,
    decide,
    enabled_rule,
    eval_predicate,
    previous_phase,
)
from clering.topology_config import (
    Configuration,
    legitimate_configuration,
    make_ring,
    random_configuration,
)


def _view(own, ident, left, right, back=(0, 0)):
    return NodeView(own, ident, (left, right), back)


def test_reset_node_starts_when_neighbourhood_is_reset():
    view = _view(RESET_STATE, 11, RESET_STATE, RESET_STATE)
    assert enabled_rule(view) is RuleId.START
    nxt = apply_rule(view, RuleId.START)
    assert nxt.leader == 1 and nxt.p is None and nxt.d == 0
    assert nxt.b_hat == msb_position(11) == 3
    assert nxt.elec.phase == 1 and nxt.elec.bit_position == 3
    assert nxt.elec.prev_position == bit_position(4, 11)
    assert nxt.pl == (1, 0)


def test_apply_rule_rejects_disabled_rule():
    view = _view(RESET_STATE, 5, RESET_STATE, RESET_STATE)
    with pytest.raises(ValueError):
        apply_rule(view, RuleId.PASSIVE)


def test_unknown_predicate_name():
    with pytest.raises(KeyError):
        eval_predicate("no_such_predicate", _view(RESET_STATE, 3, RESET_STATE, RESET_STATE))


def test_catalog_covers_rule_guards_and_errors():
    for name in ("root", "pass_nd", "t_pass", "t_inc", "t_update", "t_add", "t_broad",
                 "t_verif", "t_cleanm", "t_startdb", "t_reset", "t_start", "er_t",
                 "er_hyper", "er_elec", "best", "ch"):
        assert name in PREDICATES


def test_reset_spreads_to_non_reset_neighbours():
    ring = make_ring([3, 9, 4], port_seed=0)
    started = apply_rule(_view(RESET_STATE, 9, RESET_STATE, RESET_STATE), RuleId.START)
    cfg = Configuration(ring, (RESET_STATE, started, RESET_STATE))
    # the started node is a legal start state, so it waits; a garbage node resets
    assert enabled_rule(cfg.view(1)) is None
    junk = started._replace(d=2)
    cfg = Configuration(ring, (RESET_STATE, junk, RESET_STATE))
    assert enabled_rule(cfg.view(1)) is RuleId.ERROR
    assert apply_rule(cfg.view(1), RuleId.ERROR) == RESET_STATE


def test_stronger_neighbour_is_best():
    mine = NodeState(leader=1, p=None, d=0, b_hat=2, elec=Elec(2, 1, 2, 0, bit_position(3, 5)),
                     pl=(1, 0))
    strong = NodeState(leader=1, p=None, d=0, b_hat=4, elec=Elec(4, 1, 4, 0, 2), pl=(1, 0))
    view = _view(mine, 5, mine, strong)
    assert best(view) == 1
    assert enabled_rule(view) is RuleId.PASSIVE
    nxt = apply_rule(view, RuleId.PASSIVE)
    assert nxt.p == 1 and nxt.d == 1 and nxt.leader == 0 and nxt.elec == strong.elec


def test_same_phase_higher_bit_wins_and_ties_do_not():
    e = Elec(4, 1, 4, 0, 1)
    root = NodeState(leader=1, p=None, d=0, b_hat=4, elec=e, pl=(1, 0))
    assert best(_view(root, 17, root, root)) is None
    later = NodeState(leader=1, p=None, d=0, b_hat=4, elec=Elec(4, 2, 3, 0, 4), pl=(1, 0))
    earlier = NodeState(leader=1, p=None, d=0, b_hat=4, elec=Elec(4, 2, 1, 0, 4), pl=(1, 0))
    assert best(_view(earlier, 18, later, root)) == 0


def test_root_with_wrong_bit_position_is_an_election_error():
    ident = 0b10110
    top = msb_position(ident)
    good = NodeState(leader=1, p=None, d=0, b_hat=top,
                     elec=Elec(top, 2, bit_position(2, ident), 0, bit_position(1, ident)),
                     pl=(1, 0))
    assert not eval_predicate("er_elec", _view(good, ident, good, good))
    bad = good._replace(elec=good.elec._replace(bit_position=0))
    assert eval_predicate("er_elec", _view(bad, ident, good, good))


def test_previous_phase_wraps():
    assert previous_phase(1, 5) == 5
    assert previous_phase(3, 5) == 2


def test_children_match_parent_pointers_in_legitimate_configuration():
    ring = make_ring([5, 12, 3, 9, 14, 7, 2, 11], port_seed=4)
    cfg = legitimate_configuration(ring)
    for v in range(ring.n):
        ch_ports = children(cfg.view(v))
        for port in (0, 1):
            u, back = ring.wiring[v][port]
            is_child = cfg.states[u].p == back and cfg.states[u].leader == 0
            assert (port in ch_ports) == is_child


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_decide_is_consistent_with_enabled_rule_and_apply(seed):
    rng = random.Random(seed)
    n = rng.randint(3, 9)
    ids = rng.sample(range(1, 200), n)
    cfg = random_configuration(make_ring(ids, port_seed=seed), rng)
    for i in range(n):
        view = cfg.view(i)
        rule, nxt = decide(view)
        assert rule is enabled_rule(view)
        if rule is None:
            assert nxt == view.own
        else:
            assert apply_rule(view, rule) == nxt
            # guarded commands only write the node's own register
            assert isinstance(nxt, NodeState)
