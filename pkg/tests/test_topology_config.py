import random

import pytest
from hypothesis import given, settings, strategies as st

from clering.checkers import in_tef, is_converged, potentials
from clering.identifiers import msb_position
from clering.protocol_core import RESET_STATE
from clering.topology_config import (
    CONFIG_HEADER,
    ConfigError,
    Configuration,
    Ring,
    cycle_adversarial_configuration,
    cycle_ids,
    decode_config,
    encode_config,
    ids_for,
    impostor_configuration,
    legitimate_configuration,
    make_ring,
    random_configuration,
    reset_configuration,
    validate_configuration,
)

seeds = st.integers(min_value=0, max_value=10 ** 6)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=3, max_value=40), seeds)
def test_make_ring_wiring_is_a_reciprocal_cycle(n, seed):
    ring = make_ring(ids_for(n, "random", seed=seed), port_seed=seed)
    for i in range(n):
        neighbours = {ring.wiring[i][0][0], ring.wiring[i][1][0]}
        assert neighbours == {(i - 1) % n, (i + 1) % n}
        for port in (0, 1):
            j, back = ring.wiring[i][port]
            assert ring.wiring[j][back] == (i, port)


def test_make_ring_is_deterministic_in_its_seed():
    assert make_ring([4, 8, 2, 9], port_seed=3) == make_ring([4, 8, 2, 9], port_seed=3)


@pytest.mark.parametrize("ids", [[1, 2], [3, 3, 4], [0, 1, 2], [-1, 2, 3]])
def test_make_ring_rejects_bad_ids(ids):
    with pytest.raises(ConfigError):
        make_ring(ids)


def test_ring_rejects_non_reciprocal_wiring():
    with pytest.raises(ConfigError):
        Ring((1, 2, 3), (((1, 0), (2, 1)), ((0, 0), (2, 0)), ((0, 0), (1, 1))))


def test_id_policies():
    assert ids_for(5) == [1, 2, 3, 4, 5]
    r = ids_for(10, "random", seed=1)
    assert len(set(r)) == 10 and r == ids_for(10, "random", seed=1)
    assert ids_for(3, "explicit", explicit=[9, 4, 7]) == [9, 4, 7]
    with pytest.raises(ConfigError):
        ids_for(3, "explicit", explicit=[9, 4])


def test_reset_configuration_is_all_reset():
    cfg = reset_configuration(make_ring([3, 1, 2]))
    assert all(s == RESET_STATE for s in cfg.states)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=3, max_value=20), seeds)
def test_random_configuration_is_valid_and_round_trips(n, seed):
    rng = random.Random(seed)
    ring = make_ring(ids_for(n, "random", seed=seed), port_seed=seed)
    cfg = random_configuration(ring, rng)
    validate_configuration(cfg)
    text = encode_config(cfg)
    assert text.startswith(CONFIG_HEADER + "\n")
    back = decode_config(text)
    assert back == cfg
    assert encode_config(back) == text


@pytest.mark.parametrize("n", [8, 12, 16])
def test_cycle_generator_has_one_parent_cycle_and_clean_potentials(n):
    ring = make_ring(cycle_ids(n), port_seed=n)
    cfg = cycle_adversarial_configuration(ring)
    assert n % ring.k == 0
    assert all(s.p is not None and s.leader == 0 for s in cfg.states)
    rep = potentials(cfg)
    assert (rep.L, rep.Psi, rep.Phi, rep.Xi, rep.Pi) == (0, 0, 0, 0, 0)
    assert rep.Lambda > 0  # only the wrap-around pair disagrees
    assert in_tef(cfg)


def test_cycle_generator_requires_divisible_length():
    with pytest.raises(ConfigError):
        cycle_adversarial_configuration(make_ring([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13]))


def test_impostor_generator_roots_the_runner_up():
    ids = [37, 5, 44, 9, 12, 40, 3, 21]
    cfg = impostor_configuration(make_ring(ids, port_seed=2))
    leaders = [i for i, s in enumerate(cfg.states) if s.leader]
    assert len(leaders) == 1 and ids[leaders[0]] == 40
    rep = potentials(cfg)
    assert rep.L == 1 and rep.Psi == 0 and rep.Phi == 0 and rep.Lambda == 0
    assert not is_converged(cfg)


def test_impostor_generator_needs_shared_top_bit():
    with pytest.raises(ConfigError):
        impostor_configuration(make_ring([1, 2, 3, 9, 16]))


def test_legitimate_configuration_is_converged():
    cfg = legitimate_configuration(make_ring([6, 2, 13, 4, 9, 1, 7], port_seed=5))
    assert is_converged(cfg)
    rep = potentials(cfg)
    assert rep.gamma_flags["LE"] and rep.L == 1 and rep.Psi == rep.Phi == rep.Lambda == 0


def _sample_text():
    return encode_config(random_configuration(make_ring([5, 2, 7, 3]), random.Random(1)))


@pytest.mark.parametrize("mutate, line", [
    (lambda t: t.replace(CONFIG_HEADER, "clering-config v9"), 1),
    (lambda t: t.replace("n 4", "n four"), 2),
    (lambda t: t.replace("ids 5 2 7 3", "ids 5 2 7"), 3),
    (lambda t: t.replace("wire 1", "wire x"), 5),
])
def test_decode_errors_name_the_line(mutate, line):
    with pytest.raises(ConfigError, match=f"line {line}"):
        decode_config(mutate(_sample_text()))


def test_decode_rejects_truncated_and_out_of_domain():
    text = _sample_text()
    with pytest.raises(ConfigError):
        decode_config("\n".join(text.splitlines()[:-1]))
    with pytest.raises(ConfigError):
        decode_config(CONFIG_HEADER + "\n")
    lines = text.splitlines()
    parts = lines[-1].split()
    parts[2 + 2] = "99"  # d far above the bound
    lines[-1] = " ".join(parts)
    with pytest.raises(ConfigError):
        decode_config("\n".join(lines))


def test_msb_bound_of_hyper_nodes():
    ring = make_ring([3, 17, 6])
    assert ring.k == msb_position(17) == 4
    assert isinstance(Configuration(ring, reset_configuration(ring).states).view(0).nbrs, tuple)
