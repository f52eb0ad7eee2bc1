"""Self-stabilizing compact leader election on unoriented rings."""

from .checkers import (
    PotentialReport,
    check_attractor,
    check_closure,
    check_nonsilence,
    hyper_nodes,
    is_converged,
    memory_bits,
    potentials,
)
from .identifiers import NONE, bit_position, msb_position
from .protocol_core import NodeState, RuleId, apply_rule, enabled_rule
from .scheduler import DaemonPolicy, Trace, replay, run, step
from .topology_config import (
    Configuration,
    Ring,
    cycle_adversarial_configuration,
    impostor_configuration,
    legitimate_configuration,
    make_ring,
    random_configuration,
    reset_configuration,
)

__version__ = "0.1.0"
