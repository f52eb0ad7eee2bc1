"""Bitwise access to node identifiers.

Protocol code never stores a whole identifier; it only asks for single
bit positions through the helpers here.
"""

from __future__ import annotations

NONE = -1


def _check_id(ident: int) -> None:
    if not isinstance(ident, int) or isinstance(ident, bool) or ident < 1:
        raise ValueError(f"identifier must be a positive integer, got {ident!r}")


def bit_position(rank: int, ident: int) -> int:
    """Position (0 = LSB) of the rank-th most significant set bit of ``ident``.

    Returns -1 when ``ident`` has fewer than ``rank`` set bits.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    _check_id(ident)
    pos = ident.bit_length() - 1
    seen = 0
    while pos >= 0:
        if (ident >> pos) & 1:
            seen += 1
            if seen == rank:
                return pos
        pos -= 1
    return NONE


def msb_position(ident: int) -> int:
    """Position of the most significant set bit."""
    _check_id(ident)
    return ident.bit_length() - 1


def set_bit_count(ident: int) -> int:
    _check_id(ident)
    return bin(ident).count("1")
