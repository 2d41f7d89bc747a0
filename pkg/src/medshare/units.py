"""Unit conversions used at config and report boundaries.

Everything inside the package works in bits, seconds, CPU cycles, mAh and MB.
"""

BITS_PER_KB = 8000


def kb_to_bits(kb: float) -> float:
    return kb * BITS_PER_KB


def bits_to_kb(bits: float) -> float:
    return bits / BITS_PER_KB


def mbps_to_bps(mbps: float) -> float:
    return mbps * 1e6
