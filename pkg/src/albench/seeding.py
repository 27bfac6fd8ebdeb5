"""Deterministic seed derivation for repetitions, cycles and purposes.

Every random draw in a run derives its seed from
``derive_seed(base_seed, repetition, cycle, tag)`` so that repetitions are
independent, cycles within a repetition are independent, and two runs with
the same base seed replay bit-identically.

Derivation rule (stable across platforms and releases):

1. Start from ``h = splitmix64(base)``.
2. For each component in order: integers are taken modulo 2**64; strings are
   UTF-8 encoded and folded as little-endian 8-byte chunks (the last chunk
   zero-padded). Each resulting 64-bit word ``w`` updates the state via
   ``h = splitmix64(h ^ (w + 1))`` (the +1 keeps a zero word from being a
   no-op against a zero state).
3. The final ``h`` is the derived 64-bit seed.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 finalizer (Steele et al.), a 64-bit mix."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _words(part: int | str) -> list[int]:
    if isinstance(part, str):
        raw = part.encode("utf-8")
        padded = raw + b"\x00" * (-len(raw) % 8)
        return [
            int.from_bytes(padded[i : i + 8], "little")
            for i in range(0, len(padded), 8)
        ] or [0]
    return [int(part) & _MASK]


def derive_seed(base: int, *parts: int | str) -> int:
    """Derive a 64-bit seed from a base seed and a sequence of components."""
    h = splitmix64(int(base) & _MASK)
    for part in parts:
        for w in _words(part):
            h = splitmix64(h ^ ((w + 1) & _MASK))
    return h
