"""Seeded, platform-stable pseudo-randomness for splits and folds.

Splits must be reproducible bit-for-bit across platforms and language
runtimes, so this module pins the exact generator instead of relying on
``random`` or numpy defaults:

* ``SplitMix64`` — the splitmix64 sequence (Steele et al.): state advances
  by the golden-gamma constant and each output is finalized with two
  xor-shift multiplies.
* bounded draws use rejection sampling on the top ``2**64 - (2**64 % n)``
  values, so every residue is exactly equally likely.
* ``shuffle`` is the classic Fisher-Yates walk from the last index down.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """splitmix64 generator over pure Python ints (no platform drift)."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n


def shuffle(items: list, seed: int) -> list:
    """Return a new list holding ``items`` in Fisher-Yates order for ``seed``."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def derive_seed(seed: int, *labels: int | str) -> int:
    """Derive a stream-specific 64-bit seed from a base seed and labels.

    Mixing is FNV-1a over the label bytes folded into the splitmix output,
    so independent pipeline stages (split, folds, solver permutations)
    never share a stream.
    """
    h = SplitMix64(seed).next_u64()
    for label in labels:
        data = label.encode("utf-8") if isinstance(label, str) else str(int(label)).encode()
        for byte in data:
            h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h
