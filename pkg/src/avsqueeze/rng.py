"""Deterministic random number generation.

The generator is xoshiro256** (Blackman & Vigna), seeded through splitmix64,
so the stream is fully specified by the algorithm and a 64-bit seed and can be
reproduced bit-for-bit by any implementation in any language:

    splitmix64(z):  z += 0x9E3779B97F4A7C15
                    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
                    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                    return z ^ (z >> 31)           (all mod 2^64)

    xoshiro256** state: four 64-bit words from successive splitmix64 outputs.
    next():  result = rotl64(s1 * 5, 7) * 9
             t = s1 << 17
             s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t
             s3 = rotl64(s3, 45)

Doubles are (next() >> 11) * 2**-53 in [0, 1); normals come from Box-Muller.
Module substreams are derived by `derive_seed(root, label)`, the first eight
big-endian bytes of SHA-256("<root>:<label>").
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> tuple[int, int]:
    """One splitmix64 step; returns (new_state, output)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    out = z
    out = ((out ^ (out >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    out = ((out ^ (out >> 27)) * 0x94D049BB133111EB) & _MASK64
    out = out ^ (out >> 31)
    return z, out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def derive_seed(root_seed: int, label: str) -> int:
    """Labeled substream seed: first 8 bytes of SHA-256("<root>:<label>")."""
    digest = hashlib.sha256(f"{root_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class Rng:
    """xoshiro256** stream; identical seed gives an identical draw sequence."""

    __slots__ = ("seed", "_s", "_spare_normal")

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        state = self.seed
        words = []
        for _ in range(4):
            state, word = _splitmix64(state)
            words.append(word)
        self._s = words
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are cached."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] so the log is finite.
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        self._spare_normal = float(r * np.sin(theta))
        return float(r * np.cos(theta))

    def integer(self, upper: int) -> int:
        """Integer in [0, upper) via floor(u64 * upper / 2^64)."""
        if upper <= 0:
            raise ValueError("upper bound must be positive")
        return (self.next_u64() * upper) >> 64

    def normals(self, *shape: int) -> np.ndarray:
        out = np.empty(int(np.prod(shape)) if shape else 1, dtype=np.float64)
        for i in range(out.size):
            out[i] = self.normal()
        return out.reshape(shape) if shape else out[:1].reshape(())

    def uniforms(self, *shape: int) -> np.ndarray:
        out = np.empty(int(np.prod(shape)) if shape else 1, dtype=np.float64)
        for i in range(out.size):
            out[i] = self.uniform()
        return out.reshape(shape) if shape else out[:1].reshape(())

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def substream(self, label: str) -> "Rng":
        return Rng(derive_seed(self.seed, label))
