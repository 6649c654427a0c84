"""Deterministic, portable pseudo-random number generation.

One generator algorithm is used everywhere: xoshiro256** seeded through a
splitmix64 chain.  Normals come from Box-Muller over the uniform stream so
that the exact bit stream is reproducible from the 64-bit seed alone, with
no dependence on library internals.  Independent sub-streams are derived by
hashing a purpose label into the seed, so e.g. changing the number of
negative samples never perturbs parameter initialization.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a64(label: str) -> int:
    h = _FNV_OFFSET
    for byte in label.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class SeededRng:
    """xoshiro256** generator with labeled sub-stream derivation.

    Identical (seed, stream) always yields the identical draw sequence.
    """

    algorithm = "xoshiro256**"

    def __init__(self, seed: int, stream: str = "root"):
        self.seed = seed & _MASK64
        self.stream = stream
        sm = self.seed ^ _fnv1a64(stream)
        state = []
        for _ in range(4):
            sm, out = _splitmix64(sm)
            state.append(out)
        if not any(state):  # xoshiro forbids the all-zero state
            state[0] = 1
        self._s = state

    def substream(self, label: str) -> "SeededRng":
        """Derive an independent generator for a named purpose."""
        return SeededRng(self.seed, stream=f"{self.stream}/{label}")

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 significant bits."""
        return (self.next_uint64() >> 11) * 2.0 ** -53

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def normal(self) -> float:
        return float(self.normals(1)[0])

    def normals(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller; two uniforms per pair of draws."""
        out = np.empty(n, dtype=np.float64)
        i = 0
        while i < n:
            u1 = self.uniform()
            while u1 == 0.0:
                u1 = self.uniform()
            u2 = self.uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            out[i] = r * math.cos(2.0 * math.pi * u2)
            i += 1
            if i < n:
                out[i] = r * math.sin(2.0 * math.pi * u2)
                i += 1
        return out

    def randint(self, bound: int) -> int:
        """Unbiased uniform integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError(f"randint bound must be positive, got {bound}")
        threshold = ((1 << 64) // bound) * bound
        v = self.next_uint64()
        while v >= threshold:
            v = self.next_uint64()
        return v % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        arr = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            arr[i], arr[j] = arr[j], arr[i]
        return arr

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), by partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
        arr = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.randint(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:k].copy()
