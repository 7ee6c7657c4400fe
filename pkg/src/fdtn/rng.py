"""Portable deterministic RNG (splitmix64).

All randomness in this package (dataset generation, weight init, batch
shuffling) goes through this generator so that runs reproduce bit-identically
across platforms and across implementations of the same algorithm.
"""

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer: one avalanche pass over a 64-bit value."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def sub_seed(seed: int, index: int) -> int:
    """Deterministic child seed for stream `index` of a parent seed.

    Used to give every sequence of a dataset its own independent stream, so
    sequences can be generated in any order (or in parallel) with identical
    results.
    """
    return mix64((seed ^ mix64((index + 1) * _GAMMA)) & _MASK)


class SplitMix64:
    """splitmix64 stream: state += golden gamma; output = mix(state)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK
        self._spare_gauss = None

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return mix64(self.state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi), 53-bit resolution."""
        u = self.next_u64() >> 11
        return lo + (hi - lo) * (u * (1.0 / (1 << 53)))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive (modulo reduction)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError("empty integer range")
        return lo + self.next_u64() % span

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Standard Box-Muller; consumes two uniforms per pair of outputs."""
        if self._spare_gauss is not None:
            z = self._spare_gauss
            self._spare_gauss = None
            return mu + sigma * z
        # u1 in (0, 1] so the log is finite
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        self._spare_gauss = r * np.sin(2.0 * np.pi * u2)
        return mu + sigma * (r * np.cos(2.0 * np.pi * u2))

    def _next_array_u64(self, n: int) -> np.ndarray:
        # vectorized stream advance; identical values to n calls of next_u64()
        idx = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            s = np.uint64(self.state) + idx * np.uint64(_GAMMA)
            z = (s ^ (s >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = int(s[-1])
        return z

    def uniform_array(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        u = (self._next_array_u64(n) >> np.uint64(11)).astype(np.float64)
        return (lo + (hi - lo) * (u * (1.0 / (1 << 53)))).reshape(shape)

    def gauss_array(self, shape, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        """Vectorized Box-Muller; stream-compatible with itself, not with
        scalar gauss() interleaving."""
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform_array(m)
        u2 = self.uniform_array(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return (mu + sigma * z[:n]).reshape(shape)

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates using this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]
