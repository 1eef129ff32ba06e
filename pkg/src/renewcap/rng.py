"""Counter-based random streams and compound Poisson jump sampling.

Every draw is a pure function of ``(key, counter)`` where the key is derived
from ``(master_seed, stream_id)`` with the SplitMix64 finaliser.  Per-path
substreams can therefore be produced in any order (or in parallel) without
changing a single bit of the output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# counter layout used by the path kernels: (step << 20) | (source << 19) | slot
STEP_SHIFT = 20
SOURCE_SHIFT = 19
MAX_SLOT = (1 << SOURCE_SHIFT) - 1
# within a slot pair, odd slots hold jump sizes and even slots jump times
POISSON_MAX_MEAN = 500.0


def mix64(x: int) -> int:
    """SplitMix64 finaliser on a python int."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorised SplitMix64 finaliser (uint64 arithmetic wraps)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_key(master_seed: int, stream_id: int) -> int:
    return mix64(mix64(master_seed & MASK64) ^ (stream_id & MASK64))


def child_id(stream_id: int, index: int) -> int:
    return mix64((stream_id & MASK64) ^ mix64(index & MASK64))


def bits_to_uniform(u: np.ndarray) -> np.ndarray:
    """Map 64-bit words to floats strictly inside (0, 1)."""
    return ((u >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def uniform_at(keys, counters) -> np.ndarray:
    """Uniforms for arrays of (key, counter) pairs, broadcast together."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    return bits_to_uniform(mix64_array(keys ^ mix64_array(counters)))


def kernel_counter(step, source, slot):
    """Counter for draw ``slot`` of jump source ``source`` in time step ``step``."""
    return (np.asarray(step, dtype=np.uint64) << np.uint64(STEP_SHIFT)) | (
        np.asarray(source, dtype=np.uint64) << np.uint64(SOURCE_SHIFT)
    ) | np.asarray(slot, dtype=np.uint64)


@dataclass
class RngStream:
    """A seedable random stream identified by ``(master_seed, stream_id)``.

    The stream keeps a private draw position so it can be consumed
    sequentially; two streams built from the same pair replay the same
    numbers.  Do not share one instance between threads, use
    :meth:`substream` instead.
    """

    master_seed: int
    stream_id: int = 0
    position: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        self.master_seed = int(self.master_seed) & MASK64
        self.stream_id = int(self.stream_id) & MASK64

    @property
    def key(self) -> int:
        return stream_key(self.master_seed, self.stream_id)

    def substream(self, index: int) -> "RngStream":
        return substream(self, index)

    def substream_keys(self, indices) -> np.ndarray:
        """Keys of ``substream(self, i)`` for every ``i`` in ``indices``."""
        idx = np.asarray(indices, dtype=np.uint64)
        ids = mix64_array(np.uint64(self.stream_id) ^ mix64_array(idx))
        return mix64_array(np.uint64(mix64(self.master_seed)) ^ ids)

    def uniform(self, size: int) -> np.ndarray:
        counters = np.arange(self.position, self.position + size, dtype=np.uint64)
        self.position += size
        return uniform_at(np.uint64(self.key), counters)

    def exponential(self, rate: float, size: int) -> np.ndarray:
        if not rate > 0:
            raise ValueError(f"exponential rate must be positive, got {rate}")
        return -np.log(self.uniform(size)) / rate

    def poisson(self, mean: float, size: int) -> np.ndarray:
        return poisson_inverse(self.uniform(size), mean)

    def numpy_generator(self) -> np.random.Generator:
        """A numpy Generator seeded from this stream (for initialisers)."""
        return np.random.default_rng(self.key)


def substream(master: RngStream, index: int) -> RngStream:
    """Child stream, deterministic in ``(master, index)``."""
    return RngStream(master.master_seed, child_id(master.stream_id, index))


def poisson_inverse(u: np.ndarray, mean: float) -> np.ndarray:
    """Poisson counts by sequential CDF inversion of uniforms ``u``."""
    if mean < 0:
        raise ValueError(f"Poisson mean must be nonnegative, got {mean}")
    if mean > POISSON_MAX_MEAN:
        raise ValueError(f"Poisson mean {mean} too large for inversion")
    u = np.asarray(u, dtype=np.float64)
    counts = np.zeros(u.shape, dtype=np.int64)
    if mean == 0.0:
        return counts
    p = np.exp(-mean)
    cdf = p
    k = 0
    active = u > cdf
    while active.any():
        k += 1
        counts[active] = k
        p = p * mean / k
        cdf = cdf + p
        active &= u > cdf
        if k >= MAX_SLOT // 2:
            raise RuntimeError("Poisson inversion did not terminate")
    return counts


@dataclass(frozen=True)
class JumpSample:
    """Jumps of one compound Poisson source over one time span."""

    count: int
    sizes: np.ndarray

    def __post_init__(self) -> None:
        if self.count != len(self.sizes):
            raise ValueError("count does not match number of sizes")
        if np.any(self.sizes <= 0):
            raise ValueError("jump sizes must be strictly positive")


def sample_jumps(intensity: float, rate: float, dt: float, rng: RngStream) -> JumpSample:
    """Sample the jumps of one compound Poisson source on a span ``dt``.

    The count is Poisson(intensity * dt) and the sizes are i.i.d.
    Exponential with mean ``1 / rate``.
    """
    if intensity < 0:
        raise ValueError(f"intensity must be nonnegative, got {intensity}")
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = int(rng.poisson(intensity * dt, 1)[0])
    sizes = rng.exponential(rate, n) if n else np.empty(0)
    return JumpSample(n, sizes)


def kernel_jump_sample(key: int, step: int, source: int, intensity: float, rate: float,
                       dt: float) -> JumpSample:
    """Re-derive the jumps a path kernel drew for ``(step, source)``.

    Slot 0 holds the count uniform; jump ``l`` (1-based) uses slot ``2l-1``
    for its size and slot ``2l`` for its arrival time inside the step.
    """
    u0 = uniform_at(np.uint64(key), kernel_counter(step, source, 0))
    n = int(poisson_inverse(np.atleast_1d(u0), intensity * dt)[0])
    if n == 0:
        return JumpSample(0, np.empty(0))
    slots = 2 * np.arange(1, n + 1) - 1
    u = uniform_at(np.uint64(key), kernel_counter(step, source, slots))
    return JumpSample(n, -np.log(u) / rate)
