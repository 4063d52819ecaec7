"""Deterministic, counter-addressable random source.

Every draw is a pure function of ``(seed, stream, step, index)``. There is
no mutable sequence position, so replicas and threads that agree on the
address get the same bits in any order of evaluation. Streams are plain
64-bit integers; helpers below carve the space into non-colliding regions
for optimizer updates, per-replica noise, and data sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = np.uint64
_MASK64 = 0xFFFFFFFFFFFFFFFF

# splitmix64 finalizer constants (Steele et al. mixing function)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)

# per-position salts so (stream, step, index) permutations decorrelate
_SALT_SEED = _U64(0xA0761D6478BD642F)
_SALT_STREAM = _U64(0xE7037ED1A0B428DB)
_SALT_STEP = _U64(0x8EBC6AF09C88C6E3)
_SALT_INDEX = _U64(0x589965CC75374CC3)


def _mix64(z: np.ndarray) -> np.ndarray:
    """Avalanche a uint64 array in place-free style (splitmix64 finalizer)."""
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


def _as_u64(x) -> np.uint64:
    return _U64(int(x) & _MASK64)


@dataclass(frozen=True)
class RoundRng:
    """Keyed counter RNG: output = hash(seed, stream, step, index).

    Immutable and freely shareable. All draw methods are vectorized over
    the index axis; scalar convenience wrappers exist for single draws.
    """

    seed: int

    def _word(self, stream: int, step: int, indices: np.ndarray) -> np.ndarray:
        # modular wraparound is intentional throughout the mixing chain
        with np.errstate(over="ignore"):
            h = _mix64(np.array([_as_u64(self.seed) ^ _SALT_SEED]))
            h = _mix64(h ^ (_as_u64(stream) + _SALT_STREAM))
            h = _mix64(h ^ (_as_u64(step) + _SALT_STEP))
            idx = np.asarray(indices, dtype=np.uint64)
            return _mix64(h[0] ^ (idx + _SALT_INDEX))

    def u64_array(self, stream: int, step: int, indices) -> np.ndarray:
        """Uniform uint64 words for each index."""
        return self._word(stream, step, np.asarray(indices, dtype=np.uint64))

    def u16_array(self, stream: int, step: int, indices) -> np.ndarray:
        """Uniform uint16 draws (top 16 bits of the mixed word)."""
        return (self.u64_array(stream, step, indices) >> _U64(48)).astype(np.uint16)

    def u16(self, stream: int, step: int, index: int) -> int:
        return int(self.u16_array(stream, step, np.asarray([index]))[0])

    def uniform_array(self, stream: int, step: int, indices) -> np.ndarray:
        """Uniform float64 in [0, 1) with 53-bit resolution."""
        w = self.u64_array(stream, step, indices)
        return (w >> _U64(11)).astype(np.float64) * (2.0**-53)

    def uniform(self, stream: int, step: int, index: int) -> float:
        return float(self.uniform_array(stream, step, np.asarray([index]))[0])

    def normal_array(self, stream: int, step: int, n: int) -> np.ndarray:
        """Standard normals via Box-Muller over paired counter draws."""
        m = (n + 1) // 2
        u1 = self.uniform_array(stream, step, np.arange(0, 2 * m, 2))
        u2 = self.uniform_array(stream, step, np.arange(1, 2 * m, 2))
        u1 = np.maximum(u1, 2.0**-53)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return out[:n]


# Stream-space layout. High byte is a domain tag; the rest identifies the
# tensor (and replica, where one exists). Optimizer streams deliberately
# ignore the replica so that shared-randomness mode hands every replica
# the same draws.
_DOMAIN_OPT = 1
_DOMAIN_REPLICA = 2
_DOMAIN_DATA = 3
_DOMAIN_INIT = 4


def opt_stream(tensor_id: int) -> int:
    """Stream for SR update draws; common to all replicas of a tensor."""
    return (_DOMAIN_OPT << 56) | (tensor_id & 0xFFFFFFFF)


def replica_stream(replica_id: int, tensor_id: int) -> int:
    """Per-replica stream; pairwise distinct and distinct from opt_stream."""
    return (_DOMAIN_REPLICA << 56) | ((replica_id & 0xFFFFF) << 32) | (tensor_id & 0xFFFFFFFF)


def data_stream(tag: int = 0) -> int:
    return (_DOMAIN_DATA << 56) | (tag & 0xFFFFFFFF)


def init_stream(tensor_id: int) -> int:
    return (_DOMAIN_INIT << 56) | (tensor_id & 0xFFFFFFFF)
