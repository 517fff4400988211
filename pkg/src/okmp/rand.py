"""Random sources.

Protocol mode draws from the operating system CSPRNG. Test mode uses a
seeded PCG64 generator so every run can be replayed exactly.
"""

import os
import secrets

import numpy as np

SEED_ENV = "OKMP_SEED"

_U63 = 1 << 63


class RandomSource:
    """Uniform integer draws, scalar or vectorized."""

    secure = False

    def randbelow(self, n: int) -> int:
        raise NotImplementedError

    def randrange(self, lo: int, hi: int) -> int:
        """Uniform on [lo, hi)."""
        if hi <= lo:
            raise ValueError("empty range")
        return lo + self.randbelow(hi - lo)

    def uniform_array(self, high: int, shape) -> np.ndarray:
        """uint64 array uniform on [0, high); high <= 2**63."""
        raise NotImplementedError

    def token_bytes(self, n: int) -> bytes:
        raise NotImplementedError


class SeededRandom(RandomSource):
    """Deterministic generator for tests and reproducible simulations."""

    def __init__(self, seed: int):
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def randbelow(self, n):
        if n <= 0:
            raise ValueError("n must be positive")
        if n <= _U63:
            return int(self._gen.integers(0, n, dtype=np.uint64))
        return _randbelow_bytes(self.token_bytes, n)

    def uniform_array(self, high, shape):
        if not 0 < high <= _U63:
            raise ValueError("high must be in (0, 2**63]")
        return self._gen.integers(0, high, size=shape, dtype=np.uint64)

    def token_bytes(self, n):
        return self._gen.bytes(n)

    def __repr__(self):
        return f"SeededRandom({self.seed})"


class SecureRandom(RandomSource):
    """OS-backed source required in protocol mode."""

    secure = True

    def randbelow(self, n):
        if n <= 0:
            raise ValueError("n must be positive")
        return secrets.randbelow(n)

    def uniform_array(self, high, shape):
        if not 0 < high <= _U63:
            raise ValueError("high must be in (0, 2**63]")
        count = int(np.prod(shape, dtype=np.int64))
        bits = (high - 1).bit_length()
        mask = np.uint64((1 << bits) - 1) if bits else np.uint64(0)
        out = np.empty(count, dtype=np.uint64)
        filled = 0
        while filled < count:
            need = count - filled
            # rejection rate < 1/2, so 2x oversampling usually finishes in one pass
            raw = np.frombuffer(os.urandom(8 * (2 * need + 8)), dtype=np.uint64) & mask
            ok = raw[raw < np.uint64(high)][:need]
            out[filled:filled + len(ok)] = ok
            filled += len(ok)
        return out.reshape(shape)

    def token_bytes(self, n):
        return os.urandom(n)

    def __repr__(self):
        return "SecureRandom()"


def _randbelow_bytes(getbytes, n):
    nbytes = (n.bit_length() + 7) // 8
    mask = (1 << n.bit_length()) - 1
    while True:
        r = int.from_bytes(getbytes(nbytes), "little") & mask
        if r < n:
            return r


def from_env(default_seed=None) -> RandomSource:
    """Seeded source if OKMP_SEED (or default_seed) is set, else the OS CSPRNG."""
    seed = os.environ.get(SEED_ENV)
    if seed is not None and seed != "":
        return SeededRandom(int(seed))
    if default_seed is not None:
        return SeededRandom(default_seed)
    return SecureRandom()
