"""Vectors, the dot-product form, and randomized orthogonal systems."""

import math
import struct
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import reduce
from numbers import Rational

import numpy as np

from .errors import (
    DimMismatch,
    DimTooSmall,
    FieldMismatch,
    IsotropyExhausted,
    LengthMismatch,
    WeakParameters,
)
from .ffield import M61, PROTOCOL_MIN_PRIME, Fe, IntegerRing, PrimeField, log2_factorial

MAX_RETRIES_PER_SLOT = 64
MAX_RESTARTS = 16
SECURITY_BITS = 128
GS_BLOCK = 64


class FVector:
    """Dense coordinate vector over a field (or the demo integer ring)."""

    __slots__ = ("field", "coords")

    def __init__(self, field, coords):
        self.field = field
        self.coords = coords

    @classmethod
    def of(cls, field, values) -> "FVector":
        return cls(field, field.array(values))

    @classmethod
    def zeros(cls, field, dim: int) -> "FVector":
        return cls(field, field.zeros(dim))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __len__(self):
        return len(self.coords)

    def tolist(self) -> list:
        if self.field.demo:
            return [self.field.reduce(x) for x in self.coords]
        return [int(x) for x in self.coords]

    def __iter__(self):
        return iter(self.tolist())

    def is_zero(self) -> bool:
        return not any(self.tolist())

    def _check(self, other):
        if not isinstance(other, FVector):
            return False
        if other.field != self.field:
            raise FieldMismatch(f"{self.field!r} vs {other.field!r}")
        if other.dim != self.dim:
            raise DimMismatch(f"dim {self.dim} vs {other.dim}")
        return True

    def __add__(self, other):
        if not self._check(other):
            return NotImplemented
        return FVector(self.field, self.field.vadd(self.coords, other.coords))

    def __sub__(self, other):
        if not self._check(other):
            return NotImplemented
        return FVector(self.field, self.field.vsub(self.coords, other.coords))

    def __neg__(self):
        return FVector(self.field, self.field.vneg(self.coords))

    def __mul__(self, k):
        if isinstance(k, Fe):
            if k.field != self.field:
                raise FieldMismatch(f"{self.field!r} vs {k.field!r}")
            k = k.value
        elif not isinstance(k, Rational):
            return NotImplemented
        k = self.field.reduce(k)
        return FVector(self.field, self.field.vscale(k, self.coords))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, FVector):
            return NotImplemented
        return self.field == other.field and self.tolist() == other.tolist()

    __hash__ = None

    def __repr__(self):
        return f"FVector({self.tolist()})"


def inner(a: FVector, b: FVector) -> Fe:
    """Standard symmetric form sum(a_k * b_k)."""
    a._check(b)
    return Fe(a.field, a.field.dot(a.coords, b.coords))


@dataclass(eq=False)
class OrthogonalSystem:
    """n mutually orthogonal, anisotropic vectors of dimension m (server secret)."""

    field: object
    basis: np.ndarray
    norms: tuple = dc_field(default=None)

    def __post_init__(self):
        if self.basis.ndim != 2:
            raise ValueError("basis must be an n x m array")
        if self.norms is None:
            self.norms = tuple(self.field.dot(row, row) for row in self.basis)
        self._inv = None
        self._limbs = None

    @classmethod
    def from_vectors(cls, field, vectors) -> "OrthogonalSystem":
        rows = [field.array(v) for v in vectors]
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise DimMismatch("vectors have differing dimensions")
        basis = np.stack(rows) if rows else field.zeros((0, 0))
        return cls(field, basis)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def m(self) -> int:
        return self.basis.shape[1]

    @property
    def inv_norms(self) -> np.ndarray:
        """Cached <e_i,e_i>^-1; raises ZeroInverse if any e_i is isotropic."""
        if self._inv is None:
            out = np.empty(self.n, dtype=self.field.dtype)
            out[:] = [self.field.inv(v) for v in self.norms]
            self._inv = out
        return self._inv

    def combine(self, coeffs) -> np.ndarray:
        """sum coeffs[i] * e_i, reusing a cached limb split of the basis."""
        f = self.field
        if getattr(f, "limb_count", None) is None or self.n * self.m <= 1 << 15:
            return f.matmul(f.array(coeffs)[None, :], self.basis)[0]
        # coefficients are already reduced field elements
        x = np.array(coeffs, dtype=np.uint64)[None, :]
        if getattr(self, "_limbs", None) is None:
            self._limbs = f.to_limbs(self.basis)
        return f.matmul_from_limbs(f.to_limbs(x), self._limbs)[0]

    def vector(self, i: int) -> FVector:
        return FVector(self.field, self.basis[i].copy())

    def vectors(self) -> list:
        return [self.vector(i) for i in range(self.n)]

    def __eq__(self, other):
        if not isinstance(other, OrthogonalSystem):
            return NotImplemented
        return (self.field == other.field and self.basis.shape == other.basis.shape
                and all(a == b for a, b in zip(self.basis.flat, other.basis.flat)))


@dataclass
class OrthogonalityReport:
    n: int
    m: int
    nonorthogonal_pairs: list
    isotropic: list

    @property
    def ok(self) -> bool:
        return not self.nonorthogonal_pairs and not self.isotropic

    def __bool__(self):
        return self.ok


def verify_orthogonal(system: OrthogonalSystem) -> OrthogonalityReport:
    """Full pairwise check. Indices in the report are 1-based."""
    field = system.field
    gram = field.matmul(system.basis, system.basis.T)
    nonzero = gram != 0
    iso = [int(i) + 1 for i in np.flatnonzero(~np.diagonal(nonzero))]
    rows, cols = np.nonzero(np.triu(nonzero, k=1))
    bad = [(int(i) + 1, int(j) + 1) for i, j in zip(rows, cols)]
    return OrthogonalityReport(system.n, system.m, bad, iso)


def _acceptable(field, v) -> bool:
    if field.dot(v, v) == 0:
        return False
    # belt-and-braces: never hand out a scaled standard-basis vector
    if len(v) > 1 and int(np.count_nonzero(v)) <= 1:
        return False
    return True


class _Accepted:
    """Accepted basis rows, with float limbs cached for repeated products."""

    def __init__(self, field, n, m):
        self.field = field
        self.rows = field.zeros((n, m))
        self.inv = field.zeros(n)
        count = field.limb_count
        self.limbs = [np.zeros((n, m)) for _ in range(count)] if count else None

    def accept(self, i, v, inv):
        self.rows[i] = v
        self.inv[i] = inv
        if self.limbs:
            for cache, part in zip(self.limbs, self.field.to_limbs(v)):
                cache[i] = part

    def project_out(self, X, lo, hi):
        """Remove from each row of X its components along rows lo..hi-1."""
        if hi <= lo:
            return X
        f = self.field
        if self.limbs:
            gram = f.matmul_from_limbs(f.to_limbs(X), [c[lo:hi].T for c in self.limbs])
            coef = f.vmul(gram, self.inv[lo:hi][None, :])
            shift = f.matmul_from_limbs(f.to_limbs(coef), [c[lo:hi] for c in self.limbs])
        else:
            gram = f.matmul(X, self.rows[lo:hi].T)
            coef = f.vmul(gram, self.inv[lo:hi][None, :])
            shift = f.matmul(coef, self.rows[lo:hi])
        return f.vsub(X, shift)


def gen_orthogonal_system(field, m: int, n: int, rng, *,
                          max_retries: int = MAX_RETRIES_PER_SLOT,
                          max_restarts: int = MAX_RESTARTS,
                          block: int = GS_BLOCK) -> OrthogonalSystem:
    """Randomized Gram-Schmidt.

    Dense random candidates are orthogonalized against the accepted
    vectors and kept only if anisotropic. Candidates are processed in
    blocks so the bulk of the projection work is two matrix products per
    block. A slot that exhausts ``max_retries`` restarts the whole
    construction (small fields can paint the last slots into an isotropic
    corner); after ``max_restarts`` the error propagates.
    """
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    if n > m:
        raise DimTooSmall(f"cannot fit {n} orthogonal vectors in dimension {m}")
    if field.strict:
        if m <= 2 * n:
            raise WeakParameters(f"protocol mode needs m > 2n (m={m}, n={n})")
        if not rng.secure:
            raise WeakParameters("protocol mode needs a cryptographically strong source")
    build = _gen_integer if isinstance(field, IntegerRing) else _gen_prime
    for _ in range(max_restarts):
        try:
            return build(field, m, n, rng, max_retries, block)
        except IsotropyExhausted:
            continue
    raise IsotropyExhausted(f"no anisotropic system found for m={m}, n={n} over {field!r}")


def _gen_prime(field, m, n, rng, max_retries, block):
    acc = _Accepted(field, n, m)
    norms = []
    k = 0
    while k < n:
        b = min(block, n - k)
        cand = acc.project_out(field.random_array(rng, (b, m)), 0, k)
        for r in range(b):
            row = k + r
            v = acc.project_out(cand[r:r + 1], k, row)[0]
            tries = 1
            while not _acceptable(field, v):
                if tries >= max_retries:
                    raise IsotropyExhausted(f"slot {row} exhausted {max_retries} candidates")
                fresh = field.random_array(rng, (1, m))
                v = acc.project_out(fresh, 0, row)[0]
                tries += 1
            norm = field.dot(v, v)
            norms.append(norm)
            acc.accept(row, v, field.inv(norm))
        k += b
    system = OrthogonalSystem(field, acc.rows, tuple(norms))
    system._inv = acc.inv
    return system


def _gen_integer(field, m, n, rng, max_retries, block):
    rows = []
    for row in range(n):
        for _ in range(max_retries):
            w = [Fraction(field.rand(rng)) for _ in range(m)]
            for r in rows:
                coef = Fraction(sum(a * b for a, b in zip(w, r)), sum(b * b for b in r))
                w = [a - coef * b for a, b in zip(w, r)]
            # scale to a primitive integer vector
            den = reduce(math.lcm, (x.denominator for x in w), 1)
            ints = [int(x * den) for x in w]
            g = reduce(math.gcd, ints, 0)
            if g:
                ints = [x // g for x in ints]
            v = field.array(ints)
            if _acceptable(field, v):
                rows.append(ints)
                break
        else:
            raise IsotropyExhausted(f"slot {row} exhausted {max_retries} candidates")
    return OrthogonalSystem.from_vectors(field, rows)


def tuple_count_log2(q: int, n: int) -> float:
    """log2 of q**(1.5 n^2) / n!, the count of orthogonal n-tuples.

    The (1 + o(1)) factor of the asymptotic count is dropped.
    """
    if q < 2 or n < 1:
        raise ValueError("need q >= 2 and n >= 1")
    return 1.5 * n * n * math.log2(q) - log2_factorial(n)


@dataclass
class ParamAdvice:
    n: int
    m: int
    security_bits: float
    warnings: list


def advise_params(n: int, field=None) -> ParamAdvice:
    """Recommend m = 2n + 1 and flag weak configurations."""
    if n < 1:
        raise ValueError("n must be >= 1")
    field = field if field is not None else PrimeField(M61)
    warnings = []
    if isinstance(field, IntegerRing):
        bits = math.inf
        warnings.append("integer ring is insecure: the secret divides the gcd of the broadcast")
    else:
        bits = tuple_count_log2(field.p, n)
        if field.p < PROTOCOL_MIN_PRIME:
            warnings.append(f"field order {field.p} is below the 2**31 protocol floor")
        if bits < SECURITY_BITS:
            warnings.append(f"security margin below {SECURITY_BITS} bits ({bits:.1f})")
    return ParamAdvice(n=n, m=2 * n + 1, security_bits=bits, warnings=warnings)


_SYS_HEADER = struct.Struct("<QII")


def export_system(system: OrthogonalSystem) -> bytes:
    """Serialize (p, m, n) and the basis rows.

    The output is the server's master secret; store it accordingly.
    """
    if not isinstance(system.field, PrimeField):
        raise TypeError("only prime-field systems are exportable")
    head = _SYS_HEADER.pack(system.field.p, system.m, system.n)
    return head + system.field.encode_vector(system.basis.reshape(-1))


def import_system(data: bytes, field=None) -> OrthogonalSystem:
    if len(data) < _SYS_HEADER.size:
        raise LengthMismatch("system blob shorter than its header")
    p, m, n = _SYS_HEADER.unpack_from(data)
    body = data[_SYS_HEADER.size:]
    if len(body) != 8 * m * n:
        raise LengthMismatch(f"expected {8 * m * n} body bytes, got {len(body)}")
    if field is None:
        field = PrimeField(p, strict=p >= PROTOCOL_MIN_PRIME)
    elif field.p != p:
        raise FieldMismatch(f"blob is over F_{p}, caller expects F_{field.p}")
    basis = field.decode_vector(body).reshape(n, m)
    return OrthogonalSystem(field, basis)
