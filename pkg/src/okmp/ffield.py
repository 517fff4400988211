"""Prime-field arithmetic plus an exact integer ring for the worked example.

Scalars are plain Python ints held in canonical form; the ``Fe`` wrapper
adds operator syntax and field-mismatch checks for API callers. Vectors
and matrices are numpy arrays: ``uint64`` when p < 2**63, ``object``
otherwise (and always ``object`` for the integer ring).

The integer ring is insecure by construction: the secret divides the gcd
of every broadcast coordinate. It exists to replay the textbook example
and must never carry real traffic.
"""

import math
from fractions import Fraction
from numbers import Integral, Rational

import numpy as np

from .errors import FieldMismatch, NonCanonical, WeakParameters, ZeroInverse

M61 = (1 << 61) - 1
PROTOCOL_MIN_PRIME = 1 << 31

_U63 = 1 << 63
_MASK32 = np.uint64(0xFFFFFFFF)
_MASK29 = np.uint64((1 << 29) - 1)
_NP_M61 = np.uint64(M61)
_LIMB_BITS = 21
_LIMB_MASK = np.uint64((1 << _LIMB_BITS) - 1)
# 2**11 products of two 21-bit limbs stay below 2**53, so float64 sums are exact
_FLOAT_CHUNK = 1 << 11
_SMALL_MATMUL = 1 << 15

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin; exact for every n < 3.3e24."""
    if n < 2:
        return False
    for q in _MR_BASES:
        if n % q == 0:
            return n == q
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class PrimeField:
    """The field F_p for a prime p < 2**64.

    With ``strict=True`` (protocol mode) the modulus must be at least 2**31.
    Test fields such as F_7 need ``strict=False``.
    """

    demo = False

    def __init__(self, p: int = M61, *, strict: bool = True):
        p = int(p)
        if not 2 <= p < 1 << 64:
            raise ValueError("modulus must lie in [2, 2**64)")
        if not is_prime(p):
            raise ValueError(f"{p} is not prime")
        if strict and p < PROTOCOL_MIN_PRIME:
            raise WeakParameters(f"p={p} is below the 2**31 protocol floor")
        self.p = p
        self.strict = strict
        self.elem_bits = 64
        self.elem_bytes = 8
        self._obj = p >= _U63
        self.dtype = np.dtype(object) if self._obj else np.dtype(np.uint64)
        self._np_p = None if self._obj else np.uint64(p)
        if p == M61:
            self._mul = _mulmod_m61
        elif p < 1 << 32:
            self._mul = self._mulmod_small
        else:
            self._mul = self._mulmod_generic
        self._limbs = -(-p.bit_length() // _LIMB_BITS)
        self._two32 = (1 << 32) % p

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self):
        return hash(("F", self.p))

    def __repr__(self):
        tag = "" if self.strict else ", strict=False"
        return f"PrimeField({self.p}{tag})"

    def __call__(self, value) -> "Fe":
        return Fe(self, value)

    @property
    def limb_count(self):
        """Number of 21-bit limbs per element, or None without a uint64 backend."""
        return None if self._obj else self._limbs

    # -- scalars ------------------------------------------------------------

    def reduce(self, a) -> int:
        if not isinstance(a, Integral):
            raise TypeError(f"cannot map {type(a).__name__} into F_{self.p}")
        return int(a) % self.p

    def add(self, a, b):
        return (a + b) % self.p

    def sub(self, a, b):
        return (a - b) % self.p

    def mul(self, a, b):
        return a * b % self.p

    def neg(self, a):
        return -a % self.p

    def inv(self, a):
        a %= self.p
        if a == 0:
            raise ZeroInverse("zero has no inverse")
        return pow(a, self.p - 2, self.p)

    def div(self, a, b):
        return a * self.inv(b) % self.p

    def rand(self, rng):
        return rng.randbelow(self.p)

    def rand_nonzero(self, rng):
        return 1 + rng.randbelow(self.p - 1)

    # -- arrays -------------------------------------------------------------

    def array(self, values) -> np.ndarray:
        vals = [self.reduce(v) for v in values]
        if self._obj:
            out = np.empty(len(vals), dtype=object)
            out[:] = vals
            return out
        return np.array(vals, dtype=np.uint64)

    def zeros(self, shape) -> np.ndarray:
        if self._obj:
            out = np.empty(shape, dtype=object)
            out.fill(0)
            return out
        return np.zeros(shape, dtype=np.uint64)

    def random_array(self, rng, shape) -> np.ndarray:
        if self._obj:
            out = np.empty(shape, dtype=object)
            flat = out.reshape(-1)
            for i in range(flat.size):
                flat[i] = rng.randbelow(self.p)
            return out
        return rng.uniform_array(self.p, shape)

    def vadd(self, a, b):
        if self._obj:
            return (a + b) % self.p
        s = np.add(a, b, dtype=np.uint64)
        return s - self._np_p * (s >= self._np_p)

    def vsub(self, a, b):
        if self._obj:
            return (a - b) % self.p
        return self.vadd(a, np.subtract(self._np_p, b, dtype=np.uint64))

    def vneg(self, a):
        if self._obj:
            return (-a) % self.p
        a = np.asarray(a, dtype=np.uint64)
        return np.where(a == 0, a, self._np_p - a)

    def vmul(self, a, b):
        """Elementwise product with numpy broadcasting."""
        if self._obj:
            return (a * b) % self.p
        return self._mul(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))

    def vscale(self, k, a):
        k %= self.p
        if self._obj:
            return (a * k) % self.p
        return self._mul(np.asarray(a, dtype=np.uint64), np.uint64(k))

    def vsum(self, a, axis=None):
        """Sum reduced mod p; an int when axis is None."""
        if self._obj:
            s = np.sum(a, axis=axis) % self.p
            return int(s) if axis is None else s
        a = np.asarray(a, dtype=np.uint64)
        # split into 32-bit halves so the uint64 accumulators cannot wrap
        lo = np.sum(a & _MASK32, axis=axis, dtype=np.uint64) % self._np_p
        hi = np.sum(a >> np.uint64(32), axis=axis, dtype=np.uint64) % self._np_p
        total = self.vadd(self.vmul(hi, np.uint64(self._two32)), lo)
        return int(total) if axis is None else total

    def dot(self, a, b) -> int:
        return self.vsum(self.vmul(a, b))

    def matmul(self, A, B) -> np.ndarray:
        """Exact A @ B over F_p for 2-D arrays."""
        if self._obj:
            prod = np.asarray(A, dtype=object).dot(np.asarray(B, dtype=object))
            return (prod % self.p).astype(self.dtype)
        A = np.asarray(A, dtype=np.uint64)
        B = np.asarray(B, dtype=np.uint64)
        r, k = A.shape
        c = B.shape[1]
        if r * k * c <= _SMALL_MATMUL:
            return self.vsum(self.vmul(A[:, :, None], B[None, :, :]), axis=1)
        return self._matmul_limbs(A, B)

    def _matmul_limbs(self, A, B):
        return self.matmul_from_limbs(self.to_limbs(A), self.to_limbs(B))

    def to_limbs(self, A) -> list:
        """Split a uint64 array into float64 arrays of 21-bit limbs."""
        A = np.asarray(A, dtype=np.uint64)
        return [((A >> np.uint64(_LIMB_BITS * i)) & _LIMB_MASK).astype(np.float64)
                for i in range(self._limbs)]

    def matmul_from_limbs(self, Al, Bl) -> np.ndarray:
        """Exact product from pre-split operands (see ``to_limbs``)."""
        L = self._limbs
        k = Al[0].shape[1]
        acc = [None] * (2 * L - 1)
        for i in range(L):
            for j in range(L):
                part = None
                for s in range(0, k, _FLOAT_CHUNK):
                    piece = (Al[i][:, s:s + _FLOAT_CHUNK] @ Bl[j][s:s + _FLOAT_CHUNK]).astype(np.uint64)
                    piece %= self._np_p
                    part = piece if part is None else self.vadd(part, piece)
                acc[i + j] = part if acc[i + j] is None else self.vadd(acc[i + j], part)
        out = acc[0]
        for shift in range(1, 2 * L - 1):
            weight = pow(2, _LIMB_BITS * shift, self.p)
            out = self.vadd(out, self.vscale(weight, acc[shift]))
        return out

    def _mulmod_small(self, a, b):
        return (a * b) % self._np_p

    def _mulmod_generic(self, a, b):
        prod = (a.astype(object) * b.astype(object)) % self.p
        return np.asarray(prod, dtype=object).astype(np.uint64)

    # -- serialization ------------------------------------------------------

    def encode_element(self, a: int) -> bytes:
        return int(a).to_bytes(8, "little")

    def decode_element(self, data: bytes) -> int:
        v = int.from_bytes(data, "little")
        if v >= self.p:
            raise NonCanonical(f"element {v} >= p")
        return v

    def encode_vector(self, arr) -> bytes:
        return np.asarray(arr).astype("<u8").tobytes()

    def decode_vector(self, data: bytes) -> np.ndarray:
        raw = np.frombuffer(data, dtype="<u8").astype(np.uint64)
        if raw.size and int(raw.max()) >= self.p:
            raise NonCanonical("vector element >= p")
        return raw.astype(self.dtype)


def _mulmod_m61(a, b):
    # 32-bit limbs; 2**64 = 8 and 2**61 = 1 modulo 2**61 - 1
    a1, a0 = a >> np.uint64(32), a & _MASK32
    b1, b0 = b >> np.uint64(32), b & _MASK32
    hi = (a1 * b1) << np.uint64(3)
    mid = a1 * b0 + a0 * b1
    lo = a0 * b0
    t = hi + (mid >> np.uint64(29)) + ((mid & _MASK29) << np.uint64(32))
    t = t + (lo & _NP_M61) + (lo >> np.uint64(61))
    t = (t & _NP_M61) + (t >> np.uint64(61))
    return t - _NP_M61 * (t >= _NP_M61)


def _normalize(q):
    if isinstance(q, Fraction) and q.denominator == 1:
        return q.numerator
    return q


class IntegerRing:
    """Exact integers (with rational quotients) for the textbook demo.

    Insecure: every broadcast is an integer multiple of the secret.
    """

    demo = True
    strict = False
    p = 0
    elem_bits = None
    dtype = np.dtype(object)

    def __init__(self, sample_bound: int = 9):
        self.sample_bound = sample_bound

    def __eq__(self, other):
        return isinstance(other, IntegerRing)

    def __hash__(self):
        return hash("Z")

    def __repr__(self):
        return "IntegerRing()"

    def __call__(self, value) -> "Fe":
        return Fe(self, value)

    def reduce(self, a):
        if isinstance(a, Integral):
            return int(a)
        if isinstance(a, Rational):
            return _normalize(Fraction(a))
        raise TypeError(f"cannot map {type(a).__name__} into the integer ring")

    def add(self, a, b):
        return _normalize(a + b)

    def sub(self, a, b):
        return _normalize(a - b)

    def mul(self, a, b):
        return _normalize(a * b)

    def neg(self, a):
        return -a

    def inv(self, a):
        if a == 0:
            raise ZeroInverse("zero has no inverse")
        return _normalize(Fraction(1) / a)

    def div(self, a, b):
        if b == 0:
            raise ZeroInverse("division by zero")
        return _normalize(Fraction(a) / b)

    def rand(self, rng):
        return rng.randrange(-self.sample_bound, self.sample_bound + 1)

    def rand_nonzero(self, rng):
        # positive scalars keep demo transcripts readable
        return rng.randrange(1, self.sample_bound + 1)

    def array(self, values):
        vals = [self.reduce(v) for v in values]
        out = np.empty(len(vals), dtype=object)
        out[:] = vals
        return out

    def zeros(self, shape):
        out = np.empty(shape, dtype=object)
        out.fill(0)
        return out

    def random_array(self, rng, shape):
        out = np.empty(shape, dtype=object)
        flat = out.reshape(-1)
        for i in range(flat.size):
            flat[i] = self.rand(rng)
        return out

    def vadd(self, a, b):
        return a + b

    def vsub(self, a, b):
        return a - b

    def vneg(self, a):
        return -a

    def vmul(self, a, b):
        return a * b

    def vscale(self, k, a):
        return a * k

    def vsum(self, a, axis=None):
        s = np.sum(a, axis=axis)
        return _normalize(s) if axis is None else s

    def dot(self, a, b):
        return _normalize(sum((x * y for x, y in zip(a, b)), 0))

    def matmul(self, A, B):
        return np.asarray(A, dtype=object).dot(np.asarray(B, dtype=object))

    def encode_element(self, a) -> bytes:
        a = _normalize(a)
        if isinstance(a, Fraction):
            return f"{a.numerator}/{a.denominator}".encode("ascii")
        return str(int(a)).encode("ascii")

    def decode_element(self, data: bytes):
        try:
            text = data.decode("ascii")
            if "/" in text:
                num, den = text.split("/")
                return _normalize(Fraction(int(num), int(den)))
            return int(text)
        except (UnicodeDecodeError, ValueError, ZeroDivisionError) as exc:
            raise NonCanonical(f"bad decimal element {data!r}") from exc


INTEGERS = IntegerRing()


class Fe:
    """A scalar bound to its field; arithmetic across fields is an error."""

    __slots__ = ("field", "value")

    def __init__(self, field, value):
        if isinstance(value, Fe):
            if value.field != field:
                raise FieldMismatch(f"{value.field!r} vs {field!r}")
            value = value.value
        self.field = field
        self.value = field.reduce(value)

    def _other(self, other):
        if isinstance(other, Fe):
            if other.field != self.field:
                raise FieldMismatch(f"{self.field!r} vs {other.field!r}")
            return other.value
        if isinstance(other, Integral) or (self.field.demo and isinstance(other, Rational)):
            return self.field.reduce(other)
        return None

    def _wrap(self, value):
        return Fe(self.field, value)

    def __add__(self, other):
        o = self._other(other)
        return NotImplemented if o is None else self._wrap(self.field.add(self.value, o))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._other(other)
        return NotImplemented if o is None else self._wrap(self.field.sub(self.value, o))

    def __rsub__(self, other):
        o = self._other(other)
        return NotImplemented if o is None else self._wrap(self.field.sub(o, self.value))

    def __mul__(self, other):
        o = self._other(other)
        return NotImplemented if o is None else self._wrap(self.field.mul(self.value, o))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._other(other)
        return NotImplemented if o is None else self._wrap(self.field.div(self.value, o))

    def __neg__(self):
        return self._wrap(self.field.neg(self.value))

    def inverse(self) -> "Fe":
        return self._wrap(self.field.inv(self.value))

    def __eq__(self, other):
        if isinstance(other, Fe):
            return self.field == other.field and self.value == other.value
        try:
            o = self._other(other)
        except TypeError:
            return NotImplemented
        return NotImplemented if o is None else self.value == o

    def __hash__(self):
        # agrees with the hash of the canonical int (or Fraction) it equals
        return hash(self.value)

    def __bool__(self):
        return self.value != 0

    def __int__(self):
        if isinstance(self.value, Fraction):
            raise TypeError("rational value has no int form")
        return int(self.value)

    def __index__(self):
        return self.__int__()

    def __repr__(self):
        return f"Fe({self.value})"


def fe_add(a: Fe, b: Fe) -> Fe:
    return a + b


def fe_sub(a: Fe, b: Fe) -> Fe:
    return a - b


def fe_mul(a: Fe, b: Fe) -> Fe:
    return a * b


def fe_inv(a: Fe) -> Fe:
    """Multiplicative inverse; raises ZeroInverse for zero."""
    return a.inverse()


def fe_rand_nonzero(field, rng) -> Fe:
    """Uniform draw from the nonzero elements of ``field``."""
    return Fe(field, field.rand_nonzero(rng))


def log2_factorial(n: int) -> float:
    return math.lgamma(n + 1) / math.log(2)
