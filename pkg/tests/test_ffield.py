import math
import random

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from okmp.errors import FieldMismatch, NonCanonical, WeakParameters, ZeroInverse
from okmp.ffield import (
    INTEGERS,
    M61,
    Fe,
    PrimeField,
    fe_add,
    fe_inv,
    fe_mul,
    fe_rand_nonzero,
    fe_sub,
    is_prime,
)
from okmp.rand import SecureRandom, SeededRandom

PRIMES = [7, 13, 10007, (1 << 31) - 1, M61, (1 << 62) - 57, (1 << 64) - 59]


def egcd_inverse(a, p):
    old_r, r, old_s, s = a % p, p, 1, 0
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
    assert old_r == 1
    return old_s % p


class TestScalars:
    def test_wraparound_add(self, f7):
        assert fe_add(f7(5), f7(4)) == 2

    def test_mul_mod_seven(self, f7):
        assert fe_mul(f7(3), f7(5)) == 1

    def test_sub_wraps_below_zero(self, f7):
        assert fe_sub(f7(2), f7(5)) == 4

    def test_m61_square_of_minus_one(self):
        f = PrimeField(M61)
        assert fe_mul(f(M61 - 1), f(M61 - 1)) == 1

    @pytest.mark.parametrize("p,a,expected", [(7, 4, 2), (7, 1, 1), (13, 5, 8)])
    def test_small_inverses(self, p, a, expected):
        f = PrimeField(p, strict=False)
        brute = next(x for x in range(1, p) if a * x % p == 1)
        assert brute == expected
        assert fe_inv(f(a)) == expected

    def test_inverse_of_zero(self, f7):
        with pytest.raises(ZeroInverse):
            fe_inv(f7(0))
        with pytest.raises(ZeroDivisionError):
            f7(3) / f7(0)

    def test_field_mismatch(self, f7):
        f13 = PrimeField(13, strict=False)
        with pytest.raises(FieldMismatch):
            f7(1) + f13(1)

    def test_values_are_canonical(self, f7):
        assert f7(-1).value == 6
        assert f7(100).value == 2

    def test_int_and_bool(self, f7):
        assert int(f7(9)) == 2
        assert not f7(7)


@pytest.mark.parametrize("p", [7, 13, 10007, M61, (1 << 64) - 59])
def test_inverse_matches_extended_euclid(p):
    f = PrimeField(p, strict=False)
    r = random.Random(p)
    for _ in range(200):
        a = r.randrange(1, p)
        assert f.inv(a) == egcd_inverse(a, p)


class TestConstruction:
    def test_rejects_composite(self):
        with pytest.raises(ValueError):
            PrimeField(91, strict=False)

    def test_protocol_floor(self):
        with pytest.raises(WeakParameters):
            PrimeField(7)
        assert PrimeField(7, strict=False).p == 7

    def test_rejects_oversized(self):
        with pytest.raises(ValueError):
            PrimeField((1 << 64) + 13)

    def test_serialized_width(self):
        f = PrimeField()
        assert f.p == M61 and f.elem_bits == 64 and f.elem_bytes == 8


def test_primality_agrees_with_sympy():
    r = random.Random(7)
    samples = list(range(2000)) + [r.getrandbits(64) for _ in range(3000)]
    samples += [M61, (1 << 64) - 59, 3215031751, 3825123056546413051]
    for n in samples:
        assert is_prime(n) == sympy.isprime(n), n


class TestRandomness:
    def test_seeded_range_and_replay(self, f7):
        a = fe_rand_nonzero(f7, SeededRandom(42))
        assert a == fe_rand_nonzero(f7, SeededRandom(42))
        assert 1 <= int(a) <= 6

    def test_same_seed_same_sequence(self, f7):
        r1, r2 = SeededRandom(42), SeededRandom(42)
        assert [f7.rand_nonzero(r1) for _ in range(50)] == [f7.rand_nonzero(r2) for _ in range(50)]

    def test_uniform_on_nonzero_residues(self, f7):
        rng = SeededRandom(42)
        draws = 100_000
        counts = np.bincount([f7.rand_nonzero(rng) for _ in range(draws)], minlength=7)
        assert counts[0] == 0
        expected = draws / 6
        sigma = math.sqrt(draws * (1 / 6) * (5 / 6))
        assert all(abs(c - expected) < 5 * sigma for c in counts[1:])
        chi2 = sum((c - expected) ** 2 / expected for c in counts[1:])
        # 5 degrees of freedom; 99.9th percentile is 20.5
        assert chi2 < 20.5

    def test_secure_source_is_flagged(self):
        assert SecureRandom().secure and not SeededRandom(1).secure

    def test_secure_uniform_array_range(self):
        arr = SecureRandom().uniform_array(10007, (5000,))
        assert arr.dtype == np.uint64 and int(arr.max()) < 10007


@pytest.mark.parametrize("p", PRIMES)
def test_vector_kernels_match_python_ints(p):
    f = PrimeField(p, strict=False)
    rng = SeededRandom(p % 1000)
    a = f.random_array(rng, (300,))
    b = f.random_array(rng, (300,))
    ai, bi = [int(x) for x in a], [int(x) for x in b]
    assert [int(x) for x in f.vmul(a, b)] == [x * y % p for x, y in zip(ai, bi)]
    assert [int(x) for x in f.vadd(a, b)] == [(x + y) % p for x, y in zip(ai, bi)]
    assert [int(x) for x in f.vsub(a, b)] == [(x - y) % p for x, y in zip(ai, bi)]
    assert f.dot(a, b) == sum(x * y for x, y in zip(ai, bi)) % p
    assert f.vsum(a) == sum(ai) % p


@pytest.mark.parametrize("p", PRIMES)
@pytest.mark.parametrize("shape", [(3, 4, 5), (20, 300, 40)])
def test_matmul_matches_object_oracle(p, shape):
    r, k, c = shape
    f = PrimeField(p, strict=False)
    rng = SeededRandom(r * k + p % 97)
    A = f.random_array(rng, (r, k))
    B = f.random_array(rng, (k, c))
    oracle = (A.astype(object).dot(B.astype(object))) % p
    assert (f.matmul(A, B).astype(object) == oracle).all()


def test_matmul_long_inner_dimension(m61):
    # inner dimension past one float chunk exercises the split sums
    rng = SeededRandom(5)
    A = m61.random_array(rng, (2, 5000))
    B = m61.random_array(rng, (5000, 3))
    oracle = (A.astype(object).dot(B.astype(object))) % M61
    assert (m61.matmul(A, B).astype(object) == oracle).all()


def test_m61_extremes(m61):
    top = np.array([M61 - 1, M61 - 2, 1 << 60, 0], dtype=np.uint64)
    got = m61.vmul(top, top)
    assert [int(x) for x in got] == [int(x) * int(x) % M61 for x in top]


elements = st.integers(min_value=0, max_value=M61 - 1)


@given(elements, elements, elements)
def test_ring_axioms(a, b, c):
    f = PrimeField(M61)
    a, b, c = f(a), f(b), f(c)
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a + b == b + a and a * b == b * a
    assert a * (b + c) == a * b + a * c
    assert a - a == 0 and -a + a == 0


@given(st.integers(min_value=1, max_value=M61 - 1))
def test_inverse_properties(a):
    f = PrimeField(M61)
    x = f(a)
    assert x * fe_inv(x) == 1
    assert fe_inv(fe_inv(x)) == x


@given(st.integers(min_value=1, max_value=10006), st.integers(min_value=0, max_value=10006))
def test_division_small_field(a, b):
    f = PrimeField(10007, strict=False)
    assert (f(b) / f(a)) * f(a) == b


class TestSerialization:
    def test_element_round_trip(self, m61):
        for v in (0, 1, M61 - 1):
            raw = m61.encode_element(v)
            assert len(raw) == 8 and m61.decode_element(raw) == v

    def test_non_canonical_rejected(self, m61):
        with pytest.raises(NonCanonical):
            m61.decode_element(M61.to_bytes(8, "little"))
        with pytest.raises(NonCanonical):
            m61.decode_vector((M61 + 3).to_bytes(8, "little"))

    def test_vector_round_trip(self, m61, rng):
        v = m61.random_array(rng, (17,))
        assert (m61.decode_vector(m61.encode_vector(v)) == v).all()


class TestIntegerRing:
    def test_exact_and_rational(self):
        a = INTEGERS(48)
        q = a / INTEGERS(12)
        assert q == 4 and isinstance(q.value, int)
        assert (INTEGERS(1) / INTEGERS(3)) * 3 == 1

    def test_decimal_encoding(self):
        for v in (0, -16, 40, 10**30):
            assert INTEGERS.decode_element(INTEGERS.encode_element(v)) == v
        third = INTEGERS.inv(3)
        assert INTEGERS.encode_element(third) == b"1/3"
        assert INTEGERS.decode_element(b"1/3") == third

    def test_bad_decimal(self):
        with pytest.raises(NonCanonical):
            INTEGERS.decode_element(b"12x")

    def test_no_overflow(self):
        big = INTEGERS(2**200)
        assert int(big * big) == 2**400

    def test_mixing_with_prime_field(self, f7):
        with pytest.raises(FieldMismatch):
            Fe(INTEGERS, 3) + f7(3)


def test_hash_agrees_with_canonical_int(f7):
    assert {f7(4)} == {4} and hash(f7(11)) == hash(4)
    assert {INTEGERS(3) / INTEGERS(6)} == {INTEGERS.inv(2)}
