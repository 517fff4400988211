import pytest

from okmp.auth import AuthResponse, answer_challenge, make_challenge, verify_response
from okmp.errors import EpochMismatch, ZeroRecovered, ZeroSecret
from okmp.ffield import PrimeField
from okmp.gkm import GroupState, MemberKey, init_group
from okmp.ortholin import FVector
from okmp.rand import SeededRandom


@pytest.fixture
def toy():
    f7 = PrimeField(7, strict=False)
    return GroupState.from_parts(f7, [[1, 0], [0, 1]], [2, 3], SeededRandom(0),
                                 members=("x", "y"), auth_enabled=True)


def outsider_key(field, group, rng):
    """A random vector with nonzero norm that was never issued."""
    while True:
        v = FVector(field, field.random_array(rng, (group.dim,)))
        norm = field.dot(v.coords, v.coords)
        if norm:
            return MemberKey("eve", 0, v, field.inv(norm), group.epoch, group.generation,
                             FVector(field, group.aggregate.copy()))


class TestToyExchange:
    def test_challenge_payload(self, toy):
        ch = make_challenge(toy, SeededRandom(1), k=3)
        assert ch.payload.tolist() == [3, 1]

    def test_response_payload(self, toy):
        ch = make_challenge(toy, SeededRandom(1), k=3)
        x = toy.issue_key("x")
        assert x.v.tolist() == [2, 0]
        assert answer_challenge(x, ch).payload.tolist() == [6, 2]

    def test_unit_challenge_is_aggregate(self, toy):
        ch = make_challenge(toy, SeededRandom(1), k=1)
        assert ch.payload.tolist() == [2, 3]
        assert answer_challenge(toy.issue_key("x"), ch).payload.tolist() == [2, 3]

    def test_verifier_with_member_key(self, toy):
        x, y = toy.issue_key("x"), toy.issue_key("y")
        ch = make_challenge(x, SeededRandom(2))
        assert verify_response(ch, answer_challenge(y, ch), x)


def test_k_never_in_repr(toy):
    ch = make_challenge(toy, SeededRandom(1), k=3)
    assert "k=" not in repr(ch)


def test_same_seed_same_k(m61):
    group = init_group(m61, 3, 7, SeededRandom(5), members=("a",), auth_enabled=True)
    a = make_challenge(group, SeededRandom(11))
    b = make_challenge(group, SeededRandom(11))
    assert a.k == b.k and a.payload == b.payload


def test_zero_k_refused(toy):
    with pytest.raises(ZeroSecret):
        make_challenge(toy, SeededRandom(1), k=0)


def test_zero_challenge_refused(toy):
    key = toy.issue_key("x")
    ch = make_challenge(toy, SeededRandom(1), k=3)
    bogus = type(ch)(FVector.zeros(key.field, 2), ch.epoch, 3)
    with pytest.raises(ZeroRecovered):
        answer_challenge(key, bogus)


def test_completeness(m61):
    rng = SeededRandom(17)
    group = init_group(m61, 8, 17, rng, members=[f"u{i}" for i in range(8)], auth_enabled=True)
    keys = [group.issue_key(f"u{i}") for i in range(8)]
    for t in range(300):
        challenger, responder = keys[t % 8], keys[(t * 3 + 1) % 8]
        ch = make_challenge(challenger, rng)
        assert verify_response(ch, answer_challenge(responder, ch), challenger)


def test_random_payload_rejected(m61):
    rng = SeededRandom(3)
    group = init_group(m61, 4, 9, rng, members=("a", "b"), auth_enabled=True)
    a = group.issue_key("a")
    for _ in range(200):
        ch = make_challenge(a, rng)
        fake = AuthResponse(FVector(m61, m61.random_array(rng, (9,))), ch.epoch)
        assert not verify_response(ch, fake, a)


def test_outsider_never_passes_at_large_p(m61):
    rng = SeededRandom(21)
    group = init_group(m61, 4, 9, rng, members=("a",), auth_enabled=True)
    a = group.issue_key("a")
    accepted = 0
    for _ in range(10_000):
        eve = outsider_key(m61, group, rng)
        ch = make_challenge(a, rng)
        try:
            accepted += verify_response(ch, answer_challenge(eve, ch), a)
        except ZeroRecovered:
            pass
    assert accepted == 0


def test_outsider_rate_small_field():
    f = PrimeField(10007, strict=False)
    rng = SeededRandom(8)
    group = init_group(f, 3, 7, rng, members=("a",), auth_enabled=True)
    accepted = trials = 0
    for _ in range(20_000):
        eve = outsider_key(f, group, rng)
        ch = make_challenge(group, rng)
        try:
            accepted += verify_response(ch, answer_challenge(eve, ch), group)
        except ZeroRecovered:
            continue
        trials += 1
    # expected about 1 / (p - 1) = 1e-4
    assert accepted / trials <= 5e-4


class TestExpiry:
    def test_leave_expires_challenge(self, m61, rng):
        group = init_group(m61, 4, 9, rng, members=("a", "b", "c"), auth_enabled=True)
        b = group.issue_key("b")
        ch = make_challenge(group, rng)
        resp = answer_challenge(b, ch)
        group.leave("c")
        with pytest.raises(EpochMismatch):
            verify_response(ch, resp, group)

    def test_rotate_expires_member_verifier(self, m61, rng):
        group = init_group(m61, 4, 9, rng, members=("a", "b"), auth_enabled=True)
        ch = make_challenge(group.issue_key("a"), rng)
        resp = answer_challenge(group.issue_key("b"), ch)
        group.rotate_all()
        with pytest.raises(EpochMismatch):
            verify_response(ch, resp, group.issue_key("a"))

    def test_plain_rekey_does_not_expire(self, m61, rng):
        group = init_group(m61, 4, 9, rng, members=("a", "b"), auth_enabled=True)
        ch = make_challenge(group, rng)
        resp = answer_challenge(group.issue_key("b"), ch)
        group.build_rekey()
        group.join("c")
        assert verify_response(ch, resp, group)

    def test_mismatched_response_epoch(self, m61, rng):
        group = init_group(m61, 4, 9, rng, members=("a", "b"), auth_enabled=True)
        ch = make_challenge(group, rng)
        resp = answer_challenge(group.issue_key("b"), ch)
        with pytest.raises(EpochMismatch):
            verify_response(ch, AuthResponse(resp.payload, resp.epoch + 1), group)


def test_independent_auth_system(m61):
    # a second group dedicated to authentication, separate from the rekey group
    rng = SeededRandom(6)
    rekey_group = init_group(m61, 3, 7, rng, members=("a", "b"))
    auth_group = init_group(m61, 3, 7, rng, members=("a", "b"), auth_enabled=True)
    ch = make_challenge(auth_group.issue_key("a"), rng)
    resp = answer_challenge(auth_group.issue_key("b"), ch)
    assert verify_response(ch, resp, auth_group.issue_key("a"))
    rekey_group.leave("b")
    assert verify_response(ch, resp, auth_group)


def test_missing_aggregate(m61, rng):
    group = init_group(m61, 2, 5, rng, members=("a",))
    with pytest.raises(ValueError):
        make_challenge(group.issue_key("a"), rng)
