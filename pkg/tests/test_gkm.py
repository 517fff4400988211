import pytest
from hypothesis import given, strategies as st

from okmp.errors import (
    DuplicateMember,
    GroupFull,
    IsotropicKey,
    StaleEpoch,
    UnknownMember,
    WeakParameters,
    WrongMode,
    ZeroSecret,
)
from okmp.ffield import INTEGERS, M61, PrimeField
from okmp.gkm import (
    EXAMPLE_BASIS,
    EXAMPLE_SCALARS,
    GroupState,
    MemberKey,
    decode_with,
    gcd_leak_probe,
    init_group,
    worked_example_group,
    recover_secret,
)
from okmp.ortholin import FVector, OrthogonalSystem
from okmp.rand import SecureRandom, SeededRandom


def f7_toy(rng=None):
    f7 = PrimeField(7, strict=False)
    return GroupState.from_parts(f7, [[1, 0], [0, 1]], [2, 3], rng or SeededRandom(0),
                                 members=("a", "b"))


class TestWorkedExample:
    def test_aggregate_is_direct_sum(self):
        group = worked_example_group()
        rows = [[x * c for c in row] for x, row in zip(EXAMPLE_SCALARS, EXAMPLE_BASIS)]
        expected = [sum(col) for col in zip(*rows)]
        assert expected == [0, -4, 10]
        assert list(group.aggregate) == expected

    def test_three_broadcasts(self):
        group = worked_example_group()
        keys = {m: group.issue_key(m) for m in group.members}
        c1 = group.build_rekey(4)
        assert c1.c.tolist() == [0, -16, 40]
        assert all(recover_secret(k, c1) == 4 for k in keys.values())
        c2 = group.leave("user2", secret=3, new_scalar=2)
        assert c2.c.tolist() == [-3, -6, 27]
        assert group.last_ops.as_tuple() == (1, 2, 1)
        c3 = group.leave("user1", secret=2, new_scalar=3)
        assert c3.c.tolist() == [0, -2, 20]

    def test_recovery_from_first_member(self):
        group = worked_example_group()
        key = group.issue_key("user1")
        assert key.v.tolist() == [2, 2, 2]
        assert recover_secret(key, group.build_rekey(4)) == 4

    def test_revoked_member_gets_scaled_value(self):
        group = worked_example_group()
        old = group.issue_key("user2")
        msg = group.leave("user2", secret=3, new_scalar=2)
        # s' x' / x = 3 * 2 / 3
        assert decode_with(old, msg.c) == 2


class TestToyField:
    def test_broadcast(self):
        assert f7_toy().build_rekey(4).c.tolist() == [1, 5]

    def test_member_recovery(self):
        group = f7_toy()
        key = group.issue_key("a")
        assert key.v.tolist() == [2, 0]
        assert key.norm_inv == 2
        assert recover_secret(key, group.build_rekey(4)) == 4

    def test_unit_secret_broadcasts_aggregate(self):
        group = f7_toy()
        assert group.build_rekey(1).c.tolist() == [int(a) for a in group.aggregate]


class TestInit:
    def test_aggregate_matches_brute_force(self):
        f = PrimeField(M61, strict=False)
        group = init_group(f, 3, 7, SeededRandom(9))
        rows = [[x * int(c) for c in row] for x, row in zip(group.scalars, group.system.basis)]
        brute = [sum(col) % M61 for col in zip(*rows)]
        assert [int(a) for a in group.aggregate] == brute
        assert group.epoch == 0 and group.free_slots() == [0, 1, 2]
        assert group.current_secret != 0

    def test_protocol_mode_rejects_narrow_dim(self):
        with pytest.raises(WeakParameters):
            init_group(PrimeField(M61), 3, 3, SecureRandom())

    def test_protocol_mode_accepts_advised_dim(self):
        group = init_group(PrimeField(M61), 3, 7, SecureRandom())
        group.check_invariants()


class TestJoinLeave:
    def test_join_fills_free_slot(self, m61, rng):
        group = init_group(m61, 2, 5, rng, members=("a",))
        key, msg = group.join("b")
        assert key.slot == 1
        assert recover_secret(key, msg) == group.current_secret

    def test_join_when_full(self, m61, rng):
        group = init_group(m61, 1, 3, rng, members=("a",))
        with pytest.raises(GroupFull):
            group.join("b")

    def test_duplicate(self, m61, rng):
        group = init_group(m61, 2, 5, rng, members=("a",))
        with pytest.raises(DuplicateMember):
            group.join("a")

    def test_unknown_leave(self, m61, rng):
        group = init_group(m61, 2, 5, rng)
        with pytest.raises(UnknownMember):
            group.leave("ghost")

    def test_join_keeps_scalars(self, m61, rng):
        group = init_group(m61, 3, 7, rng)
        before = group.scalars
        group.join("a")
        assert group.scalars == before

    def test_leave_changes_only_departed_scalar(self, m61, rng):
        group = init_group(m61, 3, 7, rng, members=("a", "b", "c"))
        before = group.scalars
        group.leave("b")
        after = group.scalars
        assert after[0] == before[0] and after[2] == before[2] and after[1] != before[1]

    def test_leave_op_count(self, m61, rng):
        group = init_group(m61, 4, 9, rng, members=("a", "b"))
        group.leave("a")
        assert group.last_ops.as_tuple() == (1, 2, 1)
        assert group.last_ops.total == 4

    def test_revocation_algebra(self, m61, rng):
        group = init_group(m61, 4, 9, rng, members=("a", "b", "c"))
        old = group.issue_key("b")
        x_old = group.scalars[old.slot]
        msg = group.leave("b")
        x_new = group.scalars[old.slot]
        s = group.current_secret
        expected = s * x_new * m61.inv(x_old) % M61
        got = decode_with(old, msg.c)
        assert got == expected and got != s

    def test_degenerate_override_reveals_secret(self, m61, rng):
        group = init_group(m61, 2, 5, rng, members=("a", "b"))
        old = group.issue_key("a")
        msg = group.leave("a", new_scalar=group.scalars[0], allow_degenerate=True)
        assert decode_with(old, msg.c) == group.current_secret

    def test_degenerate_refused_by_default(self, m61, rng):
        group = init_group(m61, 2, 5, rng, members=("a",))
        with pytest.raises(ValueError):
            group.leave("a", new_scalar=group.scalars[0])

    def test_rejoin_gets_fresh_vector(self, m61, rng):
        group = init_group(m61, 2, 5, rng, members=("a",))
        first = group.issue_key("a")
        group.leave("a")
        second, _ = group.join("a")
        assert second.slot == first.slot and second.v != first.v

    def test_zero_secret(self, m61, rng):
        group = init_group(m61, 2, 5, rng)
        with pytest.raises(ZeroSecret):
            group.build_rekey(0)


class TestRotate:
    def test_old_keys_break(self, m61, rng):
        group = init_group(m61, 3, 7, rng, members=("a", "b"))
        old = group.issue_key("a")
        before = group.scalars
        msg = group.rotate_all()
        assert all(x != y for x, y in zip(before, group.scalars))
        assert decode_with(old, msg.c) != group.current_secret
        assert recover_secret(group.issue_key("a"), msg) == group.current_secret

    def test_empty_group(self, m61, rng):
        group = init_group(m61, 3, 7, rng)
        msg = group.rotate_all()
        assert msg.c.dim == 7 and not msg.c.is_zero()

    def test_deterministic(self, m61):
        a = init_group(m61, 3, 7, SeededRandom(4))
        b = init_group(m61, 3, 7, SeededRandom(4))
        a.rotate_all()
        b.rotate_all()
        assert a.scalars == b.scalars

    def test_stale_message_rejected(self, m61, rng):
        group = init_group(m61, 3, 7, rng, members=("a",))
        early = group.build_rekey()
        group.rotate_all()
        fresh = group.issue_key("a")
        with pytest.raises(StaleEpoch):
            recover_secret(fresh, early)


class TestBatch:
    def test_batch_of_one_is_leave(self, m61):
        a = init_group(m61, 3, 7, SeededRandom(8), members=("a", "b"))
        b = init_group(m61, 3, 7, SeededRandom(8), members=("a", "b"))
        assert a.leave("a") == b.batch_refresh({"a"})
        assert a.scalars == b.scalars

    def test_batch_matches_sequential_leaves(self, m61):
        seq = init_group(m61, 4, 9, SeededRandom(3), members=("a", "b", "c"))
        bat = init_group(m61, 4, 9, SeededRandom(3), members=("a", "b", "c"))
        seq.leave("a", secret=5, new_scalar=11)
        last = seq.leave("b", secret=6, new_scalar=12)
        msg = bat.batch_refresh(["a", "b"], secret=6, new_scalars={"a": 11, "b": 12})
        assert msg.c == last.c
        assert list(seq.aggregate) == list(bat.aggregate)
        assert bat.last_ops.as_tuple() == (2, 3, 2)

    def test_empty_batch_is_plain_rekey(self, m61, rng):
        group = init_group(m61, 3, 7, rng, members=("a",))
        key = group.issue_key("a")
        generation = group.generation
        msg = group.batch_refresh(set())
        assert group.generation == generation
        assert recover_secret(key, msg) == group.current_secret

    def test_unknown_member_in_batch(self, m61, rng):
        group = init_group(m61, 3, 7, rng, members=("a",))
        with pytest.raises(UnknownMember):
            group.batch_refresh(["a", "zz"])


class TestKeys:
    def test_isotropic_key_rejected(self, f7):
        v = FVector.of(f7, [1, 0])
        with pytest.raises(IsotropicKey):
            MemberKey("x", 0, v, 3, 0)

    def test_epoch_increases(self, m61, rng):
        group = init_group(m61, 3, 7, rng)
        epochs = [group.build_rekey().epoch, group.join("a")[1].epoch,
                  group.leave("a").epoch, group.rotate_all().epoch]
        assert epochs == [1, 2, 3, 4]


class TestGcdProbe:
    def test_worked_example(self):
        group = worked_example_group()
        c1 = group.build_rekey(4)
        c2 = group.leave("user2", secret=3, new_scalar=2)
        report = gcd_leak_probe([c1, c2], [4, 3])
        assert [e.gcd for e in report.entries] == [8, 3]
        assert report.all_divide

    def test_random_integer_groups(self):
        for seed in range(100):
            group = init_group(INTEGERS, 3, 4, SeededRandom(seed), members=("a", "b", "c"))
            msgs, secrets = [], []
            for op in (group.build_rekey, lambda: group.leave("b")):
                msgs.append(op())
                secrets.append(group.current_secret)
            assert gcd_leak_probe(msgs, secrets).all_divide

    def test_prime_field_refused(self, m61, rng):
        group = init_group(m61, 2, 5, rng)
        with pytest.raises(WrongMode):
            gcd_leak_probe([group.build_rekey()], [group.current_secret])


@given(st.lists(st.tuples(st.sampled_from(["join", "leave", "batch", "rotate", "rekey"]),
                          st.integers(min_value=0, max_value=5)), max_size=25),
       st.integers(min_value=0, max_value=2**32))
def test_random_lifecycle_invariants(ops, seed):
    f = PrimeField(M61, strict=False)
    group = init_group(f, 6, 13, SeededRandom(seed), debug=True)
    keys = {}
    revoked = []
    counter = 0
    for op, arg in ops:
        bound = sorted(group.members)
        if op == "join" and not group.is_full():
            counter += 1
            key, msg = group.join(f"m{counter}")
            keys[key.member_id] = key
        elif op == "leave" and bound:
            who = bound[arg % len(bound)]
            revoked.append(keys.pop(who))
            msg = group.leave(who)
        elif op == "batch" and bound:
            gone = bound[: 1 + arg % len(bound)]
            revoked.extend(keys.pop(m) for m in gone)
            msg = group.batch_refresh(gone)
        elif op == "rotate":
            msg = group.rotate_all()
            keys = {m: group.issue_key(m) for m in keys}
        else:
            msg = group.build_rekey()
        group.check_invariants()
        s = group.current_secret
        assert all(recover_secret(k, msg) == s for k in keys.values())
        assert all(decode_with(k, msg.c) != s for k in revoked)
