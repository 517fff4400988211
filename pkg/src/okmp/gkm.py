"""Group key server state machine and member-side secret recovery.

The server keeps an orthogonal system e_1..e_n, nonzero scalars x_1..x_n
and the cached aggregate u = sum x_i e_i. A rekey broadcasts c = s*u;
member i holds v_i = x_i e_i and recovers s = <c, v_i> / <v_i, v_i>.
On leave only the departed slot's scalar changes, so u is patched in
place: one scalar subtraction, one scalar-vector product, one vector
addition, then the final scaling by the new secret.
"""

import math
from dataclasses import dataclass, field as dc_field
from functools import reduce

import numpy as np

from .errors import (
    DimMismatch,
    DuplicateMember,
    FieldMismatch,
    GroupFull,
    IsotropicKey,
    StaleEpoch,
    UnknownMember,
    WrongMode,
    ZeroSecret,
)
from .ffield import INTEGERS, Fe, IntegerRing, PrimeField
from .ortholin import FVector, OrthogonalSystem, gen_orthogonal_system

EXAMPLE_BASIS = ((1, 1, 1), (1, -2, 1), (-1, 0, 1))
EXAMPLE_SCALARS = (2, 3, 5)


@dataclass(frozen=True)
class RekeyMessage:
    """The broadcast; the only value an outside observer ever sees."""

    epoch: int
    c: FVector

    @property
    def field(self):
        return self.c.field


@dataclass(frozen=True)
class MemberKey:
    """Key material for one slot. Confidential: travels only over unicast.

    ``generation`` counts changes to the scaled basis x_i e_i; it binds
    authentication exchanges. ``aggregate`` is present only when the group
    runs with authentication enabled.
    """

    member_id: str
    slot: int
    v: FVector = dc_field(repr=False)
    norm_inv: object = dc_field(repr=False)
    epoch_issued: int
    generation: int = 0
    aggregate: FVector = dc_field(default=None, repr=False)

    def __post_init__(self):
        f = self.v.field
        norm = f.dot(self.v.coords, self.v.coords)
        if norm == 0 or f.mul(norm, self.norm_inv) != 1:
            raise IsotropicKey(f"key for slot {self.slot} has no usable self-inner-product")

    @property
    def field(self):
        return self.v.field


@dataclass
class OpCounter:
    scalar_subs: int = 0
    scalar_vector_muls: int = 0
    vector_adds: int = 0

    def as_tuple(self):
        return (self.scalar_subs, self.scalar_vector_muls, self.vector_adds)

    @property
    def total(self) -> int:
        return sum(self.as_tuple())


class GroupState:
    """Server-side secrets and slot bookkeeping for one group.

    Single writer: callers must serialize every mutating method. Each of
    build_rekey, join, leave, batch_refresh and rotate_all emits exactly one
    RekeyMessage and advances the epoch by one.
    """

    def __init__(self, system: OrthogonalSystem, scalars, rng, *, members=(),
                 auth_enabled=False, debug=False):
        field = system.field
        scalars = [field.reduce(x) for x in scalars]
        if len(scalars) != system.n:
            raise ValueError(f"need {system.n} scalars, got {len(scalars)}")
        if any(x == 0 for x in scalars):
            raise ValueError("scalars must be nonzero")
        self.system = system
        self.field = field
        self.rng = rng
        self.auth_enabled = auth_enabled
        self.debug = debug
        self._x = scalars
        self.slots = [None] * system.n
        self.members = {}
        self.epoch = 0
        self.generation = 0
        self.last_ops = OpCounter()
        self.aggregate = self.recompute_aggregate()
        self.current_secret = field.rand_nonzero(rng)
        for member_id in members:
            self._bind(member_id)
        self._check()

    @classmethod
    def from_parts(cls, field, basis, scalars, rng, **kwargs) -> "GroupState":
        """Build a state from an explicit basis (demo and misconfiguration studies)."""
        return cls(OrthogonalSystem.from_vectors(field, basis), scalars, rng, **kwargs)

    # -- inspection ---------------------------------------------------------

    @property
    def capacity(self) -> int:
        return self.system.n

    @property
    def dim(self) -> int:
        return self.system.m

    @property
    def scalars(self) -> tuple:
        return tuple(self._x)

    def free_slots(self) -> list:
        return [i for i, holder in enumerate(self.slots) if holder is None]

    def is_full(self) -> bool:
        return len(self.members) == self.capacity

    def slot_of(self, member_id) -> int:
        try:
            return self.members[member_id]
        except KeyError:
            raise UnknownMember(f"{member_id!r} is not bound") from None

    def recompute_aggregate(self):
        """sum x_i e_i from scratch."""
        return self.system.combine(self._x)

    def check_invariants(self):
        f = self.field
        fresh = self.recompute_aggregate()
        if [f.reduce(a) for a in fresh] != [f.reduce(a) for a in self.aggregate]:
            raise AssertionError("cached aggregate drifted from sum x_i e_i")
        if any(x == 0 for x in self._x):
            raise AssertionError("zero scalar in B'")
        if self.current_secret == 0:
            raise AssertionError("zero secret")
        for member_id, slot in self.members.items():
            if self.slots[slot] != member_id:
                raise AssertionError(f"slot table disagrees for {member_id!r}")

    def _check(self):
        if self.debug:
            self.check_invariants()

    # -- helpers ------------------------------------------------------------

    def _bind(self, member_id):
        if member_id in self.members:
            raise DuplicateMember(f"{member_id!r} already holds slot {self.members[member_id]}")
        free = self.free_slots()
        if not free:
            raise GroupFull(f"all {self.capacity} slots are bound")
        self.slots[free[0]] = member_id
        self.members[member_id] = free[0]
        return free[0]

    def _secret(self, secret):
        if secret is None:
            return self.field.rand_nonzero(self.rng)
        if isinstance(secret, Fe):
            if secret.field != self.field:
                raise FieldMismatch(f"{secret.field!r} vs {self.field!r}")
            secret = secret.value
        s = self.field.reduce(secret)
        if s == 0:
            raise ZeroSecret("the secret must be nonzero")
        return s

    def _fresh_scalar(self, old, forced=None, allow_degenerate=False):
        f = self.field
        if forced is not None:
            new = f.reduce(forced)
            if new == 0:
                raise ValueError("replacement scalar must be nonzero")
            if new == old and not allow_degenerate:
                raise ValueError("replacement scalar must differ from the revoked one")
            return new
        while True:
            new = f.rand_nonzero(self.rng)
            if new != old:
                return new

    def _fresh_scalars(self, old):
        f = self.field
        if not isinstance(f, PrimeField) or f.limb_count is None:
            return [self._fresh_scalar(x) for x in old]
        # one vectorized draw on [1, p), then redraw the rare collisions
        new = (self.rng.uniform_array(f.p - 1, (len(old),)) + np.uint64(1)).tolist()
        return [self._fresh_scalar(x) if x == y else y for x, y in zip(old, new)]

    def _rerandomize(self, slot, new):
        f = self.field
        ops = self.last_ops
        delta = f.sub(new, self._x[slot])
        ops.scalar_subs += 1
        shift = f.vscale(delta, self.system.basis[slot])
        ops.scalar_vector_muls += 1
        self.aggregate = f.vadd(self.aggregate, shift)
        ops.vector_adds += 1
        self._x[slot] = new

    def _emit(self, s) -> RekeyMessage:
        c = self.field.vscale(s, self.aggregate)
        self.last_ops.scalar_vector_muls += 1
        self.epoch += 1
        self.current_secret = s
        return RekeyMessage(self.epoch, FVector(self.field, c))

    # -- protocol operations ------------------------------------------------

    def issue_key(self, member_id) -> MemberKey:
        """Key for a bound member under the current scalars."""
        f = self.field
        slot = self.slot_of(member_id)
        x = self._x[slot]
        v = FVector(f, f.vscale(x, self.system.basis[slot]))
        norm_inv = f.inv(f.mul(f.mul(x, x), self.system.norms[slot]))
        agg = FVector(f, self.aggregate.copy()) if self.auth_enabled else None
        return MemberKey(member_id, slot, v, norm_inv, self.epoch, self.generation, agg)

    def build_rekey(self, secret=None) -> RekeyMessage:
        """Broadcast c = s*u for a fresh (or given) nonzero secret."""
        s = self._secret(secret)
        self.last_ops = OpCounter()
        msg = self._emit(s)
        self._check()
        return msg

    def join(self, member_id, secret=None):
        """Bind a free slot, rekey, and return (key, message).

        Scalars are untouched: a slot freed by a leave was already
        re-randomized then, so the joiner never inherits a revoked key.
        """
        s = self._secret(secret)
        self._bind(member_id)
        self.last_ops = OpCounter()
        msg = self._emit(s)
        key = self.issue_key(member_id)
        self._check()
        return key, msg

    def leave(self, member_id, secret=None, new_scalar=None, *, allow_degenerate=False) -> RekeyMessage:
        """Revoke a member by replacing x_j with a fresh x'_j != x_j."""
        slot = self.slot_of(member_id)
        s = self._secret(secret)
        new = self._fresh_scalar(self._x[slot], new_scalar, allow_degenerate)
        self.last_ops = OpCounter()
        self._rerandomize(slot, new)
        self.slots[slot] = None
        del self.members[member_id]
        self.generation += 1
        msg = self._emit(s)
        self._check()
        return msg

    def batch_refresh(self, departures, secret=None, new_scalars=None) -> RekeyMessage:
        """Fold several departures into one broadcast.

        Equivalent to sequential leaves with only the last broadcast sent.
        ``new_scalars`` optionally pins the replacement scalar per member.
        """
        if isinstance(departures, (set, frozenset)):
            departures = sorted(departures, key=lambda m: self.members.get(m, -1))
        order = list(dict.fromkeys(departures))
        missing = [m for m in order if m not in self.members]
        if missing:
            raise UnknownMember(f"not bound: {missing!r}")
        new_scalars = new_scalars or {}
        s = self._secret(secret)
        replacements = {}
        for member_id in order:
            slot = self.members[member_id]
            replacements[member_id] = self._fresh_scalar(self._x[slot], new_scalars.get(member_id))
        self.last_ops = OpCounter()
        for member_id in order:
            slot = self.members.pop(member_id)
            self._rerandomize(slot, replacements[member_id])
            self.slots[slot] = None
        if order:
            self.generation += 1
        msg = self._emit(s)
        self._check()
        return msg

    def rotate_all(self, secret=None) -> RekeyMessage:
        """Replace every scalar; all outstanding keys must be re-issued."""
        s = self._secret(secret)
        self._x = self._fresh_scalars(self._x)
        self.last_ops = OpCounter()
        self.aggregate = self.recompute_aggregate()
        self.last_ops.scalar_vector_muls += self.capacity
        self.last_ops.vector_adds += max(self.capacity - 1, 0)
        self.generation += 1
        msg = self._emit(s)
        self._check()
        return msg


def init_group(field, capacity: int, dim: int, rng, *, members=(), auth_enabled=False,
               debug=False) -> GroupState:
    """Fresh orthogonal system and scalars; every slot free unless ``members`` is given.

    Protocol-mode fields require dim > 2*capacity and a secure random source.
    """
    system = gen_orthogonal_system(field, dim, capacity, rng)
    scalars = [field.rand_nonzero(rng) for _ in range(capacity)]
    return GroupState(system, scalars, rng, members=members, auth_enabled=auth_enabled,
                      debug=debug)


def decode_with(key: MemberKey, c: FVector):
    """<c, v> * <v, v>^-1 with no epoch bookkeeping (also what attackers compute)."""
    if key.field != c.field:
        raise FieldMismatch(f"{key.field!r} vs {c.field!r}")
    if key.v.dim != c.dim:
        raise DimMismatch(f"key dim {key.v.dim} vs message dim {c.dim}")
    f = key.field
    return f.mul(f.dot(c.coords, key.v.coords), key.norm_inv)


def recover_secret(key: MemberKey, msg: RekeyMessage) -> Fe:
    """Member-side recovery of s from a broadcast."""
    if msg.epoch < key.epoch_issued:
        raise StaleEpoch(f"message epoch {msg.epoch} predates key epoch {key.epoch_issued}")
    return Fe(key.field, decode_with(key, msg.c))


def worked_example_group(rng=None) -> GroupState:
    """The three-user integer example: B = {(1,1,1),(1,-2,1),(-1,0,1)}, x = (2,3,5)."""
    from .rand import SeededRandom

    rng = rng if rng is not None else SeededRandom(0)
    return GroupState.from_parts(INTEGERS, EXAMPLE_BASIS, EXAMPLE_SCALARS, rng,
                                 members=("user1", "user2", "user3"), debug=True)


@dataclass
class GcdEntry:
    epoch: int
    gcd: int
    secret: int
    divides: bool


@dataclass
class GcdLeakReport:
    entries: list

    @property
    def all_divide(self) -> bool:
        return all(e.divides for e in self.entries)


def gcd_leak_probe(messages, secrets) -> GcdLeakReport:
    """Show that over the integers s divides gcd(c); only meaningful in demo mode."""
    messages = list(messages)
    secrets = [int(s) for s in secrets]
    if len(messages) != len(secrets):
        raise ValueError("one secret per message")
    entries = []
    for msg, s in zip(messages, secrets):
        if not isinstance(msg.field, IntegerRing):
            raise WrongMode("gcd leakage only exists over the integer ring")
        g = reduce(math.gcd, (abs(int(a)) for a in msg.c.tolist()), 0)
        entries.append(GcdEntry(msg.epoch, g, s, s != 0 and g % s == 0))
    return GcdLeakReport(entries)
