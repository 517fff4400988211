"""Challenge-response authentication between group members.

X sends k^-1 * u; a legitimate Y recovers k^-1 with her key exactly as
she would recover a group secret, inverts it, and returns k * u. X then
recovers k from the response with her own key. Exchanges are bound to
the key generation, so they expire whenever B' changes.
"""

from dataclasses import dataclass, field as dc_field

from .errors import EpochMismatch, FieldMismatch, ZeroRecovered, ZeroSecret
from .gkm import GroupState, MemberKey, decode_with
from .ortholin import FVector


@dataclass(frozen=True)
class AuthChallenge:
    payload: FVector
    epoch: int
    # retained by the challenger, never serialized
    k: int = dc_field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class AuthResponse:
    payload: FVector
    epoch: int


def _aggregate_of(holder):
    if isinstance(holder, MemberKey):
        if holder.aggregate is None:
            raise ValueError("key was issued without the aggregate; enable authentication")
        return holder.aggregate, holder.generation
    if isinstance(holder, GroupState):
        return FVector(holder.field, holder.aggregate.copy()), holder.generation
    raise TypeError(f"{type(holder).__name__} has no aggregate")


def make_challenge(holder, rng, k=None) -> AuthChallenge:
    """Fresh challenge k^-1 * u from anyone holding the aggregate."""
    u, generation = _aggregate_of(holder)
    f = u.field
    if k is None:
        k = f.rand_nonzero(rng)
    else:
        k = f.reduce(k)
        if k == 0:
            raise ZeroSecret("challenge scalar must be nonzero")
    payload = FVector(f, f.vscale(f.inv(k), u.coords))
    return AuthChallenge(payload, generation, k)


def answer_challenge(key: MemberKey, challenge: AuthChallenge, u: FVector = None) -> AuthResponse:
    u = u if u is not None else key.aggregate
    if u is None:
        raise ValueError("responder needs the aggregate")
    if u.field != key.field:
        raise FieldMismatch(f"{u.field!r} vs {key.field!r}")
    f = key.field
    k_inv = decode_with(key, challenge.payload)
    if k_inv == 0:
        raise ZeroRecovered("challenge decodes to zero")
    k = f.inv(k_inv)
    return AuthResponse(FVector(f, f.vscale(k, u.coords)), key.generation)


def verify_response(challenge: AuthChallenge, response: AuthResponse, verifier) -> bool:
    """Accept iff the response decodes to the challenger's k.

    ``verifier`` is the challenger's MemberKey, or a GroupState / FVector
    giving direct access to u. Raises EpochMismatch when the exchange
    straddles a change of B'.
    """
    if response.epoch != challenge.epoch:
        raise EpochMismatch(f"response epoch {response.epoch} != challenge epoch {challenge.epoch}")
    if isinstance(verifier, MemberKey):
        if verifier.generation != challenge.epoch:
            raise EpochMismatch("challenge was issued under an earlier key generation")
        try:
            return decode_with(verifier, response.payload) == challenge.k
        except FieldMismatch:
            return False
    if isinstance(verifier, GroupState):
        if verifier.generation != challenge.epoch:
            raise EpochMismatch("challenge was issued under an earlier key generation")
        u = FVector(verifier.field, verifier.aggregate.copy())
    elif isinstance(verifier, FVector):
        u = verifier
    else:
        raise TypeError(f"cannot verify with {type(verifier).__name__}")
    if response.payload.field != u.field or response.payload.dim != u.dim:
        return False
    return response.payload == challenge.k * u
