"""Executable attacks against the broadcast scheme.

Each attack takes only what its attacker would see (old keys, broadcast
transcripts, leaked pairs). Verdicts come from a ``GroundTruth`` handle
that answers yes/no questions about the real server state; the attack
code never reads secrets through it.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import SingularTranscript
from .ffield import PrimeField
from .gkm import GroupState, RekeyMessage, decode_with
from .ortholin import OrthogonalSystem, gen_orthogonal_system, tuple_count_log2, SECURITY_BITS

WITNESS_SEARCH_LIMIT = 4096


class GroundTruth:
    """Sealed snapshots of server secrets, queried only for verdicts."""

    __slots__ = ("_epochs",)

    def __init__(self):
        self._epochs = {}

    def record(self, state: GroupState):
        """Snapshot the secret and scalars behind the state's latest broadcast."""
        self._epochs[state.epoch] = (state.current_secret, state.scalars)

    def secret_is(self, epoch: int, value) -> bool:
        entry = self._epochs.get(epoch)
        return entry is not None and entry[0] == value

    def scalars_are(self, epoch: int, values) -> bool:
        entry = self._epochs.get(epoch)
        return entry is not None and tuple(entry[1]) == tuple(values)

    def __repr__(self):
        return f"GroundTruth(<{len(self._epochs)} sealed epochs>)"


@dataclass
class Transcript:
    """Broadcasts seen by an observer, plus optional leaked material."""

    messages: list
    known_pairs: list = dc_field(default_factory=list)
    known_basis: OrthogonalSystem = None

    def __post_init__(self):
        epochs = [m.epoch for m in self.messages]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("transcript epochs must be distinct and increasing")

    @classmethod
    def from_frames(cls, frames, field) -> "Transcript":
        from .wire import Kind, frame_to_rekey

        return cls([frame_to_rekey(f, field) for f in frames if f.kind == Kind.REKEY])


# -- old member --------------------------------------------------------------

@dataclass
class OldMemberResult:
    epoch: int
    recovered: object
    succeeded: bool = None


def attack_old_member(old_key, msg: RekeyMessage, truth: GroundTruth = None) -> OldMemberResult:
    """A revoked member decodes a later broadcast with her stale vector.

    She obtains s' * x'_j / x_j, which equals s' only if x'_j == x_j.
    """
    value = decode_with(old_key, msg.c)
    verdict = truth.secret_is(msg.epoch, value) if truth is not None else None
    return OldMemberResult(msg.epoch, value, verdict)


# -- difference of two broadcasts -------------------------------------------

@dataclass
class DifferenceVerdict:
    observation: int
    zero_difference: bool
    candidates: list
    consistent: list

    @property
    def excluded(self) -> list:
        keep = set(self.consistent)
        return [c for c in self.candidates if c not in keep]

    @property
    def pinpointed(self) -> bool:
        """True if the observation singles out one candidate secret."""
        return len(self.consistent) == 1


def attack_difference(old_key, msg_a: RekeyMessage, msg_b: RekeyMessage, old_secret=None,
                      candidates=None) -> DifferenceVerdict:
    """Look for information on the new secret in <c - c', v>.

    For each candidate secret sigma, search every (x, x') with x != x'
    (and <e,e> fixed by <v,v> = x^2 <e,e>) for a world that produces the
    observed value. ``old_secret`` is the secret of msg_a when the
    attacker knew it; otherwise it is a further unknown.
    Exhaustive, so restricted to fields of order <= WITNESS_SEARCH_LIMIT.
    """
    f = old_key.field
    if not isinstance(f, PrimeField) or f.p > WITNESS_SEARCH_LIMIT:
        raise ValueError(f"witness search needs a prime field of order <= {WITNESS_SEARCH_LIMIT}")
    p = f.p
    diff = msg_a.c - msg_b.c
    obs = f.dot(diff.coords, old_key.v.coords)
    norm = f.dot(old_key.v.coords, old_key.v.coords)
    zero = diff.is_zero()
    if candidates is None:
        candidates = list(range(1, p))
    candidates = [f.reduce(c) for c in candidates]

    nz = np.arange(1, p, dtype=np.int64)
    x = nz[:, None]
    xp = nz[None, :]
    inv = np.array([0] + [pow(int(a), p - 2, p) for a in nz], dtype=np.int64)
    # <e,e> = <v,v> / x^2
    ee = (norm * inv[x] % p) * inv[x] % p
    # observation = (s x^2 - sigma x' x) <e,e>; solve for s, which must be nonzero
    obs_over_ee = obs * inv[ee] % p
    x2_inv = inv[x] * inv[x] % p
    distinct = x != xp
    consistent = []
    for sigma in candidates:
        s_needed = (obs_over_ee + sigma * xp % p * x) % p * x2_inv % p
        if old_secret is None:
            ok = distinct & (s_needed != 0)
        else:
            ok = distinct & (s_needed == f.reduce(old_secret))
        if ok.any():
            consistent.append(sigma)
    return DifferenceVerdict(int(obs), zero, candidates, consistent)


# -- basis recovery from n independent broadcasts ----------------------------

def _gauss_jordan(field, A, B):
    """Solve A X = B over the field; raises SingularTranscript if A is singular."""
    n = len(A)
    M = [list(map(int, A[i])) + list(map(int, B[i])) for i in range(n)]
    width = len(M[0])
    for col in range(n):
        pivot = next((r for r in range(col, n) if M[r][col] % field.p), None)
        if pivot is None:
            raise SingularTranscript(f"rank deficient at column {col}")
        M[col], M[pivot] = M[pivot], M[col]
        inv = field.inv(M[col][col])
        M[col] = [v * inv % field.p for v in M[col]]
        for r in range(n):
            if r != col and M[r][col]:
                factor = M[r][col]
                M[r] = [(a - factor * b) % field.p for a, b in zip(M[r], M[col])]
    return [row[n:width] for row in M]


def transcript_rank_ok(field, messages) -> bool:
    try:
        _gauss_jordan(field, _columns(messages), [[0]] * len(messages))
        return True
    except SingularTranscript:
        return False


def _columns(messages):
    # M has the coordinates of broadcast i in column i
    rows = [m.c.tolist() for m in messages]
    return [list(col) for col in zip(*rows)]


@dataclass
class BasisRecoveryResult:
    epoch: int
    scalars: list
    secrets: dict
    change_of_basis: list = dc_field(repr=False)
    verified: bool = None


def attack_basis_recovery(transcript: Transcript, known_pair, truth: GroundTruth = None) -> BasisRecoveryResult:
    """Invert the coordinate matrix of n independent broadcasts.

    Requires n = m broadcasts. With one leaked (s, c) pair the attacker
    reads off the scalars as the coordinates of c / s in the basis she
    believes the server uses: the transcript's known basis if one leaked,
    otherwise the canonical basis. Against a server that really uses the
    canonical basis this recovers every x_i; against a hidden basis the
    output is garbage.
    """
    messages = transcript.messages
    if not messages:
        raise SingularTranscript("empty transcript")
    f = messages[0].field
    m = messages[0].c.dim
    if len(messages) < m:
        raise SingularTranscript(f"{len(messages)} broadcasts cannot span dimension {m}")
    window = messages[-m:]
    M = _columns(window)
    identity = [[int(i == j) for j in range(m)] for i in range(m)]
    change_of_basis = _gauss_jordan(f, M, identity)

    s, msg = known_pair
    s = f.reduce(s)
    c = msg.c.tolist()
    if transcript.known_basis is not None:
        H = [list(col) for col in zip(*transcript.known_basis.basis.tolist())]
        z = [row[0] for row in _gauss_jordan(f, H, [[v] for v in c])]
    else:
        z = c
    s_inv = f.inv(s)
    scalars = [f.mul(v, s_inv) for v in z]

    # with the scalars in hand every other broadcast's secret falls out:
    # leaves change one coordinate at a time, so the ratio c_j / x_j agrees on the rest
    secrets = {}
    for other in messages:
        ratios = {}
        coords = other.c.tolist() if transcript.known_basis is None else [
            row[0] for row in _gauss_jordan(f, H, [[v] for v in other.c.tolist()])]
        for cj, xj in zip(coords, scalars):
            if xj:
                r = f.mul(cj, f.inv(xj))
                ratios[r] = ratios.get(r, 0) + 1
        if ratios:
            secrets[other.epoch] = max(ratios, key=ratios.get)

    verdict = truth.scalars_are(msg.epoch, scalars) if truth is not None else None
    return BasisRecoveryResult(msg.epoch, scalars, secrets, change_of_basis, verdict)


def basis_recovery_scenario(field, n: int, rng, canonical: bool):
    """A group with n = m whose observer collects n independent leave broadcasts.

    Returns (transcript, known_pair, truth). ``canonical`` selects the
    misconfigured server that uses the standard basis.
    """
    if canonical:
        basis = [[int(i == j) for j in range(n)] for i in range(n)]
        system = OrthogonalSystem.from_vectors(field, basis)
    else:
        system = gen_orthogonal_system(field, n, n, rng)
    scalars = [field.rand_nonzero(rng) for _ in range(n)]
    members = [f"u{i}" for i in range(n)]
    state = GroupState(system, scalars, rng, members=members)
    truth = GroundTruth()
    seen = []
    turn = 0
    while len(seen) < n or not transcript_rank_ok(field, seen[-n:]):
        who = members[turn % n]
        turn += 1
        msg = state.leave(who)
        truth.record(state)
        seen.append(msg)
        secret = state.current_secret
        state.join(who)
        truth.record(state)
        if turn > 50 * n:
            raise SingularTranscript("could not gather independent broadcasts")
    window = seen[-n:]
    # the scenario plays the colluding insider who leaks the last (s, c) pair
    return Transcript(window), (secret, window[-1]), truth


@dataclass
class BoundCheck:
    log2_work: float
    threshold: int
    secure: bool


def brute_force_bound_check(field, n: int, threshold: int = SECURITY_BITS) -> BoundCheck:
    """Compare the orthogonal-tuple count against a security threshold."""
    bits = tuple_count_log2(field.p, n)
    return BoundCheck(bits, threshold, bits >= threshold)
