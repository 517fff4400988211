"""Bit-exact frame codec, capture files, and rekey message-length estimators.

Frame layout (all integers little-endian)::

    magic   4  b"OKMP"
    version 1  1 = prime field, 8-byte residues; 2 = integer demo, decimal strings
    kind    1  see Kind
    epoch   8
    dim     4
    body    kind-specific

KEY_ISSUE frames carry member key material and belong on the unicast
channel only. A capture file is a sequence of frames, each preceded by a
4-byte length.
"""

import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    BadKind,
    BadMagic,
    BadVersion,
    CorruptCapture,
    IsotropicKey,
    LengthMismatch,
    NonCanonical,
    TruncatedFrame,
    WireError,
)
from .ffield import INTEGERS, PROTOCOL_MIN_PRIME, PrimeField
from .ortholin import FVector

MAGIC = b"OKMP"
VERSION = 1
DEMO_VERSION = 2
HEADER = struct.Struct("<4sBBQI")
HEADER_BYTES = HEADER.size
ELEM_BYTES = 8
_LEN = struct.Struct("<I")
_U16 = struct.Struct("<H")
_KEY_FIXED = struct.Struct("<QIQB")
MAX_FRAME_BYTES = 1 << 30


class Kind(enum.IntEnum):
    REKEY = 1
    JOIN_REQ = 2
    KEY_ISSUE = 3
    AUTH_CH = 4
    AUTH_RESP = 5
    LEAVE_NOTICE = 6


class Reason(enum.IntEnum):
    """Why a LEAVE_NOTICE was sent. Server-originated notices are typed closes."""

    VOLUNTARY = 0
    AUTH_FAILED = 1
    GROUP_FULL = 2
    CHURN = 3
    DUPLICATE = 4
    BAD_REQUEST = 5


VECTOR_KINDS = (Kind.REKEY, Kind.AUTH_CH, Kind.AUTH_RESP)
FLAG_AGGREGATE = 0x01


@dataclass(frozen=True)
class Frame:
    kind: Kind
    epoch: int
    dim: int
    body: bytes
    version: int = VERSION


# -- element codecs ----------------------------------------------------------

def _encode_elements(version, field, values) -> bytes:
    if version == VERSION:
        return b"".join(int(v).to_bytes(ELEM_BYTES, "little") for v in values)
    out = []
    for v in values:
        raw = INTEGERS.encode_element(v)
        out.append(_U16.pack(len(raw)) + raw)
    return b"".join(out)


def _scan_elements(version, body, offset, count):
    """Return (raw element slices, new offset) without interpreting them."""
    items = []
    for _ in range(count):
        if version == VERSION:
            end = offset + ELEM_BYTES
            if end > len(body):
                raise TruncatedFrame("element runs past the end of the body")
            items.append(body[offset:end])
            offset = end
        else:
            if offset + 2 > len(body):
                raise TruncatedFrame("element length runs past the end of the body")
            (n,) = _U16.unpack_from(body, offset)
            end = offset + 2 + n
            if end > len(body):
                raise TruncatedFrame("element runs past the end of the body")
            items.append(body[offset + 2:end])
            offset = end
    return items, offset


def _decode_elements(version, field, raws):
    if version == VERSION:
        out = []
        for raw in raws:
            v = int.from_bytes(raw, "little")
            if v >= field.p:
                raise NonCanonical(f"element {v} >= p")
            out.append(v)
        return out
    return [INTEGERS.decode_element(raw) for raw in raws]


def _string(body, offset):
    if offset + 2 > len(body):
        raise TruncatedFrame("string length runs past the end of the body")
    (n,) = _U16.unpack_from(body, offset)
    end = offset + 2 + n
    if end > len(body):
        raise TruncatedFrame("string runs past the end of the body")
    try:
        return body[offset + 2:end].decode("utf-8"), end
    except UnicodeDecodeError as exc:
        raise WireError("string is not valid UTF-8") from exc


def _pack_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for the wire")
    return _U16.pack(len(raw)) + raw


# -- frame level -------------------------------------------------------------

def _check_body(kind, version, dim, body):
    """Validate body length/structure against the header; raise typed errors."""
    if kind in VECTOR_KINDS:
        _, end = _scan_elements(version, body, 0, dim)
    elif kind == Kind.KEY_ISSUE:
        if len(body) < _KEY_FIXED.size:
            raise TruncatedFrame("KEY_ISSUE body shorter than its fixed part")
        flags = _KEY_FIXED.unpack_from(body)[3]
        if flags & ~FLAG_AGGREGATE:
            raise WireError(f"unknown KEY_ISSUE flags {flags:#x}")
        count = 1 + dim + (dim if flags & FLAG_AGGREGATE else 0)
        _, end = _scan_elements(version, body, _KEY_FIXED.size, count)
    elif kind == Kind.JOIN_REQ:
        if dim:
            raise LengthMismatch("JOIN_REQ carries no vector")
        _, off = _string(body, 0)
        _, end = _string(body, off)
    else:
        if dim:
            raise LengthMismatch("LEAVE_NOTICE carries no vector")
        if len(body) < 1:
            raise TruncatedFrame("LEAVE_NOTICE without a reason byte")
        try:
            Reason(body[0])
        except ValueError as exc:
            raise WireError(f"unknown leave reason {body[0]}") from exc
        _, end = _string(body, 1)
    if end != len(body):
        raise LengthMismatch(f"body has {len(body) - end} trailing bytes")


def encode_frame(frame: Frame) -> bytes:
    if frame.version not in (VERSION, DEMO_VERSION):
        raise BadVersion(f"version {frame.version}")
    kind = Kind(frame.kind)
    _check_body(kind, frame.version, frame.dim, frame.body)
    return HEADER.pack(MAGIC, frame.version, kind, frame.epoch, frame.dim) + frame.body


def decode_frame(data: bytes) -> Frame:
    """Parse one frame; never reads past declared lengths."""
    data = bytes(data)
    if len(data) < HEADER_BYTES:
        raise TruncatedFrame(f"{len(data)} bytes is shorter than the header")
    magic, version, kind, epoch, dim = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(repr(magic))
    if version not in (VERSION, DEMO_VERSION):
        raise BadVersion(f"version {version}")
    try:
        kind = Kind(kind)
    except ValueError as exc:
        raise BadKind(f"kind {kind}") from exc
    body = data[HEADER_BYTES:]
    _check_body(kind, version, dim, body)
    return Frame(kind, epoch, dim, body, version)


def frame_bytes(dim: int) -> int:
    """Size of an encoded protocol-mode REKEY frame."""
    return HEADER_BYTES + ELEM_BYTES * dim


# -- typed payloads ----------------------------------------------------------

def _version_for(field):
    return DEMO_VERSION if field.demo else VERSION


def _field_check(frame, field):
    if frame.version != _version_for(field):
        raise BadVersion(f"version {frame.version} frame for {field!r}")


def _vector_frame(kind, epoch, vec: FVector) -> Frame:
    version = _version_for(vec.field)
    body = _encode_elements(version, vec.field, vec.tolist())
    return Frame(kind, epoch, vec.dim, body, version)


def _frame_vector(frame, field, kind) -> FVector:
    if frame.kind != kind:
        raise BadKind(f"expected {kind.name}, got {Kind(frame.kind).name}")
    _field_check(frame, field)
    raws, _ = _scan_elements(frame.version, frame.body, 0, frame.dim)
    return FVector.of(field, _decode_elements(frame.version, field, raws))


def rekey_to_frame(msg) -> Frame:
    return _vector_frame(Kind.REKEY, msg.epoch, msg.c)


def frame_to_rekey(frame: Frame, field):
    from .gkm import RekeyMessage

    return RekeyMessage(frame.epoch, _frame_vector(frame, field, Kind.REKEY))


def challenge_to_frame(ch) -> Frame:
    return _vector_frame(Kind.AUTH_CH, ch.epoch, ch.payload)


def frame_to_challenge(frame: Frame, field):
    from .auth import AuthChallenge

    return AuthChallenge(_frame_vector(frame, field, Kind.AUTH_CH), frame.epoch)


def response_to_frame(resp) -> Frame:
    return _vector_frame(Kind.AUTH_RESP, resp.epoch, resp.payload)


def frame_to_response(frame: Frame, field):
    from .auth import AuthResponse

    return AuthResponse(_frame_vector(frame, field, Kind.AUTH_RESP), frame.epoch)


def key_issue_frame(key) -> Frame:
    """KEY_ISSUE for the unicast channel. Confidential."""
    f = key.field
    version = _version_for(f)
    flags = FLAG_AGGREGATE if key.aggregate is not None else 0
    body = _KEY_FIXED.pack(f.p, key.slot, key.generation, flags)
    values = [key.norm_inv] + key.v.tolist()
    if key.aggregate is not None:
        values += key.aggregate.tolist()
    body += _encode_elements(version, f, values)
    return Frame(Kind.KEY_ISSUE, key.epoch_issued, key.v.dim, body, version)


def frame_to_key(frame: Frame, member_id: str):
    from .gkm import MemberKey

    if frame.kind != Kind.KEY_ISSUE:
        raise BadKind(f"expected KEY_ISSUE, got {Kind(frame.kind).name}")
    p, slot, generation, flags = _KEY_FIXED.unpack_from(frame.body)
    if frame.version == DEMO_VERSION:
        field = INTEGERS
    else:
        try:
            field = PrimeField(p, strict=p >= PROTOCOL_MIN_PRIME)
        except ValueError as exc:
            raise WireError(f"KEY_ISSUE names an invalid modulus {p}") from exc
    count = 1 + frame.dim + (frame.dim if flags & FLAG_AGGREGATE else 0)
    raws, _ = _scan_elements(frame.version, frame.body, _KEY_FIXED.size, count)
    values = _decode_elements(frame.version, field, raws)
    norm_inv = values[0]
    v = FVector.of(field, values[1:1 + frame.dim])
    agg = FVector.of(field, values[1 + frame.dim:]) if flags & FLAG_AGGREGATE else None
    try:
        return MemberKey(member_id, slot, v, norm_inv, frame.epoch, generation, agg)
    except IsotropicKey as exc:
        raise WireError("KEY_ISSUE norm_inv does not invert <v,v>") from exc


def join_request_frame(member_id: str, credential: str) -> Frame:
    return Frame(Kind.JOIN_REQ, 0, 0, _pack_string(member_id) + _pack_string(credential))


def parse_join_request(frame: Frame):
    if frame.kind != Kind.JOIN_REQ:
        raise BadKind(f"expected JOIN_REQ, got {Kind(frame.kind).name}")
    member_id, off = _string(frame.body, 0)
    credential, _ = _string(frame.body, off)
    return member_id, credential


def leave_notice_frame(member_id: str, reason: Reason = Reason.VOLUNTARY, epoch: int = 0) -> Frame:
    return Frame(Kind.LEAVE_NOTICE, epoch, 0, bytes([Reason(reason)]) + _pack_string(member_id))


def parse_leave_notice(frame: Frame):
    """Return (reason, member_id)."""
    if frame.kind != Kind.LEAVE_NOTICE:
        raise BadKind(f"expected LEAVE_NOTICE, got {Kind(frame.kind).name}")
    member_id, _ = _string(frame.body, 1)
    return Reason(frame.body[0]), member_id


# -- streams and capture files -----------------------------------------------

def pack_frame(frame: Frame) -> bytes:
    """Length-prefixed encoding used by TCP streams and capture files."""
    raw = encode_frame(frame)
    return _LEN.pack(len(raw)) + raw


def pack_stream(frames) -> bytes:
    return b"".join(pack_frame(f) for f in frames)


def unpack_stream(data: bytes) -> list:
    frames = []
    offset = 0
    while offset < len(data):
        if offset + _LEN.size > len(data):
            raise CorruptCapture(f"dangling length prefix at offset {offset}")
        (n,) = _LEN.unpack_from(data, offset)
        offset += _LEN.size
        if offset + n > len(data):
            raise CorruptCapture(f"frame at offset {offset} runs past the end")
        try:
            frames.append(decode_frame(data[offset:offset + n]))
        except WireError as exc:
            raise CorruptCapture(f"bad frame at offset {offset}: {exc}") from exc
        offset += n
    return frames


def capture(path, frames):
    """Append frames to a capture file (single writer)."""
    with open(path, "ab") as fh:
        for frame in frames:
            fh.write(pack_frame(frame))


def replay(path) -> list:
    return unpack_stream(Path(path).read_bytes())


# -- message-length estimators -----------------------------------------------

SCHEMES = ("orthogonal", "euclides", "secure_lock")


@dataclass(frozen=True)
class CostModel:
    """Inputs to the rekey-length estimate.

    ``modulus_bits`` is the size of each per-user integer for the
    CRT/inverse-based baselines (Euclides primes, Secure Lock moduli).
    """

    n: int
    elem_bits: int = 64
    scheme: str = "orthogonal"
    modulus_bits: int = 1024

    def __post_init__(self):
        if self.n < 1 or self.elem_bits < 1 or self.modulus_bits < 1:
            raise ValueError("n, elem_bits and modulus_bits must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


def rekey_length_bytes(model: CostModel, *, include_header: bool = False) -> int:
    """Bytes in one rekey broadcast for the chosen scheme.

    Orthogonal: n elements of C bits. The baselines broadcast one integer
    of the order of the product of all per-user moduli.
    """
    if model.scheme == "orthogonal":
        size = math.ceil(model.n * model.elem_bits / 8)
        return size + HEADER_BYTES if include_header else size
    return math.ceil(model.n * model.modulus_bits / 8)
