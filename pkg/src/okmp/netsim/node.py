"""Transport-agnostic server and client state machines.

The server never touches sockets. ``ServerNode.handle`` and friends
return an outbox of ``(conn, Frame)`` pairs plus a set of connections to
close; a transport delivers them in order. Every mutation of the group
goes through these methods, so a transport only has to call them from
one thread at a time.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field as dc_field

from ..errors import (AuthFailed, BadConfig, ChurnClosed, DuplicateMember, GroupFull, OkmpError, StaleEpoch,
                      WireError)
from ..ffield import PrimeField
from ..gkm import decode_with, init_group
from ..rand import from_env
from ..wire import (Frame, Kind, Reason, frame_to_key, frame_to_rekey, join_request_frame,
                    key_issue_frame, leave_notice_frame, parse_join_request,
                    parse_leave_notice, rekey_to_frame)
from .config import ServerConfig, check_credential

log = logging.getLogger(__name__)

REFUSALS = {
    Reason.AUTH_FAILED: AuthFailed,
    Reason.GROUP_FULL: GroupFull,
    Reason.DUPLICATE: DuplicateMember,
    Reason.CHURN: ChurnClosed,
}


@dataclass
class Outbox:
    frames: list = dc_field(default_factory=list)
    close: set = dc_field(default_factory=set)

    def send(self, conn, frame):
        self.frames.append((conn, frame))

    def extend(self, other: "Outbox"):
        self.frames.extend(other.frames)
        self.close |= other.close
        return self


@dataclass
class Session:
    member_id: str = None
    holder: str = None


def server_rng(config: ServerConfig):
    """OKMP_SEED pins randomness; protocol mode without a seed uses the OS source."""
    rng = from_env()
    if config.strict and not rng.secure:
        # a pinned seed is for reproducible simulation only
        raise BadConfig("OKMP_SEED is incompatible with protocol mode; set mode = test")
    return rng


class ServerNode:
    def __init__(self, config: ServerConfig, rng=None):
        self.config = config
        self.field = PrimeField(config.prime, strict=config.strict)
        self.rng = rng if rng is not None else server_rng(config)
        self.group = init_group(self.field, config.capacity, config.dim, self.rng,
                                auth_enabled=config.auth_enabled)
        self.roster = dict(config.roster)
        self.sessions = {}
        self.pending = []
        self.churn = Counter()
        self.broadcasts = []
        self._seq = 0

    # -- connection lifecycle ----------------------------------------------

    @property
    def listeners(self):
        return list(self.sessions)

    def connect(self, conn):
        self.sessions[conn] = Session()

    def disconnect(self, conn) -> Outbox:
        """Drop a connection; a bound member becomes a pending departure."""
        session = self.sessions.pop(conn, None)
        if session is not None and session.holder is not None:
            self.pending.append(session.holder)
        return Outbox()

    def active_members(self) -> dict:
        return {s.member_id: conn for conn, s in self.sessions.items() if s.holder is not None}

    # -- requests ----------------------------------------------------------

    def handle(self, conn, frame: Frame) -> Outbox:
        if conn not in self.sessions:
            self.connect(conn)
        try:
            if frame.kind == Kind.JOIN_REQ:
                return self._on_join(conn, frame)
            if frame.kind == Kind.LEAVE_NOTICE:
                return self._on_leave(conn, frame)
            raise WireError(f"server does not accept {Kind(frame.kind).name}")
        except WireError as exc:
            log.info("bad request on %s: %s", conn, exc)
            out = Outbox()
            out.send(conn, leave_notice_frame("", Reason.BAD_REQUEST, self.group.epoch))
            return out

    def _refuse(self, conn, member_id, reason, close=False) -> Outbox:
        out = Outbox()
        out.send(conn, leave_notice_frame(member_id, reason, self.group.epoch))
        if close:
            out.close.add(conn)
            out.extend(self.disconnect(conn))
        return out

    def _on_join(self, conn, frame) -> Outbox:
        member_id, credential = parse_join_request(frame)
        stored = self.roster.get(member_id)
        if stored is None or not check_credential(stored, credential):
            return self._refuse(conn, member_id, Reason.AUTH_FAILED)
        if self.churn[member_id] > self.config.churn_threshold:
            return self._refuse(conn, member_id, Reason.CHURN, close=True)
        session = self.sessions[conn]
        if session.holder is not None or member_id in self.active_members():
            return self._refuse(conn, member_id, Reason.DUPLICATE)
        if self.group.is_full():
            return self._refuse(conn, member_id, Reason.GROUP_FULL)
        self._seq += 1
        holder = f"{member_id}#{self._seq}"
        key, msg = self.group.join(holder)
        session.member_id, session.holder = member_id, holder
        out = Outbox()
        out.send(conn, key_issue_frame(key))
        return out.extend(self._broadcast(msg))

    def _on_leave(self, conn, frame) -> Outbox:
        _, member_id = parse_leave_notice(frame)
        session = self.sessions[conn]
        if session.holder is None:
            return self._refuse(conn, member_id, Reason.BAD_REQUEST)
        # the slot stays bound until the window closes
        self.pending.append(session.holder)
        self.churn[session.member_id] += 1
        out = Outbox()
        out.send(conn, leave_notice_frame(session.member_id, Reason.VOLUNTARY, self.group.epoch))
        session.member_id = session.holder = None
        return out

    # -- server-driven operations -------------------------------------------

    def _broadcast(self, msg) -> Outbox:
        self.broadcasts.append(msg)
        out = Outbox()
        frame = rekey_to_frame(msg)
        for conn in self.sessions:
            out.send(conn, frame)
        return out

    def _reissue(self) -> Outbox:
        out = Outbox()
        for conn, session in self.sessions.items():
            if session.holder is not None:
                out.send(conn, key_issue_frame(self.group.issue_key(session.holder)))
        return out

    def flush(self) -> Outbox:
        """Close the batch window: at most one broadcast for all pending departures."""
        self.churn.clear()
        if not self.pending:
            return Outbox()
        departures, self.pending = self.pending, []
        msg = self.group.batch_refresh(departures)
        out = self._reissue() if self.group.auth_enabled else Outbox()
        return out.extend(self._broadcast(msg))

    def rekey(self) -> Outbox:
        return self._broadcast(self.group.build_rekey())

    def rotate(self) -> Outbox:
        msg = self.group.rotate_all()
        return self._reissue().extend(self._broadcast(msg))

    @property
    def current_secret(self):
        return self.group.current_secret


class ClientNode:
    """One member's view: its key, the last secret it recovered, the last epoch seen."""

    def __init__(self, member_id: str):
        self.member_id = member_id
        self.key = None
        self.last_secret = None
        self.epoch_seen = 0
        self.authorized = False
        self.refusal = None
        self.closed = False
        self.revoked_keys = []

    def join_frame(self, credential: str) -> Frame:
        return join_request_frame(self.member_id, credential)

    def leave_frame(self) -> Frame:
        return leave_notice_frame(self.member_id, Reason.VOLUNTARY, self.epoch_seen)

    def on_frame(self, frame: Frame):
        if frame.kind == Kind.KEY_ISSUE:
            if self.key is not None and not self.authorized:
                self.revoked_keys.append(self.key)
            self.key = frame_to_key(frame, self.member_id)
            self.authorized = True
            self.refusal = None
        elif frame.kind == Kind.REKEY:
            self.epoch_seen = max(self.epoch_seen, frame.epoch)
            if self.key is not None:
                msg = frame_to_rekey(frame, self.key.field)
                if msg.epoch < self.key.epoch_issued:
                    raise StaleEpoch(f"broadcast {msg.epoch} predates key {self.key.epoch_issued}")
                # a departed client keeps decoding with its stale key
                self.last_secret = decode_with(self.key, msg.c)
        elif frame.kind == Kind.LEAVE_NOTICE:
            reason, _ = parse_leave_notice(frame)
            if reason == Reason.VOLUNTARY:
                self.authorized = False
            else:
                self.refusal = reason
                if reason == Reason.CHURN:
                    self.authorized = False
                    self.closed = True

    def raise_refusal(self):
        if self.refusal is None:
            return
        exc = REFUSALS.get(self.refusal, OkmpError)
        raise exc(f"{self.member_id}: server refused with {self.refusal.name}")


def agreement_report(server: ServerNode, clients) -> dict:
    """member_id -> True when the client's view matches its status.

    Authorized clients must hold the current secret; departed ones must not.
    """
    s = server.current_secret
    return {c.member_id: (c.last_secret == s) == c.authorized for c in clients
            if c.key is not None}
