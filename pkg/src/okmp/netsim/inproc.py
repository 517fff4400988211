"""Deterministic in-process transport.

Frames still go through the byte codec, so the bus exercises the same
encode/decode path as TCP. Time is logical: ``tick`` closes a batch window.
"""

from ..wire import decode_frame, encode_frame
from .node import ClientNode, ServerNode


class InProcessBus:
    def __init__(self, server: ServerNode):
        self.server = server
        self.clients = {}
        self.wire_log = []
        self._next = 0

    def attach(self, client: ClientNode):
        self._next += 1
        conn = self._next
        self.clients[conn] = client
        self.server.connect(conn)
        return conn

    def detach(self, conn):
        self.clients.pop(conn, None)
        self.deliver(self.server.disconnect(conn))

    def deliver(self, outbox):
        for conn, frame in outbox.frames:
            client = self.clients.get(conn)
            if client is None:
                continue
            raw = encode_frame(frame)
            self.wire_log.append((conn, raw))
            client.on_frame(decode_frame(raw))
        for conn in outbox.close:
            self.clients.pop(conn, None)

    def send(self, conn, frame):
        if conn not in self.clients:
            raise ConnectionError(f"connection {conn} is closed")
        self.deliver(self.server.handle(conn, decode_frame(encode_frame(frame))))

    def tick(self):
        """Close the current batch window."""
        self.deliver(self.server.flush())

    def rekey(self):
        self.deliver(self.server.rekey())

    def rotate(self):
        self.deliver(self.server.rotate())


class BusClient(ClientNode):
    """A client bound to one bus connection."""

    def __init__(self, bus: InProcessBus, member_id: str):
        super().__init__(member_id)
        self.bus = bus
        self.conn = bus.attach(self)

    def login(self, credential: str) -> "BusClient":
        self.bus.send(self.conn, self.join_frame(credential))
        self.raise_refusal()
        return self

    def leave(self):
        self.bus.send(self.conn, self.leave_frame())

    def disconnect(self):
        self.bus.detach(self.conn)
        self.closed = True
        self.authorized = False
