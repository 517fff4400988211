"""TCP transport: 4-byte little-endian length prefix per frame.

The server runs an asyncio loop in a background thread. Connection
handlers, the batch-window timer and operator commands all execute on
that loop, which serializes every mutation of the group.
"""

import asyncio
import itertools
import logging
import socket
import struct
import threading

from ..errors import BindFailure, WireError
from ..wire import Reason, decode_frame, leave_notice_frame, pack_frame
from .node import ClientNode, Outbox, ServerNode

log = logging.getLogger(__name__)

_LEN = struct.Struct("<I")
MAX_FRAME = 1 << 26


class TcpServer:
    """Running server handle. ``live`` starts the wall-clock batch window."""

    def __init__(self, node: ServerNode, host: str = "127.0.0.1", port: int = 0, *,
                 window_ms: int = 250, live: bool = True):
        self.node = node
        self.window = window_ms / 1000
        self.live = live
        self._writers = {}
        self._ids = itertools.count(1)
        self._loop = asyncio.new_event_loop()
        self._ready = threading.Event()
        self._error = None
        self._server = None
        self._timer = None
        self._thread = threading.Thread(target=self._run, args=(host, port),
                                        name="okmp-server", daemon=True)
        self._thread.start()
        self._ready.wait()
        if self._error is not None:
            raise BindFailure(f"cannot listen on {host}:{port}: {self._error}") from self._error

    def _run(self, host, port):
        asyncio.set_event_loop(self._loop)
        try:
            self._server = self._loop.run_until_complete(
                asyncio.start_server(self._serve_conn, host, port))
        except OSError as exc:
            self._error = exc
            self._ready.set()
            return
        if self.live:
            self._timer = self._loop.create_task(self._window_timer())
        self._ready.set()
        self._loop.run_forever()
        self._loop.close()

    @property
    def address(self):
        return self._server.sockets[0].getsockname()[:2]

    # -- loop-side ----------------------------------------------------------

    def _dispatch(self, outbox: Outbox):
        for conn, frame in outbox.frames:
            writer = self._writers.get(conn)
            if writer is not None and not writer.is_closing():
                writer.write(pack_frame(frame))
        for conn in outbox.close:
            writer = self._writers.pop(conn, None)
            if writer is not None:
                writer.close()

    async def _serve_conn(self, reader, writer):
        conn = next(self._ids)
        self._writers[conn] = writer
        self.node.connect(conn)
        try:
            while conn in self._writers:
                (n,) = _LEN.unpack(await reader.readexactly(_LEN.size))
                if n > MAX_FRAME:
                    raise WireError(f"frame of {n} bytes exceeds limit")
                frame = decode_frame(await reader.readexactly(n))
                self._dispatch(self.node.handle(conn, frame))
                await writer.drain()
        except WireError as exc:
            log.info("closing %s: %s", conn, exc)
            out = Outbox()
            out.send(conn, leave_notice_frame("", Reason.BAD_REQUEST, self.node.group.epoch))
            out.close.add(conn)
            self._dispatch(out)
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        finally:
            self._writers.pop(conn, None)
            self._dispatch(self.node.disconnect(conn))
            writer.close()

    async def _window_timer(self):
        while True:
            await asyncio.sleep(self.window)
            self._dispatch(self.node.flush())

    # -- operator commands (any thread) -------------------------------------

    def _call(self, op, timeout=30.0):
        async def run():
            result = op()
            if isinstance(result, Outbox):
                self._dispatch(result)
            return result

        return asyncio.run_coroutine_threadsafe(run(), self._loop).result(timeout)

    def flush(self):
        return self._call(self.node.flush)

    def rekey(self):
        return self._call(self.node.rekey)

    def rotate(self):
        return self._call(self.node.rotate)

    def query(self, fn):
        """Run ``fn(node)`` on the server loop and return its result."""
        return self._call(lambda: fn(self.node))

    def close(self):
        if not self._loop.is_running():
            return

        async def stop():
            if self._timer is not None:
                self._timer.cancel()
            self._server.close()
            for writer in list(self._writers.values()):
                writer.close()
            self._writers.clear()
            await self._server.wait_closed()

        try:
            asyncio.run_coroutine_threadsafe(stop(), self._loop).result(5)
        finally:
            self._loop.call_soon_threadsafe(self._loop.stop)
            self._thread.join(5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class TcpClient(ClientNode):
    """A client over a socket; a reader thread feeds the state machine."""

    def __init__(self, host: str, port: int, member_id: str, timeout: float = 5.0):
        super().__init__(member_id)
        self.timeout = timeout
        self.error = None
        self._cv = threading.Condition()
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._sock.settimeout(None)
        self._thread = threading.Thread(target=self._read_loop, name=f"okmp-{member_id}",
                                        daemon=True)
        self._thread.start()

    def _recv_exact(self, n):
        buf = bytearray()
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("server closed the connection")
            buf += chunk
        return bytes(buf)

    def _read_loop(self):
        try:
            while True:
                (n,) = _LEN.unpack(self._recv_exact(_LEN.size))
                frame = decode_frame(self._recv_exact(n))
                with self._cv:
                    try:
                        self.on_frame(frame)
                    except Exception as exc:  # recorded for the caller; keep reading
                        self.error = exc
                    self._cv.notify_all()
        except (ConnectionError, OSError, WireError):
            pass
        with self._cv:
            self.closed = True
            self._cv.notify_all()

    def wait_for(self, predicate, timeout=None):
        with self._cv:
            if not self._cv.wait_for(predicate, timeout or self.timeout):
                raise TimeoutError(f"{self.member_id}: timed out waiting for the server")

    def login(self, credential: str) -> "TcpClient":
        with self._cv:
            self.refusal = None
        self._sock.sendall(pack_frame(self.join_frame(credential)))
        self.wait_for(lambda: self.authorized or self.refusal is not None or self.closed)
        self.raise_refusal()
        if not self.authorized:
            raise ConnectionError(f"{self.member_id}: connection closed during login")
        return self

    def leave(self):
        self._sock.sendall(pack_frame(self.leave_frame()))
        self.wait_for(lambda: not self.authorized or self.closed)

    def wait_epoch(self, epoch: int, timeout=None):
        self.wait_for(lambda: self.epoch_seen >= epoch, timeout)

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self._thread.join(self.timeout)
        self.authorized = False
