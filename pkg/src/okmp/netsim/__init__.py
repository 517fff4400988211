"""Server and client harness over an in-process bus or TCP."""

from .config import ServerConfig, check_credential, hash_credential
from .inproc import BusClient, InProcessBus
from .node import ClientNode, Outbox, ServerNode, agreement_report
from .tcp import TcpClient, TcpServer


def serve(config: ServerConfig, *, transport: str = "tcp", live: bool = True, rng=None):
    """Start a server; returns a TcpServer or an InProcessBus."""
    node = ServerNode(config, rng=rng)
    if transport == "bus":
        return InProcessBus(node)
    if transport != "tcp":
        raise ValueError(f"unknown transport {transport!r}")
    host, port = config.address
    return TcpServer(node, host, port, window_ms=config.batch_window_ms, live=live)


def batch_window_flush(server):
    """Close the batch window now; returns the broadcast, or None for an empty window."""
    node = server.node if isinstance(server, TcpServer) else getattr(server, "server", server)
    before = len(node.broadcasts)
    if isinstance(server, TcpServer):
        server.flush()
    elif isinstance(server, InProcessBus):
        server.tick()
    else:
        server.flush()
    return node.broadcasts[-1] if len(node.broadcasts) > before else None


def client_login(endpoint, member_id: str, credential: str, timeout: float = 5.0):
    """Connect and authenticate; returns a client holding its key.

    ``endpoint`` is an InProcessBus, a TcpServer, or a (host, port) pair.
    """
    if isinstance(endpoint, InProcessBus):
        return BusClient(endpoint, member_id).login(credential)
    host, port = endpoint.address if isinstance(endpoint, TcpServer) else endpoint
    client = TcpClient(host, port, member_id, timeout=timeout)
    try:
        return client.login(credential)
    except BaseException:
        client.close()
        raise


__all__ = [
    "BusClient", "ClientNode", "InProcessBus", "Outbox", "ServerConfig", "ServerNode",
    "TcpClient", "TcpServer", "agreement_report", "batch_window_flush", "check_credential",
    "client_login", "hash_credential", "serve",
]
