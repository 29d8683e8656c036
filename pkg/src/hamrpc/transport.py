"""Byte-frame transports between nodes: in-process loopback and TCP.

Both backends deliver whole frames reliably and in order per (sender,
receiver) pair. The loopback backend models multiple nodes inside one
process through FIFO queues and exists for deterministic tests; by
contract it is equivalent to TCP.

TCP wiring: every node listens on its configured endpoint; for each pair
the lower id dials the higher id's endpoint. Immediately after the socket
opens, the dialer sends its node id and registry digest (two u64 LE), the
acceptor answers with its own digest (u64 LE), and both sides verify.
After the handshake the stream is nothing but concatenated frames; the
frame header's payload length doubles as the stream delimiter.
"""

from __future__ import annotations

import logging
import os
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

from .errors import (
    ConnectFailed,
    DigestMismatch,
    FrameTooLarge,
    PeerGone,
    Shutdown,
)
from .messages import DEFAULT_MAX_PAYLOAD, HEADER, HEADER_SIZE

logger = logging.getLogger(__name__)

_HELLO = struct.Struct("<QQ")  # dialer node id, dialer digest
_DIGEST = struct.Struct("<Q")

ENV_NODE_ID = "HAM_NODE_ID"
ENV_PEERS = "HAM_PEERS"


@dataclass(frozen=True)
class PeerConfig:
    """This node's id plus every node's endpoint address."""

    self_id: int
    peers: dict[int, str]

    def __post_init__(self) -> None:
        if self.self_id not in self.peers:
            raise ValueError(f"self id {self.self_id} missing from peer map")

    @classmethod
    def from_file(cls, path: str, self_id: int) -> "PeerConfig":
        """Parse lines of `<node_id> <host>:<port>`; '#' starts a comment."""
        peers: dict[int, str] = {}
        with open(path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                try:
                    node_str, addr = line.split()
                    node = int(node_str)
                    _split_addr(addr)
                except ValueError as e:
                    raise ValueError(f"{path}:{lineno}: bad peer line {raw!r}") from e
                if node in peers:
                    raise ValueError(f"{path}:{lineno}: duplicate node id {node}")
                peers[node] = addr
        return cls(self_id, peers)

    @classmethod
    def from_env(cls, environ=os.environ) -> "PeerConfig":
        """Read HAM_NODE_ID and HAM_PEERS (comma-separated id=host:port)."""
        self_id = int(environ[ENV_NODE_ID])
        peers: dict[int, str] = {}
        for item in environ[ENV_PEERS].split(","):
            node_str, _, addr = item.strip().partition("=")
            _split_addr(addr)
            peers[int(node_str)] = addr
        return cls(self_id, peers)


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port:
        raise ValueError(f"address {addr!r} is not host:port")
    return host, int(port)


def _check_frame(frame: bytes, max_payload: int) -> bytes:
    """Frames must carry a header whose length matches, or streams desync."""
    frame = bytes(frame)
    if len(frame) < HEADER_SIZE:
        raise ValueError(f"frame of {len(frame)} bytes lacks a {HEADER_SIZE}-byte header")
    _, payload_len = HEADER.unpack_from(frame)
    if payload_len != len(frame) - HEADER_SIZE:
        raise ValueError("frame length does not match its header")
    if payload_len > max_payload:
        raise FrameTooLarge(f"payload {payload_len} exceeds cap {max_payload}")
    return frame


class Transport:
    """Reliable, per-pair-ordered frame channels to every peer.

    send() is safe from any thread; recv() has exactly one consumer.
    """

    node_id: int

    def peer_ids(self) -> list[int]:
        raise NotImplementedError

    def send(self, to: int, frame: bytes) -> None:
        raise NotImplementedError

    def recv(self) -> tuple[int, bytes]:
        raise NotImplementedError

    def shutdown(self) -> None:
        raise NotImplementedError


_SHUTDOWN = (None, None)


class LoopbackHub:
    """Shared rendezvous for loopback nodes within one process."""

    def __init__(self, node_count: int, max_payload: int = DEFAULT_MAX_PAYLOAD) -> None:
        self._max_payload = max_payload
        self._inboxes = {nid: queue.Queue() for nid in range(node_count)}
        self._digests: dict[int, int] = {}
        self._closed: set[int] = set()
        self._lock = threading.Lock()

    def connect(self, node_id: int, registry_digest: int) -> "LoopbackTransport":
        with self._lock:
            if node_id not in self._inboxes:
                raise ConnectFailed(f"node {node_id} not part of this hub")
            if node_id in self._digests:
                raise ConnectFailed(f"node {node_id} already connected")
            for peer, digest in self._digests.items():
                if digest != registry_digest:
                    raise DigestMismatch(
                        f"node {peer} digest {digest:#018x} != ours {registry_digest:#018x}"
                    )
            self._digests[node_id] = registry_digest
        return LoopbackTransport(self, node_id)

    def _send(self, sender: int, to: int, frame: bytes) -> None:
        frame = _check_frame(frame, self._max_payload)
        with self._lock:
            if to not in self._inboxes or to in self._closed:
                raise PeerGone(f"node {to} is not reachable")
            if sender in self._closed:
                raise PeerGone(f"own transport (node {sender}) is shut down")
        self._inboxes[to].put((sender, frame))

    def _close(self, node_id: int) -> None:
        with self._lock:
            if node_id in self._closed:
                return
            self._closed.add(node_id)
        self._inboxes[node_id].put(_SHUTDOWN)


class LoopbackTransport(Transport):
    def __init__(self, hub: LoopbackHub, node_id: int) -> None:
        self._hub = hub
        self.node_id = node_id

    def peer_ids(self) -> list[int]:
        return [n for n in self._hub._inboxes if n != self.node_id]

    def send(self, to: int, frame: bytes) -> None:
        self._hub._send(self.node_id, to, frame)

    def recv(self) -> tuple[int, bytes]:
        if self.node_id in self._hub._closed:
            raise Shutdown(f"loopback node {self.node_id} shut down")
        item = self._hub._inboxes[self.node_id].get()
        if item is _SHUTDOWN:
            # leave the sentinel in place for any later recv
            self._hub._inboxes[self.node_id].put(_SHUTDOWN)
            raise Shutdown(f"loopback node {self.node_id} shut down")
        return item

    def shutdown(self) -> None:
        self._hub._close(self.node_id)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF or connection error."""
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except OSError:
            return None
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


class TcpTransport(Transport):
    """Full-mesh TCP backend; one reader thread per peer feeds recv()."""

    def __init__(
        self,
        node_id: int,
        conns: dict[int, socket.socket],
        max_payload: int = DEFAULT_MAX_PAYLOAD,
    ) -> None:
        self.node_id = node_id
        self._max_payload = max_payload
        self._conns = conns
        self._send_locks = {peer: threading.Lock() for peer in conns}
        self._inbox: queue.Queue = queue.Queue()
        self._dead: set[int] = set()
        self._closed = False
        self._lock = threading.Lock()
        self._readers = [
            threading.Thread(
                target=self._read_loop,
                args=(peer, sock),
                name=f"ham-read-{peer}",
                daemon=True,
            )
            for peer, sock in conns.items()
        ]
        for t in self._readers:
            t.start()

    def peer_ids(self) -> list[int]:
        return sorted(self._conns)

    def _read_loop(self, peer: int, sock: socket.socket) -> None:
        # buffered reads keep syscall count low for small frames
        stream = sock.makefile("rb", buffering=256 * 1024)
        try:
            while True:
                header = stream.read(HEADER_SIZE)
                if header is None or len(header) < HEADER_SIZE:
                    break
                _, payload_len = HEADER.unpack(header)
                if payload_len > self._max_payload:
                    logger.error(
                        "node %d sent oversize payload (%d bytes); dropping connection",
                        peer,
                        payload_len,
                    )
                    break
                payload = stream.read(payload_len)
                if payload is None or len(payload) < payload_len:
                    break
                self._inbox.put((peer, header + payload))
        except (OSError, ValueError):
            pass
        with self._lock:
            self._dead.add(peer)
        if not self._closed:
            logger.debug("connection to node %d closed", peer)

    def send(self, to: int, frame: bytes) -> None:
        frame = _check_frame(frame, self._max_payload)
        if to == self.node_id:
            with self._lock:
                if self._closed:
                    raise PeerGone("transport is shut down")
            self._inbox.put((to, frame))
            return
        if to not in self._conns:
            raise PeerGone(f"node {to} is not part of the mesh")
        with self._lock:
            if self._closed or to in self._dead:
                raise PeerGone(f"connection to node {to} is gone")
        try:
            with self._send_locks[to]:
                self._conns[to].sendall(frame)
        except OSError as e:
            with self._lock:
                self._dead.add(to)
            raise PeerGone(f"send to node {to} failed: {e}") from e

    def recv(self) -> tuple[int, bytes]:
        with self._lock:
            if self._closed:
                raise Shutdown("transport shut down")
        item = self._inbox.get()
        if item is _SHUTDOWN:
            self._inbox.put(_SHUTDOWN)
            raise Shutdown("transport shut down")
        return item

    def shutdown(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
        for sock in self._conns.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass
        self._inbox.put(_SHUTDOWN)
        for t in self._readers:
            t.join(timeout=2.0)


def connect_tcp(
    config: PeerConfig,
    registry_digest: int,
    connect_timeout: float = 10.0,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
) -> TcpTransport:
    """Establish the full mesh and exchange digests with every peer.

    Lower node ids dial; higher ids accept. Dials retry with linear
    backoff until the deadline. Raises DigestMismatch if any peer's
    handler set differs, ConnectFailed if a peer never shows up.
    """
    self_id = config.self_id
    deadline = time.monotonic() + connect_timeout
    host, port = _split_addr(config.peers[self_id])

    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        listener.bind((host, port))
        listener.listen(len(config.peers))
    except OSError as e:
        listener.close()
        raise ConnectFailed(f"cannot listen on {host}:{port}: {e}") from e

    to_dial = sorted(p for p in config.peers if p > self_id)
    to_accept = {p for p in config.peers if p < self_id}
    conns: dict[int, socket.socket] = {}
    conns_lock = threading.Lock()
    failures: list[Exception] = []

    def dial(peer: int) -> None:
        peer_host, peer_port = _split_addr(config.peers[peer])
        attempt = 0
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                failures.append(ConnectFailed(f"node {peer} unreachable before deadline"))
                return
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.settimeout(remaining)
            try:
                sock.connect((peer_host, peer_port))
            except OSError:
                sock.close()
                attempt += 1
                time.sleep(min(0.05 * attempt, max(0.0, deadline - time.monotonic())))
                continue
            try:
                sock.sendall(_HELLO.pack(self_id, registry_digest))
                raw = _recv_exact(sock, _DIGEST.size)
                if raw is None:
                    raise ConnectFailed(f"node {peer} closed during handshake")
                (peer_digest,) = _DIGEST.unpack(raw)
                if peer_digest != registry_digest:
                    raise DigestMismatch(
                        f"node {peer} digest {peer_digest:#018x} != ours {registry_digest:#018x}"
                    )
            except Exception as e:
                sock.close()
                failures.append(e if isinstance(e, (ConnectFailed, DigestMismatch))
                                else ConnectFailed(f"handshake with node {peer} failed: {e}"))
                return
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with conns_lock:
                conns[peer] = sock
            return

    dialers = [threading.Thread(target=dial, args=(p,), daemon=True) for p in to_dial]
    for t in dialers:
        t.start()

    pending = set(to_accept)
    try:
        while pending:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                failures.append(ConnectFailed(f"nodes {sorted(pending)} never dialed in"))
                break
            listener.settimeout(remaining)
            try:
                sock, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            sock.settimeout(max(0.1, deadline - time.monotonic()))
            raw = _recv_exact(sock, _HELLO.size)
            if raw is None:
                sock.close()
                continue
            peer, peer_digest = _HELLO.unpack(raw)
            try:
                sock.sendall(_DIGEST.pack(registry_digest))
            except OSError:
                sock.close()
                continue
            if peer not in pending:
                logger.warning("unexpected dial from node %d; dropping", peer)
                sock.close()
                continue
            if peer_digest != registry_digest:
                failures.append(DigestMismatch(
                    f"node {peer} digest {peer_digest:#018x} != ours {registry_digest:#018x}"
                ))
                sock.close()
                break
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conns[peer] = sock
            pending.discard(peer)
    finally:
        listener.close()

    for t in dialers:
        t.join()

    if failures or pending:
        for sock in conns.values():
            sock.close()
        for e in failures:
            if isinstance(e, DigestMismatch):
                raise e
        if failures:
            raise failures[0]
        raise ConnectFailed(f"nodes {sorted(pending)} never dialed in")

    return TcpTransport(self_id, conns, max_payload)
