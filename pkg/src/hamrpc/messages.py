"""Active-message wire envelope and the dispatch step.

Wire frame (bit-exact): bytes 0-7 handler key (u64 LE), bytes 8-15 payload
length (u64 LE), bytes 16.. payload. The explicit length makes frames
self-delimiting over stream transports.
"""

from __future__ import annotations

import logging
import queue
import struct
import threading
from dataclasses import dataclass
from typing import Callable

from .errors import (
    FrameTooLarge,
    TrailingGarbage,
    TruncatedMessage,
    UnknownHandlerKey,
)
from .registry import Registry

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<QQ")
HEADER_SIZE = HEADER.size  # 16 bytes

#: Default cap on payload bytes; bounds memory under malformed input.
DEFAULT_MAX_PAYLOAD = 64 * 1024 * 1024

_U64_MAX = 2**64 - 1


def encode(key: int, payload: bytes) -> bytes:
    """Build a frame: 16-byte header followed by the payload."""
    if not 0 <= key <= _U64_MAX:
        raise ValueError(f"handler key {key} outside u64 range")
    return HEADER.pack(key, len(payload)) + bytes(payload)


def decode(buffer: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[int, bytes]:
    """Split a frame into (handler key, payload).

    Raises TruncatedMessage / TrailingGarbage when the buffer length does
    not match the declared payload length, FrameTooLarge beyond the cap.
    """
    if len(buffer) < HEADER_SIZE:
        raise TruncatedMessage(f"frame of {len(buffer)} bytes, need >= {HEADER_SIZE}")
    key, payload_len = HEADER.unpack_from(buffer)
    if payload_len > max_payload:
        raise FrameTooLarge(f"declared payload {payload_len} exceeds cap {max_payload}")
    total = HEADER_SIZE + payload_len
    if len(buffer) < total:
        raise TruncatedMessage(
            f"payload truncated: declared {payload_len}, got {len(buffer) - HEADER_SIZE}"
        )
    if len(buffer) > total:
        raise TrailingGarbage(f"{len(buffer) - total} trailing bytes after payload")
    return key, bytes(buffer[HEADER_SIZE:])


@dataclass(frozen=True)
class ActiveMessage:
    """Wire envelope: globally valid handler key plus payload bytes."""

    handler_key: int
    payload: bytes

    def encode(self) -> bytes:
        return encode(self.handler_key, self.payload)

    @classmethod
    def decode(cls, buffer: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> "ActiveMessage":
        key, payload = decode(buffer, max_payload)
        return cls(key, payload)


class ExecutionPolicy:
    """How a dispatched handler runs relative to the receiving context."""

    def execute(self, sender: int, task: Callable[[], None]) -> None:
        raise NotImplementedError

    def drain(self) -> None:
        """Block until all accepted work has finished."""

    def close(self, drain: bool = True) -> None:
        """Stop accepting work; idempotent."""


class DirectPolicy(ExecutionPolicy):
    """Execute the handler inline in the receiving context."""

    def execute(self, sender: int, task: Callable[[], None]) -> None:
        task()


_STOP = object()


class QueuedPolicy(ExecutionPolicy):
    """Enqueue handlers for a fixed worker pool.

    Each worker owns one FIFO queue and messages are routed by sender id,
    so all messages from one sender land on the same worker and per-sender
    order is preserved. Global order across senders is unconstrained.
    """

    def __init__(self, workers: int = 2, capacity: int = 1024) -> None:
        if workers < 1:
            raise ValueError("need at least one worker")
        self._queues: list[queue.Queue] = [
            queue.Queue(maxsize=capacity) for _ in range(workers)
        ]
        self._threads = [
            threading.Thread(
                target=self._run, args=(q,), name=f"ham-worker-{i}", daemon=True
            )
            for i, q in enumerate(self._queues)
        ]
        self._closed = False
        for t in self._threads:
            t.start()

    @property
    def workers(self) -> int:
        return len(self._queues)

    def _run(self, q: queue.Queue) -> None:
        while True:
            task = q.get()
            try:
                if task is _STOP:
                    return
                task()
            except Exception:
                logger.exception("queued handler raised")
            finally:
                q.task_done()

    def execute(self, sender: int, task: Callable[[], None]) -> None:
        if self._closed:
            raise RuntimeError("policy is closed")
        self._queues[sender % len(self._queues)].put(task)

    def drain(self) -> None:
        for q in self._queues:
            q.join()

    def close(self, drain: bool = True) -> None:
        if self._closed:
            return
        if drain:
            self.drain()
        self._closed = True
        for q in self._queues:
            q.put(_STOP)
        for t in self._threads:
            t.join()


def policy_from_string(spec: str) -> ExecutionPolicy:
    """Parse a policy spec: "direct" or "queued:N" (N workers)."""
    if spec == "direct":
        return DirectPolicy()
    if spec.startswith("queued"):
        _, _, n = spec.partition(":")
        return QueuedPolicy(workers=int(n) if n else 2)
    raise ValueError(f"unknown policy spec {spec!r}")


def dispatch(
    registry: Registry,
    msg: ActiveMessage,
    ctx: object,
    policy: ExecutionPolicy | None = None,
) -> None:
    """Resolve the message's key and run its handler under the policy.

    Direct mode invokes the handler before returning; Queued mode enqueues
    it for a worker, preserving per-sender FIFO order.

    Raises UnknownHandlerKey for keys with no table entry: the peer's
    handler set disagrees with ours, which is fatal protocol corruption.
    """
    count = registry.handler_count
    if not 0 <= msg.handler_key < count:
        raise UnknownHandlerKey(
            f"unknown handler key {msg.handler_key} (handler count {count})"
        )
    handler = registry.handler_of(msg.handler_key)
    sender = getattr(ctx, "sender", 0)
    (policy or _DIRECT).execute(sender, lambda: handler(ctx, msg.payload))


_DIRECT = DirectPolicy()
