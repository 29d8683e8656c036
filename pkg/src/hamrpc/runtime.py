"""Offload layer: async calls with futures, remote buffers, receive loop.

Every node runs one receive loop that turns incoming frames into handler
invocations under the configured execution policy. Offload requests are
plain active messages; results come back through the internal
"__ham.result" handler and complete the matching future via the pending
table.

Internal handlers (result, terminate, alloc, free, put, get) register
through the ordinary registry during the collecting phase, so they take
part in key sorting exactly like user functions and end up with identical
keys in every process. install_internal_handlers() must run before
Registry.init().

Remote buffers live in a per-runtime allocation table keyed by opaque
tokens; tokens are never reused, so stale handles are detected instead of
silently aliasing new memory.
"""

from __future__ import annotations

import logging
import os
import sys
import threading
from dataclasses import dataclass
from typing import Any

from . import context
from .codecs import BYTES, U64, VOID, RemoteBufferHandle
from .errors import (
    EXIT_PROTOCOL_ERROR,
    FrameTooLarge,
    HamError,
    InvalidToken,
    MalformedArguments,
    REMOTE_ERROR_TYPES,
    RemoteAllocationFailed,
    RemoteFailure,
    Shutdown,
    SizeMismatch,
    TimedOut,
    TrailingGarbage,
    TruncatedMessage,
    UnknownHandlerKey,
)
from .messages import (
    ActiveMessage,
    DEFAULT_MAX_PAYLOAD,
    DirectPolicy,
    ExecutionPolicy,
    decode,
    dispatch,
    encode,
)
from .registry import Registry
from .remote_function import (
    FunctionDescriptor,
    RESULT_HANDLER_NAME,
    RESULT_OK,
    _CALL_HEAD,
    _RESULT_HEAD,
    _register,
    build_result_payload,
    closure_to_message,
    make_closure,
    parse_error_body,
    parse_result_payload,
    Closure,
)

logger = logging.getLogger(__name__)

ENV_POLICY = "HAM_POLICY"
ENV_MAX_FRAME = "HAM_MAX_FRAME"

TERMINATE_HANDLER_NAME = "__ham.terminate"

current_runtime = context.current_runtime


def local_buffer(handle: RemoteBufferHandle) -> bytearray:
    """The backing storage of a handle owned by the executing node.

    Only meaningful inside an offloaded function running on handle.node.
    """
    rt = context.current_runtime()
    if handle.node != rt.node:
        raise InvalidToken(
            f"handle belongs to node {handle.node}, executing on node {rt.node}"
        )
    return rt._buffer_of(handle.token)


# Internal operations run through the generic function-call path; they
# resolve their runtime via the handler-activated context.

def _alloc_fn(count: int, elem_size: int) -> int:
    return context.current_runtime()._allocate_local(count, elem_size)


def _free_fn(token: int) -> None:
    context.current_runtime()._free_local(token)


def _put_fn(token: int, data: bytes) -> None:
    context.current_runtime()._put_local(token, data)


def _get_fn(token: int) -> bytes:
    return context.current_runtime()._get_local(token)


ALLOC_DESCRIPTOR = FunctionDescriptor("__ham.alloc", _alloc_fn, (U64, U64), U64)
FREE_DESCRIPTOR = FunctionDescriptor("__ham.free", _free_fn, (U64,), VOID)
PUT_DESCRIPTOR = FunctionDescriptor("__ham.put", _put_fn, (U64, BYTES), VOID)
GET_DESCRIPTOR = FunctionDescriptor("__ham.get", _get_fn, (U64,), BYTES)
TERMINATE_DESCRIPTOR = FunctionDescriptor(TERMINATE_HANDLER_NAME, None, (), VOID)


def _result_handler(ctx: Any, payload: bytes) -> None:
    request_id, status, body = parse_result_payload(payload)
    ctx.runtime._complete_result(request_id, status, body)


def _terminate_handler(ctx: Any, payload: bytes) -> None:
    if len(payload) < _CALL_HEAD.size:
        logger.warning("dropping terminate with short payload")
        return
    request_id, origin = _CALL_HEAD.unpack_from(payload)
    ctx.reply(origin, build_result_payload(request_id, b""))
    ctx.runtime._request_stop()


def install_internal_handlers(registry: Registry) -> None:
    """Register the library's reserved handlers; call before init()."""
    for d in (ALLOC_DESCRIPTOR, FREE_DESCRIPTOR, PUT_DESCRIPTOR, GET_DESCRIPTOR):
        _register(registry, d.name, d.fn, d.param_schema, d.result_codec, internal=True)
    registry.register(RESULT_HANDLER_NAME, _result_handler)
    registry.register(TERMINATE_HANDLER_NAME, _terminate_handler)


class OffloadFuture:
    """Completion slot for one offload request.

    Transitions Pending -> Ready or Pending -> Failed exactly once; get()
    afterwards always yields the same value. get(timeout) raises TimedOut
    without consuming the future.
    """

    def __init__(self, request_id: int, result_codec) -> None:
        self.request_id = request_id
        self._codec = result_codec
        self._event = threading.Event()
        self._lock = threading.Lock()
        self._body: bytes | None = None
        self._error: BaseException | None = None
        self._decoded = False
        self._value: Any = None

    def done(self) -> bool:
        return self._event.is_set()

    def _complete(self, body: bytes) -> None:
        with self._lock:
            if self._event.is_set():
                raise RuntimeError(f"request {self.request_id} completed twice")
            self._body = body
            self._event.set()

    def _fail(self, error: BaseException) -> None:
        with self._lock:
            if self._event.is_set():
                raise RuntimeError(f"request {self.request_id} completed twice")
            self._error = error
            self._event.set()

    def get(self, timeout: float | None = None) -> Any:
        if not self._event.wait(timeout):
            raise TimedOut(f"request {self.request_id} still pending after {timeout}s")
        with self._lock:
            if self._error is not None:
                raise self._error
            if not self._decoded:
                value, used = self._codec.decode(self._body, 0)
                if used != len(self._body):
                    raise MalformedArguments(
                        f"result for request {self.request_id} has "
                        f"{len(self._body) - used} trailing bytes"
                    )
                self._value = value
                self._decoded = True
            return self._value


class PendingTable:
    """request_id -> future; each id inserted once, removed on completion."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._slots: dict[int, OffloadFuture] = {}

    def add(self, future: OffloadFuture) -> None:
        with self._lock:
            if future.request_id in self._slots:
                raise RuntimeError(f"request id {future.request_id} already pending")
            self._slots[future.request_id] = future

    def pop(self, request_id: int) -> OffloadFuture | None:
        with self._lock:
            return self._slots.pop(request_id, None)

    def drain(self) -> list[OffloadFuture]:
        with self._lock:
            futures = list(self._slots.values())
            self._slots.clear()
            return futures

    def outstanding(self) -> list[int]:
        with self._lock:
            return sorted(self._slots)


@dataclass(frozen=True)
class AuditReport:
    """What the pending table looked like when the runtime stopped."""

    orphaned_futures: tuple[int, ...]
    unmatched_results: int

    @property
    def clean(self) -> bool:
        return not self.orphaned_futures and self.unmatched_results == 0


@dataclass
class HandlerContext:
    """What a handler sees: the local runtime and the frame's sender."""

    runtime: "Runtime"
    sender: int

    @property
    def node(self) -> int:
        return self.runtime.node

    def reply(self, origin: int, result_payload: bytes) -> None:
        frame = encode(self.runtime._result_key, result_payload)
        self.runtime._transport.send(origin, frame)


def _default_abort(exit_code: int) -> None:
    logging.shutdown()
    sys.stderr.flush()
    os._exit(exit_code)


# request id 0 is reserved for the self-addressed wake frame that nudges
# the receive loop out of recv() after a stop request.
_WAKE_REQUEST_ID = 0


class Runtime:
    """One node's offload runtime over an initialized registry + transport."""

    def __init__(
        self,
        registry: Registry,
        transport,
        policy: ExecutionPolicy | None = None,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
        abort=_default_abort,
    ) -> None:
        self._registry = registry
        self._transport = transport
        self._policy = policy or DirectPolicy()
        self._max_payload = max_payload
        self._abort = abort
        self.node = transport.node_id
        self._result_key = registry.key_of(RESULT_HANDLER_NAME)
        self._pending = PendingTable()
        self._id_lock = threading.Lock()
        self._next_request_id = 1
        self._unmatched_results = 0
        self._alloc_lock = threading.Lock()
        self._allocations: dict[int, bytearray] = {}
        self._next_token = 1
        self._thread: threading.Thread | None = None
        self._stop_requested = threading.Event()
        self._terminated = threading.Event()
        self._finalized = False
        self._finalize_lock = threading.Lock()
        self._audit: AuditReport | None = None

    # --- lifecycle ---

    def start(self) -> None:
        """Spawn the receive loop thread."""
        if self._thread is not None:
            raise RuntimeError("runtime already started")
        self._thread = threading.Thread(
            target=self._receive_loop, name=f"ham-recv-{self.node}", daemon=True
        )
        self._thread.start()

    def run_receive_loop(self) -> None:
        """Run the receive loop on the calling thread until terminated."""
        if self._thread is not None:
            raise RuntimeError("receive loop already running")
        self._thread = threading.current_thread()
        self._receive_loop()

    def wait_terminated(self, timeout: float | None = None) -> bool:
        """Block until a terminate message has been fully processed."""
        return self._terminated.wait(timeout)

    def shutdown(self) -> None:
        """Stop the receive loop, drain queued work, audit; idempotent."""
        self._transport.shutdown()
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=5.0)
        self._finalize()

    def audit(self) -> AuditReport:
        """Pending-table audit; available once the runtime has stopped."""
        if self._audit is None:
            raise RuntimeError("runtime still running; audit happens at shutdown")
        return self._audit

    # --- offload API ---

    def _fresh_request_id(self) -> int:
        with self._id_lock:
            rid = self._next_request_id
            self._next_request_id += 1
            return rid

    def async_offload(self, target: int, closure: Closure) -> OffloadFuture:
        """Send a closure to the target; returns the result future.

        Self-offload goes through the full message path like any other
        target.
        """
        rid = self._fresh_request_id()
        future = OffloadFuture(rid, closure.descriptor.result_codec)
        msg = closure_to_message(self._registry, closure, rid, self.node)
        self._pending.add(future)
        try:
            self._transport.send(target, msg.encode())
        except Exception:
            self._pending.pop(rid)
            raise
        return future

    def sync_offload(self, target: int, closure: Closure) -> Any:
        return self.async_offload(target, closure).get()

    def call(self, target: int, descriptor: FunctionDescriptor, *args: Any) -> Any:
        """Convenience: make_closure + sync_offload."""
        return self.sync_offload(target, make_closure(descriptor, *args))

    # --- remote buffers ---

    def allocate(self, target: int, count: int, elem_size: int) -> RemoteBufferHandle:
        """Reserve count*elem_size bytes on the target under a fresh token."""
        token = self.sync_offload(
            target, make_closure(ALLOC_DESCRIPTOR, count, elem_size)
        )
        return RemoteBufferHandle(target, token, count, elem_size)

    def free(self, handle: RemoteBufferHandle) -> None:
        self.sync_offload(handle.node, make_closure(FREE_DESCRIPTOR, handle.token))

    def put(self, src: bytes, dst: RemoteBufferHandle) -> OffloadFuture:
        """Copy local bytes into the remote buffer; completes as void."""
        data = bytes(src)
        if len(data) != dst.nbytes:
            raise SizeMismatch(
                f"put of {len(data)} bytes into buffer of {dst.nbytes}"
            )
        return self.async_offload(
            dst.node, make_closure(PUT_DESCRIPTOR, dst.token, data)
        )

    def get(self, src: RemoteBufferHandle) -> bytes:
        """Fetch the remote buffer's current contents."""
        return self.sync_offload(src.node, make_closure(GET_DESCRIPTOR, src.token))

    # --- terminate ---

    def terminate(self, target: int, timeout: float | None = None) -> None:
        """Ask the target's receive loop to drain and exit; awaits the ack."""
        future = self.async_offload(target, make_closure(TERMINATE_DESCRIPTOR))
        future.get(timeout)

    # --- local allocation table (executed on the owning node) ---

    def _allocate_local(self, count: int, elem_size: int) -> int:
        try:
            buf = bytearray(count * elem_size)
        except (MemoryError, OverflowError) as e:
            raise RemoteAllocationFailed(f"{count} x {elem_size} bytes: {e}") from e
        with self._alloc_lock:
            token = self._next_token
            self._next_token += 1
            self._allocations[token] = buf
        return token

    def _buffer_of(self, token: int) -> bytearray:
        with self._alloc_lock:
            try:
                return self._allocations[token]
            except KeyError:
                raise InvalidToken(f"token {token} is not a live allocation") from None

    def _free_local(self, token: int) -> None:
        with self._alloc_lock:
            if self._allocations.pop(token, None) is None:
                raise InvalidToken(f"token {token} is not a live allocation")

    def _put_local(self, token: int, data: bytes) -> None:
        buf = self._buffer_of(token)
        if len(data) != len(buf):
            raise SizeMismatch(f"put of {len(data)} bytes into buffer of {len(buf)}")
        buf[:] = data

    def _get_local(self, token: int) -> bytes:
        return bytes(self._buffer_of(token))

    def live_allocation_count(self) -> int:
        with self._alloc_lock:
            return len(self._allocations)

    # --- result correlation ---

    def _complete_result(self, request_id: int, status: int, body: bytes) -> None:
        if request_id == _WAKE_REQUEST_ID:
            return
        future = self._pending.pop(request_id)
        if future is None:
            self._unmatched_results += 1
            logger.warning("result for unknown request id %d", request_id)
            return
        if status == RESULT_OK:
            future._complete(body)
            return
        type_name, message = parse_error_body(body)
        exc_type = REMOTE_ERROR_TYPES.get(type_name)
        if exc_type is not None:
            future._fail(exc_type(message))
        else:
            future._fail(RemoteFailure(f"{type_name}: {message}"))

    # --- receive loop ---

    def _request_stop(self) -> None:
        """Called by the terminate handler after it has sent its ack."""
        if self._stop_requested.is_set():
            return
        self._stop_requested.set()
        # Wake the loop if the handler ran on a worker thread while the
        # loop is blocked in recv(): a self-addressed no-op result.
        wake = _RESULT_HEAD.pack(_WAKE_REQUEST_ID, RESULT_OK)
        try:
            self._transport.send(self.node, encode(self._result_key, wake))
        except HamError:
            pass

    def _protocol_abort(self, reason: str) -> None:
        logger.error("protocol corruption: %s", reason)
        self._abort(EXIT_PROTOCOL_ERROR)

    def _receive_loop(self) -> None:
        try:
            while True:
                try:
                    sender, frame = self._transport.recv()
                except Shutdown:
                    break
                try:
                    key, payload = decode(frame, self._max_payload)
                    msg = ActiveMessage(key, payload)
                    ctx = HandlerContext(self, sender)
                    if key == self._result_key:
                        # results complete futures on the receive-loop
                        # context; queueing them behind a blocked worker
                        # would deadlock re-entrant offloads
                        dispatch(self._registry, msg, ctx, None)
                    else:
                        dispatch(self._registry, msg, ctx, self._policy)
                except UnknownHandlerKey as e:
                    self._protocol_abort(str(e))
                    return
                except (TruncatedMessage, TrailingGarbage, FrameTooLarge) as e:
                    self._protocol_abort(f"bad frame from node {sender}: {e}")
                    return
                except Exception:
                    logger.exception("handler dispatch failed; continuing")
                if self._stop_requested.is_set():
                    break
        finally:
            self._finalize()

    def _finalize(self) -> None:
        with self._finalize_lock:
            if self._finalized:
                return
            self._finalized = True
        self._policy.close(drain=True)
        self._transport.shutdown()
        orphans = self._pending.outstanding()
        for future in self._pending.drain():
            future._fail(Shutdown("runtime stopped before a result arrived"))
        self._audit = AuditReport(tuple(orphans), self._unmatched_results)
        if not self._audit.clean:
            logger.warning(
                "pending-table audit: %d orphaned futures, %d unmatched results",
                len(orphans),
                self._unmatched_results,
            )
        self._terminated.set()


def max_payload_from_env(environ=os.environ) -> int:
    raw = environ.get(ENV_MAX_FRAME)
    return int(raw) if raw else DEFAULT_MAX_PAYLOAD


def policy_spec_from_env(environ=os.environ) -> str:
    return environ.get(ENV_POLICY, "direct")
