"""Transferable closures: a registered function identity plus encoded args.

A function becomes remotely callable by registering it under a stable
name together with a parameter schema (one codec per parameter) and a
result codec. Registration installs a generated handler that decodes the
arguments, invokes the function, and sends the encoded result back to the
origin node as a "__ham.result" message.

Argument payload layout (bit-exact):
    request_id u64 LE | origin_node u64 LE | arg1 | ... | argN
where each arg is encoded by its codec. Arguments are encoded once on the
sending side at closure construction and decoded exactly once on the
target.

Result payload layout:
    request_id u64 LE | status u8 | body
status 0: body is the result codec's encoding of the return value.
status 1: body is two length-prefixed UTF-8 strings, the exception type
name and its message.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from .codecs import BYTES, VOID, Codec
from .errors import (
    ArityMismatch,
    CodecError,
    MalformedArguments,
    NotMigratable,
)
from .messages import ActiveMessage
from .registry import RESERVED_PREFIX, Registry
from . import context

logger = logging.getLogger(__name__)

_CALL_HEAD = struct.Struct("<QQ")  # request_id, origin node
_RESULT_HEAD = struct.Struct("<QB")  # request_id, status

RESULT_OK = 0
RESULT_ERROR = 1

#: Name of the internal handler that delivers results back to the origin.
RESULT_HANDLER_NAME = "__ham.result"


@dataclass(frozen=True)
class FunctionDescriptor:
    """Portable identity of a registered function.

    The schema must be identical in every process (same-source builds);
    only the name travels, as a handler key.
    """

    name: str
    fn: Callable | None
    param_schema: tuple[Codec, ...]
    result_codec: Codec


@dataclass(frozen=True)
class Closure:
    """A function identity plus its arguments, already encoded."""

    descriptor: FunctionDescriptor
    args: bytes


def encode_args(schema: Sequence[Codec], values: Sequence[Any]) -> bytes:
    """Concatenate per-parameter encodings in declaration order."""
    if len(values) != len(schema):
        raise ArityMismatch(f"expected {len(schema)} arguments, got {len(values)}")
    parts = []
    for i, (codec, value) in enumerate(zip(schema, values)):
        try:
            parts.append(codec.encode(value))
        except CodecError as e:
            raise NotMigratable(f"argument {i} ({codec.name}): {e}") from e
    return b"".join(parts)


def decode_args(schema: Sequence[Codec], buf: bytes) -> tuple:
    """Decode argument bytes exactly against the schema; no bytes left over."""
    values = []
    offset = 0
    for i, codec in enumerate(schema):
        try:
            value, used = codec.decode(buf, offset)
        except CodecError as e:
            raise MalformedArguments(f"argument {i} ({codec.name}): {e}") from e
        values.append(value)
        offset += used
    if offset != len(buf):
        raise MalformedArguments(f"{len(buf) - offset} trailing bytes after arguments")
    return tuple(values)


def make_closure(descriptor: FunctionDescriptor, *args: Any) -> Closure:
    """Encode arguments against the descriptor's schema, sender side.

    Raises ArityMismatch on wrong argument count and NotMigratable when a
    value cannot be encoded by its parameter's codec.
    """
    return Closure(descriptor, encode_args(descriptor.param_schema, args))


def closure_to_message(
    registry: Registry, closure: Closure, request_id: int, origin: int
) -> ActiveMessage:
    """Wrap a closure as an active message addressed by handler key."""
    key = registry.key_of(closure.descriptor.name)
    payload = _CALL_HEAD.pack(request_id, origin) + closure.args
    return ActiveMessage(key, payload)


def invoke_decoded(descriptor: FunctionDescriptor, args_bytes: bytes) -> bytes:
    """Decode arguments, call the function, encode the result."""
    values = decode_args(descriptor.param_schema, args_bytes)
    result = descriptor.fn(*values)
    return descriptor.result_codec.encode(result)


def build_result_payload(request_id: int, body: bytes) -> bytes:
    return _RESULT_HEAD.pack(request_id, RESULT_OK) + body


def build_error_payload(request_id: int, exc: BaseException) -> bytes:
    body = BYTES.encode(type(exc).__name__.encode("utf-8")) + BYTES.encode(
        str(exc).encode("utf-8")
    )
    return _RESULT_HEAD.pack(request_id, RESULT_ERROR) + body


def parse_result_payload(payload: bytes) -> tuple[int, int, bytes]:
    """Split a result payload into (request_id, status, body)."""
    if len(payload) < _RESULT_HEAD.size:
        raise MalformedArguments(f"result payload of {len(payload)} bytes is too short")
    request_id, status = _RESULT_HEAD.unpack_from(payload)
    return request_id, status, payload[_RESULT_HEAD.size :]


def parse_error_body(body: bytes) -> tuple[str, str]:
    """Decode (exception type name, message) from an error result body."""
    name_bytes, used = BYTES.decode(body, 0)
    msg_bytes, _ = BYTES.decode(body, used)
    return name_bytes.decode("utf-8", "replace"), msg_bytes.decode("utf-8", "replace")


def _make_function_handler(descriptor: FunctionDescriptor) -> Callable:
    """Generate the target-side decode -> invoke -> reply handler."""

    def handler(ctx: Any, payload: bytes) -> None:
        if len(payload) < _CALL_HEAD.size:
            logger.warning(
                "dropping call to %s: payload too short for call header",
                descriptor.name,
            )
            return
        request_id, origin = _CALL_HEAD.unpack_from(payload)
        runtime = getattr(ctx, "runtime", None)
        token = context.activate(runtime) if runtime is not None else None
        try:
            body = invoke_decoded(descriptor, payload[_CALL_HEAD.size :])
            reply = build_result_payload(request_id, body)
        except Exception as e:
            reply = build_error_payload(request_id, e)
        finally:
            if token is not None:
                context.deactivate(token)
        ctx.reply(origin, reply)

    handler.__qualname__ = f"function_handler[{descriptor.name}]"
    return handler


def _register(
    registry: Registry,
    name: str,
    fn: Callable,
    param_schema: Sequence[Codec],
    result_codec: Codec = VOID,
    internal: bool = False,
) -> FunctionDescriptor:
    if not internal and name.startswith(RESERVED_PREFIX):
        raise ValueError(f"names starting with {RESERVED_PREFIX!r} are reserved")
    descriptor = FunctionDescriptor(name, fn, tuple(param_schema), result_codec)
    registry.register(name, _make_function_handler(descriptor))
    return descriptor


def register_function(
    registry: Registry,
    name: str,
    fn: Callable,
    param_schema: Sequence[Codec],
    result_codec: Codec = VOID,
) -> FunctionDescriptor:
    """Register fn under a stable name and install its call handler.

    Must happen while the registry is collecting, in every process, with
    an identical schema. Anonymous functions are fine; the explicit name
    is their portable identity.
    """
    return _register(registry, name, fn, param_schema, result_codec)
