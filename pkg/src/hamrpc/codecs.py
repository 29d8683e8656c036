"""Per-type serialization for values that cross address spaces.

All integers and floats travel as fixed-width little-endian bit patterns.
Variable-length byte strings carry a u64 LE length prefix. A codec is
transport_safe when its encoding is a plain fixed-width copy (no prefix,
no conversion beyond byte order).

Built-ins: I8..I64, U8..U64, F32, F64, BYTES, fixed_array(elem, n),
HANDLE (remote buffer references), VOID (empty results).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import CodecError


@dataclass(frozen=True)
class RemoteBufferHandle:
    """Reference to memory in another process's address space.

    The token is an opaque identifier into the owning node's allocation
    table, never a raw address. Valid only between allocate and free.
    """

    node: int
    token: int
    count: int
    elem_size: int

    @property
    def nbytes(self) -> int:
        return self.count * self.elem_size


class Codec:
    """Serialize/deserialize hook for one value kind.

    decode(buf, offset) returns (value, bytes consumed) so codecs compose
    by concatenation. Round-trip law: decode(encode(v)) == (v, len).
    """

    name: str = "?"
    transport_safe: bool = False

    def encode(self, value: Any) -> bytes:
        raise NotImplementedError

    def decode(self, buf: bytes, offset: int = 0) -> tuple[Any, int]:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<codec {self.name}>"


def _need(buf: bytes, offset: int, n: int, what: str) -> None:
    if len(buf) - offset < n:
        raise CodecError(f"need {n} bytes for {what}, have {len(buf) - offset}")


class _IntCodec(Codec):
    transport_safe = True

    def __init__(self, name: str, fmt: str, lo: int, hi: int) -> None:
        self.name = name
        self._struct = struct.Struct(fmt)
        self._lo = lo
        self._hi = hi

    def encode(self, value: Any) -> bytes:
        if isinstance(value, bool) or not isinstance(value, int):
            raise CodecError(f"{self.name} expects an int, got {type(value).__name__}")
        if not self._lo <= value <= self._hi:
            raise CodecError(f"{value} outside {self.name} range [{self._lo}, {self._hi}]")
        return self._struct.pack(value)

    def decode(self, buf: bytes, offset: int = 0) -> tuple[int, int]:
        _need(buf, offset, self._struct.size, self.name)
        (value,) = self._struct.unpack_from(buf, offset)
        return value, self._struct.size


class _FloatCodec(Codec):
    transport_safe = True

    def __init__(self, name: str, fmt: str) -> None:
        self.name = name
        self._struct = struct.Struct(fmt)

    def encode(self, value: Any) -> bytes:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CodecError(f"{self.name} expects a float, got {type(value).__name__}")
        return self._struct.pack(value)

    def decode(self, buf: bytes, offset: int = 0) -> tuple[float, int]:
        _need(buf, offset, self._struct.size, self.name)
        (value,) = self._struct.unpack_from(buf, offset)
        return value, self._struct.size


class _BytesCodec(Codec):
    """u64 LE length prefix followed by the raw bytes."""

    name = "bytes"
    transport_safe = False

    def encode(self, value: Any) -> bytes:
        if not isinstance(value, (bytes, bytearray, memoryview)):
            raise CodecError(f"bytes expects a bytes-like value, got {type(value).__name__}")
        raw = bytes(value)
        return struct.pack("<Q", len(raw)) + raw

    def decode(self, buf: bytes, offset: int = 0) -> tuple[bytes, int]:
        _need(buf, offset, 8, "bytes length prefix")
        (n,) = struct.unpack_from("<Q", buf, offset)
        _need(buf, offset + 8, n, "bytes body")
        return bytes(buf[offset + 8 : offset + 8 + n]), 8 + n


class _FixedArrayCodec(Codec):
    """Exactly `count` elements encoded back to back, no prefix."""

    def __init__(self, elem: Codec, count: int) -> None:
        if count < 0:
            raise ValueError("array count must be >= 0")
        self.name = f"{elem.name}[{count}]"
        self.transport_safe = elem.transport_safe
        self._elem = elem
        self._count = count

    def encode(self, value: Any) -> bytes:
        if not isinstance(value, Sequence) or isinstance(value, (str, bytes, bytearray)):
            raise CodecError(f"{self.name} expects a sequence")
        if len(value) != self._count:
            raise CodecError(f"{self.name} expects {self._count} elements, got {len(value)}")
        return b"".join(self._elem.encode(v) for v in value)

    def decode(self, buf: bytes, offset: int = 0) -> tuple[tuple, int]:
        values = []
        used = 0
        for _ in range(self._count):
            value, n = self._elem.decode(buf, offset + used)
            values.append(value)
            used += n
        return tuple(values), used


class _HandleCodec(Codec):
    """RemoteBufferHandle as four u64 LE fields: node, token, count, elem_size."""

    name = "buffer_handle"
    transport_safe = True
    _struct = struct.Struct("<QQQQ")

    def encode(self, value: Any) -> bytes:
        if not isinstance(value, RemoteBufferHandle):
            raise CodecError(
                f"buffer_handle expects RemoteBufferHandle, got {type(value).__name__}"
            )
        return self._struct.pack(value.node, value.token, value.count, value.elem_size)

    def decode(self, buf: bytes, offset: int = 0) -> tuple[RemoteBufferHandle, int]:
        _need(buf, offset, self._struct.size, self.name)
        node, token, count, elem_size = self._struct.unpack_from(buf, offset)
        return RemoteBufferHandle(node, token, count, elem_size), self._struct.size


class _VoidCodec(Codec):
    """No bytes at all; the codec for functions without a result."""

    name = "void"
    transport_safe = True

    def encode(self, value: Any) -> bytes:
        if value is not None:
            raise CodecError(f"void result must be None, got {type(value).__name__}")
        return b""

    def decode(self, buf: bytes, offset: int = 0) -> tuple[None, int]:
        return None, 0


I8 = _IntCodec("i8", "<b", -(2**7), 2**7 - 1)
I16 = _IntCodec("i16", "<h", -(2**15), 2**15 - 1)
I32 = _IntCodec("i32", "<i", -(2**31), 2**31 - 1)
I64 = _IntCodec("i64", "<q", -(2**63), 2**63 - 1)
U8 = _IntCodec("u8", "<B", 0, 2**8 - 1)
U16 = _IntCodec("u16", "<H", 0, 2**16 - 1)
U32 = _IntCodec("u32", "<I", 0, 2**32 - 1)
U64 = _IntCodec("u64", "<Q", 0, 2**64 - 1)
F32 = _FloatCodec("f32", "<f")
F64 = _FloatCodec("f64", "<d")
BYTES = _BytesCodec()
HANDLE = _HandleCodec()
VOID = _VoidCodec()


def fixed_array(elem: Codec, count: int) -> Codec:
    """Codec for exactly `count` elements of `elem`, concatenated."""
    return _FixedArrayCodec(elem, count)


#: All fixed-name built-ins, for iteration in tests.
BUILTIN_CODECS: tuple[Codec, ...] = (
    I8, I16, I32, I64, U8, U16, U32, U64, F32, F64, BYTES, HANDLE,
)
