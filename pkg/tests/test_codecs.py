"""Round-trip law and bit-exact layouts for every built-in codec."""

from __future__ import annotations

import math
import struct

import pytest
from hypothesis import given, strategies as st

from hamrpc.codecs import (
    BUILTIN_CODECS,
    BYTES,
    F32,
    F64,
    HANDLE,
    I8,
    I16,
    I32,
    I64,
    U8,
    U16,
    U32,
    U64,
    VOID,
    RemoteBufferHandle,
    fixed_array,
)
from hamrpc.errors import CodecError

INT_CODECS = [
    (I8, -(2**7), 2**7 - 1),
    (I16, -(2**15), 2**15 - 1),
    (I32, -(2**31), 2**31 - 1),
    (I64, -(2**63), 2**63 - 1),
    (U8, 0, 2**8 - 1),
    (U16, 0, 2**16 - 1),
    (U32, 0, 2**32 - 1),
    (U64, 0, 2**64 - 1),
]


@pytest.mark.parametrize("codec,lo,hi", INT_CODECS, ids=lambda v: getattr(v, "name", str(v)))
def test_int_boundaries_round_trip(codec, lo, hi):
    for value in (lo, hi, 0, lo + 1, hi - 1):
        encoded = codec.encode(value)
        assert codec.decode(encoded) == (value, len(encoded))


@pytest.mark.parametrize("codec,lo,hi", INT_CODECS, ids=lambda v: getattr(v, "name", str(v)))
def test_int_out_of_range(codec, lo, hi):
    with pytest.raises(CodecError):
        codec.encode(lo - 1)
    with pytest.raises(CodecError):
        codec.encode(hi + 1)


def test_int_rejects_non_int():
    with pytest.raises(CodecError):
        I64.encode("7")
    with pytest.raises(CodecError):
        I64.encode(1.5)
    with pytest.raises(CodecError):
        U8.encode(True)


def test_i64_little_endian_layout():
    assert I64.encode(2) == b"\x02\x00\x00\x00\x00\x00\x00\x00"
    assert U16.encode(0x1234) == b"\x34\x12"


@given(st.integers(-(2**63), 2**63 - 1))
def test_i64_round_trip(value):
    assert I64.decode(I64.encode(value)) == (value, 8)


@given(st.floats(allow_nan=False))
def test_f64_round_trip(value):
    assert F64.decode(F64.encode(value)) == (value, 8)


@given(st.floats(allow_nan=False, width=32))
def test_f32_round_trip(value):
    assert F32.decode(F32.encode(value)) == (value, 4)


def test_float_nan_crosses_as_bit_pattern():
    encoded = F64.encode(math.nan)
    value, _ = F64.decode(encoded)
    assert math.isnan(value)
    assert F64.encode(value) == encoded


def test_f64_ieee_layout():
    assert F64.encode(1.0) == struct.pack("<d", 1.0)


@given(st.binary(max_size=4096))
def test_bytes_round_trip(value):
    encoded = BYTES.encode(value)
    assert encoded[:8] == struct.pack("<Q", len(value))
    assert BYTES.decode(encoded) == (value, 8 + len(value))


def test_bytes_short_buffer():
    with pytest.raises(CodecError):
        BYTES.decode(b"\x05\x00\x00")
    with pytest.raises(CodecError):
        BYTES.decode(struct.pack("<Q", 10) + b"abc")


def test_bytes_rejects_non_bytes():
    with pytest.raises(CodecError):
        BYTES.encode("text")


def test_fixed_array_round_trip():
    codec = fixed_array(F64, 3)
    values = (1.0, -2.5, 3.25)
    encoded = codec.encode(values)
    assert len(encoded) == 24
    assert codec.decode(encoded) == (values, 24)


def test_fixed_array_wrong_length():
    codec = fixed_array(I64, 2)
    with pytest.raises(CodecError):
        codec.encode([1])
    with pytest.raises(CodecError):
        codec.encode([1, 2, 3])


def test_fixed_array_nested():
    codec = fixed_array(fixed_array(U8, 2), 2)
    values = ((1, 2), (3, 4))
    assert codec.decode(codec.encode(values)) == (values, 4)


@given(
    st.tuples(
        st.integers(0, 2**64 - 1),
        st.integers(0, 2**64 - 1),
        st.integers(0, 2**64 - 1),
        st.integers(0, 2**64 - 1),
    )
)
def test_handle_round_trip(fields):
    handle = RemoteBufferHandle(*fields)
    encoded = HANDLE.encode(handle)
    assert len(encoded) == 32
    assert HANDLE.decode(encoded) == (handle, 32)


def test_handle_layout():
    handle = RemoteBufferHandle(node=1, token=2, count=3, elem_size=8)
    assert HANDLE.encode(handle) == struct.pack("<QQQQ", 1, 2, 3, 8)
    assert handle.nbytes == 24


def test_void_codec():
    assert VOID.encode(None) == b""
    assert VOID.decode(b"") == (None, 0)
    with pytest.raises(CodecError):
        VOID.encode(0)


def test_decode_with_offset():
    buf = b"xxxx" + I32.encode(-5) + b"yyyy"
    assert I32.decode(buf, 4) == (-5, 4)


def test_transport_safety_classification():
    # fixed-width copies are transport safe; length-prefixed bytes are not
    for codec in (I8, I16, I32, I64, U8, U16, U32, U64, F32, F64, HANDLE):
        assert codec.transport_safe, codec.name
    assert not BYTES.transport_safe
    assert fixed_array(F64, 4).transport_safe
    assert not fixed_array(BYTES, 2).transport_safe


def test_builtin_codec_listing():
    names = {c.name for c in BUILTIN_CODECS}
    assert names == {
        "i8", "i16", "i32", "i64", "u8", "u16", "u32", "u64",
        "f32", "f64", "bytes", "buffer_handle",
    }
