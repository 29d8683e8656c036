"""Offloadable demo functions shared by the CLI, benches, and harnesses.

Every process of a multi-node run registers exactly this set (internal
handlers aside), so handler keys agree everywhere. The registration order
is configurable to emulate differently built binaries; it must not affect
the resulting key map.
"""

from __future__ import annotations

import struct

from .codecs import BYTES, F64, HANDLE, I64, U64, VOID, RemoteBufferHandle
from .registry import Registry
from .remote_function import FunctionDescriptor, register_function
from .runtime import install_internal_handlers, local_buffer


def nop() -> None:
    return None


def square(x: int) -> int:
    return x * x


def add(a: int, b: int) -> int:
    return a + b


def scale(x: float, k: float) -> float:
    return x * k


def echo(data: bytes) -> bytes:
    return data


def checksum(data: bytes) -> int:
    return sum(data) % (2**64)


def inner_prod(a: RemoteBufferHandle, b: RemoteBufferHandle, n: int) -> float:
    """Inner product of two remote double buffers, sequential order."""
    av = memoryview(local_buffer(a)).cast("d")
    bv = memoryview(local_buffer(b)).cast("d")
    r = 0.0
    for i in range(n):
        r += av[i] * bv[i]
    return r


def fill_ramp(h: RemoteBufferHandle, start: int) -> None:
    """Write doubles start, start+1, ... into the buffer."""
    buf = local_buffer(h)
    for i in range(h.count):
        struct.pack_into("<d", buf, i * 8, float(start + i))


def fail_always() -> None:
    raise ValueError("intentional demo failure")


# (name, fn, param schema, result codec) in source order.
DEMO_FUNCTIONS = [
    ("bench.nop", nop, (), VOID),
    ("demo.square", square, (I64,), I64),
    ("demo.add", add, (I64, I64), I64),
    ("demo.scale", scale, (F64, F64), F64),
    ("demo.echo", echo, (BYTES,), BYTES),
    ("demo.checksum", checksum, (BYTES,), U64),
    ("demo.inner_prod", inner_prod, (HANDLE, HANDLE, U64), F64),
    ("demo.fill_ramp", fill_ramp, (HANDLE, U64), VOID),
    ("demo.fail", fail_always, (), VOID),
]


def build_registry(
    order: str = "source", extra_handler: bool = False
) -> tuple[Registry, dict[str, FunctionDescriptor]]:
    """Registry with internal handlers plus the demo set, ready for init().

    order "reversed" registers the demo functions back to front, standing
    in for a differently built binary.
    """
    registry = Registry()
    install_internal_handlers(registry)
    specs = list(DEMO_FUNCTIONS)
    if order == "reversed":
        specs.reverse()
    elif order != "source":
        raise ValueError(f"unknown registration order {order!r}")
    descriptors = {}
    for name, fn, schema, result in specs:
        descriptors[name] = register_function(registry, name, fn, schema, result)
    if extra_handler:
        descriptors["zzz.extra"] = register_function(
            registry, "zzz.extra", nop, (), VOID
        )
    return registry, descriptors
