"""Handler registry with coordination-free key assignment.

Handlers are collected under explicit string names during a startup phase.
A single init() call then sorts the names byte-wise (UTF-8) and assigns
each handler its rank in that order as its key. Because sorting is
deterministic, every process that registers the same name set computes the
same name-to-key mapping without exchanging a single message, even across
binaries built with different compilers or settings.

Keys are dense integers from 0, so the receive path resolves a key to a
handler with one array index.

The registry is two-phase:
- Collecting: register() only.
- Initialized: key_of()/handler_of()/dump_table()/digest only; immutable,
  safe to read from any number of threads.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Callable, Iterable

from .errors import (
    AlreadyInitialized,
    DuplicateName,
    KeyOutOfRange,
    NotInitialized,
    RegistryAlreadyInitialized,
    UnknownName,
)

# Handler callable: (execution context, payload bytes) -> None.
# Replies, if any, are sent through the context.
Handler = Callable[[object, bytes], None]

#: Names with this prefix are reserved for library-internal handlers.
RESERVED_PREFIX = "__ham."


class Phase(enum.Enum):
    COLLECTING = "collecting"
    INITIALIZED = "initialized"


@dataclass(frozen=True)
class RegistryEntry:
    """A name plus the locally valid callable registered under it."""

    name: str
    handler: Handler


def _validate_name(name: str) -> bytes:
    """Check a handler name and return its UTF-8 encoding."""
    if not isinstance(name, str) or not name:
        raise ValueError("handler name must be a non-empty string")
    if "\x00" in name:
        raise ValueError("handler name must not contain NUL")
    return name.encode("utf-8")


def digest_of_names(names: Iterable[str]) -> int:
    """Stable 64-bit digest of a handler name set.

    Names are sorted byte-wise and joined with NUL (which cannot appear in
    a valid name) so that distinct name sets cannot collide by boundary
    shifting. Two processes agree on the digest iff they registered the
    same names.
    """
    encoded = sorted(_validate_name(n) for n in names)
    h = hashlib.blake2b(b"\x00".join(encoded), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _handler_ident(handler: Handler) -> str:
    """Deterministic, human-readable identity for a local handler.

    Uses the callable's qualified name rather than its memory address so
    that dumps from two runs of the same program are byte-identical.
    """
    module = getattr(handler, "__module__", None) or "?"
    qualname = getattr(handler, "__qualname__", None) or type(handler).__name__
    return f"{module}.{qualname}"


class Registry:
    """Name-to-key-to-handler tables built deterministically at init().

    Invariants:
    - register() is legal only while Collecting; lookups only after init().
    - After init(), keys form exactly the range [0, handler_count) and key
      order equals byte-wise lexicographic order of the names.
    """

    def __init__(self) -> None:
        self._phase = Phase.COLLECTING
        self._entries: dict[str, RegistryEntry] = {}
        self._keys: dict[str, int] = {}
        self._table: list[Handler] = []
        self._digest: int | None = None

    @property
    def phase(self) -> Phase:
        return self._phase

    @property
    def handler_count(self) -> int:
        if self._phase is not Phase.INITIALIZED:
            raise NotInitialized("handler_count requires init()")
        return len(self._table)

    @property
    def digest(self) -> int:
        """64-bit digest of the sorted name set (after init())."""
        if self._digest is None:
            raise NotInitialized("digest requires init()")
        return self._digest

    def register(self, name: str, handler: Handler) -> None:
        """Store a handler under a unique name; keys come later at init().

        Raises:
            DuplicateName: name already registered.
            RegistryAlreadyInitialized: called after init().
        """
        if self._phase is not Phase.COLLECTING:
            raise RegistryAlreadyInitialized(
                f"cannot register {name!r}: registry already initialized"
            )
        _validate_name(name)
        if name in self._entries:
            raise DuplicateName(f"handler name {name!r} already registered")
        if not callable(handler):
            raise TypeError(f"handler for {name!r} is not callable")
        self._entries[name] = RegistryEntry(name, handler)

    def init(self) -> int:
        """Sort names, assign rank keys, build the dispatch table.

        Returns the handler count. Raises AlreadyInitialized on re-init.
        """
        if self._phase is not Phase.COLLECTING:
            raise AlreadyInitialized("registry init() called twice")
        ordered = sorted(self._entries, key=lambda n: n.encode("utf-8"))
        self._keys = {name: key for key, name in enumerate(ordered)}
        self._table = [self._entries[name].handler for name in ordered]
        self._digest = digest_of_names(ordered)
        self._phase = Phase.INITIALIZED
        return len(self._table)

    def key_of(self, name: str) -> int:
        """Key of a registered name; O(1).

        Raises UnknownName for unregistered names, NotInitialized before
        init().
        """
        if self._phase is not Phase.INITIALIZED:
            raise NotInitialized("key_of requires init()")
        try:
            return self._keys[name]
        except KeyError:
            raise UnknownName(f"no handler registered under {name!r}") from None

    def handler_of(self, key: int) -> Handler:
        """Handler stored at table[key]; a single array index.

        Raises KeyOutOfRange unless 0 <= key < handler_count.
        """
        if self._phase is not Phase.INITIALIZED:
            raise NotInitialized("handler_of requires init()")
        if not 0 <= key < len(self._table):
            raise KeyOutOfRange(
                f"handler key {key} outside [0, {len(self._table)})"
            )
        return self._table[key]

    def names(self) -> list[str]:
        """Registered names; in key order once initialized."""
        if self._phase is Phase.INITIALIZED:
            return sorted(self._keys, key=self._keys.__getitem__)
        return list(self._entries)

    def dump_table(self) -> str:
        """Human-readable dump of the handler map and key-indexed vector."""
        if self._phase is not Phase.INITIALIZED:
            raise NotInitialized("dump_table requires init()")
        lines = ["===== BEGIN HANDLER MAP ====="]
        ordered = self.names()
        for name in ordered:
            lines.append(f"name: {name}")
            lines.append(f"handler: {_handler_ident(self._entries[name].handler)}")
        lines.append("===== END HANDLER MAP =====")
        lines.append("===== BEGIN HANDLER VECTOR =====")
        for key, name in enumerate(ordered):
            lines.append(f"index: {key}, handler: {_handler_ident(self._table[key])}")
        lines.append("===== END HANDLER VECTOR =====")
        return "\n".join(lines) + "\n"
