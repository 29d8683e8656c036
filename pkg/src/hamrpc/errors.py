"""Exception hierarchy and process exit codes.

Every library error derives from HamError so callers can catch one base
class at process boundaries. Exit codes: 0 clean terminate, 3 protocol
error (unknown handler key, digest mismatch), 4 transport failure.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_PROTOCOL_ERROR = 3
EXIT_TRANSPORT_ERROR = 4


class HamError(Exception):
    """Base class for all hamrpc errors."""


# --- registry ---

class DuplicateName(HamError):
    """A handler name was registered twice."""


class RegistryAlreadyInitialized(HamError):
    """register() called after init()."""


class AlreadyInitialized(HamError):
    """init() called twice."""


class NotInitialized(HamError):
    """A lookup was attempted before init()."""


class UnknownName(HamError):
    """key_of() on a name that was never registered."""


class KeyOutOfRange(HamError):
    """handler_of() with a key outside [0, handler_count)."""


# --- messages ---

class TruncatedMessage(HamError):
    """Frame shorter than its header declares."""


class TrailingGarbage(HamError):
    """Frame longer than its header declares."""


class FrameTooLarge(HamError):
    """Payload exceeds the configured maximum."""


class UnknownHandlerKey(HamError):
    """Dispatch of a key with no table entry; fatal protocol corruption."""


# --- codecs / remote functions ---

class CodecError(HamError):
    """A value cannot be encoded or a buffer cannot be decoded."""


class ArityMismatch(HamError):
    """Closure built with the wrong number of arguments."""


class NotMigratable(HamError):
    """Argument value cannot cross address spaces under its codec."""


class MalformedArguments(HamError):
    """Argument bytes do not decode exactly against the schema."""


# --- transport ---

class ConnectFailed(HamError):
    """A peer could not be reached within the connect deadline."""


class DigestMismatch(HamError):
    """Peer registered a different handler set (digests differ)."""


class PeerGone(HamError):
    """Connection to a peer is closed or was never established."""


class Shutdown(HamError):
    """The transport was shut down while an operation was blocked."""


# --- runtime ---

class InvalidToken(HamError):
    """Remote buffer token is stale, freed, or never existed."""


class SizeMismatch(HamError):
    """put() data length does not match the allocation size."""


class RemoteAllocationFailed(HamError):
    """Target could not reserve the requested buffer."""


class RemoteFailure(HamError):
    """The offloaded function raised on the target."""


class TimedOut(HamError):
    """future.get(timeout) expired; the future itself is untouched."""


# Error classes that keep their identity when they cross the wire inside
# a result message. Anything else arrives as RemoteFailure.
REMOTE_ERROR_TYPES: dict[str, type[HamError]] = {
    "InvalidToken": InvalidToken,
    "SizeMismatch": SizeMismatch,
    "RemoteAllocationFailed": RemoteAllocationFailed,
    "MalformedArguments": MalformedArguments,
    "ArityMismatch": ArityMismatch,
    "NotMigratable": NotMigratable,
}
