"""hamrpc: active-message RPC with coordination-free handler keys.

Remotely callable functions register under explicit stable names; a
deterministic sort assigns every process the same integer key per
handler without any communication, so differently built binaries
interoperate. Calls travel as self-executing messages with serialized
arguments and return results through futures.
"""

from .codecs import (
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
    Codec,
    RemoteBufferHandle,
    fixed_array,
)
from .errors import (
    EXIT_OK,
    EXIT_PROTOCOL_ERROR,
    EXIT_TRANSPORT_ERROR,
    AlreadyInitialized,
    ArityMismatch,
    CodecError,
    ConnectFailed,
    DigestMismatch,
    DuplicateName,
    FrameTooLarge,
    HamError,
    InvalidToken,
    KeyOutOfRange,
    MalformedArguments,
    NotInitialized,
    NotMigratable,
    PeerGone,
    RegistryAlreadyInitialized,
    RemoteAllocationFailed,
    RemoteFailure,
    Shutdown,
    SizeMismatch,
    TimedOut,
    TrailingGarbage,
    TruncatedMessage,
    UnknownHandlerKey,
    UnknownName,
)
from .messages import (
    ActiveMessage,
    DEFAULT_MAX_PAYLOAD,
    DirectPolicy,
    ExecutionPolicy,
    HEADER_SIZE,
    QueuedPolicy,
    decode,
    dispatch,
    encode,
    policy_from_string,
)
from .registry import RESERVED_PREFIX, Registry, RegistryEntry, digest_of_names
from .remote_function import (
    Closure,
    FunctionDescriptor,
    closure_to_message,
    invoke_decoded,
    make_closure,
    register_function,
)
from .runtime import (
    AuditReport,
    HandlerContext,
    OffloadFuture,
    Runtime,
    current_runtime,
    install_internal_handlers,
    local_buffer,
)
from .transport import (
    LoopbackHub,
    LoopbackTransport,
    PeerConfig,
    TcpTransport,
    Transport,
    connect_tcp,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveMessage", "AlreadyInitialized", "ArityMismatch", "AuditReport",
    "BYTES", "Closure", "Codec", "CodecError", "ConnectFailed",
    "DEFAULT_MAX_PAYLOAD", "DigestMismatch", "DirectPolicy", "DuplicateName",
    "EXIT_OK", "EXIT_PROTOCOL_ERROR", "EXIT_TRANSPORT_ERROR",
    "ExecutionPolicy", "F32", "F64", "FrameTooLarge", "FunctionDescriptor",
    "HANDLE", "HEADER_SIZE", "HamError", "HandlerContext", "I16", "I32",
    "I64", "I8", "InvalidToken", "KeyOutOfRange", "LoopbackHub",
    "LoopbackTransport", "MalformedArguments", "NotInitialized",
    "NotMigratable", "OffloadFuture", "PeerConfig", "PeerGone",
    "QueuedPolicy", "RESERVED_PREFIX", "Registry", "RegistryAlreadyInitialized",
    "RegistryEntry", "RemoteAllocationFailed", "RemoteBufferHandle",
    "RemoteFailure", "Runtime", "Shutdown", "SizeMismatch", "TcpTransport",
    "TimedOut", "TrailingGarbage", "Transport", "TruncatedMessage", "U16",
    "U32", "U64", "U8", "UnknownHandlerKey", "UnknownName", "VOID",
    "closure_to_message", "connect_tcp", "current_runtime", "decode",
    "digest_of_names", "dispatch", "encode", "fixed_array",
    "install_internal_handlers", "invoke_decoded", "local_buffer",
    "make_closure", "policy_from_string", "register_function",
]
