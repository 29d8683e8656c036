"""Access to the runtime executing the current handler.

Offloaded functions receive plain values, not an execution context, yet
functions that work on remote buffers need the allocation table of the
node they run on. The generated handler activates its runtime here for
the duration of the call; current_runtime() resolves it from anywhere in
the call stack, on whichever thread the policy chose.
"""

from __future__ import annotations

import contextvars
from typing import Any

_ACTIVE_RUNTIME: contextvars.ContextVar[Any] = contextvars.ContextVar(
    "ham_active_runtime", default=None
)


def current_runtime() -> Any:
    """The runtime whose handler is executing on this thread."""
    rt = _ACTIVE_RUNTIME.get()
    if rt is None:
        raise RuntimeError("no runtime is active on this thread")
    return rt


def activate(runtime: Any) -> contextvars.Token:
    return _ACTIVE_RUNTIME.set(runtime)


def deactivate(token: contextvars.Token) -> None:
    _ACTIVE_RUNTIME.reset(token)
