from __future__ import annotations

import threading

import pytest
from hypothesis import settings

from hamrpc.bench import transport_pair
from hamrpc.demo import build_registry
from hamrpc.messages import policy_from_string
from hamrpc.runtime import Runtime

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


class RecordingCtx:
    """Stand-in execution context for handler-level tests."""

    def __init__(self, sender: int = 0) -> None:
        self.sender = sender
        self.replies: list[tuple[int, bytes]] = []

    def reply(self, origin: int, payload: bytes) -> None:
        self.replies.append((origin, payload))


class Pair:
    """Two started runtimes over a fresh 2-node transport."""

    def __init__(
        self,
        kind: str = "loopback",
        policy: str = "direct",
        extra_fns=(),
    ) -> None:
        from hamrpc.remote_function import register_function

        self.registry, self.descriptors = build_registry()
        for name, fn, schema, result in extra_fns:
            self.descriptors[name] = register_function(
                self.registry, name, fn, schema, result
            )
        self.registry.init()
        t0, t1 = transport_pair(kind, self.registry.digest)
        self.host = Runtime(self.registry, t0, policy_from_string(policy))
        self.target = Runtime(self.registry, t1, policy_from_string(policy))
        self.host.start()
        self.target.start()

    def close(self) -> None:
        try:
            self.host.terminate(1, timeout=5.0)
        except Exception:
            pass
        self.target.wait_terminated(timeout=5.0)
        self.host.shutdown()
        self.target.shutdown()


@pytest.fixture
def pair():
    p = Pair()
    yield p
    p.close()


@pytest.fixture
def make_pair():
    pairs: list[Pair] = []

    def factory(**kwargs) -> Pair:
        p = Pair(**kwargs)
        pairs.append(p)
        return p

    yield factory
    for p in pairs:
        p.close()


def drain_threads(timeout: float = 2.0) -> None:
    for t in threading.enumerate():
        if t.daemon and t.name.startswith("ham-"):
            t.join(timeout=0.01)
