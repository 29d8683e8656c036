"""Benchmarks, the inner-product demo, and the mixed RPC verification suite.

Latency modes record one wall-clock sample per repetition (monotonic
nanoseconds) and summarize over post-warmup samples only. CSV rows are
`mode,transport,rep,latency_ns`, followed by one `# summary ...` line.
"""

from __future__ import annotations

import hashlib
import random
import socket
import statistics
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import RemoteFailure, Shutdown
from .messages import DEFAULT_MAX_PAYLOAD, encode, policy_from_string
from .registry import RESERVED_PREFIX, Registry
from .remote_function import make_closure
from .runtime import Runtime
from .transport import LoopbackHub, PeerConfig, Transport, connect_tcp
from . import demo


@dataclass
class BenchConfig:
    mode: str = "empty-offload"
    reps: int = 1000
    payload_size: int = 1024
    transport: str = "loopback"
    warmup: int | None = None  # default: 10% of reps

    def warmup_reps(self) -> int:
        return self.warmup if self.warmup is not None else max(1, self.reps // 10)


@dataclass
class BenchResult:
    mode: str
    transport: str
    latencies_ns: list[int]  # post-warmup samples
    min_ns: int = 0
    median_ns: float = 0.0
    mean_ns: float = 0.0
    p99_ns: int = 0
    throughput_mb_s: float | None = None

    def __post_init__(self) -> None:
        if self.latencies_ns:
            ordered = sorted(self.latencies_ns)
            self.min_ns = ordered[0]
            self.median_ns = statistics.median(ordered)
            self.mean_ns = statistics.fmean(ordered)
            self.p99_ns = ordered[int(0.99 * (len(ordered) - 1))]

    def summary_line(self) -> str:
        parts = [
            f"# summary mode={self.mode} transport={self.transport}",
            f"reps={len(self.latencies_ns)}",
            f"min_ns={self.min_ns}",
            f"median_ns={self.median_ns:.0f}",
            f"mean_ns={self.mean_ns:.0f}",
            f"p99_ns={self.p99_ns}",
        ]
        if self.throughput_mb_s is not None:
            parts.append(f"throughput_mb_s={self.throughput_mb_s:.2f}")
        return " ".join(parts)

    def csv_rows(self) -> Iterable[str]:
        for rep, ns in enumerate(self.latencies_ns):
            yield f"{self.mode},{self.transport},{rep},{ns}"


def write_csv(path: str, results: Iterable[BenchResult]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("mode,transport,rep,latency_ns\n")
        for result in results:
            for row in result.csv_rows():
                f.write(row + "\n")
            f.write(result.summary_line() + "\n")


def _timed_reps(reps: int, warmup: int, op: Callable[[], None]) -> list[int]:
    for _ in range(warmup):
        op()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        op()
        samples.append(time.perf_counter_ns() - t0)
    return samples


# --- two-node fixtures inside one process ---

def _free_ports(n: int) -> list[int]:
    ports = []
    socks = []
    for _ in range(n):
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


def tcp_pair(
    digest: int, max_payload: int = DEFAULT_MAX_PAYLOAD, timeout: float = 10.0
) -> tuple[Transport, Transport]:
    """Two TCP transports over localhost within the current process."""
    port0, port1 = _free_ports(2)
    peers = {0: f"127.0.0.1:{port0}", 1: f"127.0.0.1:{port1}"}
    result: dict[int, Transport] = {}
    errors: list[Exception] = []

    def connect_node(node: int) -> None:
        try:
            result[node] = connect_tcp(
                PeerConfig(node, peers), digest, timeout, max_payload
            )
        except Exception as e:
            errors.append(e)

    t = threading.Thread(target=connect_node, args=(1,), daemon=True)
    t.start()
    connect_node(0)
    t.join()
    if errors:
        raise errors[0]
    return result[0], result[1]


def transport_pair(
    kind: str, digest: int = 0, max_payload: int = DEFAULT_MAX_PAYLOAD
) -> tuple[Transport, Transport]:
    if kind == "loopback":
        hub = LoopbackHub(2, max_payload)
        return hub.connect(0, digest), hub.connect(1, digest)
    if kind == "tcp":
        return tcp_pair(digest, max_payload)
    raise ValueError(f"unknown transport kind {kind!r}")


class LocalPair:
    """A 2-node runtime setup inside one process, for tests and benches."""

    def __init__(self, kind: str = "loopback", policy_spec: str = "direct") -> None:
        self.registry, self.descriptors = demo.build_registry()
        self.registry.init()
        t0, t1 = transport_pair(kind, self.registry.digest)
        self.host = Runtime(self.registry, t0, policy_from_string(policy_spec))
        self.target = Runtime(self.registry, t1, policy_from_string(policy_spec))
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

    def __enter__(self) -> "LocalPair":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# --- benchmarks ---

def bench_empty_offload(runtime: Runtime, target: int, descriptors, cfg: BenchConfig) -> BenchResult:
    """Latency of synchronously offloading a registered empty function."""
    closure = make_closure(descriptors["bench.nop"])
    samples = _timed_reps(
        cfg.reps, cfg.warmup_reps(), lambda: runtime.sync_offload(target, closure)
    )
    return BenchResult("empty-offload", cfg.transport, samples)


def bench_raw_pingpong(kind: str, reps: int, warmup: int, payload_size: int = 0) -> BenchResult:
    """Round-trip latency of bare frames over a fresh 2-node transport.

    The echo side reflects each frame without decoding or dispatching it;
    this is the baseline the offload path is compared against.
    """
    t0, t1 = transport_pair(kind)

    def echo_loop() -> None:
        while True:
            try:
                sender, frame = t1.recv()
            except Shutdown:
                return
            t1.send(sender, frame)

    echo_thread = threading.Thread(target=echo_loop, daemon=True)
    echo_thread.start()
    frame = encode(0, bytes(payload_size))

    def once() -> None:
        t0.send(1, frame)
        t0.recv()

    try:
        samples = _timed_reps(reps, warmup, once)
    finally:
        t1.shutdown()
        t0.shutdown()
        echo_thread.join(timeout=2.0)
    return BenchResult("raw-pingpong", kind, samples)


def bench_bandwidth(runtime: Runtime, target: int, cfg: BenchConfig) -> tuple[BenchResult, BenchResult]:
    """Timed put and get of payload_size bytes, reps times each."""
    handle = runtime.allocate(target, cfg.payload_size, 1)
    data = random.Random(7).randbytes(cfg.payload_size)
    try:
        put_samples = _timed_reps(
            cfg.reps, cfg.warmup_reps(), lambda: runtime.put(data, handle).get()
        )
        get_samples = _timed_reps(
            cfg.reps, cfg.warmup_reps(), lambda: runtime.get(handle)
        )
    finally:
        runtime.free(handle)

    def with_throughput(mode: str, samples: list[int]) -> BenchResult:
        result = BenchResult(mode, cfg.transport, samples)
        total_s = sum(samples) / 1e9
        total_mb = cfg.payload_size * len(samples) / 1e6
        result.throughput_mb_s = total_mb / total_s if total_s > 0 and total_mb > 0 else 0.0
        return result

    return with_throughput("put-bandwidth", put_samples), with_throughput(
        "get-bandwidth", get_samples
    )


# --- inner product demo ---

def local_inner_prod(a: list[float], b: list[float]) -> float:
    """Sequential oracle with the exact summation order of the remote fn."""
    r = 0.0
    for x, y in zip(a, b):
        r += x * y
    return r


def demo_inner_prod(runtime: Runtime, target: int, descriptors, n: int, seed: int = 42) -> tuple[float, float]:
    """Fig-style offload: allocate, put, offload inner product, compare.

    Returns (remote result, local oracle).
    """
    rng = random.Random(seed)
    a = [rng.uniform(-1.0, 1.0) for _ in range(n)]
    b = [rng.uniform(-1.0, 1.0) for _ in range(n)]
    a_target = runtime.allocate(target, n, 8)
    b_target = runtime.allocate(target, n, 8)
    try:
        runtime.put(struct.pack(f"<{n}d", *a), a_target).get()
        runtime.put(struct.pack(f"<{n}d", *b), b_target).get()
        closure = make_closure(descriptors["demo.inner_prod"], a_target, b_target, n)
        remote = runtime.sync_offload(target, closure)
    finally:
        runtime.free(a_target)
        runtime.free(b_target)
    return remote, local_inner_prod(a, b)


# --- mixed RPC verification suite ---

@dataclass
class SuiteReport:
    calls: int
    mismatches: list[str] = field(default_factory=list)
    exercised: set[str] = field(default_factory=set)
    uncovered: set[str] = field(default_factory=set)
    fingerprint: str = ""
    latencies_ns: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.uncovered

    def summary_line(self) -> str:
        return (
            f"rpc-suite: calls={self.calls} mismatches={len(self.mismatches)} "
            f"coverage={'ok' if not self.uncovered else 'missing:' + ','.join(sorted(self.uncovered))} "
            f"fingerprint={self.fingerprint}"
        )


def run_rpc_suite(
    runtime: Runtime,
    target: int,
    registry: Registry,
    descriptors,
    calls: int = 100,
    seed: int = 1234,
) -> SuiteReport:
    """Drive >= `calls` mixed offloads against the target and verify each
    result with a locally computed oracle. Deterministic for a given seed.
    """
    rng = random.Random(seed)
    report = SuiteReport(calls=0)
    results_log: list[str] = []

    def record(name: str, ok: bool, detail: str) -> None:
        report.calls += 1
        report.exercised.add(name)
        results_log.append(f"{name}:{detail}")
        if not ok:
            report.mismatches.append(f"call {report.calls} {name}: {detail}")

    def timed(fn: Callable[[], None]) -> None:
        t0 = time.perf_counter_ns()
        fn()
        report.latencies_ns.append(time.perf_counter_ns() - t0)

    def call_square() -> None:
        x = rng.randrange(-10**6, 10**6)
        got = runtime.sync_offload(target, make_closure(descriptors["demo.square"], x))
        record("demo.square", got == demo.square(x), f"{x}->{got}")

    def call_add() -> None:
        a, b = rng.randrange(-10**9, 10**9), rng.randrange(-10**9, 10**9)
        got = runtime.sync_offload(target, make_closure(descriptors["demo.add"], a, b))
        record("demo.add", got == demo.add(a, b), f"{a}+{b}->{got}")

    def call_scale() -> None:
        x, k = rng.uniform(-100, 100), rng.uniform(-2, 2)
        got = runtime.sync_offload(target, make_closure(descriptors["demo.scale"], x, k))
        record("demo.scale", got == demo.scale(x, k), f"{x}*{k}->{got}")

    def call_echo() -> None:
        data = rng.randbytes(rng.randrange(0, 2048))
        got = runtime.sync_offload(target, make_closure(descriptors["demo.echo"], data))
        record("demo.echo", got == data, f"{len(data)}B")

    def call_checksum() -> None:
        data = rng.randbytes(rng.randrange(0, 2048))
        got = runtime.sync_offload(target, make_closure(descriptors["demo.checksum"], data))
        record("demo.checksum", got == demo.checksum(data), f"{len(data)}B->{got}")

    def call_nop() -> None:
        got = runtime.sync_offload(target, make_closure(descriptors["bench.nop"]))
        record("bench.nop", got is None, repr(got))

    def call_fail() -> None:
        try:
            runtime.sync_offload(target, make_closure(descriptors["demo.fail"]))
        except RemoteFailure as e:
            record("demo.fail", "intentional demo failure" in str(e), "failed as expected")
        else:
            record("demo.fail", False, "no failure raised")

    def call_buffers() -> None:
        n = rng.randrange(1, 64)
        values = [rng.uniform(-1, 1) for _ in range(n)]
        packed = struct.pack(f"<{n}d", *values)
        h_a = runtime.allocate(target, n, 8)
        h_b = runtime.allocate(target, n, 8)
        try:
            runtime.put(packed, h_a).get()
            runtime.put(packed, h_b).get()
            got = runtime.sync_offload(
                target, make_closure(descriptors["demo.inner_prod"], h_a, h_b, n)
            )
            expect = local_inner_prod(values, values)
            record("demo.inner_prod", got == expect, f"n={n}")
            roundtrip = runtime.get(h_a)
            record("__put_get", roundtrip == packed, f"n={n}")
        finally:
            runtime.free(h_a)
            runtime.free(h_b)

    def call_fill_ramp() -> None:
        n = rng.randrange(1, 32)
        start = rng.randrange(0, 1000)
        h = runtime.allocate(target, n, 8)
        try:
            runtime.sync_offload(
                target, make_closure(descriptors["demo.fill_ramp"], h, start)
            )
            got = runtime.get(h)
            expect = struct.pack(f"<{n}d", *(float(start + i) for i in range(n)))
            record("demo.fill_ramp", got == expect, f"n={n} start={start}")
        finally:
            runtime.free(h)

    ops = [
        call_nop, call_square, call_add, call_scale, call_echo,
        call_checksum, call_buffers, call_fill_ramp, call_fail,
    ]
    # one pass over every op guarantees coverage, then a random mix
    plan = list(ops)
    while len(plan) < calls:
        plan.append(rng.choice(ops))
    for op in plan:
        timed(op)

    user_names = {n for n in registry.names() if not n.startswith(RESERVED_PREFIX)}
    report.uncovered = user_names - report.exercised
    digest = hashlib.sha256("\n".join(results_log).encode()).hexdigest()
    report.fingerprint = digest[:16]
    return report
