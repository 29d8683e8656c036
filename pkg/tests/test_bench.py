"""Benchmark plumbing, the verification suite, and the inner-product demo."""

from __future__ import annotations

import struct

import pytest

from hamrpc.bench import (
    BenchConfig,
    BenchResult,
    LocalPair,
    _timed_reps,
    bench_bandwidth,
    bench_empty_offload,
    bench_raw_pingpong,
    demo_inner_prod,
    local_inner_prod,
    run_rpc_suite,
    write_csv,
)
from hamrpc.registry import RESERVED_PREFIX
from hamrpc.remote_function import make_closure


@pytest.fixture(scope="module")
def lp():
    pair = LocalPair("loopback")
    yield pair
    pair.close()


# --- statistics plumbing ---

def test_timed_reps_excludes_warmup():
    calls = []
    samples = _timed_reps(5, 2, lambda: calls.append(1))
    assert len(calls) == 7
    assert len(samples) == 5


def test_bench_result_statistics():
    result = BenchResult("m", "t", [5, 1, 3, 2, 4])
    assert result.min_ns == 1
    assert result.median_ns == 3
    assert result.mean_ns == 3
    assert result.p99_ns == 4


def test_bench_config_default_warmup():
    assert BenchConfig(reps=100).warmup_reps() == 10
    assert BenchConfig(reps=100, warmup=3).warmup_reps() == 3
    assert BenchConfig(reps=5).warmup_reps() == 1


def test_csv_format(tmp_path):
    path = tmp_path / "out.csv"
    write_csv(str(path), [BenchResult("m", "loopback", [10, 20])])
    lines = path.read_text().splitlines()
    assert lines[0] == "mode,transport,rep,latency_ns"
    assert lines[1] == "m,loopback,0,10"
    assert lines[2] == "m,loopback,1,20"
    assert lines[3].startswith("# summary mode=m transport=loopback reps=2")


# --- latency and bandwidth ---

def test_empty_offload_sane(lp):
    cfg = BenchConfig(reps=30, warmup=5, transport="loopback")
    result = bench_empty_offload(lp.host, 1, lp.descriptors, cfg)
    assert len(result.latencies_ns) == 30
    assert 0 < result.median_ns < 10**9


def test_raw_pingpong_sane():
    result = bench_raw_pingpong("loopback", reps=30, warmup=5)
    assert 0 < result.median_ns < 10**9


def test_bandwidth_one_mib(lp):
    cfg = BenchConfig(reps=3, warmup=1, payload_size=1 << 20, transport="loopback")
    put_result, get_result = bench_bandwidth(lp.host, 1, cfg)
    assert put_result.throughput_mb_s > 0
    assert get_result.throughput_mb_s > 0


def test_bandwidth_zero_payload(lp):
    cfg = BenchConfig(reps=2, warmup=1, payload_size=0, transport="loopback")
    put_result, get_result = bench_bandwidth(lp.host, 1, cfg)
    assert put_result.throughput_mb_s == 0.0
    assert get_result.throughput_mb_s == 0.0


# --- inner product demo ---

def test_local_inner_prod_hand_sum():
    assert local_inner_prod([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]) == 32.0


def test_remote_inner_prod_hand_case(lp):
    a = lp.host.allocate(1, 3, 8)
    b = lp.host.allocate(1, 3, 8)
    try:
        lp.host.put(struct.pack("<3d", 1.0, 2.0, 3.0), a).get(5.0)
        lp.host.put(struct.pack("<3d", 4.0, 5.0, 6.0), b).get(5.0)
        got = lp.host.sync_offload(
            1, make_closure(lp.descriptors["demo.inner_prod"], a, b, 3)
        )
    finally:
        lp.host.free(a)
        lp.host.free(b)
    assert got == 32.0


def test_demo_inner_prod_matches_oracle(lp):
    remote, local = demo_inner_prod(lp.host, 1, lp.descriptors, 64, seed=9)
    assert remote == local


def test_demo_inner_prod_zero_length(lp):
    remote, local = demo_inner_prod(lp.host, 1, lp.descriptors, 0)
    assert remote == 0.0 == local


# --- rpc suite ---

def test_rpc_suite_passes_and_covers_everything(lp):
    report = run_rpc_suite(lp.host, 1, lp.registry, lp.descriptors, calls=20, seed=7)
    assert report.ok, report.mismatches
    assert report.calls >= 20
    user_names = {n for n in lp.registry.names() if not n.startswith(RESERVED_PREFIX)}
    assert user_names <= report.exercised


def test_rpc_suite_deterministic_across_runs(lp):
    prints = {
        run_rpc_suite(lp.host, 1, lp.registry, lp.descriptors, calls=12, seed=3).fingerprint
        for _ in range(10)
    }
    assert len(prints) == 1


def test_rpc_suite_seed_changes_fingerprint(lp):
    a = run_rpc_suite(lp.host, 1, lp.registry, lp.descriptors, calls=12, seed=1)
    b = run_rpc_suite(lp.host, 1, lp.registry, lp.descriptors, calls=12, seed=2)
    assert a.fingerprint != b.fingerprint


def test_suite_summary_line_shape(lp):
    report = run_rpc_suite(lp.host, 1, lp.registry, lp.descriptors, calls=12, seed=3)
    line = report.summary_line()
    assert line.startswith("rpc-suite: calls=")
    assert "mismatches=0" in line
    assert "coverage=ok" in line
    assert "fingerprint=" in line
