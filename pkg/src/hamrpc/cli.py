"""Command-line surface: ham-bench, ham-demo, ham-hetero.

ham-bench drives one node of a benchmark or verification run. Node 0 is
the driver: it executes the selected mode against node 1 and then
terminates every peer. Any other node serves until terminated. With the
loopback transport the peer nodes run as threads inside this process, so
a single command works end to end; with TCP, start the other nodes first
(same binary, --node N) or use ham-hetero, which spawns them itself.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import bench, demo, hetero
from .errors import (
    ConnectFailed,
    DigestMismatch,
    EXIT_PROTOCOL_ERROR,
    EXIT_TRANSPORT_ERROR,
    PeerGone,
    Shutdown,
    UnknownHandlerKey,
)
from .messages import policy_from_string
from .runtime import (
    ENV_POLICY,
    Runtime,
    max_payload_from_env,
    policy_spec_from_env,
)
from .transport import ENV_NODE_ID, LoopbackHub, PeerConfig, connect_tcp

logger = logging.getLogger(__name__)


def _setup_logging() -> None:
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _bench_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ham-bench", description=__doc__)
    p.add_argument(
        "--mode",
        choices=["empty-offload", "bandwidth", "inner-prod", "dump-table", "rpc-suite"],
        default="empty-offload",
    )
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--payload", type=int, default=1024, help="bytes for bandwidth mode")
    p.add_argument("--warmup", type=int, default=None, help="default: 10%% of reps")
    p.add_argument("--transport", choices=["loopback", "tcp"], default="loopback")
    p.add_argument("--peers", help="peers file: one '<node_id> <host>:<port>' per line")
    p.add_argument("--node", type=int, default=None, help=f"node id (or ${ENV_NODE_ID})")
    p.add_argument("--csv", help="write per-rep latencies to this file")
    p.add_argument("--n", type=int, default=1024, help="vector length for inner-prod")
    p.add_argument("--policy", default=None, help=f"direct|queued:N (or ${ENV_POLICY})")
    p.add_argument("--connect-timeout", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument(
        "--variant", choices=["a", "b"], default="a",
        help="demo registration order: a=source, b=reversed",
    )
    p.add_argument(
        "--extra-handler", action="store_true",
        help="register one extra handler (digest negative test)",
    )
    return p


def _build_node(args) -> tuple:
    registry, descriptors = demo.build_registry(
        order="source" if args.variant == "a" else "reversed",
        extra_handler=args.extra_handler,
    )
    registry.init()
    return registry, descriptors


def _run_driver(args, registry, descriptors, runtime: Runtime, peer_ids: list[int]) -> int:
    target = 1 if 1 in peer_ids else (peer_ids[0] if peer_ids else runtime.node)
    cfg = bench.BenchConfig(
        mode=args.mode,
        reps=args.reps,
        payload_size=args.payload,
        transport=args.transport,
        warmup=args.warmup,
    )
    results = []
    status = 0
    if args.mode == "empty-offload":
        result = bench.bench_empty_offload(runtime, target, descriptors, cfg)
        baseline = bench.bench_raw_pingpong(args.transport, cfg.reps, cfg.warmup_reps())
        results += [result, baseline]
        print(result.summary_line())
        print(baseline.summary_line())
        if baseline.median_ns > 0:
            print(f"# overhead_ratio={result.median_ns / baseline.median_ns:.2f}")
    elif args.mode == "bandwidth":
        put_result, get_result = bench.bench_bandwidth(runtime, target, cfg)
        results += [put_result, get_result]
        print(put_result.summary_line())
        print(get_result.summary_line())
    elif args.mode == "inner-prod":
        remote, local = bench.demo_inner_prod(runtime, target, descriptors, args.n, args.seed)
        match = remote == local
        print(f"inner-prod: n={args.n} remote={remote!r} local={local!r} "
              f"match={'yes' if match else 'NO'}")
        status = 0 if match else 1
    elif args.mode == "rpc-suite":
        report = bench.run_rpc_suite(
            runtime, target, registry, descriptors, calls=args.reps, seed=args.seed
        )
        results.append(bench.BenchResult("rpc-suite", args.transport, report.latencies_ns))
        print(report.summary_line())
        for mismatch in report.mismatches:
            print(f"MISMATCH {mismatch}")
        status = 0 if report.ok else 1
    if args.csv and results:
        bench.write_csv(args.csv, results)
    for peer in peer_ids:
        runtime.terminate(peer, timeout=10.0)
    return status


def bench_main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _bench_parser().parse_args(argv)

    if args.mode == "dump-table":
        registry, _ = _build_node(args)
        sys.stdout.write(registry.dump_table())
        return 0

    node = args.node
    if node is None:
        node = int(os.environ.get(ENV_NODE_ID, "0"))
    policy_spec = args.policy or policy_spec_from_env()
    max_payload = max_payload_from_env()

    try:
        registry, descriptors = _build_node(args)
        if args.transport == "loopback":
            return _run_loopback(args, registry, descriptors, policy_spec, max_payload)
        if not args.peers:
            raise SystemExit("--peers is required for the tcp transport")
        config = PeerConfig.from_file(args.peers, node)
        transport = connect_tcp(
            config, registry.digest, args.connect_timeout, max_payload
        )
        runtime = Runtime(
            registry, transport, policy_from_string(policy_spec), max_payload
        )
        runtime.start()
        if node == 0:
            peer_ids = sorted(p for p in config.peers if p != node)
            status = _run_driver(args, registry, descriptors, runtime, peer_ids)
            runtime.shutdown()
            return status
        runtime.wait_terminated()
        runtime.shutdown()
        return 0
    except (DigestMismatch, UnknownHandlerKey) as e:
        logger.error("%s", e)
        return EXIT_PROTOCOL_ERROR
    except (ConnectFailed, PeerGone, Shutdown) as e:
        logger.error("%s", e)
        return EXIT_TRANSPORT_ERROR


def _run_loopback(args, registry, descriptors, policy_spec, max_payload) -> int:
    hub = LoopbackHub(2, max_payload)
    host = Runtime(
        registry, hub.connect(0, registry.digest),
        policy_from_string(policy_spec), max_payload,
    )
    target = Runtime(
        registry, hub.connect(1, registry.digest),
        policy_from_string(policy_spec), max_payload,
    )
    host.start()
    target.start()
    try:
        return _run_driver(args, registry, descriptors, host, [1])
    finally:
        target.wait_terminated(timeout=5.0)
        host.shutdown()
        target.shutdown()


def demo_main(argv: list[str] | None = None) -> int:
    _setup_logging()
    p = argparse.ArgumentParser(prog="ham-demo")
    sub = p.add_subparsers(dest="command", required=True)
    ip = sub.add_parser("inner-prod", help="offload an inner product to node 1")
    ip.add_argument("--n", type=int, default=1024)
    ip.add_argument("--seed", type=int, default=42)
    ip.add_argument("--transport", choices=["loopback", "tcp"], default="loopback")
    ip.add_argument("--peers")
    ip.add_argument("--node", type=int, default=0)
    ip.add_argument("--connect-timeout", type=float, default=10.0)
    args = p.parse_args(argv)

    bench_args = [
        "--mode", "inner-prod",
        "--transport", args.transport,
        "--n", str(args.n),
        "--seed", str(args.seed),
        "--node", str(args.node),
        "--connect-timeout", str(args.connect_timeout),
    ]
    if args.peers:
        bench_args += ["--peers", args.peers]
    return bench_main(bench_args)


def hetero_main(argv: list[str] | None = None) -> int:
    _setup_logging()
    p = argparse.ArgumentParser(
        prog="ham-hetero",
        description="spawn two differently built nodes and verify key agreement",
    )
    p.add_argument("--negative", action="store_true",
                   help="give node 1 an extra handler; expect DigestMismatch")
    p.add_argument("--calls", type=int, default=100)
    p.add_argument("--timeout", type=float, default=60.0)
    args = p.parse_args(argv)
    report = hetero.run_hetero(negative=args.negative, calls=args.calls,
                               timeout=args.timeout)
    print(report.render())
    return 0 if report.ok else 1


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in {"bench", "demo", "hetero"}:
        print("usage: python -m hamrpc.cli {bench|demo|hetero} [options]", file=sys.stderr)
        return 2
    command, rest = argv[0], argv[1:]
    if command == "bench":
        return bench_main(rest)
    if command == "demo":
        return demo_main(rest)
    return hetero_main(rest)


if __name__ == "__main__":
    sys.exit(main())
