"""Cross-binary harness: prove key agreement between differently built peers.

Spawns two child processes over TCP-localhost: node 0 registers the demo
functions in source order; node 1 registers them reversed and runs under
the interpreter's optimized mode (-O), standing in for a differently
compiled binary. The driver then runs the mixed RPC suite; with handler
keys assigned by sorted names, every call must resolve to the right
function on the other side.

The negative variant gives node 1 one extra handler; both sides must then
refuse to connect with a digest mismatch and exit with the protocol-error
code.
"""

from __future__ import annotations

import os
import socket
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass

from .errors import EXIT_PROTOCOL_ERROR


def free_ports(n: int) -> list[int]:
    ports, socks = [], []
    for _ in range(n):
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


def write_peers_file(path: str, ports: list[int]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# node endpoints for a localhost run\n")
        for node, port in enumerate(ports):
            f.write(f"{node} 127.0.0.1:{port}\n")


def worker_command(
    node: int,
    peers_file: str,
    variant: str = "a",
    extra_handler: bool = False,
    optimize: bool = False,
    mode: str = "rpc-suite",
    calls: int = 100,
    connect_timeout: float = 10.0,
) -> list[str]:
    cmd = [sys.executable]
    if optimize:
        cmd.append("-O")
    cmd += [
        "-m", "hamrpc.cli", "bench",
        "--mode", mode,
        "--transport", "tcp",
        "--node", str(node),
        "--peers", peers_file,
        "--variant", variant,
        "--reps", str(calls),
        "--connect-timeout", str(connect_timeout),
    ]
    if extra_handler:
        cmd.append("--extra-handler")
    return cmd


def spawn_worker(
    node: int,
    peers_file: str,
    variant: str = "a",
    extra_handler: bool = False,
    optimize: bool = False,
    connect_timeout: float = 10.0,
) -> subprocess.Popen:
    """Start a serve-until-terminate node as a child process."""
    cmd = worker_command(
        node, peers_file, variant, extra_handler, optimize,
        connect_timeout=connect_timeout,
    )
    return subprocess.Popen(
        cmd,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        env={**os.environ, "PYTHONUNBUFFERED": "1"},
    )


@dataclass
class HeteroReport:
    negative: bool
    rc_driver: int
    rc_worker: int
    driver_output: str
    worker_output: str
    elapsed_s: float

    @property
    def ok(self) -> bool:
        if self.negative:
            return (
                self.rc_worker == EXIT_PROTOCOL_ERROR
                and self.rc_driver == EXIT_PROTOCOL_ERROR
            )
        return (
            self.rc_driver == 0
            and self.rc_worker == 0
            and "mismatches=0" in self.driver_output
            and "coverage=ok" in self.driver_output
        )

    def render(self) -> str:
        lines = [
            f"hetero harness ({'negative digest test' if self.negative else 'mixed suite'}):",
            f"  driver (variant a, source order) exit {self.rc_driver}",
            f"  worker (variant b, reversed order, -O"
            f"{', extra handler' if self.negative else ''}) exit {self.rc_worker}",
            f"  elapsed {self.elapsed_s:.2f}s",
        ]
        for line in self.driver_output.splitlines():
            if line.startswith("rpc-suite:"):
                lines.append("  " + line)
        lines.append("  result: " + ("PASS" if self.ok else "FAIL"))
        return "\n".join(lines)


def run_hetero(
    negative: bool = False,
    calls: int = 100,
    timeout: float = 60.0,
    connect_timeout: float = 10.0,
    worker_variant: str = "b",
    worker_optimize: bool = True,
) -> HeteroReport:
    """Run the two-binary harness end to end; both children are reaped.

    worker_variant="a" with worker_optimize=False gives the homogeneous
    baseline (two identically built nodes).
    """
    ports = free_ports(2)
    start = time.monotonic()
    with tempfile.TemporaryDirectory() as tmp:
        peers_file = os.path.join(tmp, "peers.txt")
        write_peers_file(peers_file, ports)
        driver_cmd = worker_command(
            0, peers_file, variant="a", mode="rpc-suite",
            calls=calls, connect_timeout=connect_timeout,
        )
        worker = spawn_worker(
            1, peers_file, variant=worker_variant, extra_handler=negative,
            optimize=worker_optimize, connect_timeout=connect_timeout,
        )
        try:
            driver = subprocess.run(
                driver_cmd,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                text=True,
                timeout=timeout,
                env={**os.environ, "PYTHONUNBUFFERED": "1"},
            )
            worker_out, worker_err = worker.communicate(timeout=timeout)
        except subprocess.TimeoutExpired:
            worker.kill()
            worker_out, worker_err = worker.communicate()
            raise
        elapsed = time.monotonic() - start
        return HeteroReport(
            negative=negative,
            rc_driver=driver.returncode,
            rc_worker=worker.returncode,
            driver_output=driver.stdout or "",
            worker_output=(worker_out or "") + (worker_err or ""),
            elapsed_s=elapsed,
        )
