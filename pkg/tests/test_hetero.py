"""Cross-binary key agreement, exercised with real child processes."""

from __future__ import annotations

from hamrpc.errors import EXIT_PROTOCOL_ERROR
from hamrpc.hetero import run_hetero


def test_homogeneous_baseline():
    # two identically built nodes: trivially compatible
    report = run_hetero(calls=20, worker_variant="a", worker_optimize=False)
    assert report.ok, report.render() + "\n" + report.worker_output


def test_heterogeneous_pair_agrees():
    # reversed registration order under -O on the worker side
    report = run_hetero(calls=40)
    assert report.ok, report.render() + "\n" + report.worker_output
    assert "mismatches=0" in report.driver_output


def test_extra_handler_fails_digest_check():
    report = run_hetero(negative=True, calls=20)
    assert report.rc_worker == EXIT_PROTOCOL_ERROR, report.worker_output
    assert report.rc_driver == EXIT_PROTOCOL_ERROR, report.driver_output
    assert report.ok
