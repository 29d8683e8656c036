"""Registry: two-phase lifecycle, deterministic key assignment, dump format."""

from __future__ import annotations

import random
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from hamrpc.errors import (
    AlreadyInitialized,
    DuplicateName,
    KeyOutOfRange,
    NotInitialized,
    RegistryAlreadyInitialized,
    UnknownName,
)
from hamrpc.registry import Registry, digest_of_names


def _noop(ctx, payload):
    pass


def make_registry(names):
    reg = Registry()
    for name in names:
        reg.register(name, _noop)
    return reg


# --- register ---

def test_register_single_insertion():
    reg = Registry()
    reg.register("app.square", _noop)
    assert reg.names() == ["app.square"]


def test_register_duplicate_name():
    reg = make_registry(["app.square"])
    with pytest.raises(DuplicateName):
        reg.register("app.square", _noop)


def test_register_after_init():
    reg = make_registry(["a"])
    reg.init()
    with pytest.raises(RegistryAlreadyInitialized):
        reg.register("x", _noop)


@pytest.mark.parametrize("bad", ["", "with\x00nul", None, 7])
def test_register_rejects_bad_names(bad):
    reg = Registry()
    with pytest.raises((ValueError, TypeError)):
        reg.register(bad, _noop)


def test_register_accepts_reserved_prefix():
    # the low-level registry is also the path for internal handlers
    reg = Registry()
    reg.register("__ham.something", _noop)
    assert "__ham.something" in reg.names()


# --- init ---

def test_init_assigns_lexicographic_ranks():
    reg = make_registry(["b", "a", "c"])
    assert reg.init() == 3
    assert (reg.key_of("a"), reg.key_of("b"), reg.key_of("c")) == (0, 1, 2)


def test_init_order_independent():
    reg = make_registry(["c", "b", "a"])
    reg.init()
    assert (reg.key_of("a"), reg.key_of("b"), reg.key_of("c")) == (0, 1, 2)


def test_init_keys_are_dense_indices():
    reg = make_registry(["x", "y", "z"])
    count = reg.init()
    assert sorted(reg.key_of(n) for n in ["x", "y", "z"]) == list(range(count))


def test_double_init():
    reg = make_registry(["a"])
    reg.init()
    with pytest.raises(AlreadyInitialized):
        reg.init()


# --- key_of / handler_of ---

def test_key_of_boundaries():
    reg = make_registry(["a", "b", "c"])
    reg.init()
    assert reg.key_of("a") == 0
    assert reg.key_of("c") == 2


def test_key_of_unknown_name():
    reg = make_registry(["a"])
    reg.init()
    with pytest.raises(UnknownName):
        reg.key_of("zzz")


def test_key_of_before_init():
    reg = make_registry(["a"])
    with pytest.raises(NotInitialized):
        reg.key_of("a")


def test_handler_of_matches_registration():
    # enumerate all keys against an independent sort of the names
    calls = []
    reg = Registry()
    names = ["gamma", "alpha", "beta"]
    for name in names:
        reg.register(name, lambda ctx, payload, n=name: calls.append((n, payload)))
    reg.init()
    rank = {name: i for i, name in enumerate(sorted(names))}
    for name in names:
        reg.handler_of(rank[name])(None, name.encode())
        assert calls[-1] == (name, name.encode())


def test_handler_of_out_of_range():
    reg = make_registry(["a", "b", "c"])
    count = reg.init()
    with pytest.raises(KeyOutOfRange):
        reg.handler_of(count)
    with pytest.raises(KeyOutOfRange):
        reg.handler_of(-1)


def test_handler_of_before_init():
    reg = make_registry(["a"])
    with pytest.raises(NotInitialized):
        reg.handler_of(0)


def test_handler_of_is_single_index():
    # one bounded-time table access, no scan
    class CountingList(list):
        gets = 0

        def __getitem__(self, i):
            CountingList.gets += 1
            return super().__getitem__(i)

    reg = make_registry(["a", "b", "c"])
    reg.init()
    reg._table = CountingList(reg._table)
    reg.handler_of(1)
    assert CountingList.gets == 1


# --- dump ---

def test_dump_table_shape():
    reg = make_registry(["b", "a", "c"])
    reg.init()
    text = reg.dump_table()
    lines = text.splitlines()
    assert lines[0] == "===== BEGIN HANDLER MAP ====="
    assert "===== END HANDLER MAP =====" in lines
    assert "===== BEGIN HANDLER VECTOR =====" in lines
    assert lines[-1] == "===== END HANDLER VECTOR ====="
    assert [l for l in lines if l.startswith("name: ")] == ["name: a", "name: b", "name: c"]
    assert [l.split(",")[0] for l in lines if l.startswith("index: ")] == [
        "index: 0", "index: 1", "index: 2",
    ]


def test_dump_empty_registry():
    reg = Registry()
    reg.init()
    text = reg.dump_table()
    assert "===== BEGIN HANDLER MAP =====" in text
    assert "===== BEGIN HANDLER VECTOR =====" in text
    assert not any(l.startswith(("name:", "index:")) for l in text.splitlines())


def test_dump_before_init():
    reg = make_registry(["a"])
    with pytest.raises(NotInitialized):
        reg.dump_table()


def test_dump_key_order_matches_independent_sort():
    # internal "__ham." entries must precede names that sort after them
    from hamrpc.demo import build_registry

    reg, _ = build_registry()
    reg.init()
    dumped = [
        line.removeprefix("name: ")
        for line in reg.dump_table().splitlines()
        if line.startswith("name: ")
    ]
    assert dumped == sorted(dumped, key=lambda n: n.encode("utf-8"))
    internals = [n for n in dumped if n.startswith("__ham.")]
    assert internals and dumped[: len(internals)] == internals


def test_dump_identical_across_processes():
    cmd = [sys.executable, "-m", "hamrpc.cli", "bench", "--mode", "dump-table"]
    first = subprocess.run(cmd, capture_output=True, timeout=30)
    second = subprocess.run(cmd, capture_output=True, timeout=30)
    assert first.returncode == second.returncode == 0
    assert first.stdout == second.stdout
    assert b"__ham.terminate" in first.stdout


# --- properties ---

name_sets = st.sets(
    st.text(min_size=1, max_size=12).filter(lambda s: "\x00" not in s),
    min_size=1,
    max_size=20,
)


@given(names=name_sets, seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance(names, seed):
    ordered = sorted(names)
    shuffled = list(names)
    random.Random(seed).shuffle(shuffled)
    reg_a = make_registry(ordered)
    reg_b = make_registry(shuffled)
    reg_a.init()
    reg_b.init()
    assert {n: reg_a.key_of(n) for n in names} == {n: reg_b.key_of(n) for n in names}


@given(names=name_sets)
def test_key_bijectivity(names):
    reg = make_registry(names)
    count = reg.init()
    keys = {reg.key_of(n) for n in names}
    assert keys == set(range(count))


@given(names=name_sets)
def test_key_order_is_bytewise_name_order(names):
    reg = make_registry(names)
    reg.init()
    by_key = sorted(names, key=reg.key_of)
    assert by_key == sorted(names, key=lambda n: n.encode("utf-8"))


def test_digest_agreement_and_sensitivity():
    names = [f"fn.{i:03d}" for i in range(50)]
    base = digest_of_names(names)
    shuffled = list(names)
    random.Random(3).shuffle(shuffled)
    assert digest_of_names(shuffled) == base

    rng = random.Random(11)
    collisions = 0
    for _ in range(2000):
        mutated = list(names)
        op = rng.randrange(3)
        if op == 0:
            mutated[rng.randrange(len(mutated))] += chr(rng.randrange(97, 123))
        elif op == 1:
            mutated.pop(rng.randrange(len(mutated)))
        else:
            mutated.append(f"extra.{rng.randrange(10**9)}")
        if digest_of_names(mutated) == base:
            collisions += 1
    assert collisions == 0


def test_registry_digest_matches_function():
    names = ["q", "p", "r"]
    reg = make_registry(names)
    reg.init()
    assert reg.digest == digest_of_names(names)
