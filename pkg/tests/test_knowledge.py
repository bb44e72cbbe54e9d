import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relsim.estimator import (
    UNDETERMINED,
    EstimationParams,
    estimation,
    gamma1,
)
from relsim.knowledge import RecordPool, empty_knowledge, merge_knowledge

PARAMS = EstimationParams(0.5, 0.1)
G1 = gamma1(PARAMS)


def test_empty_knowledge_knows_nothing():
    known = empty_knowledge(4)
    assert known.tolist() == [-1, -1, -1, -1]


def test_merge_is_elementwise_max():
    a = np.array([3, -1, 5, 0], dtype=np.int32)
    b = np.array([1, 2, 9, -1], dtype=np.int32)
    merged = merge_knowledge(a, [b])
    assert merged.tolist() == [3, 2, 9, 0]
    # inputs untouched
    assert a.tolist() == [3, -1, 5, 0]
    assert b.tolist() == [1, 2, 9, -1]


def _random_pool(rng, n, rounds, crash_prob=0.02):
    """Pool populated the way the engine would: one record per creator-round."""
    pool = RecordPool(n, G1)
    last = np.full(n, -1, dtype=np.int32)
    for rnd in range(rounds):
        for creator in range(n):
            target = int(rng.integers(n))
            roll = rng.random()
            res = -1 if roll < crash_prob else (1 if roll < 0.7 else 0)
            pool.add_record(creator, rnd, target, res)
            last[creator] = rnd
    return pool, last


def _random_known(rng, last):
    known = empty_knowledge(len(last))
    for s in range(len(last)):
        known[s] = int(rng.integers(-1, last[s] + 2))
        known[s] = min(known[s], last[s])
    return known


@pytest.mark.parametrize("seed", range(5))
def test_estimate_all_matches_record_set_estimator(seed):
    rng = np.random.default_rng(seed)
    n = 6
    pool, last = _random_pool(rng, n, rounds=160)
    for _ in range(8):
        known = _random_known(rng, last)
        batch = pool.estimate_all(known)
        reference = estimation(pool.all_records_for(known), PARAMS)
        for j in range(n):
            if reference[j] is UNDETERMINED:
                assert math.isnan(batch[j])
            else:
                assert batch[j] == reference[j]


def test_satisfies_matches_brute_force():
    rng = np.random.default_rng(11)
    n = 5
    pool, last = _random_pool(rng, n, rounds=200, crash_prob=0.005)
    needed = pool.needed
    checked_true = checked_false = 0
    for _ in range(30):
        known = _random_known(rng, last)
        records = pool.all_records_for(known)
        expected = all(
            sum(1 for r in records[j] if r.res == 1) >= needed
            or any(r.res == -1 for r in records[j])
            for j in range(n)
        )
        if not pool.globally_estimable():
            expected = False
        got = pool.satisfies(known)
        assert got == expected
        checked_true += got
        checked_false += not got
    assert checked_true and checked_false


def test_satisfies_gate_blocks_before_global_estimability():
    pool = RecordPool(2, G1)
    pool.add_record(0, 0, 1, 1)
    full = np.array([0, -1], dtype=np.int32)
    assert not pool.globally_estimable()
    assert not pool.satisfies(full)


def test_records_round_trip():
    pool = RecordPool(3, G1)
    pool.add_record(0, 0, 2, 1)
    pool.add_record(1, 0, 2, 0)
    pool.add_record(2, 0, 1, -1)
    known = np.array([0, 0, -1], dtype=np.int32)
    assert pool.records_for(known, 2) == {(1, 0, 0), (0, 1, 0)}
    assert pool.records_for(known, 1) == set()
    known[2] = 0
    assert pool.records_for(known, 1) == {(-1, 2, 0)}


def test_snapshot_semantics_shared_message_not_mutated():
    # A snapshot array shipped to several destinations is read-only; merges
    # allocate fresh arrays rather than touching it.
    base = np.array([2, 2, 2], dtype=np.int32)
    snapshot = base.copy()
    snapshot.setflags(write=False)
    merged = merge_knowledge(np.array([5, 0, 1], dtype=np.int32), [snapshot, snapshot])
    assert merged.tolist() == [5, 2, 2]
    assert snapshot.tolist() == [2, 2, 2]
