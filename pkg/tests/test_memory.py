import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featforge.errors import DuplicateKey, EmptyPool
from featforge.memory import ActionRecord, Decision, MemoryPool

G, S = Decision.GENERATE, Decision.SELECT


def rec(i, j, score=0.5, decision=G, **kw):
    return ActionRecord(i, j, decision, f"step {j}", "a, b", score, **kw)


def test_append():
    p0 = MemoryPool()
    r = rec(0, 0)
    p1 = p0.append(r)
    assert len(p0) == 0 and list(p1) == [r]
    pool = MemoryPool()
    for i in range(30):
        for j in range(6):
            pool = pool.append(rec(i, j))
    assert len(pool) == 180
    with pytest.raises(DuplicateKey):
        pool.append(rec(3, 2))


def test_short_term_views():
    pool = MemoryPool([rec(0, 0, decision=G), rec(0, 1, decision=S), rec(0, 2, decision=G), rec(1, 0, decision=S)])
    assert [r.step for r in pool.short_term(0, G)] == [0, 2]
    assert len(pool.short_term(0)) == 3
    assert pool.short_term(2) == []
    assert all(r.iteration == 1 for r in pool.short_term(1))


def test_long_term_sample():
    only = MemoryPool([rec(0, 0)])
    assert only.long_term_sample(np.random.default_rng(0)) == [only[0]]
    r = np.random.default_rng(5)
    scores = r.random(100)
    pool = MemoryPool([rec(k // 6, k % 6, float(s)) for k, s in enumerate(scores)])
    top = set(np.argsort(-scores, kind="stable")[:20])
    keyed = {(k // 6, k % 6): k for k in range(100)}
    for seed in range(50):
        got = pool.long_term_sample(np.random.default_rng(seed))
        assert len(got) == 4 and len({x.key for x in got}) == 4
        assert all(keyed[x.key] in top for x in got)
    a = pool.long_term_sample(np.random.default_rng(9))
    b = pool.long_term_sample(np.random.default_rng(9))
    assert a == b


def test_long_term_frequencies():
    pool = MemoryPool([rec(0, k, float(k)) for k in range(20)])
    rng = np.random.default_rng(0)
    counts = {}
    draws = 10_000
    for _ in range(draws):
        for r in pool.long_term_sample(rng):
            counts[r.key] = counts.get(r.key, 0) + 1
    expected = 4 / 20 * draws
    assert len(counts) == 20
    assert all(abs(c - expected) <= 0.2 * expected for c in counts.values())


def test_best():
    pool = MemoryPool([rec(0, 0, 0.7), rec(0, 1, 0.9), rec(0, 2, 0.9)])
    assert pool.best().key == (0, 1)
    assert MemoryPool([rec(0, 0)]).best().key == (0, 0)
    with pytest.raises(EmptyPool):
        MemoryPool().best()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=60))
def test_best_matches_linear_scan(scores):
    pool = MemoryPool([rec(k // 6, k % 6, s) for k, s in enumerate(scores)])
    best_k = 0
    for k, s in enumerate(scores):
        if s > scores[best_k]:
            best_k = k
    assert pool.best().key == (best_k // 6, best_k % 6)
    assert all(pool.best().score >= r.score for r in pool)


def test_record_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        rec(0, 0, float("nan"))
    with pytest.raises(ValueError):
        rec(0, 0, behavior_prob=1.0)
    r = rec(2, 3, 0.25, state=tuple(range(12)), behavior_prob=0.5, feature_set={"base": ["a"]}, notes=("x",))
    back = ActionRecord.from_json(json.loads(r.dumps()))
    assert back == r and back.feature_set == r.feature_set
    pool = MemoryPool([rec(0, 0), r])
    pool.dump(tmp_path / "p.jsonl")
    loaded = MemoryPool.load(tmp_path / "p.jsonl")
    assert list(loaded) == list(pool)
    shifted = pool.relabeled(10)
    assert [x.iteration for x in shifted] == [10, 12]
    assert Decision.from_code(G.code) is G and Decision.from_code(1) is S
