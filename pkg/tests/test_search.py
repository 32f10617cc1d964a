import json

import numpy as np
import pytest

from featforge import synthetic
from featforge.data import load_csv
from featforge.evaluation import Evaluator
from featforge.llm import MockTransport
from featforge.memory import Decision, MemoryPool
from featforge.pipeline import FeatureSet, token_sequence
from featforge.search import (SearchConfig, ablation_config, export, provenance, read_trace, rng_streams, run,
                              run_ablation, write_trace)


@pytest.fixture(scope="module")
def small():
    return synthetic.interaction_linear(n=200, seed=0)


@pytest.fixture(scope="module")
def small_run(small):
    return run(small, SearchConfig(iterations=4, steps=6, seed=3))


def test_record_budget(small_run):
    recs = small_run.records
    assert len(recs) == 4 * 6 + 1
    assert recs[0].is_baseline and recs[0].iteration == -1
    assert [(r.iteration, r.step) for r in recs[1:]] == [(i, j) for i in range(4) for j in range(6)]
    assert small_run.stats["records"] == 25 and len(small_run.pool) == 25


def test_restart_semantics(small, small_run):
    f0 = token_sequence(FeatureSet.initial(small))
    recs = small_run.records
    for i in range(4):
        first = recs[1 + 6 * i]
        # step 0 starts from F0: the state describes the raw set and no previous decision
        assert first.state[0] == 1.0 and first.state[9] == 0.0 and first.state[11] == -1.0
        if first.noop:
            assert first.tokens == f0


def test_monotone_best_and_result(small_run):
    best = -np.inf
    for r in small_run.records:
        best = max(best, r.score)
    assert small_run.best_report.primary == pytest.approx(best)
    assert small_run.best_report.primary >= small_run.baseline_report.primary
    running = np.maximum.accumulate([r.score for r in small_run.records])
    assert np.all(np.diff(running) >= 0)


def test_behavior_probs_and_states(small_run):
    for r in small_run.records[1:]:
        assert r.behavior_prob == 0.5 and len(r.state) == 12 and all(np.isfinite(r.state))
        assert r.decision in (Decision.GENERATE, Decision.SELECT)


def test_single_step_deterministic(small, tmp_path):
    cfg = SearchConfig(iterations=1, steps=1, seed=11)
    a, b = run(small, cfg), run(small, cfg)
    write_trace(a.records, tmp_path / "a.jsonl")
    write_trace(b.records, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert len(a.records) == 2


def test_trace_round_trip(small_run, tmp_path):
    write_trace(small_run.records, tmp_path / "t.jsonl")
    back = read_trace(tmp_path / "t.jsonl")
    assert back == small_run.records
    assert all("wall_time" not in line for line in (tmp_path / "t.jsonl").read_text().splitlines())


def test_no_router_matches_uniform_draws(small):
    res = run_ablation(small, SearchConfig(iterations=3, steps=6, seed=5, router="ppo"), "no_router")
    rng = rng_streams(5)["router"]
    expected = [Decision.GENERATE if rng.random() < 0.5 else Decision.SELECT for _ in range(18)]
    assert [r.decision for r in res.records[1:]] == expected


def test_no_rl_uses_untrained_policy(small):
    a = run_ablation(small, SearchConfig(iterations=2, steps=6, seed=5), "no_rl")
    b = run_ablation(small, SearchConfig(iterations=2, steps=6, seed=5), "no_router")
    assert [r.decision for r in a.records] == [r.decision for r in b.records]
    cfg, untrained = ablation_config(SearchConfig(), "no_rl")
    assert cfg.router == "ppo" and untrained
    with pytest.raises(ValueError):
        ablation_config(SearchConfig(), "bogus")


def table_names(bundle):
    """Live feature names listed in a prompt's feature table."""
    lines = bundle.user.split("\n\n")[1].splitlines()[2:]
    return [ln.split(" | ")[0] for ln in lines]


def _llm_script():
    def gen(bundle):
        return '{"new_features": ["x1 x2 *"], "reason": "interaction"}'

    def fallback(role, i, bundle):
        if role == "router":
            return '{"decision": "%s"}' % ("generation" if i % 2 == 0 else "selection")
        if role == "generator":
            return '{"new_features": ["x%d sin"]}' % (i % 5 + 1)
        return '{"drop": ["%s"]}' % table_names(bundle)[-1]

    return {"generator": [gen]}, fallback


def test_memory_flags_in_prompts(small):
    script, fallback = _llm_script()
    for variant, marker in (("no_long", "High-scoring"), ("no_short", "Recent steps")):
        res = run_ablation(small, SearchConfig(iterations=2, steps=6, seed=1, router="llm", agents="llm"), variant,
                           transport=MockTransport(script, fallback))
        prompts = [info["prompt"]["user"] for r in res.records[1:] for info in (r.llm or {}).values()
                   if "prompt" in info]
        assert prompts and not any(marker in p for p in prompts)
        assert res.stats["fallbacks"] == 0
    res = run(small, SearchConfig(iterations=2, steps=6, seed=1, router="llm", agents="llm"),
              transport=MockTransport(script, fallback))
    prompts = [info["prompt"]["user"] for r in res.records[1:] for info in (r.llm or {}).values()]
    assert any("High-scoring" in p for p in prompts) and any("Recent steps" in p for p in prompts)


def test_selector_floor_records_noop():
    f = synthetic.interaction(n=120, d=2, seed=0)
    res = run(f, SearchConfig(iterations=2, steps=6, seed=0, min_features=2))
    sel = [r for r in res.records[1:] if r.decision is Decision.SELECT]
    assert sel and all(r.noop for r in sel if r.tokens == "x1, x2")
    for r in res.records[1:]:
        if r.noop:
            prev = res.records[res.records.index(r) - 1]
            if r.step > 0:
                assert r.score == prev.score


def test_provenance_raw_set(small):
    p = provenance(FeatureSet.initial(small))
    assert p["counts"] == {"kept": 5, "dropped": 0, "generated": 0, "total": 5}


def test_export_round_trip(small_run, small, tmp_path):
    paths = export(small_run, small, tmp_path)
    report = json.loads(paths["provenance"].read_text())
    assert report["counts"] == provenance(small_run.best_set)["counts"]
    for g in report["generated"]:
        assert set(g) == {"name", "postfix", "infix"}
    reloaded = load_csv(paths["csv"], "target", "regr")
    assert list(reloaded.names) == small_run.best_set.live_names
    score = Evaluator(reloaded, "rf", 5, 3).evaluate(FeatureSet.initial(reloaded, min_features=1)).primary
    assert score == pytest.approx(small_run.best_report.primary, abs=1e-12)


def test_export_classification_labels(tmp_path):
    f = synthetic.noisy_classification(n=120, seed=0)
    res = run(f, SearchConfig(iterations=1, steps=3, seed=0))
    paths = export(res, f, tmp_path)
    back = load_csv(paths["csv"], "target", "class")
    # codes follow first appearance, so compare the label strings
    assert [back.labels[c] for c in back.target] == [f.labels[c] for c in f.target]


def test_preload_pool(small, small_run):
    prior = small_run.pool.relabeled(100)
    res = run(small, SearchConfig(iterations=1, steps=2, seed=0), preload=prior)
    assert len(res.pool) == len(prior) + 3
    assert isinstance(res.pool, MemoryPool)


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(iterations=0)
    with pytest.raises(ValueError):
        SearchConfig(router="random")
    assert SearchConfig().to_json()["llm"]["max_retries"] == 3
