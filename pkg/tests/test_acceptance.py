"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed together in the
pytest terminal summary (see conftest.py).  Run standalone with
``python3 tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest

from conftest import random_expr
from featforge import synthetic
from featforge.errors import RateLimited
from featforge.evaluation import evaluate
from featforge.expr import OPERATORS, FeatureExpr, Token, evaluate as eval_expr, parse_expression, parse_postfix, render_postfix
from featforge.llm import LlmConfig, MockTransport
from featforge.memory import ActionRecord, Decision, MemoryPool
from featforge.pipeline import FeatureSet, GenerationAction, apply_generation
from featforge.rl import PolicyNet, PPOConfig, bandit_accuracy, collect, ppo_update, surrogate, synthetic_bandit
from featforge.search import SearchConfig, export, provenance, run, write_trace
from test_expr import STRESS, build_tree, eval_tree

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_c01_expression_engine():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    schema = ["f1", "f2", "f3", "f4", "f5"]
    cols = {k: rng.standard_normal(64) * 10 for k in schema}
    cols["f2"][:8] = 0.0
    round_trip = exact = 0
    for _ in range(1000):
        e = random_expr(rng, schema)
        text = render_postfix(e)
        back = parse_expression(text, schema)
        round_trip += back.tokens == e.tokens and render_postfix(back) == text
        exact += np.array_equal(eval_expr(e, cols), eval_tree(build_tree(e.tokens), cols))
    seq = parse_postfix("f1 f2 *, f3 sin, f4 f5 -", schema)
    elapsed = time.perf_counter() - t0
    ok = round_trip == 1000 and exact == 1000 and len(seq) == 3 and elapsed < 5.0
    report(1, ok, f"round-trip {round_trip}/1000, oracle bit-exact {exact}/1000, "
                  f"sequence -> {len(seq)} exprs, {elapsed:.2f}s (< 5s)")


def test_c02_guard_totality():
    failures = []
    for op in OPERATORS:
        if op.arity == 1:
            expr = FeatureExpr((Token.feature("a"), Token.op(op.kind)))
            out = eval_expr(expr, {"a": STRESS})
        else:
            a, b = np.meshgrid(STRESS, STRESS)
            expr = FeatureExpr((Token.feature("a"), Token.feature("b"), Token.op(op.kind)))
            out = eval_expr(expr, {"a": a.ravel(), "b": b.ravel()})
        if not np.all(np.isfinite(out)):
            failures.append(op.kind)
    report(2, not failures, f"{len(OPERATORS) - len(failures)}/{len(OPERATORS)} operators finite on a "
                            f"{STRESS.size}-point grid (0, negatives, +/-1e12, +/-1e300, float max)")


def test_c03_evaluator_sanity():
    t0 = time.perf_counter()
    f = synthetic.interaction(n=1000, noise=0.1, seed=0)
    raw = evaluate(f, FeatureSet.initial(f), "rf", seed=0).secondary
    fs, _ = apply_generation(FeatureSet.initial(f), GenerationAction((parse_expression("x1 x2 *", f.names),)), f)
    aug = evaluate(f, fs, "rf", seed=0).secondary
    elapsed = time.perf_counter() - t0
    report(3, aug - raw >= 0.05 and elapsed < 60,
           f"R2 {raw:.3f} -> {aug:.3f} with x1*x2 (delta {aug - raw:+.3f} >= 0.05), {elapsed:.1f}s (< 60s)")


def test_c04_end_to_end_improvement():
    t0 = time.perf_counter()
    f = synthetic.interaction(n=1000, noise=0.1, seed=0)
    deltas = []
    for seed in range(10):
        res = run(f, SearchConfig(iterations=10, steps=6, router="uniform", agents="heuristic", seed=seed))
        deltas.append(res.best_report.secondary - res.baseline_report.secondary)
    hits = sum(d >= 0.02 for d in deltas)
    elapsed = time.perf_counter() - t0
    report(4, hits >= 9 and elapsed < 300,
           f"{hits}/10 seeds improve R2 by >= 0.02 (min {min(deltas):+.3f}), {elapsed:.0f}s (< 300s)")


def test_c05_budget_exactness():
    f = synthetic.interaction(n=200, seed=1)
    res = run(f, SearchConfig(iterations=30, steps=6, seed=0))
    actions = sum(r.decision is not None for r in res.records)
    baseline = sum(r.is_baseline for r in res.records)
    report(5, actions == 180 and baseline == 1 and len(res.records) == 181,
           f"{actions} action records + {baseline} baseline record")


def test_c06_memory_distribution():
    r = np.random.default_rng(6)
    scores = r.random(60)
    pool = MemoryPool([ActionRecord(k // 6, k % 6, Decision.GENERATE, "x", "t", float(s))
                       for k, s in enumerate(scores)])
    top = {r_.key for r_ in pool.top()}
    counts = dict.fromkeys(top, 0)
    rng = np.random.default_rng(0)
    draws = 10_000
    for _ in range(draws):
        for rec in pool.long_term_sample(rng):
            counts[rec.key] += 1
    expected = draws * pool.demos / len(top)
    worst = max(abs(c - expected) / expected for c in counts.values())
    ok = len(top) == 20 and all(c > 0 for c in counts.values()) and worst <= 0.2
    report(6, ok, f"{sum(c > 0 for c in counts.values())}/20 members drawn, "
                  f"max deviation {worst:.1%} of expectation (<= 20%)")


def test_c07_ppo_correctness():
    t0 = time.perf_counter()
    r = np.random.default_rng(0)
    pol = PolicyNet(seed=0)
    pol.params["W2"] = r.normal(0, 0.5, pol.params["W2"].shape)
    S, A, B, adv = r.standard_normal((20, 12)), r.integers(0, 2, 20), np.full(20, 0.5), r.standard_normal(20)
    _, g = surrogate(pol, S, A, B, adv)
    analytic = np.concatenate([g[k].ravel() for k in ("W1", "b1", "W2", "b2")])
    theta, h = pol.flat(), 1e-5
    numeric = np.empty_like(theta)
    probe = pol.copy()
    for i in range(theta.size):
        t = theta.copy()
        t[i] += h
        probe.set_flat(t)
        up = surrogate(probe, S, A, B, adv)[0]
        t[i] -= 2 * h
        probe.set_flat(t)
        numeric[i] = (up - surrogate(probe, S, A, B, adv)[0]) / (2 * h)
    rel = float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)))
    trained, rep = ppo_update(PolicyNet(seed=0), synthetic_bandit(400, np.random.default_rng(1)), PPOConfig(),
                              np.random.default_rng(0))
    acc = bandit_accuracy(trained, 2000, np.random.default_rng(2))
    elapsed = time.perf_counter() - t0
    report(7, rel < 1e-4 and acc >= 0.9 and len(rep.epoch_objective) == 5 and elapsed < 30,
           f"max rel grad error {rel:.2e} (< 1e-4), bandit accuracy {acc:.3f} (>= 0.9, 400 samples, "
           f"5 epochs), {elapsed:.1f}s (< 30s)")


def _router_corpus(min_samples=400, iterations=10, steps=6):
    """Uniform-routing collection runs on suite seeds 100, 101, ... until enough samples."""
    samples, seed = [], 100
    while len(samples) < min_samples:
        for f in synthetic.suite(seed=seed):
            res = run(f, SearchConfig(iterations=iterations, steps=steps, seed=seed))
            samples += collect(res.records, group=f"{f.name}-{seed}")
        seed += 1
    return samples


def test_c08_ablation_direction():
    samples = _router_corpus()
    policy, rep = ppo_update(PolicyNet(seed=0), samples, PPOConfig(), np.random.default_rng(0))
    wins, rows = 0, []
    for seed in range(10):
        full, base = [], []
        for f in synthetic.suite(seed=seed):
            cfg = SearchConfig(iterations=10, steps=6, seed=seed)
            full.append(run(f, SearchConfig(**{**cfg.__dict__, "router": "ppo"}), policy=policy).best_report.primary)
            base.append(run(f, cfg).best_report.primary)
        wins += np.mean(full) > np.mean(base)
        rows.append(np.mean(full) - np.mean(base))
    report(8, wins >= 7, f"trained router beats no_router on {wins}/10 paired seeds (>= 7); "
                         f"{len(samples)} training samples, G share after training "
                         f"{rep.action_share_after:.2f}, mean paired delta {np.mean(rows):+.4f}")


def _scripted_transport():
    def fallback(role, i, bundle):
        if role == "router":
            return '{"decision": "%s", "reason": "alternate"}' % ("generation" if i % 3 != 2 else "selection")
        if role == "generator":
            pairs = ["x1 x2 *", "x1 x3 +", "x2 sin", "x4 square", "x1 x2 * tanh", "x3 x5 -"]
            return '{"new_features": ["%s"], "reason": "try"}' % pairs[i % len(pairs)]
        table = bundle.user.split("\n\n")[1].splitlines()[2:]
        return '{"drop": ["%s"], "reason": "weakest"}' % table[-1].split(" | ")[0]

    return fallback


def test_c09_determinism(tmp_path):
    f = synthetic.interaction_linear(n=300, seed=9)
    same = []
    for label, cfg, kw in [
        ("heuristic", SearchConfig(iterations=5, steps=6, seed=9), lambda: {}),
        ("mock", SearchConfig(iterations=3, steps=6, seed=9, router="llm", agents="llm"),
         lambda: {"transport": MockTransport({}, _scripted_transport()), "sleep": lambda s: None}),
    ]:
        paths = []
        for k in range(2):
            res = run(f, cfg, **kw())
            p = tmp_path / f"{label}{k}.jsonl"
            write_trace(res.records, p)
            paths.append(p)
        same.append(paths[0].read_bytes() == paths[1].read_bytes())
    report(9, all(same), f"byte-identical traces: heuristic {same[0]}, mock LLM {same[1]}")


def test_c10_selector_efficacy():
    fractions = []
    for seed in range(10):
        f = synthetic.noisy_classification(n=600, seed=seed)
        res = run(f, SearchConfig(iterations=30, steps=6, seed=seed))
        dropped = provenance(res.best_set)["dropped_originals"]
        if not dropped:
            # best set kept every original: judge the selector by all its drops
            dropped = [name for r in res.records if r.decision is Decision.SELECT and not r.noop
                       for name in r.detail[len("drop "):].split(", ") if name in f.names]
        noise = [name for name in dropped if int(name[1:]) > 5]
        fractions.append(len(noise) / len(dropped) if dropped else 0.0)
    med = float(np.median(fractions))
    report(10, med >= 0.5, f"median noise share of dropped originals {med:.2f} (>= 0.5); "
                           f"per seed {[round(x, 2) for x in fractions]}")


def test_c11_mocked_llm_loop(tmp_path):
    f = synthetic.interaction(n=300, seed=11)
    cfg = SearchConfig(iterations=3, steps=6, seed=11, router="llm", agents="llm")
    clean = run(f, cfg, transport=MockTransport({}, _scripted_transport()), sleep=lambda s: None)
    paths = export(clean, f, tmp_path / "clean")
    prov = json.loads(paths["provenance"].read_text())
    prov_ok = (prov["counts"]["total"] == len(clean.best_set.live_names)
               and all(set(g) == {"name", "postfix", "infix"} for g in prov["generated"]))

    faulty_cfg = SearchConfig(**{**cfg.__dict__, "llm": LlmConfig(max_retries=2)})
    script = {"router": [RateLimited("429"), RateLimited("429"), "this is not json"]}
    faulty = run(f, faulty_cfg, transport=MockTransport(script, _scripted_transport()), sleep=lambda s: None)
    flagged = [r for r in faulty.records if r.fallback]
    ok = (len(clean.records) == 19 and clean.stats["fallbacks"] == 0 and prov_ok
          and len(faulty.records) == 19 and len(flagged) == 1 and flagged[0].key == (0, 0))
    report(11, ok, f"scripted run: {len(clean.records) - 1} actions, {clean.stats['fallbacks']} fallbacks, "
                   f"provenance valid {prov_ok}; fault-injected run: {len(flagged)} fallback record flagged")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-s"]))
