"""The restart search: m iterations of n router-gated actions, each scored and logged."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents import (HeuristicGenerator, HeuristicSelector, LlmGenerator, LlmRouter, LlmSelector,
                     PolicyRouter, UniformRouter, build_context, summarize)
from .data import Frame, write_csv
from .errors import NoValidAction
from .evaluation import Evaluator, ScoreReport
from .expr import render_infix, render_postfix
from .llm import LlmClient, LlmConfig
from .memory import BASELINE_ITERATION, ActionRecord, Decision, MemoryPool
from .pipeline import FeatureSet, apply_generation, apply_selection, token_sequence
from .rl import PolicyNet, SearchProgress, featurize, load_policy

log = logging.getLogger(__name__)

ROUTER_MODES = ("ppo", "llm", "uniform")
AGENT_MODES = ("heuristic", "llm")
VARIANTS = ("full", "no_rl", "no_router", "no_long", "no_short")


@dataclass(frozen=True)
class SearchConfig:
    iterations: int = 30
    steps: int = 6
    router: str = "uniform"
    agents: str = "heuristic"
    use_long_memory: bool = True
    use_short_memory: bool = True
    seed: int = 0
    model: str = "rf"
    folds: int = 5
    min_features: int = 2
    max_feature_factor: int = 4
    max_depth: int = 4
    max_tokens: int = 25
    top_size: int = 20
    demos: int = 4
    drop_rate: float = 0.1
    candidates: int = 8
    policy: str | None = None
    llm: LlmConfig = field(default_factory=LlmConfig)
    record_prompts: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.steps < 1:
            raise ValueError("iterations and steps must be >= 1")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.router not in ROUTER_MODES:
            raise ValueError(f"router must be one of {ROUTER_MODES}, got {self.router!r}")
        if self.agents not in AGENT_MODES:
            raise ValueError(f"agents must be one of {AGENT_MODES}, got {self.agents!r}")

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "llm"}
        out["llm"] = dict(self.llm.__dict__)
        return out


@dataclass
class SearchResult:
    best_set: FeatureSet
    best_report: ScoreReport
    baseline_report: ScoreReport
    pool: MemoryPool
    records: list[ActionRecord]
    stats: dict

    @property
    def best_record(self) -> ActionRecord:
        return MemoryPool(self.records).best()

    def summary(self) -> dict:
        best = self.best_record
        return {
            "baseline": self.baseline_report.to_json(),
            "best": self.best_report.to_json(),
            "improvement": self.best_report.primary - self.baseline_report.primary,
            "best_record": [best.iteration, best.step],
            "best_set": self.best_set.to_json(),
            "provenance": provenance(self.best_set),
            "stats": self.stats,
        }


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for the router, generator, selector and memory sampling."""
    children = np.random.SeedSequence(seed).spawn(4)
    return {name: np.random.default_rng(s)
            for name, s in zip(("router", "generator", "selector", "memory"), children)}


def _make_agents(config: SearchConfig, policy, client):
    if config.router == "uniform":
        router = UniformRouter()
    elif config.router == "ppo":
        if policy is None:
            policy = load_policy(config.policy) if config.policy else PolicyNet(seed=config.seed)
        router = PolicyRouter(policy)
    else:
        router = LlmRouter(client, record_prompts=config.record_prompts)
    generator = HeuristicGenerator(n_candidates=config.candidates)
    selector = HeuristicSelector(rate=config.drop_rate)
    if config.agents == "llm":
        generator = LlmGenerator(client, generator, config.record_prompts)
        selector = LlmSelector(client, selector, config.record_prompts)
    return router, generator, selector


def _detail(decision: Decision, action, outcome) -> str:
    if decision is Decision.GENERATE:
        text = "add " + "; ".join(render_postfix(e) for e in action.exprs)
        skipped = outcome.duplicates + outcome.constants + outcome.truncated
        if skipped:
            text += f" ({len(outcome.accepted)} accepted)"
        return text
    return "drop " + ", ".join(outcome.dropped)


def run(frame: Frame, config: SearchConfig | None = None, *, policy=None, transport=None,
        client: LlmClient | None = None, preload: MemoryPool | None = None, sleep=None) -> SearchResult:
    """Run the full m x n search and return the best feature set found."""
    config = config or SearchConfig()
    started = time.perf_counter()
    needs_llm = config.router == "llm" or config.agents == "llm"
    if needs_llm and client is None:
        kwargs = {"sleep": sleep} if sleep is not None else {}
        client = LlmClient(config.llm, transport, seed=config.seed, **kwargs)
    router, generator, selector = _make_agents(config, policy, client)
    rngs = rng_streams(config.seed)
    evaluator = Evaluator(frame, config.model, config.folds, config.seed)

    f0 = FeatureSet.initial(frame, min_features=config.min_features,
                            max_features=config.max_feature_factor * len(frame.names),
                            max_depth=config.max_depth, max_tokens=config.max_tokens)
    base_report = evaluator.evaluate(f0)
    pool = MemoryPool(preload.records if preload is not None else (), config.top_size, config.demos)
    baseline = ActionRecord(BASELINE_ITERATION, 0, None, "baseline", token_sequence(f0),
                            base_report.primary, base_report.secondary, feature_set=f0.to_json())
    pool = pool.append(baseline)
    records = [baseline]
    best_score = base_report.primary
    summaries0 = summarize(frame, f0)
    counts = {"noops": 0, "fallbacks": 0}

    for i in range(config.iterations):
        fs, report, summaries = f0, base_report, summaries0
        prev_score = None
        last_decision = None
        for j in range(config.steps):
            progress = SearchProgress(i, j, config.iterations, config.steps, best_score, prev_score,
                                      last_decision)
            state = featurize(frame, fs, progress, report)
            demos = pool.long_term_sample(rngs["memory"]) if config.use_long_memory else []
            common = dict(demos=demos, remaining_steps=config.steps - j, state=state,
                          importances=evaluator.importances(fs), use_short=config.use_short_memory,
                          use_long=config.use_long_memory, token_budget=config.llm.prompt_budget,
                          summaries=summaries)
            router_ctx = build_context(frame, fs, short_term=pool.short_term(i), **common)
            decision, prob = router.route(state, rngs["router"], router_ctx)
            llm_info = {}
            if router.last:
                llm_info["router"] = router.last
            fallback = bool(router.last and router.last.get("fallback"))

            agent = generator if decision is Decision.GENERATE else selector
            ctx = build_context(frame, fs, short_term=pool.short_term(i, decision), **common)
            notes: list[str] = []
            new_fs, noop = fs, False
            try:
                if decision is Decision.GENERATE:
                    action = agent.generate(ctx, rngs["generator"])
                    new_fs, outcome = apply_generation(fs, action, frame)
                    changed = bool(outcome.accepted)
                else:
                    action = agent.select(ctx, rngs["selector"])
                    new_fs, outcome = apply_selection(fs, action)
                    changed = bool(outcome.dropped)
                detail = _detail(decision, action, outcome)
                notes += outcome.warnings
                if not changed:
                    noop = True
                    new_fs = fs
            except NoValidAction as exc:
                noop = True
                detail = f"no-op: {exc}"
            if agent.last:
                llm_info[agent.last["role"]] = agent.last
                fallback = fallback or bool(agent.last.get("fallback"))

            new_report = report if noop else evaluator.evaluate(new_fs)
            record = ActionRecord(
                i, j, decision, detail, token_sequence(new_fs), new_report.primary, new_report.secondary,
                state=tuple(state), behavior_prob=prob, feature_set=new_fs.to_json(), noop=noop,
                fallback=fallback, notes=tuple(notes), llm=llm_info or None,
            )
            pool = pool.append(record)
            records.append(record)
            counts["noops"] += noop
            counts["fallbacks"] += fallback

            prev_score = report.primary
            if new_fs is not fs:
                summaries = summarize(frame, new_fs)
            fs, report, last_decision = new_fs, new_report, decision
            best_score = max(best_score, report.primary)

    best = MemoryPool(records).best()
    best_set = FeatureSet.from_json(best.feature_set, min_features=config.min_features,
                                    max_features=f0.max_features, max_depth=config.max_depth,
                                    max_tokens=config.max_tokens)
    best_report = evaluator.evaluate(best_set)
    stats = {
        "records": len(records),
        "evaluations": evaluator.evaluations,
        "cache_hits": evaluator.cache_hits,
        "noops": counts["noops"],
        "fallbacks": counts["fallbacks"],
        "llm": client.usage.to_json() if client is not None else None,
        "wall_time": time.perf_counter() - started,
    }
    return SearchResult(best_set, best_report, base_report, pool, records, stats)


def ablation_config(config: SearchConfig, variant: str) -> tuple[SearchConfig, bool]:
    """Config for ``variant``; the flag says whether an untrained policy must be used."""
    if variant == "full":
        return config, False
    if variant == "no_rl":
        return replace(config, router="ppo", policy=None), True
    if variant == "no_router":
        return replace(config, router="uniform"), False
    if variant == "no_long":
        return replace(config, use_long_memory=False), False
    if variant == "no_short":
        return replace(config, use_short_memory=False), False
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def run_ablation(frame: Frame, config: SearchConfig, variant: str, **kwargs) -> SearchResult:
    cfg, untrained = ablation_config(config, variant)
    if untrained:
        kwargs["policy"] = PolicyNet(seed=cfg.seed)
    return run(frame, cfg, **kwargs)


def write_trace(records, path) -> None:
    """JSON lines, one record per line, keys sorted; no timing fields."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.dumps() + "\n")


def read_trace(path) -> list[ActionRecord]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ActionRecord.from_json(json.loads(line)))
    return out


def provenance(best: FeatureSet) -> dict:
    """Which originals survived, which were dropped, and what was generated."""
    n_base = len(best.base)
    kept = [b for b, m in zip(best.base, best.mask[:n_base]) if m]
    dropped = [b for b, m in zip(best.base, best.mask[:n_base]) if not m]
    generated = [{"name": e.name, "postfix": render_postfix(e), "infix": render_infix(e)}
                 for e, m in zip(best.derived, best.mask[n_base:]) if m]
    return {
        "kept_originals": kept,
        "dropped_originals": dropped,
        "generated": generated,
        "counts": {"kept": len(kept), "dropped": len(dropped), "generated": len(generated),
                   "total": len(kept) + len(generated)},
    }


def export(result: SearchResult, frame: Frame, path) -> dict[str, Path]:
    """Write the augmented CSV and provenance report into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    fs = result.best_set
    X = fs.materialize(frame)
    columns = {name: X[:, j] for j, name in enumerate(fs.live_names)}
    target = frame.target
    if frame.labels and frame.task.value == "class":
        target = np.array([frame.labels[int(c)] for c in target], dtype=object)
    csv_path = out / "augmented.csv"
    write_csv(csv_path, columns, target)
    report = provenance(fs)
    report["baseline_score"] = result.baseline_report.primary
    report["best_score"] = result.best_report.primary
    prov_path = out / "provenance.json"
    prov_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"csv": csv_path, "provenance": prov_path}
