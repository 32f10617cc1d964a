"""Command-line entry point: run a search, train the router, inspect traces."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import platform
import sys
from collections import Counter
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_csv
from .errors import DataError, FeatForgeError, TooFewSamples
from .llm import LlmConfig
from .memory import Decision
from .pipeline import FeatureSet
from .rl import (PPOConfig, PolicyNet, bandit_accuracy, collect, ppo_update, save_policy,
                 synthetic_bandit, training_report_json)
from .search import AGENT_MODES, ROUTER_MODES, SearchConfig, provenance, read_trace, run, write_trace

log = logging.getLogger("featforge")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3
MIN_TRAIN_SAMPLES = 100


class ConfigError(Exception):
    pass


# Config file keys (section [search] and [llm]) mapped to SearchConfig fields.
_SEARCH_KEYS = {
    "iterations": int, "steps": int, "router": str, "agents": str, "use_long_memory": bool,
    "use_short_memory": bool, "seed": int, "model": str, "folds": int, "min_features": int,
    "policy": str, "drop_rate": float, "candidates": int,
}
_LLM_KEYS = {"endpoint": str, "model": str, "temperature": float, "max_tokens": int,
             "timeout": float, "max_retries": int, "prompt_budget": int}


def _coerce(kind, raw: str):
    raw = raw.strip().strip('"').strip("'")
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {kind.__name__}") from None


def read_config(path) -> tuple[dict, dict]:
    """Read ``key = value`` pairs from [search] and [llm] sections."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    search, llm = {}, {}
    for section, keys, out in (("search", _SEARCH_KEYS, search), ("llm", _LLM_KEYS, llm)):
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            out[key] = _coerce(keys[key], raw)
    unknown = set(parser.sections()) - {"search", "llm"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    return search, llm


def build_config(args) -> SearchConfig:
    """Flags override the config file, which overrides defaults."""
    search, llm = read_config(args.config) if args.config else ({}, {})
    flag_map = {
        "iterations": args.iterations, "steps": args.steps, "router": args.router,
        "agents": args.agents, "seed": args.seed, "model": args.model, "folds": args.folds,
        "policy": args.policy,
    }
    search.update({k: v for k, v in flag_map.items() if v is not None})
    if args.no_long_memory:
        search["use_long_memory"] = False
    if args.no_short_memory:
        search["use_short_memory"] = False
    if args.endpoint is not None:
        llm["endpoint"] = args.endpoint
    if args.llm_model is not None:
        llm["model"] = args.llm_model
    try:
        return SearchConfig(llm=LlmConfig(**llm), **search)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _add_run_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--target", required=True, help="target column name or 0-based index")
    p.add_argument("--task", required=True, choices=["class", "regr"])
    p.add_argument("--out", default="featforge-run", help="output directory")
    p.add_argument("--config", help="INI-style config file with [search] and [llm] sections")
    p.add_argument("--router", choices=ROUTER_MODES)
    p.add_argument("--agents", choices=AGENT_MODES)
    p.add_argument("--policy", help="trained router policy file (router=ppo)")
    p.add_argument("--no-long-memory", action="store_true")
    p.add_argument("--no-short-memory", action="store_true")
    p.add_argument("--model", choices=["rf", "knn", "linear"])
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--endpoint")
    p.add_argument("--llm-model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featforge", description="Agentic feature augmentation search.")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_args(sub.add_parser("run", help="search for an augmented feature set"))

    p = sub.add_parser("train-router", help="train the router policy from logged traces")
    p.add_argument("--traces", nargs="*", default=[], help="trace files or directories of *.jsonl")
    p.add_argument("--out", default="policy.bin")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--self-test", action="store_true",
                   help="train on a synthetic bandit and check held-out accuracy")

    for name in ("inspect", "inspect-trace"):
        p = sub.add_parser(name, help="summarize a trace file")
        p.add_argument("trace")
    return parser


def _manifest(args, config: SearchConfig, frame, out: Path) -> dict:
    return {
        "command": "run",
        "config": config.to_json(),
        "dataset": {"path": str(args.data), "target": args.target, "task": args.task,
                    **frame.fingerprint()},
        "artifacts": {"trace": str(out / "trace.jsonl"), "result": str(out / "result.json"),
                      "manifest": str(out / "manifest.json")},
        "versions": {"featforge": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
        "started": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def cmd_run(args) -> int:
    try:
        config = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        frame = load_csv(args.data, args.target, args.task)
    except (DataError, OSError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    if config.folds > frame.n:
        print(f"config error: {config.folds} folds for {frame.n} rows", file=sys.stderr)
        return EXIT_CONFIG
    if config.router == "ppo" and config.policy and not Path(config.policy).exists():
        print(f"config error: policy file {config.policy} not found", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, config, frame, out)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    result = run(frame, config)
    write_trace(result.records, out / "trace.jsonl")
    summary = result.summary()
    (out / "result.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    base, best = result.baseline_report, result.best_report
    name = best.metric_names[0]
    print(f"baseline {name} {base.primary:.4f} -> best {best.primary:.4f} "
          f"({best.primary - base.primary:+.4f}); {summary['provenance']['counts']['generated']} generated, "
          f"{summary['provenance']['counts']['dropped']} originals dropped")
    print(f"artifacts in {out}")
    return EXIT_OK


def _trace_files(items) -> list[Path]:
    files = []
    for item in items:
        p = Path(item)
        files.extend(sorted(p.glob("**/*.jsonl")) if p.is_dir() else [p])
    return files


def cmd_train_router(args) -> int:
    overrides = {k: v for k, v in (("epochs", args.epochs), ("lr", args.lr), ("clip", args.clip))
                 if v is not None}
    try:
        ppo = PPOConfig(**overrides)
    except (TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rng = np.random.default_rng(args.seed)
    if args.self_test:
        samples = synthetic_bandit(400, rng)
    else:
        samples = []
        try:
            for path in _trace_files(args.traces):
                samples += collect(read_trace(path), group=str(path))
        except (OSError, ValueError, KeyError) as exc:
            print(f"data error: cannot read traces: {exc}", file=sys.stderr)
            return EXIT_DATA
        if len(samples) < MIN_TRAIN_SAMPLES:
            print(f"config error: {len(samples)} samples collected, need at least {MIN_TRAIN_SAMPLES}",
                  file=sys.stderr)
            return EXIT_CONFIG
    try:
        policy, report = ppo_update(PolicyNet(seed=args.seed), samples, ppo, rng)
    except TooFewSamples as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    save_policy(policy, out)
    report_path = out.with_suffix(".report.json")
    report_path.write_text(training_report_json(report) + "\n")
    print(f"trained on {len(samples)} samples for {ppo.epochs} epochs; policy -> {out}")
    if args.self_test:
        acc = bandit_accuracy(policy, 1000, np.random.default_rng(args.seed + 1))
        print(f"self-test held-out accuracy {acc:.3f} ({'pass' if acc >= 0.9 else 'FAIL'})")
        return EXIT_OK if acc >= 0.9 else EXIT_INTERNAL
    return EXIT_OK


def decision_shares(records) -> dict[str, float]:
    counts = Counter(r.decision for r in records if r.decision is not None)
    total = sum(counts.values())
    if not total:
        return {"G": 0.0, "S": 0.0}
    return {"G": 100.0 * counts[Decision.GENERATE] / total, "S": 100.0 * counts[Decision.SELECT] / total}


def cmd_inspect(args) -> int:
    path = Path(args.trace)
    try:
        records = read_trace(path)
    except FileNotFoundError:
        print(f"data error: trace {path} not found", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, TypeError) as exc:
        print(f"data error: malformed trace: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not records:
        print("no records")
        return EXIT_OK
    current = None
    for r in records:
        if r.iteration != current:
            current = r.iteration
            print("baseline" if r.is_baseline else f"iteration {r.iteration}")
        label = "-" if r.decision is None else r.decision.value
        flags = "".join([" [no-op]" if r.noop else "", " [fallback]" if r.fallback else ""])
        print(f"  step {r.step}: {label:<10} {r.detail} -> {r.score:.4f}{flags}")
    shares = decision_shares(records)
    print("\ndecision share")
    print(f"G {shares['G']:.0f}%")
    print(f"S {shares['S']:.0f}%")
    best = max(enumerate(records), key=lambda t: (t[1].score, -t[0]))[1]
    print(f"\nbest score {best.score:.4f} at iteration {best.iteration}, step {best.step}")
    if best.feature_set:
        prov = provenance(FeatureSet.from_json(best.feature_set))
        c = prov["counts"]
        print(f"kept {c['kept']} originals, dropped {c['dropped']}, generated {c['generated']}")
        if prov["dropped_originals"]:
            print("dropped: " + ", ".join(prov["dropped_originals"]))
        for g in prov["generated"]:
            print(f"  {g['name']} = {g['infix']}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "train-router": cmd_train_router,
                "inspect": cmd_inspect, "inspect-trace": cmd_inspect}
    try:
        return handlers[args.command](args)
    except FeatForgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to the internal-error exit code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
