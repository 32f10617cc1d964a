"""Non-LLM agents: uniform and policy routers, correlation-guided generator,
importance-guided selector."""

from __future__ import annotations

import math

import numpy as np

from ..data import target_correlation
from ..errors import ExpressionError, NoValidAction
from ..expr import OPERATORS, FeatureExpr, check_caps, compose, evaluate
from ..memory import Decision
from ..pipeline import CONSTANT_STD, FeatureSet, GenerationAction, SelectionAction

PROB_FLOOR = 1e-9


class UniformRouter:
    """Coin flip; the behavior probability is always 0.5."""

    last: dict | None = None

    def route(self, state, rng: np.random.Generator, ctx=None) -> tuple[Decision, float]:
        decision = Decision.GENERATE if rng.random() < 0.5 else Decision.SELECT
        self.last = None
        return decision, 0.5


class PolicyRouter:
    """Samples the decision from a policy network's softmax."""

    last: dict | None = None

    def __init__(self, policy):
        self.policy = policy

    def route(self, state, rng: np.random.Generator, ctx=None) -> tuple[Decision, float]:
        p = self.policy.probs(np.asarray(state, dtype=np.float64))[0]
        action = 0 if rng.random() < p[0] else 1
        prob = float(np.clip(p[action], PROB_FLOOR, 1.0 - PROB_FLOOR))
        self.last = None
        return Decision.from_code(action), prob


def _columns(ctx, exprs):
    return [evaluate(e, ctx.frame.columns) for e in exprs]


def demo_expressions(demos, base) -> list[FeatureExpr]:
    """Live derived expressions of the feature sets stored in ``demos``."""
    out = []
    for record in demos:
        fs = record.feature_set
        if not fs or list(fs.get("base", [])) != list(base):
            continue
        try:
            restored = FeatureSet.from_json(fs)
        except (ExpressionError, KeyError, ValueError):
            continue
        out.extend(e for e in restored.live if not e.is_base)
    return out


class HeuristicGenerator:
    """Crosses live features, favoring operands correlated with the target.

    Draws ``n_candidates`` random compositions (operands weighted by
    ``|corr| + 0.05``, operators uniform), adds any unseen derived
    expressions from the memory demos, ranks them by ``|corr(new, y)|``
    and returns the top 1-3.
    """

    last: dict | None = None

    def __init__(self, n_candidates: int = 8, operators=OPERATORS, max_attempts: int = 64):
        self.n_candidates = n_candidates
        self.operators = operators
        self.max_attempts = max_attempts

    def candidates(self, ctx, rng: np.random.Generator) -> list[FeatureExpr]:
        fs = ctx.feature_set
        live = ctx.live
        if not live:
            raise NoValidAction("no live features to combine")
        weights = ctx.target_corr() + 0.05
        weights = weights / weights.sum()
        ops = list(self.operators) if len(live) >= 2 else self.operators.unary
        seen = fs.live_keys()
        out: list[FeatureExpr] = []
        for _ in range(self.max_attempts):
            if len(out) >= self.n_candidates:
                break
            op = ops[int(rng.integers(len(ops)))]
            idx = rng.choice(len(live), size=op.arity, replace=False, p=weights)
            expr = compose(op.kind, *(live[i] for i in idx), operators=self.operators)
            try:
                check_caps(expr, fs.max_depth, fs.max_tokens)
            except ExpressionError:
                continue
            if expr.key in seen:
                continue
            seen.add(expr.key)
            out.append(expr)
        for expr in demo_expressions(ctx.demos, fs.base):
            if expr.key not in seen:
                seen.add(expr.key)
                out.append(expr)
        return out

    def rank(self, ctx, exprs) -> list[tuple[float, FeatureExpr]]:
        """(proxy, expr) pairs, best first; constant columns are discarded."""
        if not exprs:
            return []
        X = np.column_stack(_columns(ctx, exprs))
        with np.errstate(over="ignore", invalid="ignore"):
            ok = np.all(np.isfinite(X), axis=0) & (np.std(X, axis=0) >= CONSTANT_STD)
        proxy = target_correlation(X, ctx.frame.target)
        scored = [(-float(proxy[i]), i, e) for i, e in enumerate(exprs) if ok[i]]
        scored.sort(key=lambda t: (t[0], t[1]))
        return [(-p, e) for p, _, e in scored]

    def generate(self, ctx, rng: np.random.Generator) -> GenerationAction:
        ranked = self.rank(ctx, self.candidates(ctx, rng))
        if not ranked:
            raise NoValidAction("every candidate expression was a duplicate or constant")
        count = int(rng.integers(1, 4))
        self.last = None
        return GenerationAction(tuple(e for _, e in ranked[:count]))


class HeuristicSelector:
    """Drops the least important ``ceil(rate * live)`` features.

    Importance comes from the forest fit on the current set when the
    evaluator has it, otherwise from ``|corr(feature, y)|``.
    """

    last: dict | None = None

    def __init__(self, rate: float = 0.1):
        self.rate = rate

    def select(self, ctx, rng: np.random.Generator | None = None) -> SelectionAction:
        names = ctx.live_names
        allowed = len(names) - ctx.min_features
        if allowed <= 0:
            raise NoValidAction(f"{len(names)} live features, floor is {ctx.min_features}")
        n_drop = min(max(math.ceil(self.rate * len(names)), 1), allowed)
        imp = ctx.importances
        if imp is None or any(n not in imp for n in names):
            scores = ctx.target_corr()
        else:
            scores = np.array([imp[n] for n in names])
        order = sorted(range(len(names)), key=lambda i: (scores[i], i))
        self.last = None
        return SelectionAction(tuple(names[i] for i in order[:n_drop]))


def route(router, state, rng, ctx=None):
    return router.route(state, rng, ctx)


def generate(agent, ctx, rng):
    return agent.generate(ctx, rng)


def select(agent, ctx, rng=None):
    return agent.select(ctx, rng)
