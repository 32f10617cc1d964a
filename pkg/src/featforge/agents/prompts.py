"""Prompt construction and strict JSON reply parsing for the three agent roles."""

from __future__ import annotations

import json

from ..errors import ContextOverflow, ExpressionError, ParseFailure
from ..expr import parse_expression
from ..llm import PromptBundle
from ..memory import Decision
from ..pipeline import GenerationAction, SelectionAction
from ..rl import STATE_FIELDS

ROLES = ("router", "generator", "selector")

_SYSTEM = {
    "router": (
        "You plan a feature engineering search for a tabular prediction task. "
        "At every step you choose between feature generation (add new features by "
        "crossing existing ones with operators) and feature selection (remove redundant "
        "or irrelevant features). Aim for the feature set with the highest downstream score."
    ),
    "generator": (
        "You create new features for a tabular prediction task. Each new feature is a "
        "postfix expression over the original features, e.g. \"f1 f2 *\" or \"f3 sin\". "
        "Prefer informative, non-redundant combinations."
    ),
    "selector": (
        "You prune features for a tabular prediction task. Remove features that are "
        "redundant or carry little information about the target while keeping the "
        "informative ones."
    ),
}

_REPLY = {
    "router": 'Reply with one JSON object: {"decision": "generation" | "selection", "reason": "<one sentence>"}',
    "generator": (
        'Reply with one JSON object: {"new_features": ["<postfix expression>", ...], "reason": "<one sentence>"} '
        "with 1 to 3 expressions. Tokens are separated by single spaces. Operands are original feature "
        "names or names of current derived features."
    ),
    "selector": (
        'Reply with one JSON object: {"drop": ["<feature name>", ...], "reason": "<one sentence>"} '
        "naming current features only."
    ),
}


def _num(v: float) -> str:
    return f"{v:.4g}"


def _feature_table(ctx) -> list[str]:
    n_base = sum(not f.derived for f in ctx.features)
    lines = [f"Current features ({len(ctx.features)} live, {n_base} original):",
             "name | expression | mean | std | min | max | |corr(y)|"]
    for f in ctx.features:
        s = f.stats
        lines.append(" | ".join([f.name, f.postfix, _num(s.mean), _num(s.std), _num(s.min),
                                 _num(s.max), _num(f.target_corr)]))
    return lines


def _trajectory(ctx) -> list[str]:
    lines = ["Recent steps in this iteration:"]
    for r in ctx.short_term:
        action = r.decision.value if r.decision else "baseline"
        lines.append(f"step {r.step}: {action} [{r.detail}] -> {_num(r.score)}")
    return lines


def _demo_lines(demos) -> list[str]:
    lines = ["High-scoring feature sets from memory:"]
    lines += [f"{r.tokens} -> {_num(r.score)}" for r in demos]
    return lines


def _render(role: str, ctx, demos) -> PromptBundle:
    head = (f"Dataset: {ctx.dataset} | task: {ctx.task.name.lower()} | metric: {ctx.metric} "
            f"(higher is better) | steps left in this iteration: {ctx.remaining_steps}")
    blocks = [[head], _feature_table(ctx)]
    if role == "router" and ctx.state is not None:
        blocks.append(["Search state:"] + [f"{k}={_num(float(v))}" for k, v in zip(STATE_FIELDS, ctx.state)])
    if role == "generator":
        blocks.append(["Operators: " + " ".join(ctx.operators)])
    if role == "selector":
        blocks.append([f"Keep at least {ctx.min_features} features."])
    if ctx.use_short and ctx.short_term:
        blocks.append(_trajectory(ctx))
    if ctx.use_long and demos:
        blocks.append(_demo_lines(demos))
    blocks.append([_REPLY[role]])
    user = "\n\n".join("\n".join(b) for b in blocks)
    return PromptBundle(_SYSTEM[role], user, role)


def build_prompt(role: str, ctx) -> PromptBundle:
    """Render the prompt for ``role``; demos are evicted oldest-first to fit the budget."""
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    demos = list(ctx.demos) if ctx.use_long else []
    bundle = _render(role, ctx, demos)
    while bundle.est_tokens > ctx.token_budget and demos:
        oldest = min(demos, key=lambda r: (r.iteration, r.step))
        demos.remove(oldest)
        bundle = _render(role, ctx, demos)
    if bundle.est_tokens > ctx.token_budget:
        raise ContextOverflow(f"{role} prompt needs ~{bundle.est_tokens} tokens, budget {ctx.token_budget}")
    return bundle


def extract_json(text: str) -> dict:
    """Decode the first balanced ``{...}`` block in ``text``."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        esc = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start:i + 1])
                    except json.JSONDecodeError as exc:
                        raise ParseFailure(f"invalid JSON object: {exc}") from None
                    if not isinstance(obj, dict):
                        raise ParseFailure("reply JSON is not an object")
                    return obj
        break
    raise ParseFailure("no JSON object found in reply")


def parse_reply(role: str, text: str, schema=None, aliases=None, live=None, max_depth=4, max_tokens=25):
    """Validate a reply against the role's schema.

    ``schema`` (base column names) and ``aliases`` (derived name to
    expression) are needed for generator replies; ``live`` restricts the
    names a selector may drop.
    """
    if not text or not text.strip():
        raise ParseFailure("empty reply")
    obj = extract_json(text)
    if role == "router":
        value = obj.get("decision")
        if not isinstance(value, str):
            raise ParseFailure('router reply lacks a string "decision"')
        try:
            return Decision(value.strip().lower())
        except ValueError:
            raise ParseFailure(f"unknown decision {value!r}") from None
    if role == "generator":
        feats = obj.get("new_features")
        if not isinstance(feats, list) or not feats or not all(isinstance(s, str) for s in feats):
            raise ParseFailure('generator reply needs a non-empty "new_features" string list')
        if schema is None:
            raise ValueError("generator replies need the base schema")
        exprs = []
        for s in feats[:3]:
            try:
                exprs.append(parse_expression(s, schema, aliases=aliases, max_depth=max_depth,
                                              max_tokens=max_tokens))
            except ExpressionError as exc:
                raise ParseFailure(f"bad expression {s!r}: {exc}") from None
        return GenerationAction(tuple(exprs))
    if role == "selector":
        drop = obj.get("drop")
        if not isinstance(drop, list) or not drop or not all(isinstance(s, str) for s in drop):
            raise ParseFailure('selector reply needs a non-empty "drop" string list')
        if live is not None:
            unknown = [s for s in drop if s not in live]
            if unknown:
                raise ParseFailure(f"cannot drop unknown features {unknown}")
        return SelectionAction(tuple(drop))
    raise ValueError(f"unknown role {role!r}")
