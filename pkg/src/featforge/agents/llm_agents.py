"""LLM-backed agents.  Each falls back to its heuristic counterpart when the
client gives up, and says so in ``last``."""

from __future__ import annotations

import logging

from ..errors import ContextOverflow, LlmError, NoValidAction
from ..memory import Decision
from ..pipeline import GenerationAction, SelectionAction
from .heuristic import HeuristicGenerator, HeuristicSelector, UniformRouter
from .prompts import build_prompt, parse_reply

log = logging.getLogger(__name__)

LLM_ROUTER_PROB = 0.5


class _LlmAgent:
    role = ""

    def __init__(self, client, fallback, record_prompts: bool = True):
        self.client = client
        self.fallback = fallback
        self.record_prompts = record_prompts
        self.last: dict | None = None

    def _ask(self, ctx, parse):
        """Returns the parsed reply, or None after recording why the call failed."""
        self.last = {"role": self.role, "fallback": False}
        try:
            bundle = build_prompt(self.role, ctx)
        except ContextOverflow as exc:
            self.last.update(fallback=True, error=f"ContextOverflow: {exc}")
            return None
        if self.record_prompts:
            self.last["prompt"] = {"system": bundle.system, "user": bundle.user}
        replies = []

        def capture(text):
            replies.append(text)
            return parse(text)

        try:
            result = self.client.request(self.role, bundle, capture)
        except LlmError as exc:
            log.warning("%s falling back to heuristic: %s", self.role, exc)
            self.last.update(fallback=True, error=f"{type(exc).__name__}: {exc}")
            result = None
        if self.record_prompts and replies:
            self.last["reply"] = replies[-1]
        return result


class LlmRouter(_LlmAgent):
    """Asks the model for generation vs selection.  Behavior probability is 0.5."""

    role = "router"

    def __init__(self, client, fallback=None, record_prompts: bool = True):
        super().__init__(client, fallback or UniformRouter(), record_prompts)

    def route(self, state, rng, ctx=None) -> tuple[Decision, float]:
        decision = None
        if ctx is not None:
            decision = self._ask(ctx, lambda t: parse_reply("router", t))
        else:
            self.last = {"role": self.role, "fallback": True, "error": "no context"}
        if decision is None:
            info = self.last
            decision, _ = self.fallback.route(state, rng, ctx)
            self.last = info
        return decision, LLM_ROUTER_PROB


class LlmGenerator(_LlmAgent):
    role = "generator"

    def __init__(self, client, fallback=None, record_prompts: bool = True):
        super().__init__(client, fallback or HeuristicGenerator(), record_prompts)

    def generate(self, ctx, rng) -> GenerationAction:
        fs = ctx.feature_set
        aliases = {e.name: e for e in fs.live if not e.is_base}

        def parse(text):
            return parse_reply("generator", text, schema=fs.base, aliases=aliases,
                               max_depth=fs.max_depth, max_tokens=fs.max_tokens)

        action = self._ask(ctx, parse)
        if action is None:
            info = self.last
            action = self.fallback.generate(ctx, rng)
            self.last = info
        return action


class LlmSelector(_LlmAgent):
    role = "selector"

    def __init__(self, client, fallback=None, record_prompts: bool = True):
        super().__init__(client, fallback or HeuristicSelector(), record_prompts)

    def select(self, ctx, rng=None) -> SelectionAction:
        live = set(ctx.live_names)
        if len(live) <= ctx.min_features:
            raise NoValidAction(f"{len(live)} live features, floor is {ctx.min_features}")
        action = self._ask(ctx, lambda t: parse_reply("selector", t, live=live))
        if action is None:
            info = self.last
            action = self.fallback.select(ctx, rng)
            self.last = info
        return action
