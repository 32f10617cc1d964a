"""Router, generator and selector agents."""

from .context import AgentContext, FeatureSummary, build_context, summarize
from .heuristic import (HeuristicGenerator, HeuristicSelector, PolicyRouter, UniformRouter,
                        demo_expressions, generate, route, select)
from .llm_agents import LLM_ROUTER_PROB, LlmGenerator, LlmRouter, LlmSelector
from .prompts import ROLES, build_prompt, extract_json, parse_reply

__all__ = [
    "AgentContext", "FeatureSummary", "HeuristicGenerator", "HeuristicSelector", "LLM_ROUTER_PROB",
    "LlmGenerator", "LlmRouter", "LlmSelector", "PolicyRouter", "ROLES", "UniformRouter",
    "build_context", "build_prompt", "demo_expressions", "extract_json", "generate", "parse_reply",
    "route", "select", "summarize",
]
