"""The evolving feature set and the generation/selection actions applied to it."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Frame, materialize
from .errors import UnknownFeature
from .expr import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_TOKENS,
    EXPR_SEP,
    FeatureExpr,
    check_caps,
    evaluate,
    parse_expression,
    render_postfix,
)

log = logging.getLogger(__name__)

CONSTANT_STD = 1e-10


@dataclass(frozen=True)
class GenerationAction:
    exprs: tuple[FeatureExpr, ...]

    def __post_init__(self):
        object.__setattr__(self, "exprs", tuple(self.exprs))
        if not 1 <= len(self.exprs) <= 3:
            raise ValueError(f"a generation action carries 1-3 expressions, got {len(self.exprs)}")


@dataclass(frozen=True)
class SelectionAction:
    drop: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "drop", tuple(dict.fromkeys(self.drop)))
        if not self.drop:
            raise ValueError("a selection action must drop at least one feature")


@dataclass
class ActionOutcome:
    accepted: list[str] = field(default_factory=list)
    duplicates: int = 0
    constants: int = 0
    truncated: int = 0
    dropped: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class FeatureSet:
    """Base schema, derived expressions, and a live mask over both."""

    base: tuple[str, ...]
    derived: tuple[FeatureExpr, ...] = ()
    mask: tuple[bool, ...] | None = None
    min_features: int = 2
    max_features: int | None = None
    max_depth: int = DEFAULT_MAX_DEPTH
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        object.__setattr__(self, "derived", tuple(self.derived))
        mask = self.mask
        if mask is None:
            mask = (True,) * (len(self.base) + len(self.derived))
        mask = tuple(bool(m) for m in mask)
        if len(mask) != len(self.base) + len(self.derived):
            raise ValueError("mask length must equal base + derived count")
        object.__setattr__(self, "mask", mask)
        if self.max_features is None:
            object.__setattr__(self, "max_features", 4 * len(self.base))

    @classmethod
    def initial(cls, frame: Frame, **kwargs) -> "FeatureSet":
        return cls(frame.names, **kwargs)

    @property
    def exprs(self) -> list[FeatureExpr]:
        """Every feature (live or not) as an expression, base first."""
        return [FeatureExpr.base(b) for b in self.base] + list(self.derived)

    @property
    def live(self) -> list[FeatureExpr]:
        return [e for e, m in zip(self.exprs, self.mask) if m]

    @property
    def live_names(self) -> list[str]:
        return [e.name for e in self.live]

    @property
    def n_live(self) -> int:
        return sum(self.mask)

    def live_keys(self) -> set[str]:
        return {e.key for e in self.live}

    def key(self) -> tuple[str, ...]:
        """Ordered canonical key of the live features (cache key)."""
        return tuple(e.key for e in self.live)

    def lookup(self) -> dict[str, FeatureExpr]:
        return {e.name: e for e in self.live}

    def materialize(self, frame: Frame) -> np.ndarray:
        return materialize(frame, self.derived, self.mask)

    def to_json(self) -> dict:
        return {
            "base": list(self.base),
            "derived": [render_postfix(e) for e in self.derived],
            "mask": [int(m) for m in self.mask],
        }

    @classmethod
    def from_json(cls, obj: dict, **kwargs) -> "FeatureSet":
        base = obj["base"]
        derived = [parse_expression(s, base, max_depth=10**6, max_tokens=10**6) for s in obj["derived"]]
        return cls(base, derived, obj["mask"], **kwargs)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def token_sequence(fs: FeatureSet) -> str:
    """Comma-joined postfix rendering of the live features."""
    return EXPR_SEP.join(render_postfix(e) for e in fs.live)


def apply_generation(fs: FeatureSet, action: GenerationAction, frame: Frame) -> tuple[FeatureSet, ActionOutcome]:
    """Add the action's expressions, skipping duplicates and constant columns."""
    out = ActionOutcome()
    keys = fs.live_keys()
    derived = list(fs.derived)
    mask = list(fs.mask)
    n_live = fs.n_live
    for expr in action.exprs:
        check_caps(expr, fs.max_depth, fs.max_tokens)
        if expr.is_base or expr.key in keys:
            out.duplicates += 1
            continue
        if float(np.std(evaluate(expr, frame.columns))) < CONSTANT_STD:
            out.constants += 1
            continue
        if n_live >= fs.max_features:
            out.truncated += 1
            continue
        derived.append(expr)
        mask.append(True)
        keys.add(expr.key)
        n_live += 1
        out.accepted.append(expr.name)
    if out.truncated:
        out.warnings.append(f"feature cap {fs.max_features} reached; {out.truncated} expression(s) dropped")
    new = FeatureSet(fs.base, derived, mask, fs.min_features, fs.max_features, fs.max_depth, fs.max_tokens)
    return new, out


def apply_selection(fs: FeatureSet, action: SelectionAction) -> tuple[FeatureSet, ActionOutcome]:
    """Clear the mask bits of dropped features, honoring the size floor.

    The drop set is ordered by priority; when the floor binds, trailing
    drops are discarded.
    """
    out = ActionOutcome()
    positions = {}
    for pos, (expr, live) in enumerate(zip(fs.exprs, fs.mask)):
        if live:
            positions[expr.name] = pos
    for name in action.drop:
        if name not in positions:
            raise UnknownFeature(f"feature {name!r} is not live")
    allowed = max(fs.n_live - fs.min_features, 0)
    drops = list(action.drop[:allowed])
    if len(drops) < len(action.drop):
        msg = f"size floor {fs.min_features} kept {len(action.drop) - len(drops)} feature(s) live"
        out.warnings.append(msg)
        log.debug(msg)
    mask = list(fs.mask)
    for name in drops:
        mask[positions[name]] = False
    out.dropped = drops
    new = FeatureSet(fs.base, fs.derived, mask, fs.min_features, fs.max_features, fs.max_depth, fs.max_tokens)
    return new, out
