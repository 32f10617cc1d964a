"""Append-only memory of search actions with short- and long-term views."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DuplicateKey, EmptyPool

BASELINE_ITERATION = -1


class Decision(str, enum.Enum):
    GENERATE = "generation"
    SELECT = "selection"

    @property
    def code(self) -> int:
        return 0 if self is Decision.GENERATE else 1

    @classmethod
    def from_code(cls, code: int) -> "Decision":
        return cls.GENERATE if int(code) == 0 else cls.SELECT


@dataclass(frozen=True)
class ActionRecord:
    """One routed action: decision, how it was carried out, result and score.

    ``state`` is the router input observed before the decision and
    ``behavior_prob`` the probability the router assigned to it.
    """

    iteration: int
    step: int
    decision: Decision | None
    detail: str
    tokens: str
    score: float
    secondary: float | None = None
    state: tuple = ()
    behavior_prob: float | None = None
    feature_set: dict = field(default_factory=dict, compare=False)
    noop: bool = False
    fallback: bool = False
    notes: tuple = ()
    llm: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"record score must be finite, got {self.score}")
        if self.behavior_prob is not None and not 0.0 < self.behavior_prob < 1.0:
            raise ValueError(f"behavior probability {self.behavior_prob} outside (0, 1)")
        if self.decision is not None:
            object.__setattr__(self, "decision", Decision(self.decision))
        object.__setattr__(self, "state", tuple(float(v) for v in self.state))
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def key(self) -> tuple[int, int]:
        return (self.iteration, self.step)

    @property
    def is_baseline(self) -> bool:
        return self.decision is None

    def to_json(self) -> dict:
        out = {
            "iteration": self.iteration,
            "step": self.step,
            "decision": None if self.decision is None else self.decision.value,
            "detail": self.detail,
            "tokens": self.tokens,
            "score": self.score,
            "secondary": self.secondary,
            "state": list(self.state),
            "behavior_prob": self.behavior_prob,
            "feature_set": self.feature_set,
            "noop": self.noop,
            "fallback": self.fallback,
            "notes": list(self.notes),
        }
        if self.llm is not None:
            out["llm"] = self.llm
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ActionRecord":
        return cls(
            iteration=int(obj["iteration"]),
            step=int(obj["step"]),
            decision=None if obj.get("decision") is None else Decision(obj["decision"]),
            detail=obj.get("detail", ""),
            tokens=obj.get("tokens", ""),
            score=float(obj["score"]),
            secondary=None if obj.get("secondary") is None else float(obj["secondary"]),
            state=tuple(obj.get("state", ())),
            behavior_prob=obj.get("behavior_prob"),
            feature_set=obj.get("feature_set", {}),
            noop=bool(obj.get("noop", False)),
            fallback=bool(obj.get("fallback", False)),
            notes=tuple(obj.get("notes", ())),
            llm=obj.get("llm"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def _rank_key(item):
    i, r = item
    return (-r.score, i)


class MemoryPool:
    """Immutable, chronologically ordered record store.

    ``append`` returns a new pool; existing pools never change.
    """

    def __init__(self, records: Iterable[ActionRecord] = (), top_size: int = 20, demos: int = 4):
        self.top_size = top_size
        self.demos = demos
        self._records: tuple[ActionRecord, ...] = ()
        self._keys: frozenset = frozenset()
        for r in records:
            self._records, self._keys = self._extend(r)

    def _extend(self, record: ActionRecord):
        if record.key in self._keys:
            raise DuplicateKey(f"record {record.key} already in pool")
        return self._records + (record,), self._keys | {record.key}

    def append(self, record: ActionRecord) -> "MemoryPool":
        new = MemoryPool(top_size=self.top_size, demos=self.demos)
        new._records, new._keys = self._extend(record)
        return new

    @property
    def records(self) -> tuple[ActionRecord, ...]:
        return self._records

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i):
        return self._records[i]

    def actions(self) -> list[ActionRecord]:
        return [r for r in self._records if not r.is_baseline]

    def short_term(self, iteration: int, agent: Decision | None = None) -> list[ActionRecord]:
        """Records of ``iteration`` in step order; ``agent=None`` is the router view."""
        out = [r for r in self._records if r.iteration == iteration and not r.is_baseline]
        if agent is not None:
            out = [r for r in out if r.decision is agent]
        return sorted(out, key=lambda r: r.step)

    def top(self) -> list[ActionRecord]:
        ranked = sorted(enumerate(self._records), key=_rank_key)
        return [r for _, r in ranked[: self.top_size]]

    def long_term_sample(self, rng: np.random.Generator) -> list[ActionRecord]:
        """Uniformly sample ``demos`` distinct records from the top-scoring ones."""
        top = self.top()
        if not top:
            return []
        size = min(self.demos, len(top))
        picks = rng.choice(len(top), size=size, replace=False)
        return [top[int(i)] for i in picks]

    def best(self) -> ActionRecord:
        if not self._records:
            raise EmptyPool("memory pool is empty")
        return min(enumerate(self._records), key=_rank_key)[1]

    def dump(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for r in self._records:
                fh.write(r.dumps() + "\n")

    @classmethod
    def load(cls, path, **kwargs) -> "MemoryPool":
        records = []
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(ActionRecord.from_json(json.loads(line)))
        return cls(records, **kwargs)

    def relabeled(self, offset: int) -> "MemoryPool":
        """Copy with iterations shifted by ``offset`` (for preloading a prior run)."""
        return MemoryPool((replace(r, iteration=r.iteration + offset) for r in self._records),
                          self.top_size, self.demos)
