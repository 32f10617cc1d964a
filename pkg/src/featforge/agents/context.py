"""What an agent sees when it acts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import ColumnStats, Frame, Task, column_stats, target_correlation
from ..expr import OPERATORS, FeatureExpr, evaluate, render_postfix
from ..memory import ActionRecord
from ..pipeline import FeatureSet


@dataclass(frozen=True)
class FeatureSummary:
    name: str
    postfix: str
    stats: ColumnStats
    target_corr: float
    derived: bool


@dataclass
class AgentContext:
    dataset: str
    task: Task
    metric: str
    features: list[FeatureSummary]
    feature_set: FeatureSet
    frame: Frame
    short_term: list[ActionRecord] = field(default_factory=list)
    demos: list[ActionRecord] = field(default_factory=list)
    operators: tuple[str, ...] = tuple(op.spelling for op in OPERATORS)
    remaining_steps: int = 0
    state: np.ndarray | None = None
    importances: dict | None = None
    use_short: bool = True
    use_long: bool = True
    token_budget: int = 6000

    @property
    def live(self) -> list[FeatureExpr]:
        return self.feature_set.live

    @property
    def live_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def min_features(self) -> int:
        return self.feature_set.min_features

    def target_corr(self) -> np.ndarray:
        return np.array([f.target_corr for f in self.features])


def summarize(frame: Frame, fs: FeatureSet) -> list[FeatureSummary]:
    live = fs.live
    cols = [evaluate(e, frame.columns) for e in live]
    corr = target_correlation(np.column_stack(cols), frame.target) if cols else []
    return [FeatureSummary(name=e.name, postfix=render_postfix(e), stats=column_stats(c),
                           target_corr=float(r), derived=not e.is_base)
            for e, c, r in zip(live, cols, corr)]


def build_context(frame: Frame, fs: FeatureSet, *, short_term=(), demos=(), remaining_steps: int = 0,
                  state=None, importances=None, use_short: bool = True, use_long: bool = True,
                  token_budget: int = 6000, summaries: list[FeatureSummary] | None = None) -> AgentContext:
    metric = "macro-F1" if frame.task is Task.CLASSIFICATION else "1-MSE"
    return AgentContext(
        dataset=frame.name,
        task=frame.task,
        metric=metric,
        features=summaries if summaries is not None else summarize(frame, fs),
        feature_set=fs,
        frame=frame,
        short_term=list(short_term) if use_short else [],
        demos=list(demos) if use_long else [],
        remaining_steps=remaining_steps,
        state=state,
        importances=importances,
        use_short=use_short,
        use_long=use_long,
        token_budget=token_budget,
    )
