"""Feature augmentation by router-gated generation and selection of derived columns."""

__version__ = "0.1.0"

from .data import Frame, Task, kfolds, load_csv, materialize, stats  # noqa: E402
from .evaluation import Evaluator, ScoreReport, evaluate  # noqa: E402
from .expr import FeatureExpr, evaluate as evaluate_expr, parse_expression, parse_postfix  # noqa: E402
from .memory import ActionRecord, Decision, MemoryPool  # noqa: E402
from .pipeline import FeatureSet, GenerationAction, SelectionAction, apply_generation, apply_selection  # noqa: E402
from .search import SearchConfig, SearchResult, export, run, run_ablation  # noqa: E402

__all__ = [
    "ActionRecord", "Decision", "Evaluator", "FeatureExpr", "FeatureSet", "Frame", "GenerationAction",
    "MemoryPool", "ScoreReport", "SearchConfig", "SearchResult", "SelectionAction", "Task",
    "apply_generation", "apply_selection", "evaluate", "evaluate_expr", "export", "kfolds", "load_csv",
    "materialize", "parse_expression", "parse_postfix", "run", "run_ablation", "stats",
]
