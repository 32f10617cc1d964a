"""Cross-validated downstream scoring of feature sets."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import FoldPlan, Frame, Task, kfolds
from .errors import DegenerateFold, LengthMismatch, NoLiveFeatures
from .models import ModelKind, make_model
from .pipeline import FeatureSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreReport:
    """Fold-averaged scores.

    ``primary`` is macro-F1 (classification) or 1-MSE on the standardized
    target (regression); ``secondary`` is accuracy or R^2.
    """

    primary: float
    secondary: float
    per_fold: tuple
    per_fold_secondary: tuple
    model: str
    task: str
    skipped_folds: tuple = ()
    wall_time: float = field(default=0.0, compare=False)

    @property
    def metric_names(self) -> tuple[str, str]:
        if self.task == Task.CLASSIFICATION.value:
            return ("f1", "accuracy")
        return ("1-mse", "r2")

    def to_json(self, timing: bool = False) -> dict:
        out = asdict(self)
        out["per_fold"] = list(self.per_fold)
        out["per_fold_secondary"] = list(self.per_fold_secondary)
        out["skipped_folds"] = list(self.skipped_folds)
        if not timing:
            out.pop("wall_time")
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ScoreReport":
        obj = dict(obj)
        for key in ("per_fold", "per_fold_secondary", "skipped_folds"):
            obj[key] = tuple(obj.get(key, ()))
        return cls(**obj)


def macro_f1(pred, truth) -> float:
    labels = np.union1d(np.unique(pred), np.unique(truth))
    scores = []
    for c in labels:
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def metrics(predictions, truth, task) -> tuple[float, float]:
    """(macro-F1, accuracy) or (1-MSE, R^2) on the truth-standardized scale."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise LengthMismatch(f"{predictions.shape} predictions vs {truth.shape} targets")
    if Task.parse(task) is Task.CLASSIFICATION:
        return macro_f1(predictions, truth), float(np.mean(predictions == truth))
    mu = truth.mean()
    sd = truth.std()
    if sd == 0:
        sd = 1.0
    resid = (predictions - truth) / sd
    one_minus_mse = 1.0 - float(np.mean(resid * resid))
    sse = float(np.sum((predictions - truth) ** 2))
    sst = float(np.sum((truth - mu) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else one_minus_mse
    return one_minus_mse, r2


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _cross_validate(X, frame: Frame, model, plan: FoldPlan, seed: int):
    task = frame.task
    primary, secondary, skipped, importances = [], [], [], []
    for fold, (train, test) in enumerate(plan):
        y_train = frame.target[train]
        y_test = frame.target[test]
        if task is Task.CLASSIFICATION:
            if len(np.unique(y_train)) < 2:
                log.warning("fold %d skipped: training rows contain a single class", fold)
                skipped.append(fold)
                primary.append(None)
                secondary.append(None)
                continue
            est = make_model(model, frame.n_classes, _fold_seed(seed, fold)).fit(X[train], y_train)
            p, s = metrics(est.predict(X[test]), y_test, task)
        else:
            mu = y_train.mean()
            sd = y_train.std() or 1.0
            est = make_model(model, 0, _fold_seed(seed, fold)).fit(X[train], (y_train - mu) / sd)
            p, s = metrics(est.predict(X[test]), (y_test - mu) / sd, task)
        primary.append(p)
        secondary.append(s)
        if hasattr(est, "feature_importances_"):
            importances.append(est.feature_importances_)
    if len(skipped) == plan.k:
        raise DegenerateFold("every training fold contains a single class")
    return primary, secondary, skipped, importances


def evaluate_matrix(X, frame: Frame, model="rf", plan: FoldPlan | None = None, seed: int = 42):
    """Score a feature matrix; returns ``(ScoreReport, importances or None)``."""
    model = ModelKind.parse(model)
    plan = plan if plan is not None else kfolds(frame, 5, seed)
    if X.ndim != 2 or X.shape[1] == 0:
        raise NoLiveFeatures("feature matrix has no columns")
    t0 = time.perf_counter()
    primary, secondary, skipped, imps = _cross_validate(X, frame, model, plan, seed)
    kept_p = [v for v in primary if v is not None]
    kept_s = [v for v in secondary if v is not None]
    report = ScoreReport(
        primary=float(np.mean(kept_p)),
        secondary=float(np.mean(kept_s)),
        per_fold=tuple(primary),
        per_fold_secondary=tuple(secondary),
        model=model.value,
        task=frame.task.value,
        skipped_folds=tuple(skipped),
        wall_time=time.perf_counter() - t0,
    )
    importance = None
    if imps:
        importance = np.mean(imps, axis=0)
        total = importance.sum()
        importance = importance / total if total > 0 else importance
    return report, importance


def evaluate(frame: Frame, feature_set: FeatureSet, model="rf", plan: FoldPlan | None = None,
             seed: int = 42) -> ScoreReport:
    """Cross-validated score of the live features of ``feature_set``."""
    if feature_set.n_live == 0:
        raise NoLiveFeatures("feature set has no live features")
    return evaluate_matrix(feature_set.materialize(frame), frame, model, plan, seed)[0]


def importance(model) -> dict[int, float]:
    """Normalized mean impurity decrease of a trained forest, by column index."""
    return {j: float(v) for j, v in enumerate(model.feature_importances_)}


class Evaluator:
    """Scores feature sets against one frame, with a result cache.

    The cache is keyed by the ordered canonical key of the live features,
    together with the model kind and seed fixed at construction.
    """

    def __init__(self, frame: Frame, model="rf", folds: int = 5, seed: int = 42):
        self.frame = frame
        self.model = ModelKind.parse(model)
        self.seed = seed
        self.plan = kfolds(frame, folds, seed)
        self._cache: dict = {}
        self.evaluations = 0
        self.cache_hits = 0

    def _key(self, fs: FeatureSet):
        return (fs.key(), self.model.value, self.seed)

    def evaluate(self, fs: FeatureSet) -> ScoreReport:
        key = self._key(fs)
        hit = self._cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            return hit[0]
        if fs.n_live == 0:
            raise NoLiveFeatures("feature set has no live features")
        report, imp = evaluate_matrix(fs.materialize(self.frame), self.frame, self.model, self.plan, self.seed)
        self.evaluations += 1
        names = fs.live_names
        imp_map = None if imp is None else {n: float(v) for n, v in zip(names, imp)}
        self._cache[key] = (report, imp_map)
        return report

    def importances(self, fs: FeatureSet) -> dict[str, float] | None:
        """Forest importances for ``fs`` if it has been scored with a forest."""
        hit = self._cache.get(self._key(fs))
        return None if hit is None else hit[1]
