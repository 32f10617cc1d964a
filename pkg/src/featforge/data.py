"""Tabular datasets: CSV loading, column statistics, fold plans, materialization."""

from __future__ import annotations

import csv
import enum
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptySelection, KTooLarge, LengthMismatch, ParseError, TargetNotFound, TooFewRows
from .expr import FeatureExpr, evaluate

MIN_ROWS = 10


class Task(str, enum.Enum):
    CLASSIFICATION = "class"
    REGRESSION = "regr"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        aliases = {"class": cls.CLASSIFICATION, "classification": cls.CLASSIFICATION,
                   "c": cls.CLASSIFICATION, "regr": cls.REGRESSION,
                   "regression": cls.REGRESSION, "r": cls.REGRESSION}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown task {value!r}") from None


@dataclass(frozen=True, eq=False)
class Frame:
    """Feature columns plus target.  Column order is preserved."""

    columns: Mapping[str, np.ndarray]
    target: np.ndarray
    task: Task
    labels: tuple[str, ...] = ()
    name: str = "dataset"

    def __post_init__(self):
        cols = {}
        for key, col in self.columns.items():
            arr = np.asarray(col, dtype=np.float64)
            arr.setflags(write=False)
            cols[key] = arr
        task = Task.parse(self.task)
        target = np.asarray(self.target, dtype=np.int64 if task is Task.CLASSIFICATION else np.float64)
        target.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "task", task)

        n = len(target)
        if n < MIN_ROWS:
            raise TooFewRows(f"need at least {MIN_ROWS} rows, got {n}")
        for key, arr in cols.items():
            if arr.shape != (n,):
                raise LengthMismatch(f"column {key!r} has shape {arr.shape}, expected ({n},)")
        if task is Task.CLASSIFICATION:
            if len(np.unique(target)) < 2:
                raise ParseError("classification target needs at least 2 classes")
            if not self.labels:
                object.__setattr__(self, "labels", tuple(str(c) for c in range(int(target.max()) + 1)))

    @property
    def n(self) -> int:
        return len(self.target)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    @property
    def n_classes(self) -> int:
        return len(self.labels) if self.task is Task.CLASSIFICATION else 0

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.columns[k] for k in self.columns])

    def fingerprint(self) -> dict:
        h = hashlib.sha256()
        for key, arr in self.columns.items():
            h.update(key.encode("utf-8"))
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.ascontiguousarray(self.target).tobytes())
        return {"rows": self.n, "cols": len(self.columns), "sha256": h.hexdigest()}


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    std: float
    min: float
    max: float


def load_csv(path, target, task) -> Frame:
    """Load a headed numeric CSV.  ``target`` is a column name or 0-based index."""
    task = Task.parse(task)
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]

    if isinstance(target, str) and target in header:
        t_idx = header.index(target)
    elif isinstance(target, int) or (isinstance(target, str) and target.lstrip("-").isdigit()):
        t_idx = int(target)
        if not -len(header) <= t_idx < len(header):
            raise TargetNotFound(f"target index {t_idx} out of range for {len(header)} columns")
        t_idx %= len(header)
    else:
        raise TargetNotFound(f"target column {target!r} not found in header")

    if len(body) < MIN_ROWS:
        raise TooFewRows(f"need at least {MIN_ROWS} rows, got {len(body)}")

    feature_idx = [j for j in range(len(header)) if j != t_idx]
    values = np.empty((len(body), len(feature_idx)))
    raw_target = []
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=i)
        for out_j, j in enumerate(feature_idx):
            cell = row[j].strip()
            try:
                val = float(cell)
            except ValueError:
                raise ParseError(f"cannot parse {cell!r} as a number", row=i, col=header[j]) from None
            if not np.isfinite(val):
                raise ParseError(f"non-finite value {cell!r}", row=i, col=header[j])
            values[i - 2, out_j] = val
        raw_target.append(row[t_idx].strip())

    labels: tuple[str, ...] = ()
    if task is Task.CLASSIFICATION:
        mapping: dict[str, int] = {}
        for i, lab in enumerate(raw_target, start=2):
            if lab == "":
                raise ParseError("missing label", row=i, col=header[t_idx])
            mapping.setdefault(lab, len(mapping))
        y = np.array([mapping[lab] for lab in raw_target], dtype=np.int64)
        labels = tuple(mapping)
    else:
        y = np.empty(len(raw_target))
        for i, cell in enumerate(raw_target):
            try:
                y[i] = float(cell)
            except ValueError:
                raise ParseError(f"cannot parse {cell!r} as a number", row=i + 2, col=header[t_idx]) from None
        if not np.all(np.isfinite(y)):
            raise ParseError("non-finite target value", col=header[t_idx])

    columns = {header[j]: values[:, out_j] for out_j, j in enumerate(feature_idx)}
    return Frame(columns, y, task, labels=labels, name=path.stem)


def write_csv(path, columns: Mapping[str, np.ndarray], target, target_name: str = "target") -> None:
    """Write columns and target with round-trip-exact float formatting."""
    names = list(columns)
    n = len(target)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names + [target_name])
        for i in range(n):
            w.writerow([repr(float(columns[k][i])) for k in names] + [_cell(target[i])])


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def column_stats(values: np.ndarray) -> ColumnStats:
    v = np.asarray(values, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return ColumnStats(float(v.mean()), float(v.std()), float(v.min()), float(v.max()))


def stats(frame: Frame) -> dict[str, ColumnStats]:
    """Per-column mean, population std, min and max."""
    return {name: column_stats(col) for name, col in frame.columns.items()}


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def __iter__(self):
        for f in range(self.k):
            yield self.train_index(f), self.test_index(f)


def kfolds(frame: Frame, k: int = 5, seed: int = 42) -> FoldPlan:
    """Shuffled k-fold plan; stratified round-robin for classification."""
    n = frame.n
    if k < 2 or k > n:
        raise KTooLarge(f"fold count {k} must lie in [2, {n}]")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    if frame.task is Task.CLASSIFICATION:
        offset = 0
        for cls in np.unique(frame.target):
            idx = rng.permutation(np.flatnonzero(frame.target == cls))
            assignments[idx] = (np.arange(len(idx)) + offset) % k
            offset = (offset + len(idx)) % k
    else:
        idx = rng.permutation(n)
        assignments[idx] = np.arange(n) % k
    assignments.setflags(write=False)
    return FoldPlan(k, assignments, seed)


def materialize(frame: Frame, exprs: Sequence[FeatureExpr], mask: Sequence[bool],
                min_features: int = 1) -> np.ndarray:
    """Build the n x d matrix: surviving base columns, then surviving derived ones."""
    names = frame.names
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(names) + len(exprs),):
        raise LengthMismatch(f"mask length {mask.size} != {len(names)} base + {len(exprs)} derived")
    if mask.sum() < max(min_features, 1):
        raise EmptySelection(f"{int(mask.sum())} features selected, need at least {max(min_features, 1)}")
    cols = [frame.columns[name] for name, keep in zip(names, mask) if keep]
    cols += [evaluate(e, frame.columns) for e, keep in zip(exprs, mask[len(names):]) if keep]
    return np.column_stack(cols)


def target_correlation(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|Pearson r| of each column with ``y``; constant columns give 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        yc = np.asarray(y, dtype=np.float64) - np.mean(y)
        Xc = X - X.mean(axis=0)
        num = Xc.T @ yc
        den = np.sqrt((Xc * Xc).sum(axis=0) * (yc @ yc))
        r = np.where(den > 0, np.abs(num) / den, 0.0)
    return np.clip(np.nan_to_num(r, nan=0.0, posinf=0.0), 0.0, 1.0)


def mean_pairwise_correlation(X: np.ndarray) -> float:
    """Mean |Pearson r| over distinct column pairs; 0 for fewer than 2 columns."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    if d < 2:
        return 0.0
    Xc = X - X.mean(axis=0)
    norms = np.sqrt((Xc * Xc).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        C = (Xc.T @ Xc) / np.outer(norms, norms)
    C = np.where(np.outer(norms, norms) > 0, np.abs(C), 0.0)
    C = np.clip(np.nan_to_num(C, nan=0.0, posinf=0.0), 0.0, 1.0)
    iu = np.triu_indices(d, 1)
    return float(C[iu].mean())
