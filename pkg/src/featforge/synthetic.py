"""Small seeded datasets with known structure, used by tests and demos."""

from __future__ import annotations

import numpy as np

from .data import Frame, Task


def _frame(X: np.ndarray, y, task, name) -> Frame:
    cols = {f"x{j + 1}": X[:, j] for j in range(X.shape[1])}
    return Frame(cols, y, task, name=name)


def interaction(n: int = 1000, d: int = 5, noise: float = 0.1, seed: int = 0) -> Frame:
    """y = x1 * x2 + noise, plus ``d - 2`` irrelevant standard-normal columns."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = X[:, 0] * X[:, 1] + noise * rng.standard_normal(n)
    return _frame(X, y, Task.REGRESSION, "interaction")


def interaction_linear(n: int = 1000, d: int = 5, noise: float = 0.1, seed: int = 0) -> Frame:
    """y = x1 * x2 + 0.1 * x3 + noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = X[:, 0] * X[:, 1] + 0.1 * X[:, 2] + noise * rng.standard_normal(n)
    return _frame(X, y, Task.REGRESSION, "interaction_linear")


def ratio(n: int = 1000, d: int = 5, noise: float = 0.05, seed: int = 0) -> Frame:
    """y = x1 / (|x2| + 0.5) + sin(x3) + noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = X[:, 0] / (np.abs(X[:, 1]) + 0.5) + np.sin(X[:, 2]) + noise * rng.standard_normal(n)
    return _frame(X, y, Task.REGRESSION, "ratio")


def noisy_classification(n: int = 600, informative: int = 5, noise_cols: int = 15,
                         seed: int = 0) -> Frame:
    """Binary labels from a linear rule on the first ``informative`` columns;
    the remaining columns are pure noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, informative + noise_cols))
    w = np.linspace(1.0, 0.5, informative)
    logits = X[:, :informative] @ w
    y = (logits + 0.3 * rng.standard_normal(n) > 0).astype(np.int64)
    return _frame(X, y, Task.CLASSIFICATION, "noisy_classification")


def xor_classification(n: int = 600, d: int = 6, seed: int = 0) -> Frame:
    """Label = sign(x1 * x2) with 5% label noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (X[:, 0] * X[:, 1] > 0).astype(np.int64)
    flip = rng.random(n) < 0.05
    y[flip] = 1 - y[flip]
    return _frame(X, y, Task.CLASSIFICATION, "xor")


def suite(seed: int = 0, n: int = 500) -> list[Frame]:
    """The small benchmark used for router training and ablations."""
    return [
        interaction(n=n, seed=seed),
        interaction_linear(n=n, seed=seed + 1),
        ratio(n=n, seed=seed + 2),
        noisy_classification(n=n, seed=seed + 3),
    ]
