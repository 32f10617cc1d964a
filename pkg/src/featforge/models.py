"""Downstream predictors: random forest, k-nearest neighbours, linear."""

from __future__ import annotations

import enum

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .forest import RandomForest


class ModelKind(str, enum.Enum):
    RANDOM_FOREST = "rf"
    KNEAREST = "knn"
    LINEAR = "linear"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        return cls(str(value).lower())


def _zscore_fit(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


class KNearest:
    """k-NN on z-scored features (scaling fitted on training rows)."""

    def __init__(self, n_classes: int = 0, k: int = 5):
        self.n_classes = n_classes
        self.k = k

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        self.mu_, self.sd_ = _zscore_fit(X)
        self.X_ = (X - self.mu_) / self.sd_
        self.y_ = np.asarray(y)
        return self

    def predict(self, X):
        Z = (np.asarray(X, dtype=np.float64) - self.mu_) / self.sd_
        d2 = (Z * Z).sum(1)[:, None] - 2.0 * Z @ self.X_.T + (self.X_ * self.X_).sum(1)[None, :]
        k = min(self.k, len(self.y_))
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = self.y_[nn]
        if not self.n_classes:
            return votes.mean(axis=1)
        counts = np.zeros((len(Z), self.n_classes))
        for j in range(k):
            np.add.at(counts, (np.arange(len(Z)), votes[:, j]), 1.0)
        return np.argmax(counts, axis=1)


class Linear:
    """Ridge regression or L2-penalized multinomial logistic regression.

    Features are z-scored; the intercept is not penalized.
    """

    def __init__(self, n_classes: int = 0, alpha: float = 1.0):
        self.n_classes = n_classes
        self.alpha = alpha

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        self.mu_, self.sd_ = _zscore_fit(X)
        Z = (X - self.mu_) / self.sd_
        n, d = Z.shape
        if not self.n_classes:
            y = np.asarray(y, dtype=np.float64)
            ym = y.mean()
            A = Z.T @ Z + self.alpha * np.eye(d)
            self.coef_ = np.linalg.solve(A, Z.T @ (y - ym))
            self.intercept_ = ym
            return self

        C = self.n_classes
        Y = np.zeros((n, C))
        Y[np.arange(n), np.asarray(y, dtype=np.int64)] = 1.0

        def loss(theta):
            W = theta[: d * C].reshape(d, C)
            b = theta[d * C:]
            logits = Z @ W + b
            lse = logsumexp(logits, axis=1)
            P = np.exp(logits - lse[:, None])
            val = (lse - (logits * Y).sum(1)).sum() + 0.5 * self.alpha * (W * W).sum()
            G = P - Y
            gW = Z.T @ G + self.alpha * W
            gb = G.sum(0)
            return val, np.concatenate([gW.ravel(), gb])

        res = minimize(loss, np.zeros(d * C + C), jac=True, method="L-BFGS-B",
                       options={"maxiter": 500})
        self.coef_ = res.x[: d * C].reshape(d, C)
        self.intercept_ = res.x[d * C:]
        return self

    def predict(self, X):
        Z = (np.asarray(X, dtype=np.float64) - self.mu_) / self.sd_
        out = Z @ self.coef_ + self.intercept_
        if self.n_classes:
            return np.argmax(out, axis=1)
        return out


def make_model(kind, n_classes: int = 0, seed: int = 0):
    kind = ModelKind.parse(kind)
    if kind is ModelKind.RANDOM_FOREST:
        return RandomForest(n_classes=n_classes, seed=seed)
    if kind is ModelKind.KNEAREST:
        return KNearest(n_classes=n_classes)
    return Linear(n_classes=n_classes)
