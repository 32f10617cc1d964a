"""CART random forest (variance / Gini splits) compiled with numba.

Trees are grown depth-first on bootstrap samples (duplicate draws become
row weights); each node examines a
random subset of ``max(1, floor(sqrt(d)))`` features and keeps drawing
further features only while no valid split has been found.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True)
def _splitmix(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _build_tree(X, order, y, ycls, n_classes, weight, max_depth, mtry, min_split, seed):
    """Grow one tree on rows with positive ``weight`` (bootstrap counts).

    ``order[f]`` lists all rows sorted by feature ``f``.  Each node owns
    the same position range in every feature's filtered order, so splits
    are found by linear scans and applied by stable partitioning.
    """
    n_out = max(n_classes, 1)
    d = X.shape[1]
    n_all = X.shape[0]

    m = 0
    for r in range(n_all):
        if weight[r] > 0:
            m += 1
    srt = np.empty((d, m), np.int64)
    for f in range(d):
        q = 0
        for p in range(n_all):
            r = order[f, p]
            if weight[r] > 0:
                srt[f, q] = r
                q += 1

    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_out))
    importance = np.zeros(d)

    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    counts = np.zeros(n_out)
    left_counts = np.zeros(n_out)
    go_left = np.zeros(n_all, np.bool_)
    buf = np.empty(m, np.int64)
    perm = np.arange(d)
    state = np.uint64(seed)

    n_nodes = 1
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]

        # weighted node statistics
        wsum = 0.0
        ysum = 0.0
        ysq = 0.0
        for c in range(n_out):
            counts[c] = 0.0
        for p in range(start, end):
            r = srt[0, p]
            w = weight[r]
            wsum += w
            if n_classes == 0:
                ysum += w * y[r]
                ysq += w * y[r] * y[r]
            else:
                counts[ycls[r]] += w
        if n_classes == 0:
            mean = ysum / wsum
            value[node, 0] = mean
            imp = ysq / wsum - mean * mean
        else:
            imp = 1.0
            for c in range(n_classes):
                value[node, c] = counts[c] / wsum
                imp -= value[node, c] * value[node, c]
        if depth >= max_depth or wsum < min_split or end - start < 2 or imp <= 1e-14:
            continue

        best_score = -np.inf
        best_feat = -1
        best_pos = -1
        for i in range(d):
            perm[i] = i
        tried = 0
        for i in range(d):
            if tried >= mtry and best_feat >= 0:
                break
            state, rnd = _splitmix(state)
            j = i + np.int64(rnd % np.uint64(d - i))
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            f = perm[i]
            tried += 1
            if X[srt[f, end - 1], f] <= X[srt[f, start], f]:
                continue

            if n_classes == 0:
                lsum = 0.0
                nl = 0.0
                for p in range(start, end - 1):
                    r = srt[f, p]
                    nl += weight[r]
                    lsum += weight[r] * y[r]
                    if X[srt[f, p + 1], f] <= X[r, f]:
                        continue
                    nr = wsum - nl
                    rsum = ysum - lsum
                    score = lsum * lsum / nl + rsum * rsum / nr
                    if score > best_score:
                        best_score = score
                        best_feat = f
                        best_pos = p
            else:
                for c in range(n_classes):
                    left_counts[c] = 0.0
                sq_l = 0.0
                sq_r = 0.0
                for c in range(n_classes):
                    sq_r += counts[c] * counts[c]
                nl = 0.0
                for p in range(start, end - 1):
                    r = srt[f, p]
                    w = weight[r]
                    c = ycls[r]
                    lc = left_counts[c]
                    rc = counts[c] - lc
                    sq_l += 2.0 * w * lc + w * w
                    sq_r -= 2.0 * w * rc - w * w
                    left_counts[c] = lc + w
                    nl += w
                    if X[srt[f, p + 1], f] <= X[r, f]:
                        continue
                    score = sq_l / nl + sq_r / (wsum - nl)
                    if score > best_score:
                        best_score = score
                        best_feat = f
                        best_pos = p

        if best_feat < 0:
            continue

        a = X[srt[best_feat, best_pos], best_feat]
        b = X[srt[best_feat, best_pos + 1], best_feat]
        thr = 0.5 * (a + b)
        if not thr < b:
            thr = a
        mid = best_pos + 1
        for p in range(start, end):
            go_left[srt[best_feat, p]] = p < mid
        for f in range(d):
            if f == best_feat:
                continue
            ql = start
            qr = 0
            for p in range(start, end):
                r = srt[f, p]
                if go_left[r]:
                    srt[f, ql] = r
                    ql += 1
                else:
                    buf[qr] = r
                    qr += 1
            for p in range(qr):
                srt[f, ql + p] = buf[p]

        # impurity decrease, weighted by bootstrap counts
        if n_classes == 0:
            wl = 0.0
            sl = 0.0
            ql2 = 0.0
            for p in range(start, mid):
                r = srt[0, p]
                w = weight[r]
                wl += w
                sl += w * y[r]
                ql2 += w * y[r] * y[r]
            wr = wsum - wl
            sr = ysum - sl
            qr2 = ysq - ql2
            child = (ql2 - sl * sl / wl) + (qr2 - sr * sr / wr)
            gain = (ysq - ysum * ysum / wsum) - child
        else:
            for c in range(n_classes):
                left_counts[c] = 0.0
            wl = 0.0
            for p in range(start, mid):
                r = srt[0, p]
                left_counts[ycls[r]] += weight[r]
                wl += weight[r]
            wr = wsum - wl
            gl = 1.0
            gr = 1.0
            for c in range(n_classes):
                gl -= (left_counts[c] / wl) ** 2
                gr -= ((counts[c] - left_counts[c]) / wr) ** 2
            gain = wsum * imp - wl * gl - wr * gr
        if gain > 0.0:
            importance[best_feat] += gain

        feature[node] = best_feat
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = mid
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes
        stack_start[top] = start
        stack_end[top] = mid
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), importance)


@njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        for c in range(value.shape[1]):
            out[i, c] += value[node, c]


class RandomForest:
    """Bagged CART ensemble for regression (``n_classes=0``) or classification.

    Parameters mirror the usual defaults: 100 trees, depth 12, sqrt(d)
    features per split, bootstrap rows.
    """

    def __init__(self, n_classes: int = 0, n_trees: int = 100, max_depth: int = 12,
                 max_features="sqrt", min_samples_split: int = 2, bootstrap: bool = True,
                 seed: int = 0):
        self.n_classes = n_classes
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.bootstrap = bootstrap
        self.seed = seed

    def _mtry(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        if self.max_features is None:
            return d
        return max(1, min(d, int(self.max_features)))

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, d = X.shape
        if self.n_classes:
            ycls = np.asarray(y, dtype=np.int64)
            yreg = np.zeros(n)
        else:
            yreg = np.asarray(y, dtype=np.float64)
            ycls = np.zeros(n, dtype=np.int64)
        rng = np.random.default_rng(self.seed)
        mtry = self._mtry(d)
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        self.trees_ = []
        importance = np.zeros(d)
        for _ in range(self.n_trees):
            if self.bootstrap:
                weight = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
            else:
                weight = np.ones(n)
            tree_seed = int(rng.integers(0, 2**63 - 1))
            tree = _build_tree(X, order, yreg, ycls, self.n_classes, weight,
                               self.max_depth, mtry, self.min_samples_split, tree_seed)
            self.trees_.append(tree[:5])
            importance += tree[5] / n
        self.n_features_ = d
        self._raw_importance = importance
        return self

    def _accumulate(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.zeros((X.shape[0], max(self.n_classes, 1)))
        for tree in self.trees_:
            _predict_tree(X, *tree, out)
        return out / len(self.trees_)

    def predict_proba(self, X) -> np.ndarray:
        if not self.n_classes:
            raise TypeError("predict_proba is only defined for classification forests")
        return self._accumulate(X)

    def predict(self, X) -> np.ndarray:
        out = self._accumulate(X)
        if self.n_classes:
            return np.argmax(out, axis=1)
        return out[:, 0]

    @property
    def feature_importances_(self) -> np.ndarray:
        """Mean impurity decrease per feature, normalized to sum to one."""
        total = self._raw_importance.sum()
        if total <= 0:
            return np.zeros_like(self._raw_importance)
        return self._raw_importance / total
