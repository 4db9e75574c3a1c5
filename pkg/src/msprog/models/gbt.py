"""Gradient-boosted trees built stage-wise on depth-limited regression trees.

The regressor boosts least-squares residuals (unit hessians); the binary
classifier boosts log-loss with Newton leaf values (sum grad / sum hess);
multiclass reduces to one-vs-rest binary boosters whose probabilities are
normalized at predict time. The exact split scan runs in the compiled kernel
when available.

Training loss per stage is recorded and asserted non-increasing, which holds
for the optimal-leaf updates at the learning rates we search over.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from .losses import sigmoid


class DegenerateTargetsError(ValueError):
    code = "DEGENERATE_TARGETS"


def _build_tree(X, grad, hess, idx, depth, max_depth, min_leaf, nodes):
    g_sum = float(grad[idx].sum())
    h_sum = float(hess[idx].sum())
    leaf_value = g_sum / (h_sum + 1e-12)
    if depth >= max_depth or len(idx) < 2 * min_leaf:
        nodes.append((-1, leaf_value, -1, -1))
        return len(nodes) - 1

    best_gain = 0.0
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[idx, f], kind="stable")
        sorted_idx = idx[order]
        values = np.ascontiguousarray(X[sorted_idx, f])
        pos, gain = _kernels.best_split(values,
                                        np.ascontiguousarray(grad[sorted_idx]),
                                        np.ascontiguousarray(hess[sorted_idx]),
                                        min_leaf)
        if pos >= 0 and gain > best_gain:
            threshold = 0.5 * (values[pos - 1] + values[pos])
            best_gain = gain
            best = (f, threshold, sorted_idx[:pos], sorted_idx[pos:])
    if best is None:
        nodes.append((-1, leaf_value, -1, -1))
        return len(nodes) - 1

    f, threshold, left_idx, right_idx = best
    node_id = len(nodes)
    nodes.append([f, threshold, -1, -1])
    left = _build_tree(X, grad, hess, left_idx, depth + 1, max_depth, min_leaf, nodes)
    right = _build_tree(X, grad, hess, right_idx, depth + 1, max_depth, min_leaf, nodes)
    nodes[node_id][2] = left
    nodes[node_id][3] = right
    return node_id


class RegressionTree:
    """Depth-limited tree predicting Newton steps sum(grad)/sum(hess)."""

    def __init__(self, max_depth: int = 3, min_leaf: int = 1):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.nodes: list = []

    def fit(self, X, grad, hess):
        self.nodes = []
        _build_tree(X, grad, hess, np.arange(len(X)), 0,
                    self.max_depth, self.min_leaf, self.nodes)
        return self

    def predict(self, X):
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = 0
            while True:
                f, threshold, left, right = self.nodes[node]
                if f < 0:
                    out[i] = threshold
                    break
                node = left if row[f] < threshold else right
        return out


class GBTRegressor:
    def __init__(self, n_estimators=100, learning_rate=0.01, max_depth=3, min_leaf=1):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.trees: list[RegressionTree] = []
        self.base = 0.0
        self.stage_losses: list[float] = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if np.ptp(y) == 0.0:
            raise DegenerateTargetsError("zero-variance regression target")
        self.base = float(y.mean())
        pred = np.full(len(y), self.base)
        hess = np.ones(len(y))
        self.trees = []
        self.stage_losses = [float(np.mean((y - pred) ** 2))]
        for _ in range(self.n_estimators):
            grad = y - pred
            tree = RegressionTree(self.max_depth, self.min_leaf).fit(X, grad, hess)
            pred += self.learning_rate * tree.predict(X)
            self.trees.append(tree)
            loss = float(np.mean((y - pred) ** 2))
            assert loss <= self.stage_losses[-1] + 1e-12, "boosting stage increased MSE"
            self.stage_losses.append(loss)
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        pred = np.full(len(X), self.base)
        for tree in self.trees:
            pred += self.learning_rate * tree.predict(X)
        return pred


class GBTBinaryClassifier:
    def __init__(self, n_estimators=100, learning_rate=0.01, max_depth=3, min_leaf=1):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.trees: list[RegressionTree] = []
        self.base = 0.0
        self.stage_losses: list[float] = []

    @staticmethod
    def _logloss(y, p):
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        pos = y.mean()
        if pos == 0.0 or pos == 1.0:
            raise DegenerateTargetsError("single-class classification target")
        self.base = float(np.log(pos / (1.0 - pos)))
        score = np.full(len(y), self.base)
        self.trees = []
        self.stage_losses = [self._logloss(y, sigmoid(score))]
        for _ in range(self.n_estimators):
            p = sigmoid(score)
            grad = y - p
            hess = np.maximum(p * (1.0 - p), 1e-12)
            tree = RegressionTree(self.max_depth, self.min_leaf).fit(X, grad, hess)
            score += self.learning_rate * tree.predict(X)
            self.trees.append(tree)
            self.stage_losses.append(self._logloss(y, sigmoid(score)))
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        score = np.full(len(X), self.base)
        for tree in self.trees:
            score += self.learning_rate * tree.predict(X)
        return score

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))


class GBTClassifier:
    """Binary directly; k > 2 classes as one-vs-rest with normalized scores."""

    def __init__(self, n_estimators=100, learning_rate=0.01, max_depth=3,
                 min_leaf=1, n_classes=2):
        self.n_classes = n_classes
        self.kwargs = dict(n_estimators=n_estimators, learning_rate=learning_rate,
                           max_depth=max_depth, min_leaf=min_leaf)
        self.boosters: list[GBTBinaryClassifier] = []

    def fit(self, X, y):
        y = np.asarray(y)
        present = np.unique(y)
        if len(present) < 2:
            raise DegenerateTargetsError("single-class classification target")
        if self.n_classes == 2:
            self.boosters = [GBTBinaryClassifier(**self.kwargs).fit(X, (y == 1).astype(float))]
        else:
            self.boosters = []
            for c in range(self.n_classes):
                target = (y == c).astype(float)
                if target.min() == target.max():
                    self.boosters.append(None)  # class absent: constant prior
                else:
                    self.boosters.append(GBTBinaryClassifier(**self.kwargs).fit(X, target))
        return self

    def predict_proba(self, X):
        if self.n_classes == 2:
            p = self.boosters[0].predict_proba(X)
            return np.column_stack([1.0 - p, p])
        cols = []
        for booster in self.boosters:
            if booster is None:
                cols.append(np.full(len(X), 1e-9))
            else:
                cols.append(booster.predict_proba(X))
        raw = np.column_stack(cols)
        return raw / raw.sum(axis=1, keepdims=True)

    @property
    def stage_losses(self):
        return [b.stage_losses for b in self.boosters if b is not None]
