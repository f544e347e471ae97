"""Gradient-boosted regression trees for squared error.

Trees grow best-first (largest variance reduction next) with exact greedy
splits, bounded by ``max_leaves`` and ``max_depth``. Prediction is
``base_score + learning_rate * sum(tree outputs)``.
"""
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DegenerateDatasetWarning


@dataclass(frozen=True)
class GbtParams:
    n_rounds: int = 48
    learning_rate: float = 0.5
    max_leaves: int = 16
    max_depth: int = 12
    min_samples_leaf: int = 2


@dataclass
class Tree:
    """Flat binary tree; ``feature[i] == -1`` marks a leaf. Samples with
    ``x[feature] <= threshold`` go left."""

    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            i, d = stack.pop()
            if self.feature[i] < 0:
                best = max(best, d)
            else:
                stack.append((self.left[i], d + 1))
                stack.append((self.right[i], d + 1))
        return best

    def _add(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        lft = np.asarray(self.left)
        rgt = np.asarray(self.right)
        active = feat[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            n = node[idx]
            go_left = X[idx, feat[n]] <= thr[n]
            node[idx] = np.where(go_left, lft[n], rgt[n])
            active[idx] = feat[node[idx]] >= 0
        return np.asarray(self.value)[node]


def _best_split(X, r, idx, min_leaf):
    """Exact greedy split of the samples ``idx``; returns (gain, feature, threshold)."""
    n = len(idx)
    if n < 2 * min_leaf:
        return None
    ri = r[idx]
    total = ri.sum()
    base = total * total / n
    best = None
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cs = np.cumsum(ri[order])
        k = np.arange(min_leaf, n - min_leaf + 1)  # left size
        valid = xs[k - 1] < xs[k]
        if not valid.any():
            continue
        k = k[valid]
        sl = cs[k - 1]
        gain = sl * sl / k + (total - sl) ** 2 / (n - k) - base
        j = int(np.argmax(gain))
        g = float(gain[j])
        if best is None or g > best[0]:
            lo, hi = xs[k[j] - 1], xs[k[j]]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best = (g, f, float(thr))
    return best


def fit_tree(X: np.ndarray, r: np.ndarray, params: GbtParams) -> Tree:
    """Best-first regression tree on residuals ``r``; leaves hold mean residuals."""
    tree = Tree()
    all_idx = np.arange(len(r))
    root = tree._add(r.mean())
    # candidate leaves: (node id, sample indices, depth, split or None)
    leaves = {root: (all_idx, 0)}
    splits = {root: _best_split(X, r, all_idx, params.min_samples_leaf)}
    tol = 1e-12 * max(float(np.dot(r, r)), 1e-300)
    n_leaves = 1
    while n_leaves < params.max_leaves:
        pick = None
        for node, (idx, depth) in leaves.items():
            sp = splits[node]
            if sp is None or depth >= params.max_depth or sp[0] <= tol:
                continue
            if pick is None or sp[0] > splits[pick][0]:
                pick = node
        if pick is None:
            break
        idx, depth = leaves.pop(pick)
        _, f, thr = splits.pop(pick)
        mask = X[idx, f] <= thr
        li, ri_ = idx[mask], idx[~mask]
        lnode = tree._add(r[li].mean())
        rnode = tree._add(r[ri_].mean())
        tree.feature[pick] = f
        tree.threshold[pick] = thr
        tree.left[pick] = lnode
        tree.right[pick] = rnode
        for node, sub in ((lnode, li), (rnode, ri_)):
            leaves[node] = (sub, depth + 1)
            splits[node] = _best_split(X, r, sub, params.min_samples_leaf)
        n_leaves += 1
    return tree


@dataclass
class GbtModel:
    trees: List[Tree]
    learning_rate: float
    base_score: float
    n_features: int
    max_leaves: int = 16
    max_depth: int = 12
    degenerate: bool = False
    train_loss: List[float] = field(default_factory=list)
    _packed: Optional[tuple] = field(default=None, repr=False, compare=False)

    def _pack(self):
        if self._packed is None:
            width = max((len(t) for t in self.trees), default=1)
            T = len(self.trees)
            F = np.full((T, width), -1, dtype=np.int64)
            H = np.zeros((T, width))
            L = np.zeros((T, width), dtype=np.int64)
            R = np.zeros((T, width), dtype=np.int64)
            V = np.zeros((T, width))
            for t, tree in enumerate(self.trees):
                n = len(tree)
                F[t, :n] = tree.feature
                H[t, :n] = tree.threshold
                L[t, :n] = tree.left
                R[t, :n] = tree.right
                V[t, :n] = tree.value
            depth = max((t.depth() for t in self.trees), default=0)
            self._packed = (F, H, L, R, V, depth)
        return self._packed

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        """Unclamped ensemble output for each row of X."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        out = np.full(len(X), self.base_score)
        if not self.trees:
            return out
        F, H, L, R, V, depth = self._pack()
        T = len(self.trees)
        tix = np.arange(T)[None, :]
        node = np.zeros((len(X), T), dtype=np.int64)
        rows = np.arange(len(X))[:, None]
        for _ in range(depth):
            f = F[tix, node]
            leaf = f < 0
            xv = X[rows, np.where(leaf, 0, f)]
            nxt = np.where(xv <= H[tix, node], L[tix, node], R[tix, node])
            node = np.where(leaf, node, nxt)
        return out + self.learning_rate * V[tix, node].sum(axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(self.raw_predict(X), 0.0)


def train_gbt(X: np.ndarray, y: np.ndarray, params: GbtParams = GbtParams()) -> GbtModel:
    """Fit boosted trees to (X, y) by repeatedly fitting residuals."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise ValueError("need at least 2 instances")
    base = float(y.mean())
    model = GbtModel([], params.learning_rate, base, X.shape[1],
                     params.max_leaves, params.max_depth)
    if np.all(y == y[0]):
        warnings.warn("all targets are equal; returning a constant model",
                      DegenerateDatasetWarning, stacklevel=2)
        model.degenerate = True
        model.train_loss = [0.0]
        return model
    pred = np.full(len(y), base)
    model.train_loss.append(float(np.mean((y - pred) ** 2)))
    for _ in range(params.n_rounds):
        tree = fit_tree(X, y - pred, params)
        if len(tree) == 1:
            break  # no split improves the residuals
        model.trees.append(tree)
        pred = pred + params.learning_rate * tree.predict(X)
        model.train_loss.append(float(np.mean((y - pred) ** 2)))
    return model
