"""Bagged regression trees.

A small CART regressor (variance-reduction splits, depth and leaf-size
limits) plus a bootstrap-aggregated ensemble.  Trees are stored as flat
arrays so both batch prediction and the single-sample hot path used by the
constraint check stay vectorized.  No derivative information anywhere.
"""

from __future__ import annotations

import numpy as np

_LEAF = -1


class RegressionTree:
    """CART regression tree on float features; deterministic given the data."""

    def __init__(self, max_depth: int = 14, min_samples_leaf: int = 3):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.feature: np.ndarray | None = None
        self.threshold: np.ndarray | None = None
        self.left: np.ndarray | None = None
        self.right: np.ndarray | None = None
        self.value: np.ndarray | None = None

    def _best_split(self, X: np.ndarray, y: np.ndarray) -> tuple[int, float] | None:
        n = y.shape[0]
        m = self.min_samples_leaf
        if n < 2 * m:
            return None
        best_score = np.inf
        best: tuple[int, float] | None = None
        for j in range(X.shape[1]):
            order = np.argsort(X[:, j], kind="mergesort")
            xs = X[order, j]
            ys = y[order]
            csum = np.cumsum(ys)
            csq = np.cumsum(ys * ys)
            n_left = np.arange(1, n)
            n_right = n - n_left
            sum_l = csum[:-1]
            sq_l = csq[:-1]
            sse = (
                sq_l
                - sum_l * sum_l / n_left
                + (csq[-1] - sq_l)
                - (csum[-1] - sum_l) ** 2 / n_right
            )
            valid = (xs[1:] > xs[:-1]) & (n_left >= m) & (n_right >= m)
            if not valid.any():
                continue
            sse = np.where(valid, sse, np.inf)
            k = int(np.argmin(sse))
            if sse[k] < best_score - 1e-15:
                best_score = float(sse[k])
                best = (j, float(0.5 * (xs[k] + xs[k + 1])))
        return best

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def new_node() -> int:
            feature.append(_LEAF)
            threshold.append(0.0)
            left.append(_LEAF)
            right.append(_LEAF)
            value.append(0.0)
            return len(feature) - 1

        # explicit stack keeps recursion depth independent of max_depth
        root = new_node()
        stack = [(root, np.arange(y.shape[0]), 0)]
        while stack:
            node, idx, depth = stack.pop()
            ys = y[idx]
            value[node] = float(ys.mean())
            if depth >= self.max_depth or ys.shape[0] < 2 * self.min_samples_leaf:
                continue
            if ys.max() - ys.min() < 1e-12:
                continue
            split = self._best_split(X[idx], ys)
            if split is None:
                continue
            j, thr = split
            go_left = X[idx, j] <= thr
            feature[node] = j
            threshold[node] = thr
            l_node = new_node()
            r_node = new_node()
            left[node] = l_node
            right[node] = r_node
            stack.append((l_node, idx[go_left], depth + 1))
            stack.append((r_node, idx[~go_left], depth + 1))

        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth + 1):
            f = self.feature[idx]
            split = f >= 0
            if not split.any():
                break
            go_left = X[rows, np.maximum(f, 0)] <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(split, nxt, idx)
        return self.value[idx]


class BaggedTreeRegressor:
    """Bootstrap-aggregated regression trees; deterministic given (data, seed)."""

    def __init__(
        self,
        n_trees: int = 30,
        max_depth: int = 14,
        min_samples_leaf: int = 3,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed
        self.trees: list[RegressionTree] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "BaggedTreeRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng(self.seed)
        n = y.shape[0]
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, n, n)
            tree = RegressionTree(self.max_depth, self.min_samples_leaf)
            tree.fit(X[idx], y[idx])
            self.trees.append(tree)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)


class ForestArena:
    """Several forests flattened into one node arena for single-sample prediction.

    Each forest's tree features are remapped into a shared feature vector via
    its feature_map, so one traversal evaluates every forest at once.  Used
    on the per-step constraint-check hot path.
    """

    def __init__(self, forests: list[BaggedTreeRegressor], feature_maps: list[np.ndarray]):
        feats, thrs, lefts, rights, values, roots, owner = [], [], [], [], [], [], []
        offset = 0
        for fi, (forest, fmap) in enumerate(zip(forests, feature_maps)):
            fmap = np.asarray(fmap, dtype=np.int64)
            for tree in forest.trees:
                n = tree.feature.shape[0]
                remapped = np.where(tree.feature >= 0, fmap[np.maximum(tree.feature, 0)], _LEAF)
                feats.append(remapped)
                thrs.append(tree.threshold)
                lefts.append(np.where(tree.left >= 0, tree.left + offset, tree.left))
                rights.append(np.where(tree.right >= 0, tree.right + offset, tree.right))
                values.append(tree.value)
                roots.append(offset)
                owner.append(fi)
                offset += n
        self.feature = np.concatenate(feats)
        self.threshold = np.concatenate(thrs)
        self.left = np.concatenate(lefts)
        self.right = np.concatenate(rights)
        self.value = np.concatenate(values)
        self.roots = np.asarray(roots, dtype=np.int64)
        self.owner = np.asarray(owner, dtype=np.int64)
        self.n_forests = len(forests)
        self.counts = np.bincount(self.owner, minlength=self.n_forests).astype(float)
        self.max_depth = max(f.max_depth for f in forests) if forests else 0

    def predict_single(self, x: np.ndarray) -> np.ndarray:
        """Evaluate every forest on one shared feature vector; returns one mean per forest."""
        node = self.roots.copy()
        for _ in range(self.max_depth + 1):
            f = self.feature[node]
            split = f >= 0
            if not split.any():
                break
            go_left = x[np.maximum(f, 0)] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(split, nxt, node)
        sums = np.bincount(self.owner, weights=self.value[node], minlength=self.n_forests)
        return sums / self.counts
