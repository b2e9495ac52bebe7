"""
Random forest of CART trees and stratified k-fold evaluation.

Trees are grown on bootstrap resamples with ceil(sqrt(d)) candidate features
per node, Gini impurity, and stop at pure nodes, nodes with fewer than two
samples, or depth 32. A split sends ``x[f] <= threshold`` left, where the
threshold is the largest training value on the left side; this keeps every
tree's partition unchanged under strictly increasing feature transforms.
Split ties resolve to the smallest feature index, then the smallest
threshold. Vote ties resolve to the smallest class id.

Per-tree randomness is seeded from (seed, tree index) only, so results are
identical for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

MAX_DEPTH = 32


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    groups: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"feature matrix {X.shape} does not match {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset contains non-finite feature values")
        if not np.issubdtype(y.dtype, np.integer):
            raise ValueError("labels must be integer class ids")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y.astype(np.int64))
        if self.groups is not None:
            g = np.asarray(self.groups).reshape(-1)
            if g.shape != y.shape:
                raise ValueError("groups must have one entry per sample")
            object.__setattr__(self, "groups", g.astype(np.int64))

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        g = None if self.groups is None else self.groups[idx]
        return Dataset(self.X[idx], self.y[idx], g)


def dataset_from_grids(features: np.ndarray, labels: np.ndarray,
                       per_class_cap: Optional[int] = None, seed: int = 0,
                       groups: Optional[np.ndarray] = None) -> Dataset:
    """Collect labeled pixels (label >= 0), optionally capping each class.

    Capping draws a deterministic subset per class from ``seed``; the kept
    pixels stay in row-major order.
    """
    feats = np.asarray(features, dtype=np.float64)
    lab = np.asarray(labels).reshape(-1)
    X = feats.reshape(lab.shape[0], -1)
    idx = np.flatnonzero(lab >= 0)
    if per_class_cap is not None:
        rng = np.random.Generator(np.random.Philox(key=[seed, 1]))
        keep = []
        for c in np.unique(lab[idx]):
            members = idx[lab[idx] == c]
            if members.size > per_class_cap:
                members = rng.choice(members, per_class_cap, replace=False)
            keep.append(members)
        idx = np.sort(np.concatenate(keep))
    g = None if groups is None else np.asarray(groups).reshape(-1)[idx]
    return Dataset(X[idx], lab[idx], g)


# ---- tree growing --------------------------------------------------------------

@njit(cache=True, nogil=True)
def _majority(counts):
    best = 0
    for k in range(1, counts.shape[0]):
        if counts[k] > counts[best]:
            best = k
    return best


@njit(cache=True, nogil=True)
def _grow_tree(X, y, n_classes, mtry, seed, bootstrap):
    np.random.seed(seed)
    n, d = X.shape
    if bootstrap:
        idx = np.random.randint(0, n, n)
    else:
        idx = np.arange(n)
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    feats = np.arange(d)
    counts = np.zeros(n_classes, dtype=np.int64)
    lcounts = np.zeros(n_classes, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    vals = np.empty(n)

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        m = hi - lo
        counts[:] = 0
        for q in range(lo, hi):
            counts[y[idx[q]]] += 1
        value[node] = _majority(counts)
        pure = False
        for k in range(n_classes):
            if counts[k] == m:
                pure = True
        if pure or m < 2 or depth >= MAX_DEPTH:
            continue

        # partial Fisher-Yates draw of mtry features, then visit in index order
        for k in range(d):
            feats[k] = k
        for k in range(mtry):
            r = k + np.random.randint(0, d - k)
            tmp = feats[k]
            feats[k] = feats[r]
            feats[r] = tmp
        chosen = np.sort(feats[:mtry])

        sum_sq = 0.0
        for k in range(n_classes):
            sum_sq += counts[k] * counts[k]
        best_imp = np.inf
        best_f = -1
        best_t = 0.0
        for f in chosen:
            for q in range(m):
                vals[q] = X[idx[lo + q], f]
            order = np.argsort(vals[:m], kind="mergesort")
            lcounts[:] = 0
            for p in range(m - 1):
                lcounts[y[idx[lo + order[p]]]] += 1
                v = vals[order[p]]
                if v == vals[order[p + 1]]:
                    continue
                nl = p + 1
                nr = m - nl
                sl = 0.0
                sr = 0.0
                for k in range(n_classes):
                    a = lcounts[k]
                    b = counts[k] - a
                    sl += a * a
                    sr += b * b
                imp = ((nl - sl / nl) + (nr - sr / nr)) / m
                if imp < best_imp:
                    best_imp = imp
                    best_f = f
                    best_t = v
        if best_f < 0:
            continue

        nl = 0
        for q in range(lo, hi):
            if X[idx[q], best_f] <= best_t:
                buf[nl] = idx[q]
                nl += 1
        nr = nl
        for q in range(lo, hi):
            if X[idx[q], best_f] > best_t:
                buf[nr] = idx[q]
                nr += 1
        for q in range(m):
            idx[lo + q] = buf[q]

        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left child is expanded first
        st_node[top] = n_nodes + 1
        st_lo[top] = lo + nl
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = n_nodes
        st_lo[top] = lo
        st_hi[top] = lo + nl
        st_depth[top] = depth + 1
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _tree_predict(feature, threshold, left, right, value, X, out):
    for q in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[q, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[q] = value[node]


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class index into ForestModel.classes

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depths[self.left[k]] = depths[self.right[k]] = depths[k] + 1
        return int(depths.max())

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        _tree_predict(self.feature, self.threshold, self.left, self.right, self.value, X, out)
        return out


@dataclass
class ForestModel:
    trees: list[Tree]
    classes: np.ndarray
    n_features: int
    seed: int
    n_trees: int = field(init=False)

    def __post_init__(self):
        self.n_trees = len(self.trees)

    def votes(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        votes = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict_index(X)), 1)
        return votes

    def predict_many(self, X) -> np.ndarray:
        # argmax picks the first maximum, i.e. the smallest class id
        return self.classes[np.argmax(self.votes(X), axis=1)]

    def save(self, path) -> None:
        """Store as .npz: per-tree node arrays plus class ids (see README)."""
        arrays = {"classes": self.classes, "n_features": np.int64(self.n_features),
                  "seed": np.uint64(self.seed)}
        for k, t in enumerate(self.trees):
            for name in ("feature", "threshold", "left", "right", "value"):
                arrays[f"tree{k}_{name}"] = getattr(t, name)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "ForestModel":
        with np.load(path) as z:
            k = 0
            trees = []
            while f"tree{k}_feature" in z:
                trees.append(Tree(*(z[f"tree{k}_{n}"] for n in
                                    ("feature", "threshold", "left", "right", "value"))))
                k += 1
            return cls(trees, z["classes"], int(z["n_features"]), int(z["seed"]))


def _as_matrix(X, d: int) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != d:
        raise ValueError(f"expected {d} features, got {X.shape[1]}")
    return X


def tree_seeds(seed: int, n_trees: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed)
    return np.array([c.generate_state(1)[0] for c in ss.spawn(n_trees)], dtype=np.int64)


def train_forest(data: Dataset, n_trees: int = 200, seed: int = 0,
                 threads: Optional[int] = None, bootstrap: bool = True) -> ForestModel:
    classes, y_idx = np.unique(data.y, return_inverse=True)
    if classes.size < 2:
        raise ValueError("training data must contain at least two classes")
    if data.n_samples < 2:
        raise ValueError("training data needs at least two samples")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    y_idx = y_idx.astype(np.int64)
    mtry = math.ceil(math.sqrt(data.n_features))
    seeds = tree_seeds(seed, n_trees)

    def grow(k):
        return Tree(*_grow_tree(data.X, y_idx, classes.size, mtry, seeds[k], bootstrap))

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(grow, range(n_trees)))
    else:
        trees = [grow(k) for k in range(n_trees)]
    return ForestModel(trees, classes, data.n_features, seed)


def predict(model: ForestModel, x) -> int:
    """Majority vote for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature vector; use predict_many")
    return int(model.predict_many(x)[0])


def accuracy(model: ForestModel, data: Dataset) -> float:
    return float(np.mean(model.predict_many(data.X) == data.y))


# ---- cross-validation ----------------------------------------------------------

def stratified_folds(y: np.ndarray, k: int, seed: int,
                     groups: Optional[np.ndarray] = None) -> np.ndarray:
    """Fold id per sample; each class (or each class's groups) is dealt round-robin."""
    if k < 2:
        raise ValueError("k must be >= 2")
    y = np.asarray(y)
    rng = np.random.Generator(np.random.Philox(key=[seed, 2]))
    fold = np.empty(y.shape[0], dtype=np.int64)
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if groups is None:
            if members.size < k:
                raise ValueError(f"class {c} has {members.size} samples, fewer than k={k}")
            fold[members[rng.permutation(members.size)]] = np.arange(members.size) % k
        else:
            g = np.unique(groups[members])
            if g.size < k:
                raise ValueError(f"class {c} has {g.size} regions, fewer than k={k}")
            g = g[rng.permutation(g.size)]
            for rank, gid in enumerate(g):
                fold[members[groups[members] == gid]] = rank % k
    return fold


def kfold_scores(data: Dataset, k: int = 5, n_trees: int = 200, seed: int = 0,
                 by_group: bool = False, threads: Optional[int] = None) -> list[float]:
    if by_group and data.groups is None:
        raise ValueError("fold-by-region needs group ids")
    folds = stratified_folds(data.y, k, seed, data.groups if by_group else None)
    scores = []
    for f in range(k):
        test = folds == f
        train = data.subset(np.flatnonzero(~test))
        fold_seed = int(np.random.SeedSequence([seed, f]).generate_state(1, np.uint64)[0])
        model = train_forest(train, n_trees, fold_seed, threads=threads)
        scores.append(accuracy(model, data.subset(np.flatnonzero(test))))
    return scores


def kfold_accuracy(data: Dataset, k: int = 5, n_trees: int = 200, seed: int = 0,
                   by_group: bool = False, threads: Optional[int] = None) -> float:
    """Average held-out accuracy over stratified folds."""
    return float(np.mean(kfold_scores(data, k, n_trees, seed, by_group, threads)))
