"""
Regression trees and tree ensembles for squared-error loss.

Split search works on per-node histograms over pre-binned features. Numeric
features are binned at midpoints between adjacent distinct training values
(capped at `max_bins` thresholds chosen by quantile), so with few distinct
values the search is exact CART. Categorical features split by ordering their
categories on target mean. Rows are put in a canonical order before fitting,
which makes a fitted model independent of the order of its training rows.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import BoostParams, ForestParams
from utils.errors import ModelError

logger = logging.getLogger(__name__)

RELATIVE_GAIN_EPS = 1e-12


@dataclass
class TreeNode:
    """Leaf when `feature` is -1; otherwise a split sending `x <= threshold` (or `x in categories`) left"""
    value: float
    feature: int = -1
    threshold: float = float('nan')
    categories: Optional[Tuple[float, ...]] = None
    left: Optional['TreeNode'] = None
    right: Optional['TreeNode'] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def leaves(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.leaves() + self.right.leaves()


class FeatureBinner:
    """Maps raw feature values to small integer bin codes"""

    def __init__(self, max_bins: int = 255):
        self.max_bins = max_bins
        self.categorical: np.ndarray = np.zeros(0, dtype=bool)
        self.thresholds: List[np.ndarray] = []
        self.categories: List[np.ndarray] = []
        self.n_bins: np.ndarray = np.zeros(0, dtype=np.int64)

    def fit(self, X: np.ndarray, categorical: np.ndarray) -> 'FeatureBinner':
        self.categorical = np.asarray(categorical, dtype=bool)
        self.thresholds, self.categories = [], []
        n_bins = []
        for f in range(X.shape[1]):
            values = np.unique(X[:, f])
            if self.categorical[f]:
                self.categories.append(values)
                self.thresholds.append(np.zeros(0))
                n_bins.append(len(values))
                continue
            if len(values) - 1 > self.max_bins:
                quantiles = np.quantile(X[:, f], np.linspace(0.0, 1.0, self.max_bins + 2)[1:-1])
                pos = np.clip(np.searchsorted(values, quantiles, side='right'), 1, len(values) - 1)
                pos = np.unique(pos)
                thresholds = (values[pos - 1] + values[pos]) / 2.0
            else:
                thresholds = (values[:-1] + values[1:]) / 2.0
            self.thresholds.append(thresholds)
            self.categories.append(np.zeros(0))
            n_bins.append(len(thresholds) + 1)
        self.n_bins = np.asarray(n_bins, dtype=np.int64)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        codes = np.empty(X.shape, dtype=np.int64)
        for f in range(X.shape[1]):
            if self.categorical[f]:
                codes[:, f] = np.searchsorted(self.categories[f], X[:, f])
            else:
                codes[:, f] = np.searchsorted(self.thresholds[f], X[:, f], side='left')
        return codes


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order sorted by (x_0, x_1, ..., y); equal multisets of rows give equal orders"""
    keys = [y] + [X[:, f] for f in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


class _TreeBuilder:
    def __init__(self, codes: np.ndarray, binner: FeatureBinner, y: np.ndarray, weights: np.ndarray,
                 max_depth: Optional[int], min_leaf: int, feature_subsample: float,
                 rng: Optional[np.random.Generator]):
        self.codes = codes
        self.binner = binner
        self.y = y
        self.w = weights
        self.wy = weights * y
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.rng = rng
        self.p = codes.shape[1]
        self.width = int(max(binner.n_bins.max(initial=1), 2))
        self.k = max(1, int(round(self.p * feature_subsample)))
        self.fitted = np.zeros(len(y))

    def _features(self) -> np.ndarray:
        if self.k >= self.p:
            return np.arange(self.p)
        return np.sort(self.rng.choice(self.p, self.k, replace=False))

    def _histogram(self, idx: np.ndarray, features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = len(features)
        flat = (self.codes[np.ix_(idx, features)] + (np.arange(s) * self.width)[None, :]).ravel()
        size = s * self.width
        count = np.bincount(flat, weights=np.repeat(self.w[idx], s), minlength=size)
        total = np.bincount(flat, weights=np.repeat(self.wy[idx], s), minlength=size)
        return count.reshape(s, self.width), total.reshape(s, self.width)

    def _best_split(self, features: np.ndarray, count: np.ndarray, total: np.ndarray,
                    weight: float, wsum: float, sse: float):
        width = self.width
        order = np.tile(np.arange(width), (len(features), 1))
        for row, f in enumerate(features):
            if self.binner.categorical[f]:
                occupied = count[row] > 0
                means = np.divide(total[row], count[row], out=np.zeros(width), where=occupied)
                # occupied bins by (mean, code), empty bins last
                order[row] = np.lexsort((np.arange(width), means, ~occupied))
        count = np.take_along_axis(count, order, axis=1)
        total = np.take_along_axis(total, order, axis=1)

        left_w = np.cumsum(count, axis=1)[:, :-1]
        left_s = np.cumsum(total, axis=1)[:, :-1]
        right_w = weight - left_w
        right_s = wsum - left_s
        valid = (left_w >= self.min_leaf) & (right_w >= self.min_leaf)
        positions = np.arange(width - 1)[None, :]
        valid &= positions < (self.binner.n_bins[features] - 1)[:, None]
        gain = np.full(left_w.shape, -np.inf)
        gain[valid] = (left_s[valid] ** 2 / left_w[valid] + right_s[valid] ** 2 / right_w[valid]
                       - wsum ** 2 / weight)
        best = int(np.argmax(gain))
        row, pos = divmod(best, width - 1)
        if not np.isfinite(gain[row, pos]) or gain[row, pos] <= RELATIVE_GAIN_EPS * max(sse, 0.0):
            return None
        f = int(features[row])
        if self.binner.categorical[f]:
            left_codes = np.sort(order[row, :pos + 1])
            return f, None, left_codes
        return f, pos, None

    def build(self, idx: np.ndarray) -> TreeNode:
        full = self.k >= self.p
        root = TreeNode(value=0.0)
        stack: List[Tuple[TreeNode, np.ndarray, int, Any]] = [(root, idx, 0, None)]
        while stack:
            node, rows, depth, hist = stack.pop()
            weight = float(self.w[rows].sum())
            wsum = float(self.wy[rows].sum())
            node.value = wsum / weight
            sse = float((self.w[rows] * self.y[rows] ** 2).sum()) - wsum ** 2 / weight
            y_rows = self.y[rows]
            if ((self.max_depth is not None and depth >= self.max_depth)
                    or weight < 2 * self.min_leaf or y_rows.max() == y_rows.min()):
                self.fitted[rows] = node.value
                continue
            features = self._features()
            if hist is None or not full:
                hist = self._histogram(rows, features)
            split = self._best_split(features, hist[0], hist[1], weight, wsum, sse)
            if split is None:
                self.fitted[rows] = node.value
                continue

            f, pos, left_codes = split
            column = self.codes[rows, f]
            if left_codes is None:
                goes_left = column <= pos
                node.threshold = float(self.binner.thresholds[f][pos])
            else:
                goes_left = np.isin(column, left_codes)
                node.categories = tuple(float(c) for c in self.binner.categories[f][left_codes])
            node.feature = f
            node.left = TreeNode(value=0.0)
            node.right = TreeNode(value=0.0)
            left_rows, right_rows = rows[goes_left], rows[~goes_left]

            left_hist = right_hist = None
            if full:
                # histogram the smaller child; the sibling is parent minus child
                small, large = (left_rows, right_rows) if len(left_rows) <= len(right_rows) else (right_rows, left_rows)
                small_hist = self._histogram(small, features)
                large_hist = (hist[0] - small_hist[0], hist[1] - small_hist[1])
                if small is left_rows:
                    left_hist, right_hist = small_hist, large_hist
                else:
                    left_hist, right_hist = large_hist, small_hist
            stack.append((node.right, right_rows, depth + 1, right_hist))
            stack.append((node.left, left_rows, depth + 1, left_hist))
        return root


class RegressionTree:
    """A fitted tree with flat arrays for vectorized prediction"""

    def __init__(self, root: TreeNode):
        self.root = root
        self._compile()

    def _compile(self):
        feature, threshold, left, right, value, category = [], [], [], [], [], []
        self._category_sets: List[np.ndarray] = []
        queue = deque([self.root])
        ids = {id(self.root): 0}
        while queue:
            node = queue.popleft()
            feature.append(node.feature)
            threshold.append(node.threshold if not node.is_leaf else np.nan)
            value.append(node.value)
            if node.is_leaf:
                left.append(-1)
                right.append(-1)
                category.append(-1)
                continue
            for child in (node.left, node.right):
                ids[id(child)] = len(ids)
                queue.append(child)
            left.append(ids[id(node.left)])
            right.append(ids[id(node.right)])
            if node.categories is not None:
                category.append(len(self._category_sets))
                self._category_sets.append(np.asarray(node.categories))
            else:
                category.append(-1)
        self._feature = np.asarray(feature, dtype=np.int64)
        self._threshold = np.asarray(threshold, dtype=np.float64)
        self._left = np.asarray(left, dtype=np.int64)
        self._right = np.asarray(right, dtype=np.int64)
        self._value = np.asarray(value, dtype=np.float64)
        self._category = np.asarray(category, dtype=np.int64)

    @property
    def depth(self) -> int:
        return self.root.depth()

    @property
    def n_leaves(self) -> int:
        return self.root.leaves()

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            active = np.nonzero(self._feature[node] >= 0)[0]
            if active.size == 0:
                return self._value[node]
            current = node[active]
            x = X[active, self._feature[current]]
            goes_left = x <= self._threshold[current]
            category = self._category[current]
            for c in np.unique(category[category >= 0]):
                sel = category == c
                goes_left[sel] = np.isin(x[sel], self._category_sets[c])
            node[active] = np.where(goes_left, self._left[current], self._right[current])


def _prepare(X: np.ndarray, y: np.ndarray, categorical: Optional[np.ndarray]):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ModelError(f"feature matrix {X.shape} does not match {y.shape[0]} targets")
    if X.shape[0] == 0:
        raise ModelError("cannot fit on zero rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ModelError("features and targets must be finite")
    categorical = np.zeros(X.shape[1], dtype=bool) if categorical is None else np.asarray(categorical, dtype=bool)
    order = canonical_order(X, y)
    return X[order], y[order], categorical


def _grow(X: np.ndarray, y: np.ndarray, binner: FeatureBinner, codes: np.ndarray,
          weights: np.ndarray, max_depth: Optional[int], min_leaf: int,
          feature_subsample: float, rng: Optional[np.random.Generator]) -> Tuple[RegressionTree, np.ndarray]:
    builder = _TreeBuilder(codes, binner, y, weights, max_depth, min_leaf, feature_subsample, rng)
    root = builder.build(np.nonzero(weights > 0)[0])
    return RegressionTree(root), builder.fitted


def fit_tree(X: np.ndarray, y: np.ndarray, categorical: Optional[np.ndarray] = None,
             max_depth: Optional[int] = None, min_leaf: int = 1, feature_subsample: float = 1.0,
             seed: Optional[int] = None, max_bins: int = 255) -> RegressionTree:
    """
    Fit one CART regression tree by greedy variance reduction

    Ties in gain go to the lowest feature index, then the lowest threshold.
    A node whose targets are constant becomes a leaf.

    Args:
        X: Feature matrix
        y: Targets
        categorical: Boolean mask of categorical columns
        max_depth: Depth limit; None grows until leaves are pure or too small
        min_leaf: Minimum weight on each side of a split
        feature_subsample: Share of features drawn at every node
        seed: Seed for feature subsampling
        max_bins: Threshold cap per numeric feature

    Returns:
        The fitted tree
    """
    X, y, categorical = _prepare(X, y, categorical)
    binner = FeatureBinner(max_bins).fit(X, categorical)
    tree, _ = _grow(X, y, binner, binner.transform(X), np.ones(len(y)), max_depth, min_leaf,
                    feature_subsample, np.random.default_rng(seed))
    return tree


@dataclass
class EnsembleModel:
    """
    Fitted forest or boosted ensemble.

    Forest predictions are the mean of the trees; boosted predictions are
    `base + learning_rate * sum(trees)`.
    """
    kind: str
    trees: List[RegressionTree]
    base: float = 0.0
    learning_rate: float = 1.0
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    schema_hash: str = ''
    n_features: int = 0
    train_loss: List[float] = field(default_factory=list)

    def predict(self, X: np.ndarray, schema_hash: Optional[str] = None) -> np.ndarray:
        if schema_hash is not None and self.schema_hash and schema_hash != self.schema_hash:
            raise ModelError(f"feature schema {schema_hash} does not match the model's {self.schema_hash}")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (self.n_features and X.shape[1] != self.n_features):
            raise ModelError(f"expected {self.n_features} features, got shape {X.shape}")
        if self.kind == 'forest':
            return np.mean(np.stack([tree.predict(X) for tree in self.trees]), axis=0)
        prediction = np.full(X.shape[0], self.base)
        for tree in self.trees:
            prediction += self.learning_rate * tree.predict(X)
        return prediction


def _params_dict(params) -> Dict[str, Any]:
    return dict(vars(params))


def fit_forest(X: np.ndarray, y: np.ndarray, categorical: Optional[np.ndarray] = None,
               params: Optional[ForestParams] = None, seed: int = 0, schema_hash: str = '') -> EnsembleModel:
    """
    Random forest: bootstrap-weighted trees with per-node feature subsampling

    Tree k draws from the k-th child of SeedSequence(seed), so the model is a
    pure function of (rows, params, seed).
    """
    params = params or ForestParams()
    if params.n_trees < 1:
        raise ModelError(f"n_trees must be at least 1, got {params.n_trees}")
    X, y, categorical = _prepare(X, y, categorical)
    binner = FeatureBinner(params.max_bins).fit(X, categorical)
    codes = binner.transform(X)
    n = len(y)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        weights = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64) \
            if params.bootstrap else np.ones(n)
        tree, _ = _grow(X, y, binner, codes, weights, params.max_depth, params.min_leaf,
                        params.feature_subsample, rng)
        trees.append(tree)
    logger.debug(f"Fitted forest of {len(trees)} trees on {n} rows")
    return EnsembleModel('forest', trees, params=_params_dict(params), seed=seed,
                         schema_hash=schema_hash, n_features=X.shape[1])


def fit_boosted(X: np.ndarray, y: np.ndarray, categorical: Optional[np.ndarray] = None,
                params: Optional[BoostParams] = None, seed: int = 0, schema_hash: str = '',
                eval_set: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> EnsembleModel:
    """
    Gradient boosting on squared error: each round fits a shallow tree to the
    current residuals and adds learning_rate times its output

    Args:
        X: Feature matrix
        y: Targets
        categorical: Boolean mask of categorical columns
        params: Rounds, learning rate, tree shape and optional patience
        seed: Seed for feature subsampling
        schema_hash: Column layout identifier checked at predict time
        eval_set: Validation (X, y); with `patience` set, boosting stops after
            that many rounds without improvement and keeps the best round

    Returns:
        EnsembleModel with the training loss after each round in `train_loss`
    """
    params = params or BoostParams()
    if not 0.0 < params.learning_rate <= 1.0:
        raise ModelError(f"learning_rate must lie in (0, 1], got {params.learning_rate}")
    X, y, categorical = _prepare(X, y, categorical)
    binner = FeatureBinner(params.max_bins).fit(X, categorical)
    codes = binner.transform(X)
    rng = np.random.default_rng(seed)
    base = float(np.mean(y))
    fitted = np.full(len(y), base)
    ones = np.ones(len(y))
    trees: List[RegressionTree] = []
    train_loss: List[float] = []

    watch = eval_set is not None and params.patience is not None
    if watch:
        X_val = np.asarray(eval_set[0], dtype=np.float64)
        y_val = np.asarray(eval_set[1], dtype=np.float64)
        val_pred = np.full(len(y_val), base)
        best_loss, best_round, stale = float(np.mean((y_val - val_pred) ** 2)), 0, 0

    for _ in range(params.n_rounds):
        tree, tree_fit = _grow(X, y - fitted, binner, codes, ones, params.max_depth, params.min_leaf,
                               params.feature_subsample, rng)
        trees.append(tree)
        fitted = fitted + params.learning_rate * tree_fit
        train_loss.append(float(np.mean((y - fitted) ** 2)))
        if watch:
            val_pred = val_pred + params.learning_rate * tree.predict(X_val)
            loss = float(np.mean((y_val - val_pred) ** 2))
            if loss < best_loss:
                best_loss, best_round, stale = loss, len(trees), 0
            else:
                stale += 1
                if stale >= params.patience:
                    break

    if watch and best_round < len(trees):
        logger.debug(f"Early stopping kept {best_round} of {len(trees)} rounds")
        trees = trees[:best_round]
        train_loss = train_loss[:best_round]
    return EnsembleModel('boosted', trees, base=base, learning_rate=params.learning_rate,
                         params=_params_dict(params), seed=seed, schema_hash=schema_hash,
                         n_features=X.shape[1], train_loss=train_loss)


def fit_model(algorithm: str, X: np.ndarray, y: np.ndarray, categorical: Optional[np.ndarray],
              forest: ForestParams, boosted: BoostParams, seed: int, schema_hash: str = '',
              eval_set: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> EnsembleModel:
    if algorithm == 'forest':
        return fit_forest(X, y, categorical, forest, seed, schema_hash)
    if algorithm == 'boosted':
        return fit_boosted(X, y, categorical, boosted, seed, schema_hash, eval_set)
    raise ModelError(f"unknown algorithm: {algorithm}")

