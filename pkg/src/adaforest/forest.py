"""CART trees with Gini splitting, bagged into a random forest.

Trees are grown to max_depth with no pruning; candidate thresholds are the
midpoints between consecutive distinct sorted feature values, and a row
routes left iff x[feature] <= threshold. Forest probabilities are averaged
one-hot majority votes, which also serve as ROC scores downstream.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset


@dataclass
class CartConfig:
    max_depth: int = 40
    min_samples_split: int = 2
    mtry: int | None = None  # None = all features

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")


@dataclass
class ForestConfig:
    n_estimators: int = 10
    cart: CartConfig = field(default_factory=CartConfig)
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")


@dataclass
class Leaf:
    class_counts: np.ndarray

    @property
    def vote(self) -> int:
        # first maximum = lowest class id on ties
        return int(np.argmax(self.class_counts))


@dataclass
class Internal:
    feature_index: int
    threshold: float
    left: "Leaf | Internal"
    right: "Leaf | Internal"


TreeNode = Leaf | Internal


@dataclass
class ForestModel:
    trees: list[TreeNode]
    n_estimators: int
    tree_seeds: list[int]
    bootstrap_membership: list[np.ndarray] | None
    class_names: list[str]
    feature_names: list[str]
    config: ForestConfig
    oob_error: float | None = None

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def gini(class_counts) -> float:
    """Impurity 1 - sum((count/total)^2) of a node's class counts."""
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini of an empty node")
    p = counts / total
    return float(1.0 - (p * p).sum())


def _scan_feature(x: np.ndarray, y: np.ndarray, n_classes: int):
    """Best midpoint split of one feature: (threshold, weighted child gini)."""
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    boundaries = np.nonzero(xs[1:] > xs[:-1])[0]
    if boundaries.size == 0:
        return None
    onehot = (ys[:, None] == np.arange(n_classes)[None, :]).astype(np.float64)
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    thresholds = (xs[boundaries] + xs[boundaries + 1]) / 2.0
    # adjacent representable floats can round the midpoint onto an endpoint
    valid = (thresholds > xs[boundaries]) & (thresholds < xs[boundaries + 1])
    if not valid.all():
        boundaries = boundaries[valid]
        thresholds = thresholds[valid]
        if boundaries.size == 0:
            return None
    left = cum[boundaries]
    n_left = (boundaries + 1).astype(np.float64)
    right = total - left
    n_right = n - n_left
    g_left = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
    g_right = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)
    weighted = (n_left * g_left + n_right * g_right) / n
    best = int(np.argmin(weighted))  # first minimum = lowest threshold
    return float(thresholds[best]), float(weighted[best])


def best_split(ds: Dataset, rows, feature_subset=None):
    """Exhaustive scan for the split minimizing size-weighted child Gini.

    Returns (feature_index, threshold, impurity_decrease) or None if the
    node is pure or no candidate reduces impurity. Ties break toward lower
    weighted Gini, then lower feature index, then lower threshold.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("best_split on an empty node")
    if feature_subset is None:
        feature_subset = range(ds.n_features)
    y = ds.labels[rows]
    counts = np.bincount(y, minlength=ds.n_classes)
    node_gini = gini(counts)
    if node_gini == 0.0:
        return None
    best = None
    for f in sorted(int(f) for f in feature_subset):
        found = _scan_feature(ds.features[rows, f], y, ds.n_classes)
        if found is None:
            continue
        threshold, weighted = found
        if best is None or weighted < best[2]:
            best = (f, threshold, weighted)
    if best is None or best[2] >= node_gini:
        return None
    return best[0], best[1], node_gini - best[2]


def build_tree(ds: Dataset, rows, config: CartConfig, rng: np.random.Generator) -> TreeNode:
    """Recursively grow an unpruned CART over the given rows.

    A fresh uniform feature subset of size mtry is drawn at every node.
    """
    rows = np.asarray(rows, dtype=np.int64)
    n_features = ds.n_features
    mtry = n_features if config.mtry is None else min(config.mtry, n_features)

    def grow(node_rows: np.ndarray, depth: int) -> TreeNode:
        counts = np.bincount(ds.labels[node_rows], minlength=ds.n_classes)
        if (
            depth >= config.max_depth
            or node_rows.size < config.min_samples_split
            or np.count_nonzero(counts) <= 1
        ):
            return Leaf(class_counts=counts)
        if mtry < n_features:
            subset = np.sort(rng.choice(n_features, size=mtry, replace=False))
        else:
            subset = np.arange(n_features)
        found = best_split(ds, node_rows, subset)
        if found is None:
            return Leaf(class_counts=counts)
        f, threshold, _ = found
        goes_left = ds.features[node_rows, f] <= threshold
        return Internal(
            feature_index=f,
            threshold=threshold,
            left=grow(node_rows[goes_left], depth + 1),
            right=grow(node_rows[~goes_left], depth + 1),
        )

    return grow(rows, 0)


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def apply_tree(node: TreeNode, features: np.ndarray) -> np.ndarray:
    """Per-row hard votes of one tree over a feature matrix."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    votes = np.empty(features.shape[0], dtype=np.int64)

    def descend(nd: TreeNode, idx: np.ndarray):
        if isinstance(nd, Leaf):
            votes[idx] = nd.vote
            return
        mask = features[idx, nd.feature_index] <= nd.threshold
        left_idx = idx[mask]
        right_idx = idx[~mask]
        if left_idx.size:
            descend(nd.left, left_idx)
        if right_idx.size:
            descend(nd.right, right_idx)

    descend(node, np.arange(features.shape[0]))
    return votes


def _derive_tree_seed(master_seed: int, tree_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, tree_index]).generate_state(1)[0])


def fit_forest(ds: Dataset, config: ForestConfig) -> ForestModel:
    """Bag n_estimators trees, each on its own N-sized with-replacement sample.

    Per-tree seeds are a pure function of (config.seed, tree index), so
    training order and parallelism never change the model. The out-of-bag
    error is computed and stored on the model.
    """
    n = ds.n_rows
    if n == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    tree_seeds = [_derive_tree_seed(config.seed, j) for j in range(config.n_estimators)]

    def train_one(j: int):
        rng = np.random.default_rng(tree_seeds[j])
        bag = rng.integers(0, n, size=n)
        tree = build_tree(ds, bag, config.cart, rng)
        return tree, bag

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(train_one, range(config.n_estimators)))
    else:
        results = [train_one(j) for j in range(config.n_estimators)]

    model = ForestModel(
        trees=[t for t, _ in results],
        n_estimators=config.n_estimators,
        tree_seeds=tree_seeds,
        bootstrap_membership=[bag for _, bag in results],
        class_names=list(ds.class_names),
        feature_names=list(ds.feature_names),
        config=config,
    )
    model.oob_error = oob_error(model, ds)
    return model


def predict_proba_matrix(model: ForestModel, features: np.ndarray) -> np.ndarray:
    """Vote-fraction class probabilities for every row of a matrix."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != len(model.feature_names):
        raise ValueError(
            f"expected {len(model.feature_names)} features, got {features.shape[1]}"
        )
    votes = np.zeros((features.shape[0], model.n_classes), dtype=np.float64)
    for tree in model.trees:
        votes[np.arange(features.shape[0]), apply_tree(tree, features)] += 1.0
    return votes / model.n_estimators


def predict_proba(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Averaged one-hot tree votes for a single feature row."""
    return predict_proba_matrix(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def predict_matrix(model: ForestModel, features: np.ndarray) -> np.ndarray:
    proba = predict_proba_matrix(model, features)
    return np.argmax(proba, axis=1)  # first maximum = lowest class id on ties


def predict(model: ForestModel, x: np.ndarray) -> int:
    return int(predict_matrix(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def oob_error(model: ForestModel, ds: Dataset) -> float | None:
    """Misclassification rate using only trees whose bootstrap missed each row."""
    if model.bootstrap_membership is None:
        raise ValueError("bootstrap membership was not retained")
    votes = np.zeros((ds.n_rows, model.n_classes), dtype=np.float64)
    for tree, bag in zip(model.trees, model.bootstrap_membership):
        in_bag = np.zeros(ds.n_rows, dtype=bool)
        in_bag[bag] = True
        oob_rows = np.nonzero(~in_bag)[0]
        if oob_rows.size == 0:
            continue
        votes[oob_rows, apply_tree(tree, ds.features[oob_rows])] += 1.0
    evaluated = votes.sum(axis=1) > 0
    if not evaluated.any():
        warnings.warn("no out-of-bag rows; OOB error unavailable")
        return None
    predictions = np.argmax(votes[evaluated], axis=1)
    return float(np.mean(predictions != ds.labels[evaluated]))


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"kind": "leaf", "counts": [int(c) for c in node.class_counts]}
    return {
        "kind": "split",
        "feature": node.feature_index,
        "threshold": repr(node.threshold),
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict) -> TreeNode:
    if d["kind"] == "leaf":
        return Leaf(class_counts=np.array(d["counts"], dtype=np.int64))
    return Internal(
        feature_index=int(d["feature"]),
        threshold=float(d["threshold"]),
        left=_node_from_dict(d["left"]),
        right=_node_from_dict(d["right"]),
    )


def forest_to_dict(model: ForestModel) -> dict:
    """Self-describing document sufficient to reload and predict."""
    return {
        "format": "adaforest-forest",
        "version": 1,
        "n_estimators": model.n_estimators,
        "config": {
            "max_depth": model.config.cart.max_depth,
            "min_samples_split": model.config.cart.min_samples_split,
            "mtry": model.config.cart.mtry,
            "seed": model.config.seed,
        },
        "tree_seeds": list(model.tree_seeds),
        "class_names": list(model.class_names),
        "feature_names": list(model.feature_names),
        "oob_error": model.oob_error,
        "trees": [_node_to_dict(t) for t in model.trees],
    }


def forest_from_dict(d: dict) -> ForestModel:
    if d.get("format") != "adaforest-forest":
        raise ValueError("not a serialized forest document")
    cfg = d["config"]
    config = ForestConfig(
        n_estimators=int(d["n_estimators"]),
        cart=CartConfig(
            max_depth=int(cfg["max_depth"]),
            min_samples_split=int(cfg["min_samples_split"]),
            mtry=cfg["mtry"],
        ),
        seed=int(cfg["seed"]),
    )
    return ForestModel(
        trees=[_node_from_dict(t) for t in d["trees"]],
        n_estimators=int(d["n_estimators"]),
        tree_seeds=[int(s) for s in d["tree_seeds"]],
        bootstrap_membership=None,
        class_names=list(d["class_names"]),
        feature_names=list(d["feature_names"]),
        config=config,
        oob_error=d.get("oob_error"),
    )


def forest_to_json(model: ForestModel) -> str:
    return json.dumps(forest_to_dict(model), sort_keys=True, indent=2) + "\n"


def forest_from_json(text: str) -> ForestModel:
    return forest_from_dict(json.loads(text))
