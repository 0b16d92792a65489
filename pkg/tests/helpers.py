"""Shared test utilities: independent oracles and synthetic data generators.

The oracles deliberately re-derive results from definitions (plain loops,
textbook formulas) so they stay independent of the library code they check.
"""

from __future__ import annotations

import math

import numpy as np

from adaforest.data import Dataset


# ---------------------------------------------------------------- generators

def make_dataset(features, labels, class_names=None, feature_names=None) -> Dataset:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if class_names is None:
        class_names = [f"class{i}" for i in range(int(labels.max()) + 1 if labels.size else 0)]
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(features.shape[1])]
    return Dataset(
        features=features,
        feature_names=feature_names,
        labels=labels,
        class_names=class_names,
    )


def make_blobs(rng, centers, counts, scale=1.0, class_names=None) -> Dataset:
    """Gaussian blobs, one class per center."""
    centers = np.asarray(centers, dtype=np.float64)
    parts, labels = [], []
    for class_id, (center, count) in enumerate(zip(centers, counts)):
        parts.append(rng.normal(loc=center, scale=scale, size=(count, centers.shape[1])))
        labels.append(np.full(count, class_id, dtype=np.int64))
    return make_dataset(np.vstack(parts), np.concatenate(labels), class_names=class_names)


def random_multiclass(rng, n_rows, n_features, n_classes) -> Dataset:
    features = rng.normal(size=(n_rows, n_features))
    labels = rng.integers(0, n_classes, size=n_rows)
    # every class id must appear at least once
    labels[:n_classes] = np.arange(n_classes)
    return make_dataset(features, labels)


def make_intrusion_corpus(seed) -> Dataset:
    """Imbalanced flow-like corpus mirroring the intrusion-detection shape.

    A big benign cloud, two common attack blobs, and two rare classes that
    each mix an easy well-separated subcluster with a hard subcluster
    embedded in the benign support. Uniform-per-parent synthesis wastes
    budget on the easy subclusters; density-adaptive synthesis does not.
    """
    rng = np.random.default_rng(seed)
    d = 6
    parts, labels, names = [], [], []

    def add(name, arr):
        if name not in names:
            names.append(name)
        parts.append(arr)
        labels.append(np.full(len(arr), names.index(name), dtype=np.int64))

    add("benign", rng.normal(0.0, 1.0, size=(12000, d)))
    add("flood", rng.normal([4, 4, 0, 0, 0, 0], 1.0, size=(1200, d)))
    add("scan", rng.normal([-4, 4, 0, 0, 0, 0], 1.0, size=(800, d)))
    add("infil", np.vstack([
        rng.normal([1.6, 1.6, 0, 0, 0, 0], 0.3, size=(12, d)),
        rng.normal([6, -6, 0, 0, 0, 0], 0.3, size=(13, d)),
    ]))
    add("heart", np.vstack([
        rng.normal([0, -1.8, 0, 0, 0, 0], 0.3, size=(9, d)),
        rng.normal([-6, -6, 0, 0, 0, 0], 0.3, size=(4, d)),
    ]))
    return make_dataset(np.vstack(parts), np.concatenate(labels), class_names=names)


def write_csv(path, headers, rows) -> str:
    lines = [",".join(headers)]
    lines += [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


# ------------------------------------------------------------------- oracles

def pearson_oracle(x, y) -> float:
    """Textbook sum-formula Pearson correlation, no numpy statistics."""
    n = len(x)
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    var_x = sum((a - mean_x) ** 2 for a in x)
    var_y = sum((b - mean_y) ** 2 for b in y)
    return cov / math.sqrt(var_x * var_y)


def knn_oracle(matrix, query_row, k, mask=None):
    """Full O(n^2)-style sort of every candidate by (distance, index)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    scored = []
    for i in range(matrix.shape[0]):
        if i == query_row:
            continue
        if mask is not None and not mask[i]:
            continue
        d = math.sqrt(sum((matrix[i, j] - matrix[query_row, j]) ** 2
                          for j in range(matrix.shape[1])))
        scored.append((d, i))
    scored.sort()
    return [(i, d) for d, i in scored[:k]]


def gini_oracle(counts) -> float:
    total = sum(counts)
    return 1.0 - sum((c / total) ** 2 for c in counts)


def best_split_oracle(features, labels, n_classes):
    """Exhaustive scan over every (feature, midpoint) candidate.

    Applies the same tie rules as the library: lower weighted Gini, then
    lower feature index, then lower threshold.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    node_counts = [int((labels == c).sum()) for c in range(n_classes)]
    if sum(1 for c in node_counts if c) <= 1:
        return None
    node_gini = gini_oracle(node_counts)
    best = None
    for f in range(features.shape[1]):
        values = sorted(set(features[:, f].tolist()))
        for lo, hi in zip(values, values[1:]):
            threshold = (lo + hi) / 2.0
            if not lo < threshold < hi:
                continue
            left = features[:, f] <= threshold
            n_left = int(left.sum())
            n_right = n - n_left
            lc = [int((labels[left] == c).sum()) for c in range(n_classes)]
            rc = [int((labels[~left] == c).sum()) for c in range(n_classes)]
            weighted = (n_left * gini_oracle(lc) + n_right * gini_oracle(rc)) / n
            if best is None or weighted < best[2]:
                best = (f, threshold, weighted)
    if best is None or best[2] >= node_gini:
        return None
    return best[0], best[1], node_gini - best[2]


def roc_points_oracle(scores, positives):
    """FPR/TPR evaluated by brute force at every distinct threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.int64)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    points = [(0.0, 0.0)]
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        tp = int((predicted & (positives == 1)).sum())
        fp = int((predicted & (positives == 0)).sum())
        points.append((fp / n_neg, tp / n_pos))
    return points


def auc_rank_oracle(scores, positives) -> float:
    """Normalized Mann-Whitney statistic with half-counted ties."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.int64)
    pos = scores[positives == 1]
    neg = scores[positives == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def adasyn_plan_oracle(features, labels, minority_class, k, g_total):
    """Direct re-derivation of the per-sample synthesis counts.

    Independent distance ranking, ratio normalization and integer
    apportionment (floor + largest remainder, remainder ties to the lower
    index).
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    minority_rows = [i for i in range(len(labels)) if labels[i] == minority_class]
    delta = []
    for row in minority_rows:
        neighbors = knn_oracle(features, row, k)
        delta.append(sum(1 for idx, _ in neighbors if labels[idx] != minority_class))
    r = [d / k for d in delta]
    total_r = sum(r)
    if total_r > 0:
        r_hat = [v / total_r for v in r]
    else:
        r_hat = [1.0 / len(minority_rows)] * len(minority_rows)
    ideal = [w * g_total for w in r_hat]
    g = [math.floor(v) for v in ideal]
    deficit = g_total - sum(g)
    remainders = sorted(range(len(g)), key=lambda i: (-(ideal[i] - g[i]), i))
    for i in remainders[:deficit]:
        g[i] += 1
    return minority_rows, delta, r_hat, g
