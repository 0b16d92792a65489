"""Training-set rebalancers: random under-sampling, SMOTE and ADASYN.

All three are deterministic functions of (dataset, strategy): a single
seeded generator per invocation is consumed in a fixed order (targeted
classes by class id, parents by row index, draws per parent in sequence).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, Dataset
from .neighbors import NeighborQuery, knn

TARGET_COUNTS = "target_counts"
BALANCE_RATIO = "balance_ratio"


@dataclass
class SamplingStrategy:
    """How much to resample each class.

    target_counts mode gives explicit per-class-name targets; balance_ratio
    mode synthesizes beta * (largest class - class count) rows for every
    smaller class.
    """

    mode: str = TARGET_COUNTS
    targets: dict[str, int] = field(default_factory=dict)
    beta: float = 1.0
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (TARGET_COUNTS, BALANCE_RATIO):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.mode == BALANCE_RATIO and not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclass
class SynthesisRecord:
    """Provenance of one synthetic row: s = parent + (neighbor - parent) * gamma."""

    parent_index: int
    neighbor_index: int
    gamma: float
    class_id: int

    def to_dict(self) -> dict:
        return {
            "parent_index": self.parent_index,
            "neighbor_index": self.neighbor_index,
            "gamma": self.gamma,
            "class_id": self.class_id,
        }


def records_to_json(records: list[SynthesisRecord]) -> str:
    """Audit export: the synthesis provenance as a JSON array."""
    return json.dumps([r.to_dict() for r in records], sort_keys=True, indent=2) + "\n"


@dataclass
class AdasynPlan:
    """Per-class synthesis budget and its density-driven apportionment."""

    class_id: int
    m_l: int
    m_s: int
    g_total: int
    minority_rows: np.ndarray
    delta: np.ndarray
    r: np.ndarray
    r_hat: np.ndarray
    g: np.ndarray


def _class_ids_by_name(ds: Dataset, names) -> dict[int, int]:
    """Map class id -> target count, validating the names."""
    out: dict[int, int] = {}
    for name, count in names.items():
        if name not in ds.class_names:
            raise DataError(f"unknown class {name!r} in sampling targets")
        out[ds.class_names.index(name)] = int(count)
    return out


def apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Split an integer total along nonnegative weights summing to 1.

    Floor-then-largest-remainder: the result sums to total exactly and is
    monotone in the weights. Remainder ties go to the lower index.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if total < 0:
        raise ValueError("total must be >= 0")
    ideal = weights * total
    base = np.floor(ideal).astype(np.int64)
    deficit = int(total - base.sum())
    if not 0 <= deficit <= weights.size:
        raise AssertionError("apportion: weights do not sum to 1")
    if deficit:
        order = np.argsort(-(ideal - base), kind="stable")
        base[order[:deficit]] += 1
    return base


def random_undersample(ds: Dataset, strategy: SamplingStrategy) -> Dataset:
    """Keep a uniform random subset of each targeted class at exactly its target size."""
    if strategy.mode != TARGET_COUNTS:
        raise ValueError("random_undersample requires target_counts mode")
    targets = _class_ids_by_name(ds, strategy.targets)
    counts = ds.label_counts()
    for class_id, target in targets.items():
        if target > counts[class_id]:
            raise DataError(
                f"undersample target {target} exceeds class "
                f"{ds.class_names[class_id]!r} count {counts[class_id]}"
            )
        if target < 0:
            raise DataError("negative undersample target")
    rng = np.random.default_rng([strategy.seed, 0x0805])
    keep = np.ones(ds.n_rows, dtype=bool)
    for class_id in sorted(targets):
        rows = np.nonzero(ds.labels == class_id)[0]
        chosen = rng.choice(rows, size=targets[class_id], replace=False)
        keep[rows] = False
        keep[chosen] = True
    return ds.subset(np.nonzero(keep)[0])


def _same_class_neighbor_pool(ds: Dataset, row: int, class_id: int, k: int) -> np.ndarray:
    """The k nearest same-class rows of `row` (all of them if fewer than k)."""
    mask = ds.labels == class_id
    q = NeighborQuery(k=k, candidate_mask=mask)
    return np.array([i for i, _ in knn(ds.features, row, q)], dtype=np.int64)


def _synthesize(
    ds: Dataset,
    class_id: int,
    parent_rows: np.ndarray,
    per_parent: np.ndarray,
    k: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[SynthesisRecord]]:
    """Emit per_parent[i] interpolated rows for each parent, in parent order."""
    records: list[SynthesisRecord] = []
    new_rows = np.empty((int(per_parent.sum()), ds.n_features), dtype=np.float64)
    out = 0
    for parent, count in zip(parent_rows, per_parent):
        if count == 0:
            continue
        pool = _same_class_neighbor_pool(ds, int(parent), class_id, k)
        x_i = ds.features[parent]
        for _ in range(int(count)):
            neighbor = int(pool[rng.integers(0, pool.size)])
            gamma = float(rng.random())
            new_rows[out] = x_i + (ds.features[neighbor] - x_i) * gamma
            records.append(
                SynthesisRecord(
                    parent_index=int(parent),
                    neighbor_index=neighbor,
                    gamma=gamma,
                    class_id=class_id,
                )
            )
            out += 1
    return new_rows, records


def _append_synthetic(ds: Dataset, new_rows: list[np.ndarray], new_labels: list[np.ndarray]) -> Dataset:
    if not new_rows:
        return ds
    return Dataset(
        features=np.vstack([ds.features] + new_rows),
        feature_names=list(ds.feature_names),
        labels=np.concatenate([ds.labels] + new_labels),
        class_names=list(ds.class_names),
    )


def smote(ds: Dataset, strategy: SamplingStrategy) -> tuple[Dataset, list[SynthesisRecord]]:
    """Oversample targeted classes to their targets, one even share per parent.

    Parents cycle in row-index order so per-parent synthesis counts differ
    by at most 1; each synthetic row interpolates toward a uniformly chosen
    one of the parent's k nearest same-class neighbors.
    """
    if strategy.mode != TARGET_COUNTS:
        raise ValueError("smote requires target_counts mode")
    targets = _class_ids_by_name(ds, strategy.targets)
    counts = ds.label_counts()
    rng = np.random.default_rng([strategy.seed, 0x5307E])
    blocks: list[np.ndarray] = []
    label_blocks: list[np.ndarray] = []
    records: list[SynthesisRecord] = []
    for class_id in sorted(targets):
        target = targets[class_id]
        m_s = int(counts[class_id])
        if target < m_s:
            raise DataError(
                f"smote target {target} below class "
                f"{ds.class_names[class_id]!r} count {m_s}"
            )
        needed = target - m_s
        if needed == 0:
            continue
        if m_s < 2:
            raise DataError(
                f"class {ds.class_names[class_id]!r} has {m_s} row(s); "
                "interpolation needs at least 2"
            )
        parent_rows = np.nonzero(ds.labels == class_id)[0]
        per_parent = np.full(m_s, needed // m_s, dtype=np.int64)
        per_parent[: needed % m_s] += 1
        rows, recs = _synthesize(ds, class_id, parent_rows, per_parent, strategy.k_neighbors, rng)
        blocks.append(rows)
        label_blocks.append(np.full(rows.shape[0], class_id, dtype=np.int64))
        records.extend(recs)
    return _append_synthetic(ds, blocks, label_blocks), records


def adasyn_plan(ds: Dataset, minority_class: int, strategy: SamplingStrategy) -> AdasynPlan:
    """Work out how many rows to synthesize per minority sample.

    delta[i] counts non-minority rows among the k nearest neighbors of
    sample i in the whole set; r = delta / k is normalized to r_hat and the
    budget G is apportioned to integers summing to G exactly. When no
    minority sample has a majority neighbor (sum of r is 0) the weights
    fall back to uniform rather than failing.
    """
    counts = ds.label_counts()
    m_s = int(counts[minority_class])
    if m_s == 0:
        raise DataError("minority class is empty")
    if ds.n_rows - m_s == 0:
        raise DataError("no rows outside the minority class")
    if strategy.mode == TARGET_COUNTS:
        name = ds.class_names[minority_class]
        if name not in strategy.targets:
            raise DataError(f"no target for class {name!r}")
        g_total = int(strategy.targets[name]) - m_s
        m_l = int(counts.max())
    else:
        m_l = int(counts.max())
        g_total = int(math.floor((m_l - m_s) * strategy.beta + 0.5))
    if g_total < 0:
        raise DataError(
            f"target below current count for class {ds.class_names[minority_class]!r}"
        )
    if g_total > 0 and m_s < 2:
        raise DataError(
            f"class {ds.class_names[minority_class]!r} has a single row; "
            "no interpolation partner"
        )
    minority_rows = np.nonzero(ds.labels == minority_class)[0]
    k = strategy.k_neighbors
    delta = np.empty(m_s, dtype=np.int64)
    for i, row in enumerate(minority_rows):
        neigh = knn(ds.features, int(row), NeighborQuery(k=k))
        delta[i] = sum(1 for idx, _ in neigh if ds.labels[idx] != minority_class)
    r = delta / k
    total_r = r.sum()
    if total_r > 0:
        r_hat = r / total_r
    else:
        r_hat = np.full(m_s, 1.0 / m_s)
    g = apportion(r_hat, g_total)
    return AdasynPlan(
        class_id=minority_class,
        m_l=m_l,
        m_s=m_s,
        g_total=g_total,
        minority_rows=minority_rows,
        delta=delta,
        r=r,
        r_hat=r_hat,
        g=g,
    )


def adasyn(
    ds: Dataset, strategy: SamplingStrategy
) -> tuple[Dataset, list[SynthesisRecord], list[AdasynPlan]]:
    """Density-adaptive oversampling: hard-to-learn parents synthesize more.

    Each targeted class is planned independently against the input dataset;
    synthetic rows are appended after all original rows, grouped by class.
    """
    counts = ds.label_counts()
    if strategy.mode == TARGET_COUNTS:
        targeted = sorted(_class_ids_by_name(ds, strategy.targets))
    else:
        top = int(counts.max())
        targeted = [c for c in range(ds.n_classes) if 0 < counts[c] < top]
    rng = np.random.default_rng([strategy.seed, 0xADA5])
    blocks: list[np.ndarray] = []
    label_blocks: list[np.ndarray] = []
    records: list[SynthesisRecord] = []
    plans: list[AdasynPlan] = []
    for class_id in targeted:
        plan = adasyn_plan(ds, class_id, strategy)
        plans.append(plan)
        if plan.g_total == 0:
            continue
        rows, recs = _synthesize(
            ds, class_id, plan.minority_rows, plan.g, strategy.k_neighbors, rng
        )
        blocks.append(rows)
        label_blocks.append(np.full(rows.shape[0], class_id, dtype=np.int64))
        records.extend(recs)
    return _append_synthetic(ds, blocks, label_blocks), records, plans
