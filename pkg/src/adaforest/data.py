"""CSV flow-table ingestion, cleaning, standardization and stratified splitting."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class DataError(Exception):
    """Raised for malformed input tables or impossible data operations."""


@dataclass
class RawTable:
    """A parsed CSV: trimmed headers plus string cell rows."""

    headers: list[str]
    rows: list[list[str]]
    source_path: str = ""

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class Dataset:
    """Immutable numeric feature matrix with integer-encoded labels.

    features is (n_rows, n_features) float64 with finite entries only;
    labels[i] indexes into class_names.
    """

    features: np.ndarray
    feature_names: list[str]
    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if feats.shape[0] != labs.shape[0]:
            raise DataError("features and labels disagree on row count")
        if feats.shape[1] != len(self.feature_names):
            raise DataError("feature_names length does not match feature columns")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("duplicate feature names")
        if feats.size and not np.isfinite(feats).all():
            raise DataError("features contain non-finite entries")
        if labs.size and (labs.min() < 0 or labs.max() >= len(self.class_names)):
            raise DataError("label index outside class table")
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def label_counts(self) -> np.ndarray:
        """Per-class row counts, indexed by class id."""
        return np.bincount(self.labels, minlength=self.n_classes)

    def class_counts(self) -> dict[str, int]:
        counts = self.label_counts()
        return {name: int(counts[i]) for i, name in enumerate(self.class_names)}

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx].copy(),
            feature_names=list(self.feature_names),
            labels=self.labels[idx].copy(),
            class_names=list(self.class_names),
        )


@dataclass
class PreprocessReport:
    """What preprocessing did: drops, merges and resulting shape."""

    rows_dropped_nonfinite: int = 0
    columns_dropped_constant: list[str] = field(default_factory=list)
    columns_dropped_correlated: list[tuple[str, str, float]] = field(default_factory=list)
    class_merge_applied: dict[str, str] = field(default_factory=dict)
    final_feature_count: int = 0
    per_class_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows_dropped_nonfinite": self.rows_dropped_nonfinite,
            "columns_dropped_constant": list(self.columns_dropped_constant),
            "columns_dropped_correlated": [
                {"kept": k, "dropped": d, "correlation": r}
                for k, d, r in self.columns_dropped_correlated
            ],
            "class_merge_applied": dict(self.class_merge_applied),
            "final_feature_count": self.final_feature_count,
            "per_class_counts": dict(self.per_class_counts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            "Preprocessing report",
            f"  rows dropped (non-finite):   {self.rows_dropped_nonfinite}",
            f"  constant columns dropped:    {len(self.columns_dropped_constant)}",
            f"  correlated columns dropped:  {len(self.columns_dropped_correlated)}",
            f"  classes merged:              {len(self.class_merge_applied)}",
            f"  final feature count:         {self.final_feature_count}",
            "  per-class counts:",
        ]
        width = max((len(n) for n in self.per_class_counts), default=0)
        for name, count in self.per_class_counts.items():
            lines.append(f"    {name.ljust(width)}  {count}")
        return "\n".join(lines) + "\n"


@dataclass
class Standardizer:
    """Per-feature centering/scaling fitted on training rows only."""

    means: np.ndarray
    std_devs: np.ndarray


@dataclass
class SplitPair:
    """A stratified train/test partition of row indices."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    ratio: float
    seed: int


@dataclass
class FoldPlan:
    """Stratified k-fold assignment: assignments[i] is the fold id of row i."""

    k: int
    assignments: np.ndarray
    seed: int


def _dedupe_headers(headers: list[str]) -> list[str]:
    """Disambiguate repeated header names as name.1, name.2, ..."""
    seen: dict[str, int] = {}
    out = []
    for h in headers:
        if h in seen:
            seen[h] += 1
            out.append(f"{h}.{seen[h]}")
        else:
            seen[h] = 0
            out.append(h)
    return out


def load_csv(path: str, has_header: bool = True) -> RawTable:
    """Parse a comma-separated file into a RawTable.

    Headers are whitespace-trimmed and repeated names are suffixed .1, .2
    so downstream schemas stay unambiguous. Every row must have as many
    cells as there are headers; a ragged row raises DataError naming its
    1-based file line. Bytes that are not valid UTF-8 decode to U+FFFD
    rather than failing the whole file (flow exports carry stray bytes in
    some label cells).
    """
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as fh:
        reader = csv.reader(fh)
        records = [row for row in reader if row]  # skip fully blank lines
    if not records:
        raise DataError(f"{path}: empty file")
    if has_header:
        headers = _dedupe_headers([h.strip() for h in records[0]])
        data = records[1:]
        first_data_line = 2
    else:
        headers = [f"col{i}" for i in range(len(records[0]))]
        data = records
        first_data_line = 1
    for i, row in enumerate(data):
        if len(row) != len(headers):
            raise DataError(
                f"{path}: line {first_data_line + i} has {len(row)} cells, "
                f"expected {len(headers)}"
            )
    return RawTable(headers=headers, rows=data, source_path=str(path))


def clean(table: RawTable, label_column: str = "Label") -> tuple[Dataset, PreprocessReport]:
    """Drop non-finite rows and constant columns; integer-encode labels.

    Labels are encoded in first-appearance order over the surviving rows so
    class ids are reproducible from the file order alone.
    """
    if label_column not in table.headers:
        raise DataError(f"label column {label_column!r} not found in {table.source_path or 'table'}")
    label_idx = table.headers.index(label_column)
    feature_names = [h for i, h in enumerate(table.headers) if i != label_idx]
    feature_cols = [i for i in range(len(table.headers)) if i != label_idx]

    n = len(table.rows)
    raw = np.empty((n, len(feature_cols)), dtype=np.float64)
    for r, row in enumerate(table.rows):
        for c, col in enumerate(feature_cols):
            cell = row[col].strip()
            try:
                raw[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"unparseable numeric cell {cell!r} in column "
                    f"{table.headers[col]!r}, data row {r}"
                ) from None

    finite = np.isfinite(raw).all(axis=1) if raw.size else np.ones(n, dtype=bool)
    report = PreprocessReport(rows_dropped_nonfinite=int(n - finite.sum()))
    if not finite.any():
        raise DataError("no rows survive non-finite filtering")
    kept = raw[finite]
    kept_labels = [table.rows[i][label_idx].strip() for i in np.nonzero(finite)[0]]

    # constant = identical value across all surviving rows
    constant = (kept == kept[0]).all(axis=0)
    report.columns_dropped_constant = [feature_names[j] for j in np.nonzero(constant)[0]]
    keep_cols = np.nonzero(~constant)[0]
    if keep_cols.size == 0:
        raise DataError("no feature columns survive constant-column filtering")
    kept = kept[:, keep_cols]
    surviving_names = [feature_names[j] for j in keep_cols]

    class_names: list[str] = []
    class_index: dict[str, int] = {}
    labels = np.empty(len(kept_labels), dtype=np.int64)
    for i, name in enumerate(kept_labels):
        if name not in class_index:
            class_index[name] = len(class_names)
            class_names.append(name)
        labels[i] = class_index[name]

    ds = Dataset(features=kept, feature_names=surviving_names, labels=labels, class_names=class_names)
    report.final_feature_count = ds.n_features
    report.per_class_counts = ds.class_counts()
    return ds, report


def merge_classes(ds: Dataset, merge_map: dict[str, str]) -> Dataset:
    """Rename classes per merge_map and re-encode labels; rows untouched."""
    for original in merge_map:
        if original not in ds.class_names:
            raise DataError(f"merge_classes: unknown class {original!r}")
    if not merge_map:
        return ds
    merged_of = [merge_map.get(name, name) for name in ds.class_names]
    new_names: list[str] = []
    new_index: dict[str, int] = {}
    remap = np.empty(ds.n_classes, dtype=np.int64)
    for old_id, name in enumerate(merged_of):
        if name not in new_index:
            new_index[name] = len(new_names)
            new_names.append(name)
        remap[old_id] = new_index[name]
    return Dataset(
        features=ds.features.copy(),
        feature_names=list(ds.feature_names),
        labels=remap[ds.labels],
        class_names=new_names,
    )


def prune_correlated(
    ds: Dataset, threshold: float = 0.95
) -> tuple[Dataset, list[tuple[str, str, float]]]:
    """Drop the later column of every feature pair with |Pearson r| > threshold.

    The scan is left-to-right over the current column order, so a column
    already marked for dropping never triggers further drops.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    if ds.n_rows < 2:
        raise DataError("prune_correlated needs at least 2 rows")
    corr = np.corrcoef(ds.features, rowvar=False)
    if ds.n_features == 1:
        corr = corr.reshape(1, 1)
    dropped = np.zeros(ds.n_features, dtype=bool)
    drops: list[tuple[str, str, float]] = []
    for i in range(ds.n_features):
        if dropped[i]:
            continue
        for j in range(i + 1, ds.n_features):
            if dropped[j]:
                continue
            r = float(corr[i, j])
            if abs(r) > threshold:
                dropped[j] = True
                drops.append((ds.feature_names[i], ds.feature_names[j], r))
    keep = np.nonzero(~dropped)[0]
    pruned = Dataset(
        features=ds.features[:, keep].copy(),
        feature_names=[ds.feature_names[j] for j in keep],
        labels=ds.labels.copy(),
        class_names=list(ds.class_names),
    )
    return pruned, drops


def fit_standardizer(ds: Dataset) -> Standardizer:
    """Fit per-feature mean and population standard deviation."""
    means = ds.features.mean(axis=0)
    std_devs = ds.features.std(axis=0)  # population (ddof=0)
    if (std_devs <= 0).any():
        bad = [ds.feature_names[j] for j in np.nonzero(std_devs <= 0)[0]]
        raise DataError(f"zero-variance features at standardizer fit: {bad}")
    return Standardizer(means=means, std_devs=std_devs)


def apply_standardizer(s: Standardizer, ds: Dataset) -> Dataset:
    """Transform each feature to (x - mean) / std_dev."""
    if len(s.means) != ds.n_features:
        raise DataError("standardizer arity does not match dataset")
    return Dataset(
        features=(ds.features - s.means) / s.std_devs,
        feature_names=list(ds.feature_names),
        labels=ds.labels.copy(),
        class_names=list(ds.class_names),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def train_test_split(ds: Dataset, train_ratio: float = 0.8, seed: int = 0) -> SplitPair:
    """Stratified shuffle split; per-class train count = round(count * ratio).

    The rounded count is clipped so both sides are nonempty whenever a class
    has at least 2 rows. A single-row class goes entirely to train with a
    warning.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ValueError("train_ratio must be in (0, 1)")
    if ds.n_rows == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng([seed, 0x5E17])
    train_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []
    for class_id in range(ds.n_classes):
        rows = np.nonzero(ds.labels == class_id)[0]
        if rows.size == 0:
            continue
        if rows.size == 1:
            warnings.warn(
                f"class {ds.class_names[class_id]!r} has a single row; "
                "assigning it to the training side"
            )
            train_parts.append(rows)
            continue
        shuffled = rng.permutation(rows)
        n_train = _round_half_up(rows.size * train_ratio)
        n_train = min(max(n_train, 1), rows.size - 1)
        train_parts.append(shuffled[:n_train])
        test_parts.append(shuffled[n_train:])
    train_idx = np.sort(np.concatenate(train_parts)) if train_parts else np.empty(0, np.int64)
    test_idx = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, np.int64)
    return SplitPair(train_indices=train_idx, test_indices=test_idx, ratio=train_ratio, seed=seed)


def stratified_kfold(ds: Dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Per-class seeded shuffle then round-robin fold assignment."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > ds.n_rows:
        raise DataError(f"k={k} exceeds row count {ds.n_rows}")
    rng = np.random.default_rng([seed, 0xF01D])
    assignments = np.full(ds.n_rows, -1, dtype=np.int64)
    for class_id in range(ds.n_classes):
        rows = np.nonzero(ds.labels == class_id)[0]
        if rows.size == 0:
            continue
        shuffled = rng.permutation(rows)
        assignments[shuffled] = np.arange(rows.size) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)
