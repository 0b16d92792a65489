"""Config-driven experiment pipeline: preprocess, tune, run and compare.

Stage order: clean -> split -> standardize (fitted on the training side
only) -> (CV tune) -> oversample -> fit -> test. The test split never
reaches a sampler, a standardizer fit, or a tuning fold; a LeakageGuard
enforces that with index-set disjointness checks and fails the run on
violation.
"""

from __future__ import annotations

import json
import time
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    DataError,
    Dataset,
    PreprocessReport,
    apply_standardizer,
    clean,
    fit_standardizer,
    load_csv,
    merge_classes,
    prune_correlated,
    stratified_kfold,
    train_test_split,
)
from .forest import CartConfig, ForestConfig, ForestModel, fit_forest, forest_to_json
from .forest import predict_matrix, predict_proba_matrix
from .metrics import evaluate, macro_metrics, confusion
from .sampling import SamplingStrategy, adasyn, random_undersample, smote

SAMPLER_NAMES = ("none", "rus", "smote", "adasyn")

DISPLAY_NAMES = {
    "none": "forest",
    "rus": "rus + forest",
    "smote": "smote + forest",
    "adasyn": "adasyn + forest",
}


class ConfigError(Exception):
    """Raised for malformed or inconsistent experiment configuration."""


class LeakageError(RuntimeError):
    """Raised when test-split rows reach a training-side stage."""


class LeakageGuard:
    """Holds the test index set and rejects any training-side overlap."""

    def __init__(self, test_indices):
        self.test_set = frozenset(int(i) for i in np.asarray(test_indices).ravel())

    def check(self, indices, stage: str) -> None:
        overlap = self.test_set.intersection(int(i) for i in np.asarray(indices).ravel())
        if overlap:
            raise LeakageError(
                f"{stage}: {len(overlap)} test row(s) leaked into a training-side stage"
            )


def derive_seed(master: int, *path) -> int:
    """Pure function of (master seed, path) usable as an independent seed."""
    parts = [int(master) & 0xFFFFFFFF]
    for p in path:
        if isinstance(p, str):
            parts.append(zlib.crc32(p.encode("utf-8")))
        else:
            parts.append(int(p) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


@dataclass
class SamplerSpec:
    name: str
    strategy: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SAMPLER_NAMES:
            raise ConfigError(f"unknown sampler {self.name!r}; expected one of {SAMPLER_NAMES}")
        if self.name != "none" and not self.strategy:
            raise ConfigError(f"sampler {self.name!r} needs a strategy")


@dataclass
class DeskScale:
    keep_all_below: int = 10_000
    fraction: float = 0.02

    def __post_init__(self):
        if self.keep_all_below < 1:
            raise ConfigError("desk_scale.keep_all_below must be >= 1")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError("desk_scale.fraction must be in (0, 1]")


@dataclass
class ExperimentConfig:
    """Full declarative description of one pipeline run."""

    input_csvs: list[str]
    label_column: str = "Label"
    merge_map: dict[str, str] = field(default_factory=dict)
    correlation_threshold: float = 0.95
    train_ratio: float = 0.8
    folds: int = 5
    cv_repetitions: int = 10
    repetitions: int = 50
    sampler: SamplerSpec = field(default_factory=lambda: SamplerSpec(name="none"))
    samplers: list[SamplerSpec] = field(default_factory=list)
    strategy_grid: list[dict] = field(default_factory=list)
    rare_class_max_count: int = 1_000
    n_estimators: int = 10
    max_depth: int = 40
    mtry: int | None = None
    min_samples_split: int = 2
    n_jobs: int = 1
    seed: int = 0
    output_dir: str = "out"
    desk_scale: DeskScale | None = None

    def __post_init__(self):
        if not self.input_csvs:
            raise ConfigError("input_csvs must list at least one file")
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError("train_ratio must be in (0, 1)")
        if not 0.0 < self.correlation_threshold <= 1.0:
            raise ConfigError("correlation_threshold must be in (0, 1]")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.repetitions < 1 or self.cv_repetitions < 1:
            raise ConfigError("repetitions and cv_repetitions must be >= 1")
        if self.n_estimators < 1 or self.max_depth < 1:
            raise ConfigError("forest needs n_estimators >= 1 and max_depth >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config document must be a JSON object")
        known = dict(raw)
        forest = known.pop("forest", {})
        sampler = known.pop("sampler", "none")
        strategy = known.pop("strategy", {})
        samplers = known.pop("samplers", [])
        desk = known.pop("desk_scale", None)
        allowed = {
            "input_csvs", "label_column", "merge_map", "correlation_threshold",
            "train_ratio", "folds", "cv_repetitions", "repetitions",
            "strategy_grid", "rare_class_max_count", "seed", "output_dir",
        }
        unknown = set(known) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            spec = SamplerSpec(name=sampler, strategy=strategy)
            sampler_specs = [
                SamplerSpec(name=s.get("sampler", "none"), strategy=s.get("strategy", {}))
                for s in samplers
            ]
            desk_scale = None
            if desk is True:
                desk_scale = DeskScale()
            elif isinstance(desk, dict):
                desk_scale = DeskScale(**desk)
            elif desk not in (None, False):
                raise ConfigError("desk_scale must be true, false or an object")
            return cls(
                sampler=spec,
                samplers=sampler_specs,
                desk_scale=desk_scale,
                n_estimators=int(forest.get("n_estimators", 10)),
                max_depth=int(forest.get("max_depth", 40)),
                mtry=forest.get("mtry"),
                min_samples_split=int(forest.get("min_samples_split", 2)),
                n_jobs=int(forest.get("n_jobs", 1)),
                **known,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def forest_config(self, seed: int) -> ForestConfig:
        return ForestConfig(
            n_estimators=self.n_estimators,
            cart=CartConfig(
                max_depth=self.max_depth,
                min_samples_split=self.min_samples_split,
                mtry=self.mtry,
            ),
            seed=seed,
            n_jobs=self.n_jobs,
        )

    def to_dict(self) -> dict:
        return {
            "input_csvs": list(self.input_csvs),
            "label_column": self.label_column,
            "merge_map": dict(self.merge_map),
            "correlation_threshold": self.correlation_threshold,
            "train_ratio": self.train_ratio,
            "folds": self.folds,
            "cv_repetitions": self.cv_repetitions,
            "repetitions": self.repetitions,
            "sampler": self.sampler.name,
            "strategy": dict(self.sampler.strategy),
            "samplers": [
                {"sampler": s.name, "strategy": dict(s.strategy)} for s in self.samplers
            ],
            "strategy_grid": [dict(g) for g in self.strategy_grid],
            "rare_class_max_count": self.rare_class_max_count,
            "forest": {
                "n_estimators": self.n_estimators,
                "max_depth": self.max_depth,
                "mtry": self.mtry,
                "min_samples_split": self.min_samples_split,
                "n_jobs": self.n_jobs,
            },
            "seed": self.seed,
            "output_dir": self.output_dir,
            "desk_scale": (
                {"keep_all_below": self.desk_scale.keep_all_below,
                 "fraction": self.desk_scale.fraction}
                if self.desk_scale else None
            ),
        }


def strategy_from_dict(raw: dict, seed: int) -> SamplingStrategy:
    allowed = {"mode", "targets", "beta", "k_neighbors"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown strategy keys: {sorted(unknown)}")
    try:
        return SamplingStrategy(
            mode=raw.get("mode", "target_counts"),
            targets={str(k): int(v) for k, v in raw.get("targets", {}).items()},
            beta=float(raw.get("beta", 1.0)),
            k_neighbors=int(raw.get("k_neighbors", 5)),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def apply_sampler(ds: Dataset, spec: SamplerSpec, seed: int) -> Dataset:
    if spec.name == "none":
        return ds
    strategy = strategy_from_dict(spec.strategy, seed)
    if spec.name == "rus":
        return random_undersample(ds, strategy)
    if spec.name == "smote":
        return smote(ds, strategy)[0]
    return adasyn(ds, strategy)[0]


def desk_scale_subsample(ds: Dataset, scale: DeskScale, seed: int) -> Dataset:
    """Keep small classes in full and a stratified fraction of large ones."""
    rng = np.random.default_rng([seed, 0xDE5C])
    keep: list[np.ndarray] = []
    for class_id in range(ds.n_classes):
        rows = np.nonzero(ds.labels == class_id)[0]
        if rows.size == 0:
            continue
        if rows.size < scale.keep_all_below:
            keep.append(rows)
        else:
            n_keep = max(1, int(np.floor(rows.size * scale.fraction + 0.5)))
            keep.append(np.sort(rng.choice(rows, size=n_keep, replace=False)))
    return ds.subset(np.sort(np.concatenate(keep)))


def _stable_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def preprocess(config: ExperimentConfig, persist: bool = True) -> tuple[Dataset, PreprocessReport]:
    """Concatenate inputs, clean, merge classes, prune correlations; cache to disk."""
    tables = [load_csv(p, has_header=True) for p in config.input_csvs]
    headers = tables[0].headers
    for t in tables[1:]:
        if t.headers != headers:
            raise DataError(
                f"schema mismatch: {t.source_path} headers differ from {tables[0].source_path}"
            )
    merged = tables[0]
    for t in tables[1:]:
        merged.rows.extend(t.rows)

    ds, report = clean(merged, label_column=config.label_column)

    applicable = {k: v for k, v in config.merge_map.items() if k in ds.class_names}
    skipped = set(config.merge_map) - set(applicable)
    if skipped:
        warnings.warn(f"merge_map classes absent from data, skipped: {sorted(skipped)}")
    ds = merge_classes(ds, applicable)
    report.class_merge_applied = dict(applicable)

    ds, drops = prune_correlated(ds, threshold=config.correlation_threshold)
    report.columns_dropped_correlated = drops
    report.final_feature_count = ds.n_features

    if config.desk_scale is not None:
        ds = desk_scale_subsample(ds, config.desk_scale, derive_seed(config.seed, "desk"))
    report.per_class_counts = ds.class_counts()

    if persist:
        out = Path(config.output_dir)
        cache = out / "cache"
        cache.mkdir(parents=True, exist_ok=True)
        np.save(cache / "features.npy", ds.features)
        np.save(cache / "labels.npy", ds.labels)
        (cache / "meta.json").write_text(
            _stable_json({"feature_names": ds.feature_names, "class_names": ds.class_names}),
            encoding="utf-8",
        )
        (out / "preprocess.json").write_text(report.to_json(), encoding="utf-8")
        (out / "preprocess.txt").write_text(report.to_text(), encoding="utf-8")
    return ds, report


def load_cached_dataset(output_dir: str) -> Dataset | None:
    cache = Path(output_dir) / "cache"
    needed = [cache / "features.npy", cache / "labels.npy", cache / "meta.json"]
    if not all(p.exists() for p in needed):
        return None
    meta = json.loads((cache / "meta.json").read_text(encoding="utf-8"))
    return Dataset(
        features=np.load(cache / "features.npy"),
        feature_names=list(meta["feature_names"]),
        labels=np.load(cache / "labels.npy"),
        class_names=list(meta["class_names"]),
    )


def _default_strategy_grid(train: Dataset, config: ExperimentConfig) -> list[dict]:
    """One candidate per target size, covering every rare class at once."""
    counts = train.class_counts()
    rare = [name for name, c in counts.items() if c < config.rare_class_max_count]
    if not rare:
        raise ConfigError(
            "no strategy_grid given and no class is rare enough to build a default grid"
        )
    grid = []
    for t in (250, 500, 1000, 2000):
        grid.append({
            "mode": "target_counts",
            "targets": {name: max(t, counts[name]) for name in rare},
            "k_neighbors": 5,
        })
    return grid


def _synthesized_total(strategy: dict, counts: dict[str, int]) -> int:
    total = 0
    for name, target in strategy.get("targets", {}).items():
        total += max(0, int(target) - counts.get(name, 0))
    return total


def tune_strategy(config: ExperimentConfig, ds: Dataset) -> tuple[SamplingStrategy, dict]:
    """Pick the grid candidate with the best CV mean macro-F1 on the training split.

    Oversampling happens inside each fold's training portion only; the held-
    out fold is never resampled. Ties break toward the candidate that
    synthesizes fewer rows.
    """
    split = train_test_split(ds, config.train_ratio, derive_seed(config.seed, "split", 0))
    guard = LeakageGuard(split.test_indices)
    guard.check(split.train_indices, "tuning split")
    train = ds.subset(split.train_indices)
    train_counts = train.class_counts()

    grid = [dict(g) for g in config.strategy_grid] or _default_strategy_grid(train, config)
    sampler_name = config.sampler.name if config.sampler.name != "none" else "adasyn"

    results = []
    for ci, candidate in enumerate(grid):
        scores: list[float] = []
        feasible = True
        for rep in range(config.cv_repetitions):
            plan = stratified_kfold(train, config.folds, derive_seed(config.seed, "tune", rep))
            for fold in range(config.folds):
                fit_rows = np.nonzero(plan.assignments != fold)[0]
                val_rows = np.nonzero(plan.assignments == fold)[0]
                guard.check(split.train_indices[fit_rows], "tuning fold fit")
                fold_train = train.subset(fit_rows)
                # candidate-independent seed: candidates are compared paired
                seed = derive_seed(config.seed, "tune", rep, fold)
                try:
                    sampled = apply_sampler(
                        fold_train, SamplerSpec(name=sampler_name, strategy=candidate), seed
                    )
                except DataError as exc:
                    warnings.warn(f"candidate {ci} infeasible for fold sizes: {exc}")
                    feasible = False
                    break
                model = fit_forest(sampled, config.forest_config(seed))
                val = train.subset(val_rows)
                cm = confusion(val.labels, predict_matrix(model, val.features), val.class_names)
                scores.append(macro_metrics(cm).macro_f1)
            if not feasible:
                break
        if feasible and scores:
            results.append({
                "candidate": candidate,
                "mean_macro_f1": float(np.mean(scores)),
                "synthesized_total": _synthesized_total(candidate, train_counts),
                "n_scores": len(scores),
            })
    if not results:
        raise DataError("every tuning candidate was infeasible")
    best = max(results, key=lambda r: (r["mean_macro_f1"], -r["synthesized_total"]))
    chosen = strategy_from_dict(best["candidate"], seed=config.seed)
    log = {"candidates": results, "chosen": best["candidate"], "sampler": sampler_name}
    return chosen, log


@dataclass
class RunReport:
    """Per-repetition metrics plus their arithmetic means."""

    sampler: str
    strategy: dict
    repetitions: list[dict]
    aggregate: dict
    config: dict
    preprocess: dict | None = None

    def to_dict(self) -> dict:
        return {
            "sampler": self.sampler,
            "strategy": dict(self.strategy),
            "repetitions": self.repetitions,
            "aggregate": self.aggregate,
            "config": self.config,
            "preprocess": self.preprocess,
        }

    def to_json(self) -> str:
        return _stable_json(self.to_dict())

    def to_text(self) -> str:
        agg = self.aggregate
        auc = "" if agg.get("macro_auc") is None else f"{agg['macro_auc']:.5f}"
        lines = [
            f"{'combined algorithm':24s} {'macro-P':>9s} {'macro-R':>9s} {'macro-F1':>9s} {'AUC':>9s}",
            f"{DISPLAY_NAMES[self.sampler]:24s} {agg['macro_precision']:9.5f} "
            f"{agg['macro_recall']:9.5f} {agg['macro_f1']:9.5f} {auc:>9s}",
            f"repetitions: {len(self.repetitions)}",
        ]
        return "\n".join(lines) + "\n"


def _aggregate(per_rep: list[dict]) -> dict:
    agg = {}
    for key in ("macro_precision", "macro_recall", "macro_f1"):
        agg[key] = float(np.mean([r[key] for r in per_rep]))
    aucs = [r["macro_auc"] for r in per_rep if r["macro_auc"] is not None]
    agg["macro_auc"] = float(np.mean(aucs)) if aucs else None
    agg["macro_auc_repetitions"] = len(aucs)
    return agg


def run_single_repetition(
    config: ExperimentConfig, ds: Dataset, spec: SamplerSpec, repetition: int
) -> tuple[dict, ForestModel]:
    """One split/sample/fit/test cycle; returns its metrics and the model."""
    split = train_test_split(
        ds, config.train_ratio, derive_seed(config.seed, "split", repetition)
    )
    guard = LeakageGuard(split.test_indices)
    guard.check(split.train_indices, "standardizer fit")
    train = ds.subset(split.train_indices)
    test = ds.subset(split.test_indices)
    standardizer = fit_standardizer(train)
    train = apply_standardizer(standardizer, train)
    test = apply_standardizer(standardizer, test)
    guard.check(split.train_indices, f"sampler input ({spec.name})")
    sampled = apply_sampler(train, spec, derive_seed(config.seed, "sample", repetition))
    model = fit_forest(sampled, config.forest_config(derive_seed(config.seed, "forest", repetition)))
    proba = predict_proba_matrix(model, test.features)
    y_pred = np.argmax(proba, axis=1)
    report = evaluate(test.labels, y_pred, proba, test.class_names)
    rep = {
        "repetition": repetition,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "macro_auc": report.macro_auc,
        "oob_error": model.oob_error,
        "train_rows": int(split.train_indices.size),
        "test_rows": int(split.test_indices.size),
        "sampled_rows": sampled.n_rows,
        "metrics": report.to_dict(),
    }
    return rep, model


def run_experiment(
    config: ExperimentConfig,
    ds: Dataset | None = None,
    spec: SamplerSpec | None = None,
    persist: bool = True,
) -> RunReport:
    """Repeated split/sample/fit/test per the config; aggregates are means."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    if ds is None:
        ds = load_cached_dataset(config.output_dir)
        if ds is None:
            ds, _ = preprocess(config, persist=persist)
    timings["preprocess_or_load"] = time.perf_counter() - t0
    spec = spec or config.sampler

    per_rep: list[dict] = []
    first_model: ForestModel | None = None
    t1 = time.perf_counter()
    for r in range(config.repetitions):
        rep, model = run_single_repetition(config, ds, spec, r)
        per_rep.append(rep)
        if first_model is None:
            first_model = model
    timings["repetitions"] = time.perf_counter() - t1

    preprocess_path = Path(config.output_dir) / "preprocess.json"
    report = RunReport(
        sampler=spec.name,
        strategy=dict(spec.strategy),
        repetitions=per_rep,
        aggregate=_aggregate(per_rep),
        config=config.to_dict(),
        preprocess=(
            json.loads(preprocess_path.read_text(encoding="utf-8"))
            if preprocess_path.exists() else None
        ),
    )
    if persist:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
        (out / "model.json").write_text(forest_to_json(first_model), encoding="utf-8")
        # wall-clock data is intentionally kept out of report.json so reruns
        # with one config and seed stay byte-identical
        (out / "timings.json").write_text(
            json.dumps(timings, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return report


def compare(config: ExperimentConfig, ds: Dataset | None = None, persist: bool = True) -> dict:
    """Run every configured sampler on paired seeds and tabulate the results."""
    if len(config.samplers) < 2:
        raise ConfigError("compare needs at least 2 sampler entries")
    if ds is None:
        ds = load_cached_dataset(config.output_dir)
        if ds is None:
            ds, _ = preprocess(config, persist=persist)
    rows = []
    for spec in config.samplers:
        report = run_experiment(config, ds=ds, spec=spec, persist=False)
        rows.append({
            "sampler": spec.name,
            "display": DISPLAY_NAMES[spec.name],
            "strategy": dict(spec.strategy),
            **report.aggregate,
        })
    result = {"rows": rows, "repetitions": config.repetitions, "seed": config.seed}
    if persist:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(_stable_json(result), encoding="utf-8")
        (out / "comparison.txt").write_text(comparison_text(result), encoding="utf-8")
    return result


def comparison_text(result: dict) -> str:
    lines = [f"{'combined algorithm':24s} {'macro-P':>9s} {'macro-R':>9s} {'macro-F1':>9s} {'AUC':>9s}"]
    for row in result["rows"]:
        auc = "" if row.get("macro_auc") is None else f"{row['macro_auc']:.5f}"
        lines.append(
            f"{row['display']:24s} {row['macro_precision']:9.5f} "
            f"{row['macro_recall']:9.5f} {row['macro_f1']:9.5f} {auc:>9s}"
        )
    return "\n".join(lines) + "\n"
