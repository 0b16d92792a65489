import numpy as np
import pytest

from adaforest.forest import (
    CartConfig,
    ForestConfig,
    ForestModel,
    Internal,
    Leaf,
    apply_tree,
    best_split,
    build_tree,
    fit_forest,
    forest_from_json,
    forest_to_json,
    gini,
    oob_error,
    predict,
    predict_matrix,
    predict_proba,
    predict_proba_matrix,
    tree_depth,
)
from helpers import best_split_oracle, gini_oracle, make_dataset, random_multiclass


class TestGini:
    def test_pure_node(self):
        assert gini([10, 0]) == 0.0

    def test_balanced_two_class(self):
        assert gini([5, 5]) == 0.5

    def test_three_class_arithmetic(self):
        assert gini([2, 1, 1]) == pytest.approx(0.625)

    def test_empty_node_rejected(self):
        with pytest.raises(ValueError):
            gini([0, 0])

    def test_bounded_by_one_minus_inverse_k(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            k = int(rng.integers(1, 6))
            counts = rng.integers(0, 10, size=k)
            if counts.sum() == 0:
                counts[0] = 1
            value = gini(counts)
            assert 0.0 <= value <= 1.0 - 1.0 / k + 1e-12


class TestBestSplit:
    def test_separable_midpoint(self):
        ds = make_dataset(np.array([[1.0], [2.0], [9.0], [10.0]]),
                          np.array([0, 0, 1, 1]), class_names=["A", "B"])
        feature, threshold, decrease = best_split(ds, np.arange(4))
        assert feature == 0
        assert threshold == 5.5
        assert decrease == pytest.approx(0.5)  # children both pure

    def test_pure_node_returns_none(self):
        ds = make_dataset(np.array([[1.0], [2.0], [3.0]]),
                          np.array([0, 0, 0]), class_names=["A"])
        assert best_split(ds, np.arange(3)) is None

    def test_no_informative_feature_returns_none(self):
        ds = make_dataset(np.array([[1.0], [1.0]]), np.array([0, 1]), class_names=["A", "B"])
        assert best_split(ds, np.arange(2)) is None

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(30):
            n = int(rng.integers(5, 31))
            d = int(rng.integers(1, 5))
            k = int(rng.integers(2, 4))
            ds = random_multiclass(rng, n, d, k)
            got = best_split(ds, np.arange(n))
            expected = best_split_oracle(ds.features, ds.labels, k)
            if expected is None:
                assert got is None
                continue
            assert got is not None, f"trial {trial}"
            assert got[0] == expected[0]
            assert got[1] == pytest.approx(expected[1], abs=0)
            assert got[2] == pytest.approx(expected[2], abs=1e-12)

    def test_feature_subset_is_respected(self):
        rng = np.random.default_rng(2)
        ds = random_multiclass(rng, 40, 4, 2)
        got = best_split(ds, np.arange(40), feature_subset=[2, 3])
        if got is not None:
            assert got[0] in (2, 3)


class TestBuildTree:
    def test_depth_cap_produces_stump(self):
        ds = make_dataset(np.array([[1.0], [2.0], [9.0], [10.0]]),
                          np.array([0, 0, 1, 1]), class_names=["A", "B"])
        rng = np.random.default_rng(0)
        tree = build_tree(ds, np.arange(4), CartConfig(max_depth=1), rng)
        assert isinstance(tree, Internal)
        assert isinstance(tree.left, Leaf)
        assert isinstance(tree.right, Leaf)

    def test_unlimited_depth_fits_unique_rows(self):
        rng = np.random.default_rng(3)
        ds = random_multiclass(rng, 60, 4, 3)
        tree = build_tree(ds, np.arange(60), CartConfig(max_depth=1000), np.random.default_rng(0))
        votes = apply_tree(tree, ds.features)
        assert (votes == ds.labels).all()

    def test_single_row_gives_leaf(self):
        ds = make_dataset(np.array([[4.0, 2.0]]), np.array([1]), class_names=["A", "B"])
        tree = build_tree(ds, np.array([0]), CartConfig(), np.random.default_rng(0))
        assert isinstance(tree, Leaf)
        assert tree.vote == 1
        assert tree.class_counts.tolist() == [0, 1]

    def test_depth_never_exceeds_cap(self):
        rng = np.random.default_rng(4)
        for cap in (1, 2, 3, 5):
            ds = random_multiclass(rng, 80, 3, 3)
            tree = build_tree(ds, np.arange(80), CartConfig(max_depth=cap), np.random.default_rng(1))
            assert tree_depth(tree) <= cap

    def test_every_internal_node_reduces_impurity(self):
        rng = np.random.default_rng(5)
        ds = random_multiclass(rng, 100, 4, 3)
        tree = build_tree(ds, np.arange(100), CartConfig(max_depth=12), np.random.default_rng(2))

        def walk(node):
            if isinstance(node, Leaf):
                return
            left_counts = collect(node.left)
            right_counts = collect(node.right)
            total = left_counts + right_counts
            n_l, n_r = left_counts.sum(), right_counts.sum()
            weighted = (n_l * gini_oracle(left_counts.tolist())
                        + n_r * gini_oracle(right_counts.tolist())) / (n_l + n_r)
            assert weighted < gini_oracle(total.tolist())
            walk(node.left)
            walk(node.right)

        def collect(node):
            if isinstance(node, Leaf):
                return node.class_counts.copy()
            return collect(node.left) + collect(node.right)

        walk(tree)


class TestForest:
    def test_single_tree_forest_equals_its_tree(self):
        rng = np.random.default_rng(6)
        ds = random_multiclass(rng, 50, 3, 2)
        model = fit_forest(ds, ForestConfig(n_estimators=1, seed=5))
        forest_votes = predict_matrix(model, ds.features)
        tree_votes = apply_tree(model.trees[0], ds.features)
        assert (forest_votes == tree_votes).all()

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(7)
        ds = random_multiclass(rng, 60, 4, 3)
        config = ForestConfig(n_estimators=5, cart=CartConfig(max_depth=6), seed=99)
        m1 = fit_forest(ds, config)
        m2 = fit_forest(ds, config)
        assert forest_to_json(m1) == forest_to_json(m2)
        for b1, b2 in zip(m1.bootstrap_membership, m2.bootstrap_membership):
            assert (b1 == b2).all()

    def test_thread_pool_matches_serial(self):
        rng = np.random.default_rng(8)
        ds = random_multiclass(rng, 60, 4, 3)
        serial = fit_forest(ds, ForestConfig(n_estimators=6, seed=3, n_jobs=1))
        threaded = fit_forest(ds, ForestConfig(n_estimators=6, seed=3, n_jobs=4))
        assert forest_to_json(serial) == forest_to_json(threaded)

    def test_bootstrap_is_n_sized_with_replacement(self):
        rng = np.random.default_rng(9)
        ds = random_multiclass(rng, 40, 2, 2)
        model = fit_forest(ds, ForestConfig(n_estimators=4, seed=1))
        for bag in model.bootstrap_membership:
            assert bag.size == 40
            assert len(np.unique(bag)) < 40  # replacement almost surely repeats

    def test_paper_scale_defaults(self):
        config = ForestConfig()
        assert config.n_estimators == 10
        assert config.cart.max_depth == 40

    def test_mtry_subsampling_is_deterministic_and_valid(self):
        rng = np.random.default_rng(15)
        ds = random_multiclass(rng, 80, 6, 2)
        config = ForestConfig(n_estimators=4, cart=CartConfig(max_depth=6, mtry=2), seed=13)
        m1 = fit_forest(ds, config)
        m2 = fit_forest(ds, config)
        assert forest_to_json(m1) == forest_to_json(m2)
        proba = predict_proba_matrix(m1, ds.features)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


class TestPredict:
    def _vote_forest(self, leaf_votes, n_classes=2):
        trees = []
        for vote in leaf_votes:
            counts = np.zeros(n_classes, dtype=np.int64)
            counts[vote] = 1
            trees.append(Leaf(class_counts=counts))
        return ForestModel(
            trees=trees,
            n_estimators=len(trees),
            tree_seeds=list(range(len(trees))),
            bootstrap_membership=None,
            class_names=[f"c{i}" for i in range(n_classes)],
            feature_names=["x"],
            config=ForestConfig(n_estimators=len(trees)),
        )

    def test_vote_averaging(self):
        model = self._vote_forest([0, 0, 1])
        np.testing.assert_allclose(predict_proba(model, [0.0]), [2 / 3, 1 / 3])

    def test_unanimous_is_one_hot(self):
        model = self._vote_forest([1, 1, 1])
        np.testing.assert_allclose(predict_proba(model, [0.0]), [0.0, 1.0])

    def test_tie_goes_to_lower_class(self):
        model = self._vote_forest([0, 1])
        assert predict(model, [0.0]) == 0

    def test_argmax_consistency_and_normalization(self):
        rng = np.random.default_rng(10)
        ds = random_multiclass(rng, 80, 3, 3)
        model = fit_forest(ds, ForestConfig(n_estimators=7, seed=2))
        queries = rng.normal(size=(25, 3))
        proba = predict_proba_matrix(model, queries)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        # every component is a multiple of 1/n_estimators
        np.testing.assert_allclose(np.round(proba * 7), proba * 7, atol=1e-9)
        assert (predict_matrix(model, queries) == np.argmax(proba, axis=1)).all()

    def test_arity_mismatch_rejected(self):
        model = self._vote_forest([0, 1])
        with pytest.raises(ValueError, match="features"):
            predict_proba(model, [0.0, 1.0])


class TestOob:
    def test_all_in_bag_gives_absent(self):
        ds = make_dataset(np.array([[1.0]]), np.array([0]), class_names=["A"])
        with pytest.warns(UserWarning, match="no out-of-bag"):
            model = fit_forest(ds, ForestConfig(n_estimators=1, seed=0))
        assert model.oob_error is None

    def test_oob_close_to_holdout_on_blobs(self):
        rng = np.random.default_rng(11)
        n = 1000
        train_x = np.vstack([
            rng.normal(0.0, 0.6, size=(n // 2, 2)),
            rng.normal(4.0, 0.6, size=(n // 2, 2)),
        ])
        labels = np.repeat([0, 1], n // 2).astype(np.int64)
        perm = rng.permutation(n)
        ds = make_dataset(train_x[perm], labels[perm], class_names=["a", "b"])
        holdout = ds.subset(np.arange(0, n, 5))
        train = ds.subset(np.setdiff1d(np.arange(n), np.arange(0, n, 5)))
        model = fit_forest(train, ForestConfig(n_estimators=30, seed=4))
        holdout_error = float(np.mean(predict_matrix(model, holdout.features) != holdout.labels))
        assert model.oob_error is not None
        assert abs(model.oob_error - holdout_error) <= 0.05

    def test_oob_requires_membership(self):
        rng = np.random.default_rng(12)
        ds = random_multiclass(rng, 30, 2, 2)
        model = fit_forest(ds, ForestConfig(n_estimators=3, seed=1))
        model.bootstrap_membership = None
        with pytest.raises(ValueError, match="membership"):
            oob_error(model, ds)


class TestSerialization:
    def test_round_trip_predictions(self):
        rng = np.random.default_rng(13)
        ds = random_multiclass(rng, 70, 4, 3)
        model = fit_forest(ds, ForestConfig(n_estimators=5, cart=CartConfig(max_depth=8), seed=21))
        text = forest_to_json(model)
        loaded = forest_from_json(text)
        queries = rng.normal(size=(40, 4))
        np.testing.assert_array_equal(
            predict_proba_matrix(model, queries), predict_proba_matrix(loaded, queries)
        )
        assert loaded.class_names == model.class_names
        assert loaded.tree_seeds == model.tree_seeds
        assert loaded.oob_error == model.oob_error

    def test_thresholds_round_trip_exactly(self):
        rng = np.random.default_rng(14)
        ds = random_multiclass(rng, 50, 3, 2)
        model = fit_forest(ds, ForestConfig(n_estimators=3, seed=7))
        loaded = forest_from_json(forest_to_json(model))

        def thresholds(node):
            if isinstance(node, Leaf):
                return []
            return [node.threshold] + thresholds(node.left) + thresholds(node.right)

        for t1, t2 in zip(thresholds(model.trees[0]), thresholds(loaded.trees[0])):
            assert t1 == t2  # exact, not approximate

    def test_rejects_foreign_documents(self):
        with pytest.raises(ValueError, match="not a serialized forest"):
            forest_from_json('{"format": "something-else"}')
