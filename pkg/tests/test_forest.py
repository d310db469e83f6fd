import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forest_builders import forest_from_nested, leaf, single_point_grid, interval_space, split
from ragdesign.forest import (ForestFormatError, ForestParams, Tree, fit, fit_dataset, load_forest, per_tree_response,
                              predict_point, predict_response, predict_responses, save_forest)
from ragdesign.oracles import oracle_response
from ragdesign.response import flatten_pairs
from ragdesign.rng import derive_rng


def _random_pairs(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = np.sin(3 * X[:, 0]) + X[:, 1:].sum(axis=1) + 0.1 * rng.standard_normal(n)
    return X, y


def _walk(tree, X, y, node=0, rows=None):
    """Yield (node, rows reaching it) for every internal node."""
    rows = np.arange(X.shape[0]) if rows is None else rows
    if tree.feature[node] < 0:
        return
    yield node, rows
    go_left = X[rows, tree.feature[node]] <= tree.threshold[node]
    yield from _walk(tree, X, y, tree.left[node], rows[go_left])
    yield from _walk(tree, X, y, tree.right[node], rows[~go_left])


def test_constant_target_gives_single_leaf():
    X, _ = _random_pairs(50, 3, 0)
    forest = fit(X, np.full(50, 2.5), ForestParams(n_trees=5, seed=3))
    for t in forest.trees:
        assert t.n_nodes == 1 and t.value[0] == 2.5
    assert np.all(forest.predict_inputs(np.random.default_rng(1).random((7, 3))) == 2.5)


def test_single_tree_interpolates_distinct_points():
    X, y = _random_pairs(8, 2, 1)
    forest = fit(X, y, ForestParams(n_trees=1, bootstrap=False, seed=0))
    assert np.array_equal(forest.predict_inputs(X)[0], y)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 60), d=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_interpolation_with_feature_subsampling(n, d, seed):
    # constant-in-node features are skipped, so even k = 1 reaches zero training error
    X, y = _random_pairs(n, d, seed)
    forest = fit(X, y, ForestParams(n_trees=1, bootstrap=False, features_per_split=1, seed=seed))
    assert np.array_equal(forest.predict_inputs(X)[0], y)


def test_hand_built_mean_and_variance():
    forest = forest_from_nested([leaf(1.0), leaf(3.0)], 2, interval_space(), single_point_grid())
    assert predict_point(forest, [0.5], [0.0]) == 2.0
    mean, var = predict_response(forest, [0.5])
    assert mean.tolist() == [2.0] and var.tolist() == [1.0]


def test_single_tree_has_zero_variance():
    X, y = _random_pairs(100, 3, 2)
    forest = fit(X, y, ForestParams(n_trees=1, seed=1), interval_space(2), single_point_grid())
    mean, var = predict_response(forest, [0.2, 0.7])
    assert np.all(var == 0)
    rows = per_tree_response(forest, [0.2, 0.7])
    assert np.array_equal(rows[0], mean)


def test_constant_forest_rows_identical(diatomic_split):
    train, _ = diatomic_split
    inputs, targets = flatten_pairs(train)
    forest = fit(inputs, np.full_like(targets, 4.0), ForestParams(n_trees=3), train.space, train.grid)
    rows = per_tree_response(forest, train.X[0])
    assert np.all(rows == 4.0)
    _, var = predict_response(forest, train.X[0])
    assert np.all(var == 0)


def test_determinism_and_thread_independence():
    X, y = _random_pairs(300, 4, 5)
    p = ForestParams(n_trees=6, max_depth=8, seed=42)
    a = fit(X, y, p, n_threads=1)
    b = fit(X, y, p, n_threads=3)
    for ta, tb in zip(a.trees, b.trees):
        for field in ("feature", "threshold", "left", "right", "value"):
            assert np.array_equal(getattr(ta, field), getattr(tb, field))
    c = fit(X, y, ForestParams(n_trees=6, max_depth=8, seed=43))
    assert not np.array_equal(a.predict_inputs(X), c.predict_inputs(X))


def test_split_admissibility_and_depth():
    X, y = _random_pairs(400, 3, 7)
    X = np.round(X, 2)  # force repeated feature values
    forest = fit(X, y, ForestParams(n_trees=3, max_depth=6, bootstrap=False, seed=1))
    for tree in forest.trees:
        assert tree.depth() <= 6
        for node, rows in _walk(tree, X, y):
            vals = np.unique(X[rows, tree.feature[node]])
            thr = tree.threshold[node]
            below, above = vals[vals <= thr], vals[vals > thr]
            assert below.size and above.size
            assert below.max() < thr < above.min()


def test_min_samples_leaf_respected():
    X, y = _random_pairs(200, 2, 8)
    forest = fit(X, y, ForestParams(n_trees=2, min_samples_leaf=7, bootstrap=False, seed=0))
    for tree in forest.trees:
        ids = np.zeros(X.shape[0], dtype=int)
        for r in range(X.shape[0]):
            node = 0
            while tree.feature[node] >= 0:
                node = tree.left[node] if X[r, tree.feature[node]] <= tree.threshold[node] else tree.right[node]
            ids[r] = node
        assert np.bincount(ids)[np.unique(ids)].min() >= 7


def test_training_mse_non_increasing_in_depth():
    X, y = _random_pairs(500, 3, 9)
    errs = []
    for depth in range(0, 12):
        f = fit(X, y, ForestParams(n_trees=1, max_depth=depth, bootstrap=False, features_per_split=3, seed=4))
        errs.append(np.mean((f.predict_inputs(X)[0] - y) ** 2))
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0]


def test_ensemble_mean_equals_row_mean(diatomic_forest, diatomic_split):
    _, test = diatomic_split
    for x in test.X[:5]:
        rows = per_tree_response(diatomic_forest, x)
        mean, var = predict_response(diatomic_forest, x)
        assert np.array_equal(mean, rows.mean(axis=0))
        assert np.all(var >= 0)
        agree = rows.max(axis=0) == rows.min(axis=0)
        assert np.all((var == 0) == agree)


def test_batch_prediction_matches_single(diatomic_forest, diatomic_split):
    _, test = diatomic_split
    mean, var = predict_responses(diatomic_forest, test.X[:3])
    for i in range(3):
        m1, v1 = predict_response(diatomic_forest, test.X[i])
        assert np.array_equal(mean[i], m1) and np.array_equal(var[i], v1)


def test_predict_point_near_oracle(diatomic_forest, diatomic_split):
    _, test = diatomic_split
    grid = diatomic_forest.grid
    errs = []
    for x in test.X[:10]:
        truth = oracle_response("diatomic", x, grid)
        for q in (30, 45, 60):  # acoustic branch, k from pi/2 to pi
            errs.append(abs(predict_point(diatomic_forest, x, grid.flat[q]) - truth[q]) / truth[q])
    assert np.mean(errs) < 0.05 and max(errs) < 0.25


def test_out_of_range_query_warns(diatomic_forest, diatomic_split):
    with pytest.warns(UserWarning):
        predict_point(diatomic_forest, diatomic_split[1].X[0], [1.0, 4.0])


def test_dimension_mismatch(diatomic_forest):
    with pytest.raises(ValueError):
        predict_response(diatomic_forest, [1.0, 2.0])
    with pytest.raises(ValueError):
        predict_point(diatomic_forest, [1.0, 2.0, 1.0], [1.0])


@pytest.mark.parametrize("kw", [dict(n_trees=0), dict(min_samples_split=1), dict(min_samples_leaf=0),
                                dict(features_per_split=9), dict(features_per_split=0)])
def test_invalid_params(kw):
    X, y = _random_pairs(10, 3, 0)
    with pytest.raises(ValueError):
        fit(X, y, ForestParams(**kw))


def test_empty_pairs_rejected():
    with pytest.raises(ValueError):
        fit(np.empty((0, 3)), np.empty(0), ForestParams())


def test_default_features_per_split():
    assert ForestParams().resolved_features(5) == 2
    assert ForestParams().resolved_features(4) == 2
    assert ForestParams().resolved_features(1) == 1


def test_save_load_round_trip(tmp_path, diatomic_split):
    train, test = diatomic_split
    small = fit_dataset(train.subset(np.arange(40)), ForestParams(n_trees=4, max_depth=10, seed=2))
    for name in ("m.json", "m.json.gz"):
        save_forest(small, tmp_path / name)
        back = load_forest(tmp_path / name)
        assert back.params == small.params and back.grid == small.grid and back.space == small.space
        for x in test.X[:3]:
            assert np.array_equal(per_tree_response(back, x), per_tree_response(small, x))


def test_load_rejects_version_and_dimension_mismatch(tmp_path, diatomic_split):
    train, _ = diatomic_split
    small = fit_dataset(train.subset(np.arange(10)), ForestParams(n_trees=2, max_depth=3))
    save_forest(small, tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())

    bad = dict(doc, version=99)
    (tmp_path / "v.json").write_text(json.dumps(bad))
    with pytest.raises(ForestFormatError, match="version"):
        load_forest(tmp_path / "v.json")

    bad = dict(doc, n_features=7)
    (tmp_path / "d.json").write_text(json.dumps(bad))
    with pytest.raises(ForestFormatError):
        load_forest(tmp_path / "d.json")

    bad = json.loads(json.dumps(doc))
    bad["trees"][0] = split(9, 0.5, leaf(0), leaf(1))
    (tmp_path / "f.json").write_text(json.dumps(bad))
    with pytest.raises(ForestFormatError):
        load_forest(tmp_path / "f.json")


def test_nested_round_trip_preserves_structure():
    X, y = _random_pairs(60, 2, 3)
    tree = fit(X, y, ForestParams(n_trees=1, seed=0)).trees[0]
    back = Tree.from_nested(json.loads(json.dumps(tree.to_nested())))
    a = forest_from_nested([tree.to_nested()], 2).predict_inputs(X)
    b = forest_from_nested([back.to_nested()], 2).predict_inputs(X)
    assert np.array_equal(a, b)


def _best_root_split(X, y):
    """Exhaustive variance-reduction search over every feature and cut."""
    best = (-np.inf, None, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            left = X[:, f] <= lo
            score = y[left].sum() ** 2 / left.sum() + y[~left].sum() ** 2 / (~left).sum()
            if best[1] is None or score > best[0] + 1e-9 * abs(best[0]):
                best = (score, f, 0.5 * (lo + hi))
    return best


@pytest.mark.parametrize("decimals", [None, 1])
def test_root_split_matches_exhaustive_search(decimals):
    # rounding to 1 decimal gives heavy ties (histogram path); raw floats are all distinct (sort path)
    for seed in range(5):
        X, y = _random_pairs(300, 3, seed)
        if decimals is not None:
            X = np.round(X, decimals)
        tree = fit(X, y, ForestParams(n_trees=1, max_depth=1, bootstrap=False, features_per_split=3)).trees[0]
        _, f, thr = _best_root_split(X, y)
        assert tree.feature[0] == f
        assert tree.threshold[0] == pytest.approx(thr)


def test_shallow_tree_is_prefix_of_deeper_tree():
    X, y = _random_pairs(400, 4, 12)
    for depth in (2, 5, 9):
        shallow = fit(X, y, ForestParams(n_trees=3, max_depth=depth, seed=8))
        deep = fit(X, y, ForestParams(n_trees=3, max_depth=depth + 3, seed=8))
        for a, b in zip(shallow.trees, deep.trees):
            k = a.n_nodes
            internal = a.feature >= 0
            assert np.array_equal(a.feature[internal], b.feature[:k][internal])
            assert np.array_equal(a.threshold[internal], b.threshold[:k][internal])
            assert np.array_equal(a.value, b.value[:k])


@pytest.mark.parametrize("bootstrap", [True, False])
def test_in_bag_error_non_increasing_in_depth(bootstrap):
    X, y = _random_pairs(300, 3, 13)
    prev = np.inf
    for depth in range(0, 14):
        f = fit(X, y, ForestParams(n_trees=4, max_depth=depth, bootstrap=bootstrap, seed=2))
        errs = []
        for n, tree in enumerate(f.trees):
            rows = derive_rng(2, "tree", n).integers(0, 300, 300) if bootstrap else np.arange(300)
            errs.append(np.mean((f.predict_inputs(X[rows])[n] - y[rows]) ** 2))
        assert np.mean(errs) <= prev + 1e-12
        prev = np.mean(errs)


def test_uncertainty_grows_with_band_order(diatomic_forest, diatomic_split):
    _, test = diatomic_split
    _, var = predict_responses(diatomic_forest, test.X)
    sd = np.sqrt(var).reshape(test.m, 2, -1)
    assert sd[:, 1].mean() > sd[:, 0].mean()
