"""
Tests for regression trees, forests, boosting, metrics and model files
"""
import numpy as np
import pytest

from config import BoostParams, ForestParams
from forecasting import serialization
from forecasting.metrics import evaluate_metrics
from forecasting.trees import fit_boosted, fit_forest, fit_model, fit_tree
from utils.errors import DataError, ModelError


def _regression_data(seed=0, n=300, p=5, noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, p))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 + noise * rng.standard_normal(n)
    return X, y


def test_split_example():
    tree = fit_tree([[1.0], [2.0], [3.0], [4.0]], [0.0, 0.0, 1.0, 1.0], min_leaf=1)
    assert tree.root.feature == 0
    assert tree.root.threshold == 2.5
    assert tree.n_leaves == 2
    np.testing.assert_array_equal(tree.predict([[1.5], [3.5], [2.5]]), [0.0, 1.0, 0.0])


def test_constant_target_gives_single_leaf():
    X, _ = _regression_data(n=50)
    tree = fit_tree(X, np.full(50, 0.25))
    assert tree.root.is_leaf
    np.testing.assert_array_equal(tree.predict(X[:3]), [0.25, 0.25, 0.25])


def test_unlimited_tree_memorizes_distinct_rows():
    X, y = _regression_data(n=120)
    tree = fit_tree(X, y, max_depth=None, min_leaf=1)
    np.testing.assert_allclose(tree.predict(X), y, rtol=1e-12, atol=1e-12)


def test_depth_and_leaf_limits():
    X, y = _regression_data(n=200)
    assert fit_tree(X, y, max_depth=2).depth <= 2
    assert fit_tree(X, y, max_depth=0).root.is_leaf
    tree = fit_tree(X, y, min_leaf=40)
    assert tree.n_leaves <= 200 // 40


def test_categorical_split_groups_by_mean():
    X = np.repeat([[0.0], [1.0], [2.0]], 3, axis=0)
    y = np.array([5.0] * 3 + [0.0] * 3 + [5.0] * 3)
    tree = fit_tree(X, y, categorical=[True], min_leaf=1)
    assert tree.root.categories == (1.0,)
    np.testing.assert_array_equal(tree.predict([[1.0], [0.0], [2.0], [7.0]]), [0.0, 5.0, 5.0, 5.0])


def test_invalid_inputs_raise_model_error():
    with pytest.raises(ModelError):
        fit_tree(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ModelError):
        fit_tree([[1.0], [np.nan]], [0.0, 1.0])
    with pytest.raises(ModelError):
        fit_tree([[1.0], [2.0]], [0.0])
    with pytest.raises(ModelError):
        fit_model('svm', [[1.0], [2.0]], [0.0, 1.0], None, ForestParams(), BoostParams(), 0)


def test_degenerate_forest_is_a_single_tree():
    X, y = _regression_data(n=150)
    params = ForestParams(n_trees=1, bootstrap=False, feature_subsample=1.0, max_depth=4, min_leaf=5)
    forest = fit_forest(X, y, params=params, seed=9)
    tree = fit_tree(X, y, max_depth=4, min_leaf=5)
    np.testing.assert_array_equal(forest.predict(X), tree.predict(X))


def test_forest_is_deterministic_per_seed():
    X, y = _regression_data(n=150)
    params = ForestParams(n_trees=8, min_leaf=5)
    first = fit_forest(X, y, params=params, seed=4).predict(X)
    np.testing.assert_array_equal(fit_forest(X, y, params=params, seed=4).predict(X), first)
    assert not np.array_equal(fit_forest(X, y, params=params, seed=5).predict(X), first)


def test_models_ignore_training_row_order():
    X, y = _regression_data(n=150)
    order = np.random.default_rng(1).permutation(len(y))
    forest = ForestParams(n_trees=5, min_leaf=5)
    boosted = BoostParams(n_rounds=10, learning_rate=0.3, min_leaf=5, feature_subsample=0.5)
    np.testing.assert_array_equal(fit_forest(X[order], y[order], params=forest, seed=2).predict(X),
                                  fit_forest(X, y, params=forest, seed=2).predict(X))
    np.testing.assert_array_equal(fit_boosted(X[order], y[order], params=boosted, seed=2).predict(X),
                                  fit_boosted(X, y, params=boosted, seed=2).predict(X))


def test_zero_rounds_predicts_the_mean():
    X, y = _regression_data(n=80)
    model = fit_boosted(X, y, params=BoostParams(n_rounds=0))
    np.testing.assert_allclose(model.predict(X), np.full(80, np.mean(y)), rtol=1e-12)
    assert model.trees == []


def test_boosting_training_loss_never_increases():
    X, y = _regression_data(n=200)
    model = fit_boosted(X, y, params=BoostParams(n_rounds=40, learning_rate=0.2, min_leaf=5))
    loss = model.train_loss
    assert len(loss) == 40
    assert all(b <= a + 1e-12 for a, b in zip(loss, loss[1:]))
    assert loss[-1] < np.var(y)


def test_one_full_step_equals_tree_on_residuals():
    X, y = _regression_data(n=150)
    base = float(np.mean(y))
    model = fit_boosted(X, y, params=BoostParams(n_rounds=1, learning_rate=1.0, max_depth=3, min_leaf=5))
    tree = fit_tree(X, y - base, max_depth=3, min_leaf=5)
    np.testing.assert_allclose(model.predict(X), tree.predict(X) + base, rtol=1e-12, atol=1e-12)


def test_early_stopping_keeps_best_round():
    X, y = _regression_data(n=150)
    params = BoostParams(n_rounds=20, learning_rate=0.5, min_leaf=5, patience=2)
    model = fit_boosted(X, y, params=params, eval_set=(X, -y))
    assert model.trees == []
    np.testing.assert_allclose(model.predict(X), np.full(150, np.mean(y)), rtol=1e-12)


def test_forest_predictions_stay_within_training_targets():
    X, y = _regression_data(seed=5, n=200, noise=1.0)
    model = fit_forest(X, y, params=ForestParams(n_trees=25, max_depth=None, min_leaf=1), seed=2)
    rng = np.random.default_rng(6)
    wide = rng.uniform(-3, 3, size=(500, X.shape[1]))
    predictions = np.concatenate([model.predict(X), model.predict(wide)])
    assert predictions.min() >= y.min() - 1e-12
    assert predictions.max() <= y.max() + 1e-12


def test_predict_checks_width_and_schema():
    X, y = _regression_data(n=60)
    model = fit_forest(X, y, params=ForestParams(n_trees=2, min_leaf=5), schema_hash='abc')
    with pytest.raises(ModelError):
        model.predict(X[:, :3])
    with pytest.raises(ModelError):
        model.predict(X, schema_hash='def')
    assert model.predict(X, schema_hash='abc').shape == (60,)


def test_metrics_example():
    metrics = evaluate_metrics([0.0, 0.1], [0.1, 0.0])
    assert metrics.rmse == pytest.approx(10.0, abs=1e-12)
    assert metrics.mae == pytest.approx(10.0, abs=1e-12)
    assert metrics.r2 == pytest.approx(-3.0)
    assert metrics.n == 2


def test_perfect_and_undefined_r2():
    assert evaluate_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).r2 == 1.0
    constant = evaluate_metrics([0.1, 0.3], [0.2, 0.2])
    assert constant.r2 is None
    assert constant.rmse == pytest.approx(10.0)


def test_mean_predictor_has_zero_r2():
    assert evaluate_metrics([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]).r2 == 0.0


def test_metric_input_errors():
    with pytest.raises(DataError):
        evaluate_metrics([0.1], [0.1])
    with pytest.raises(DataError):
        evaluate_metrics([0.1, 0.2], [0.1, 0.2, 0.3])


@pytest.mark.parametrize('algorithm', ['forest', 'boosted'])
def test_saved_model_predicts_identically(algorithm):
    X, y = _regression_data(n=120)
    X[:, 4] = np.floor((X[:, 4] + 1) * 3)
    categorical = np.array([False, False, False, False, True])
    model = fit_model(algorithm, X, y, categorical, ForestParams(n_trees=4, min_leaf=5),
                      BoostParams(n_rounds=8, learning_rate=0.3, min_leaf=5), seed=1, schema_hash='s1')
    loaded = serialization.loads(serialization.dumps(model))
    np.testing.assert_array_equal(loaded.predict(X), model.predict(X))
    assert loaded.schema_hash == 's1' and loaded.kind == algorithm
    with pytest.raises(ModelError):
        loaded.predict(X, schema_hash='other')


def test_unreadable_model_files():
    with pytest.raises(ModelError):
        serialization.loads('{not json')
    with pytest.raises(ModelError):
        serialization.model_from_dict({'format': 'something-else', 'version': 1})
    with pytest.raises(ModelError):
        serialization.model_from_dict({'format': serialization.FORMAT_NAME, 'version': 99})


@pytest.mark.slow
def test_forest_beats_a_single_deep_tree():
    wins = 0
    for seed in range(5):
        X, y = _regression_data(seed=10 + seed, n=600)
        X_test, y_test = _regression_data(seed=20 + seed, n=600)
        tree = fit_tree(X, y, min_leaf=1)
        forest = fit_forest(X, y, params=ForestParams(n_trees=60, max_depth=None, min_leaf=3), seed=seed)
        tree_mse = np.mean((tree.predict(X_test) - y_test) ** 2)
        forest_mse = np.mean((forest.predict(X_test) - y_test) ** 2)
        wins += forest_mse <= tree_mse
    assert wins >= 4
