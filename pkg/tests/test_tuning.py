import numpy as np
import pytest

from socialctx import models, tuning
from socialctx.metrics import auc
from socialctx.splits import user_folds


def _data(seed=0, n_users=9, rows=40):
    rng = np.random.default_rng(seed)
    n = n_users * rows
    X = rng.normal(size=(n, 4))
    y = (X[:, 0] - 0.5 * X[:, 2] + rng.normal(0, 1.0, n) > 0).astype(float)
    groups = np.repeat(np.arange(n_users), rows)
    return X, y, groups


def test_expand_grid_order():
    pts = tuning.expand_grid({"a": [1, 2], "b": ["x", "y"]})
    assert pts == [{"a": 1, "b": "x"}, {"a": 1, "b": "y"}, {"a": 2, "b": "x"}, {"a": 2, "b": "y"}]
    assert tuning.expand_grid([{"a": 3}]) == [{"a": 3}]


def test_single_point_grid():
    X, y, g = _data()
    spec = tuning.grid_search("logistic_l2", {"l2_strength": [0.5]}, X, y, g, seed=4)
    assert spec == models.ModelSpec("logistic_l2", {"l2_strength": 0.5}, 4)


def test_constant_predictor_loses():
    X, y, g = _data(1)
    grid = [{"max_depth": 0, "n_trees": 5}, {"max_depth": 4, "n_trees": 5}]
    spec = tuning.grid_search("random_forest", grid, X, y, g)
    assert spec.hyperparameters == grid[1]


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        tuning.grid_search("logistic_l2", [], *_data())


@pytest.mark.parametrize("seed", range(3))
def test_two_by_two_grid_matches_exhaustive(seed):
    X, y, g = _data(seed)
    grid = {"max_depth": [2, 6], "min_samples_split": [2, 40]}
    folds = user_folds(g, 3, seed)
    scores = []
    for depth in (2, 6):
        for mss in (2, 40):
            spec = models.ModelSpec("random_forest", {"max_depth": depth, "min_samples_split": mss, "n_trees": 20}, seed)
            per_fold = [auc(models.train(spec, X[tr], y[tr]).predict_proba(X[va]), y[va]) for tr, va in folds]
            scores.append(({"max_depth": depth, "min_samples_split": mss}, np.mean(per_fold)))
    best = max(range(4), key=lambda i: (scores[i][1], -i))
    full_grid = {**grid, "n_trees": [20]}
    spec = tuning.grid_search("random_forest", full_grid, X, y, g, seed=seed)
    assert {k: spec.hyperparameters[k] for k in grid} == scores[best][0]
    table = tuning.evaluate_grid("random_forest", full_grid, X, y, g, seed=seed)
    assert [s for _, s in table] == pytest.approx([s for _, s in scores], abs=1e-12)


def test_cv_skips_single_class_folds():
    X = np.arange(12.0).reshape(6, 2)
    y = np.array([0, 0, 1, 1, 1, 1.0])
    folds = [(np.arange(2, 6), np.arange(2)), (np.arange(4), np.arange(4, 6))]
    assert tuning.cv_auc(models.ModelSpec("logistic_l2"), X, y, folds) == 0.5


def test_ties_go_to_earlier_point():
    X, y, g = _data(2)
    grid = [{"n_rounds": 1}, {"n_rounds": 1}]
    spec = tuning.grid_search("adaptive_boosting", grid, X, y, g)
    assert spec.hyperparameters == {"n_rounds": 1}
