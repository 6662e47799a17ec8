import itertools

import numpy as np
import pytest

from socialctx import models
from socialctx.selection import forward_select
from socialctx.splits import user_folds
from socialctx.tuning import cv_auc


def _data(seed, n_users=8, rows=40, d=6, informative=(2,)):
    rng = np.random.default_rng(seed)
    n = n_users * rows
    X = rng.normal(size=(n, d))
    logit = sum(1.5 * X[:, j] for j in informative) if informative else np.zeros(n)
    y = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(float)
    groups = np.repeat(np.arange(n_users), rows)
    return X, y, groups, [f"f{j}" for j in range(d)]


@pytest.mark.parametrize("family", ["logistic_l2", "random_forest"])
def test_informative_feature_first(family):
    X, y, g, names = _data(0)
    spec = models.ModelSpec(family, {"n_trees": 20} if family == "random_forest" else {})
    res = forward_select(X, y, g, names, spec=spec, max_features=3, seed=1)
    assert res.full_path[0] == "f2"
    assert res.features[0] == "f2"


@pytest.mark.parametrize("seed", range(4))
def test_pure_noise(seed):
    X, y, g, names = _data(seed, d=10, informative=())
    res = forward_select(X, y, g, names, family="logistic_l2", patience=5, seed=seed)
    assert res.stopping_step <= 5
    assert all(abs(a - 0.5) < 0.1 for a in res.full_trajectory)


def _greedy_oracle(X, y, folds, spec, d):
    """Score every ordered path once, then follow the best extension at each step."""
    cache = {}
    for r in range(1, d + 1):
        for path in itertools.permutations(range(d), r):
            cache[path] = cv_auc(spec, X[:, list(path)], y, folds)
    path = ()
    scores = []
    for _ in range(d):
        cands = [path + (j,) for j in range(d) if j not in path]
        # max score; ties to the lower index
        best = max(cands, key=lambda p: (cache[p], -p[-1]))
        path = best
        scores.append(cache[best])
    return list(path), scores


@pytest.mark.parametrize("seed", range(3))
def test_four_features_match_greedy_oracle(seed):
    X, y, g, names = _data(seed, d=4, informative=(1, 3))
    X[:, 3] *= 0.3
    spec = models.ModelSpec("logistic_l2").with_seed(seed)
    folds = user_folds(g, 3, seed)
    path, scores = _greedy_oracle(X, y, folds, spec, 4)
    res = forward_select(X, y, g, names, family="logistic_l2", patience=10, seed=seed)
    assert res.full_path == [names[j] for j in path]
    assert res.full_trajectory == pytest.approx(scores, abs=1e-12)
    best = int(np.argmax(scores)) + 1
    assert res.stopping_step == best
    assert res.features == res.full_path[:best]


def test_prefix_property_and_best_step():
    X, y, g, names = _data(5, d=8, informative=(0, 4))
    res = forward_select(X, y, g, names, family="logistic_l2", patience=3, seed=2)
    assert len(res.features) == len(res.trajectory) == res.stopping_step
    assert len(set(res.full_path)) == len(res.full_path)
    assert res.full_path[: res.stopping_step] == res.features
    assert max(res.full_trajectory) == res.trajectory[-1]


def test_deterministic_and_csv(tmp_path):
    X, y, g, names = _data(6, d=5)
    spec = models.ModelSpec("random_forest", {"n_trees": 10})
    a = forward_select(X, y, g, names, spec=spec, seed=3, max_features=3)
    b = forward_select(X, y, g, names, spec=spec, seed=3, max_features=3)
    assert a == b
    a.to_csv(tmp_path / "sel.csv")
    lines = (tmp_path / "sel.csv").read_text().splitlines()
    assert lines[0] == "step,feature,auc"
    assert len(lines) == 1 + a.stopping_step


def test_max_features_respected():
    X, y, g, names = _data(7, d=6, informative=(0, 1, 2, 3))
    res = forward_select(X, y, g, names, family="logistic_l2", max_features=2)
    assert len(res.full_path) == 2
