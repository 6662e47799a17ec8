import logging

import numpy as np
import pytest

from socialctx import preprocess
from socialctx.features import FeatureSchema
from socialctx.preprocess import PreprocessConfig, knn_impute, smote_arrays

from conftest import make_matrix

TWO_GROUPS = FeatureSchema(("a", "b"), (("a0",), ("b0",)))


def _two_group_matrix(values):
    values = np.asarray(values, dtype=float)
    missing = np.isnan(values)
    return make_matrix(values, [0, 1] * (len(values) // 2) + [0] * (len(values) % 2), [f"u{i}" for i in range(len(values))],
                       missing=missing, schema=TWO_GROUPS)


def _unscale(fp, values):
    return values * fp.stds + fp.means


@pytest.mark.parametrize("k,query,expected", [(1, 1.0, 10.0), (2, 2.0, 30.0)])
def test_knn_examples(k, query, expected):
    train = _two_group_matrix([[0.0, 10.0], [4.0, 50.0]])
    fp = preprocess.fit(train, PreprocessConfig(knn_k=k))
    out = preprocess.transform(fp, _two_group_matrix([[query, np.nan]]))
    assert _unscale(fp, out.values)[0, 1] == pytest.approx(expected)
    assert out.group_missing[0].tolist() == [False, True]


def _brute_force_impute(q, ref, k):
    """Reference kNN: loop over cells, partial distances rescaled by used coordinates."""
    out = q.copy()
    d = q.shape[1]
    col_means = np.nanmean(ref, axis=0)
    col_means = np.where(np.isnan(col_means), 0.0, col_means)
    for i in range(q.shape[0]):
        for j in np.flatnonzero(np.isnan(q[i])):
            cands = []
            for r in range(ref.shape[0]):
                if np.isnan(ref[r, j]):
                    continue
                both = ~np.isnan(q[i]) & ~np.isnan(ref[r])
                if not both.any():
                    continue
                dist = ((q[i, both] - ref[r, both]) ** 2).sum() * d / both.sum()
                cands.append((dist, r))
            cands.sort()
            chosen = [r for _, r in cands[:k]]
            out[i, j] = ref[chosen, j].mean() if chosen else col_means[j]
    return out


@pytest.mark.parametrize("seed", range(15))
def test_knn_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=(25, 5))
    ref[rng.random(ref.shape) < 0.25] = np.nan
    q = rng.normal(size=(12, 5))
    q[rng.random(q.shape) < 0.35] = np.nan
    k = int(rng.integers(1, 4))
    got, _ = knn_impute(q, ref, k, chunk=5)
    np.testing.assert_allclose(got, _brute_force_impute(q, ref, k), rtol=1e-10, atol=1e-12)


def test_row_without_shared_features_falls_back_to_means(caplog):
    ref = np.array([[1.0, np.nan], [3.0, np.nan], [np.nan, 7.0]])
    q = np.array([[np.nan, 5.0]])
    got, fallbacks = knn_impute(q, ref, 2)
    # the rows observing column 0 share no coordinate with the query
    assert fallbacks == 1
    assert got[0, 0] == 2.0


def test_sparse_group_threshold():
    n = 100
    vals = np.ones((n, 2))
    vals[:95, 1] = np.nan
    fp = preprocess.fit(_two_group_matrix(vals))
    assert fp.dropped_groups == ("b",)
    vals = np.ones((n, 2))
    vals[:90, 1] = np.nan
    fp = preprocess.fit(_two_group_matrix(vals))
    assert fp.dropped_groups == ()


def test_all_groups_dropped_is_an_error():
    vals = np.full((20, 2), np.nan)
    vals[0] = 1.0
    with pytest.raises(ValueError, match="dropped"):
        preprocess.fit(_two_group_matrix(vals))


def test_default_cohort_drops_gsm(default_matrix):
    fp = preprocess.fit(default_matrix)
    assert fp.dropped_groups == ("cellular_gsm",)


def test_observed_values_pass_through(default_matrix):
    sub = default_matrix.take(np.arange(400))
    fp = preprocess.fit(sub)
    out = preprocess.transform(fp, sub)
    raw = sub.values[:, fp.columns]
    observed = ~np.isnan(raw)
    np.testing.assert_allclose(_unscale(fp, out.values)[observed], raw[observed], rtol=1e-9, atol=1e-9)
    assert not np.isnan(out.values).any()


def test_transform_is_leak_free(default_matrix):
    train = default_matrix.take(np.arange(0, 300))
    test_a = default_matrix.take(np.arange(300, 400))
    test_b = default_matrix.take(np.arange(300, 600))
    fp = preprocess.fit(train)
    snapshot = fp.train_values.copy(), fp.means.copy(), fp.stds.copy()
    out_a = preprocess.transform(fp, test_a)
    out_b = preprocess.transform(fp, test_b)
    # the same rows come out identically whatever else is in the test set
    np.testing.assert_array_equal(out_a.values, out_b.values[:100])
    for before, after in zip(snapshot, (fp.train_values, fp.means, fp.stds)):
        np.testing.assert_array_equal(before, after)


def test_fit_is_deterministic(default_matrix):
    sub = default_matrix.take(np.arange(200))
    a, b = preprocess.fit(sub), preprocess.fit(sub)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.train_values, b.train_values)


def test_smote_midpoint():
    X = np.array([[0.0, 0.0], [2.0, 2.0], [9.0, 9.0], [8.0, 8.0], [7.0, 7.0]])
    y = np.array([1, 1, 0, 0, 0])
    res = smote_arrays(X, y, k=1, rng=0)
    assert len(res.lambdas) == 1
    seed, nbr, lam = res.seed_rows[0], res.neighbor_rows[0], res.lambdas[0]
    assert {seed, nbr} == {0, 1}
    np.testing.assert_allclose(res.X[-1], X[seed] + lam * (X[nbr] - X[seed]))
    # at lambda = 0.5 the formula gives the midpoint
    np.testing.assert_allclose(X[seed] + 0.5 * (X[nbr] - X[seed]), [1.0, 1.0])


def test_smote_lambda_zero_gives_seed(monkeypatch):
    class ZeroRng:
        def __init__(self, inner):
            self.inner = inner

        def integers(self, *a, **kw):
            return self.inner.integers(*a, **kw)

        def random(self, n):
            return np.zeros(n)

    inner = np.random.default_rng(0)
    monkeypatch.setattr(preprocess.np.random, "default_rng", lambda seed=None: ZeroRng(inner))
    X = np.array([[0.0, 0.0], [2.0, 2.0], [9.0, 9.0], [8.0, 8.0], [7.0, 7.0]])
    res = smote_arrays(X, np.array([1, 1, 0, 0, 0]), k=1, rng=0)
    np.testing.assert_array_equal(res.X[-1], X[res.seed_rows[0]])


def test_smote_balanced_input_adds_nothing():
    X = np.arange(8.0).reshape(4, 2)
    res = smote_arrays(X, np.array([0, 1, 0, 1]), rng=0)
    assert len(res.lambdas) == 0 and res.X.shape == (4, 2)


@pytest.mark.parametrize("seed", range(5))
def test_smote_points_on_minority_segments(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 4))
    y = (rng.random(60) < 0.25).astype(int)
    y[:2] = 1
    res = smote_arrays(X, y, k=3, rng=seed, target_ratio=1.0)
    n_min = (y == 1).sum()
    assert (res.y == 1).sum() >= (y == 0).sum() > n_min
    new = res.X[res.n_original:]
    a, b = X[res.seed_rows], X[res.neighbor_rows]
    assert (y[res.seed_rows] == 1).all() and (y[res.neighbor_rows] == 1).all()
    lo, hi = np.minimum(a, b) - 1e-12, np.maximum(a, b) + 1e-12
    assert ((new >= lo) & (new <= hi)).all()


def test_smote_neighbors_are_nearest_minority():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    y = np.r_[np.ones(10, int), np.zeros(30, int)]
    res = smote_arrays(X, y, k=2, rng=1)
    for s, nb in zip(res.seed_rows, res.neighbor_rows):
        d = np.linalg.norm(X[:10] - X[s], axis=1)
        d[s] = np.inf
        assert nb in np.argsort(d)[:2]


def test_smote_small_minority_warns(caplog):
    X = np.arange(20.0).reshape(10, 2)
    y = np.r_[np.ones(3, int), np.zeros(7, int)]
    with caplog.at_level(logging.WARNING):
        res = smote_arrays(X, y, k=5, rng=0)
    assert "SMOTE neighbours" in caplog.text
    assert (res.y == 1).sum() == 7


def test_smote_single_class_rejected():
    with pytest.raises(ValueError):
        smote_arrays(np.zeros((3, 1)), np.zeros(3, int))


def test_smote_matrix_flags_and_markers(default_matrix):
    sub = default_matrix.take(np.arange(300))
    fp = preprocess.fit(sub)
    dense = preprocess.transform(fp, sub)
    a = preprocess.smote(dense, rng_seed=4)
    b = preprocess.smote(dense, rng_seed=4)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.synthetic.sum() == len(a) - len(dense)
    labels = a.label
    assert (labels == 0).sum() == (labels == 1).sum()
    assert a.group_missing.dtype == bool
    assert not a.synthetic[: len(dense)].any()
