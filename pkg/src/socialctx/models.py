"""Binary classifiers with probability outputs: logistic-L2, forests, boosting, baselines.

All classifiers score the positive class (label 1). Training is deterministic
given ``ModelSpec.rng_seed``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .trees import Binner, GiniCriterion, NewtonCriterion, Tree, grow_tree

FAMILIES = (
    "logistic_l2",
    "random_forest",
    "gradient_boosted_trees",
    "adaptive_boosting",
    "majority_baseline",
    "random_baseline",
)
TRAINABLE = FAMILIES[:4]
MODEL_FORMAT_VERSION = 1

DEFAULT_HYPERPARAMETERS: dict[str, dict[str, Any]] = {
    "logistic_l2": {"l2_strength": 0.1, "max_iterations": 100, "tolerance": 1e-8},
    "random_forest": {
        "n_trees": 100,
        "max_depth": None,
        "min_samples_split": 2,
        "features_per_split": "sqrt",
        "bootstrap": True,
        "max_bins": 64,
    },
    "gradient_boosted_trees": {
        "learning_rate": 0.3,
        "min_split_loss": 0.0,
        "max_depth": 6,
        "l2_leaf_penalty": 1.0,
        "n_rounds": 100,
        "min_child_weight": 1.0,
        "max_bins": 64,
    },
    "adaptive_boosting": {"n_rounds": 100, "stump_depth": 1, "max_bins": 64},
    "majority_baseline": {},
    "random_baseline": {},
}

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "logistic_l2": {"l2_strength": [0.01, 0.1, 1.0]},
    "random_forest": {"n_trees": [100, 300], "max_depth": [8, 16, None], "min_samples_split": [2, 10]},
    "gradient_boosted_trees": {
        "learning_rate": [0.1, 0.3],
        "max_depth": [4, 6],
        "min_split_loss": [0.0, 1.0],
        "l2_leaf_penalty": [1.0, 5.0],
        "n_rounds": [200],
    },
    "adaptive_boosting": {"n_rounds": [100, 300]},
    "majority_baseline": {},
    "random_baseline": {},
}

# single-point grids for quick runs (no search)
FAST_GRIDS: dict[str, list[dict[str, Any]]] = {
    "logistic_l2": [{"l2_strength": 0.1}],
    "random_forest": [{"n_trees": 100, "max_depth": None, "min_samples_split": 10}],
    "gradient_boosted_trees": [{"learning_rate": 0.1, "max_depth": 4, "n_rounds": 100}],
    "adaptive_boosting": [{"n_rounds": 100}],
    "majority_baseline": [{}],
    "random_baseline": [{}],
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown model family {self.family!r}")
        allowed = DEFAULT_HYPERPARAMETERS[self.family]
        unknown = set(self.hyperparameters) - set(allowed)
        if unknown:
            raise ModelError(f"{self.family} has no hyperparameter(s) {sorted(unknown)}")

    def params(self) -> dict[str, Any]:
        return {**DEFAULT_HYPERPARAMETERS[self.family], **self.hyperparameters}

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(self.family, dict(self.hyperparameters), seed)

    def with_params(self, **params) -> "ModelSpec":
        return ModelSpec(self.family, {**self.hyperparameters, **params}, self.rng_seed)


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: dict[str, Any]
    feature_names: tuple[str, ...]

    def predict_proba(self, X, feature_names: Sequence[str] | None = None) -> np.ndarray:
        return predict_proba(self, X, feature_names)

    def to_json(self) -> str:
        params = dict(self.params)
        if "trees" in params:
            params["trees"] = [t.to_dict() for t in params["trees"]]
        for key in ("coef",):
            if key in params:
                params[key] = np.asarray(params[key]).tolist()
        return json.dumps(
            {
                "format_version": MODEL_FORMAT_VERSION,
                "family": self.spec.family,
                "hyperparameters": self.spec.hyperparameters,
                "rng_seed": self.spec.rng_seed,
                "feature_names": list(self.feature_names),
                "parameters": params,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        doc = json.loads(text)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelError(f"unsupported model format version {doc.get('format_version')!r}")
        params = doc["parameters"]
        if "trees" in params:
            params["trees"] = [Tree.from_dict(t) for t in params["trees"]]
        if "coef" in params:
            params["coef"] = np.asarray(params["coef"], dtype=float)
        spec = ModelSpec(doc["family"], doc["hyperparameters"], doc["rng_seed"])
        return cls(spec, params, tuple(doc["feature_names"]))


# -- logistic regression ---------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def logistic_objective(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood plus ``l2/2 * |w[1:]|^2`` and its gradient.

    ``w[0]`` is the unpenalised intercept; ``X`` excludes the constant column.
    """
    z = w[0] + X @ w[1:]
    f = float(np.mean(_log1pexp(z) - y * z) + 0.5 * l2 * w[1:] @ w[1:])
    r = (_sigmoid(z) - y) / len(y)
    g = np.concatenate([[r.sum()], X.T @ r + l2 * w[1:]])
    return f, g


def _logistic_hessian(w, X, y, l2):
    z = w[0] + X @ w[1:]
    p = _sigmoid(z)
    s = p * (1 - p) / len(y)
    Xa = np.hstack([np.ones((len(y), 1)), X])
    H = (Xa * s[:, None]).T @ Xa
    H[1:, 1:] += l2 * np.eye(X.shape[1])
    return H


def fit_logistic(X, y, l2: float = 0.1, max_iterations: int = 100, tolerance: float = 1e-8) -> tuple[np.ndarray, float, int]:
    """Damped Newton iterations until the gradient norm drops to ``tolerance``.

    Returns (weights, final gradient norm, iterations used).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.zeros(X.shape[1] + 1)
    f, g = logistic_objective(w, X, y, l2)
    it = 0
    for it in range(1, max_iterations + 1):
        if np.linalg.norm(g) <= tolerance:
            it -= 1
            break
        H = _logistic_hessian(w, X, y, l2)
        H[np.diag_indices_from(H)] += 1e-12
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            w_new = w - t * step
            f_new, g_new = logistic_objective(w_new, X, y, l2)
            if f_new <= f - 1e-4 * t * (g @ step) or t < 1e-10:
                break
            t *= 0.5
        w, f, g = w_new, f_new, g_new
    return w, float(np.linalg.norm(g)), it


# -- ensembles -------------------------------------------------------------------------


def _features_per_split(value, d: int) -> int | None:
    if value is None:
        return None
    if value == "sqrt":
        return max(1, int(math.sqrt(d)))
    if value == "log2":
        return max(1, int(math.log2(d)))
    if isinstance(value, float) and 0 < value <= 1:
        return max(1, int(round(value * d)))
    return int(value)


def _train_forest(X, y, p, rng):
    binner = Binner.fit(X, p["max_bins"])
    Xb = binner.transform(X)
    n = len(y)
    m = _features_per_split(p["features_per_split"], X.shape[1])
    crit = GiniCriterion()
    trees = []
    for _ in range(int(p["n_trees"])):
        if p["bootstrap"]:
            w = np.bincount(rng.integers(n, size=n), minlength=n).astype(float)
        else:
            w = np.ones(n)
        stats = np.column_stack([w, w * y, w])
        trees.append(
            grow_tree(
                Xb,
                binner,
                stats,
                crit,
                max_depth=p["max_depth"],
                min_samples_split=p["min_samples_split"],
                max_features=m,
                rng=rng,
                sample_mask=w > 0,
            )
        )
    return {"trees": trees}


def _train_gbt(X, y, p, rng):
    binner = Binner.fit(X, p["max_bins"])
    Xb = binner.transform(X)
    prior = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    base = math.log(prior / (1 - prior))
    score = np.full(len(y), base)
    crit = NewtonCriterion(p["l2_leaf_penalty"], p["min_split_loss"], p["min_child_weight"])
    trees = []
    ones = np.ones(len(y))
    for _ in range(int(p["n_rounds"])):
        prob = _sigmoid(score)
        stats = np.column_stack([prob - y, prob * (1 - prob), ones])
        tree = grow_tree(Xb, binner, stats, crit, max_depth=p["max_depth"], min_samples_split=2, rng=rng)
        tree.value = tree.value * p["learning_rate"]
        if len(tree.feature) == 1 and abs(tree.value[0]) < 1e-12:
            break
        score += tree.value[_apply_binned(tree, Xb, binner)]
        trees.append(tree)
    return {"trees": trees, "base_score": base}


def _apply_binned(tree: Tree, Xb: np.ndarray, binner: Binner) -> np.ndarray:
    # the training matrix is already binned; route by bin instead of raw value
    node = np.zeros(len(Xb), dtype=np.int64)
    bin_of = {}
    for i, f in enumerate(tree.feature):
        if f >= 0:
            bin_of[i] = int(np.searchsorted(binner.edges[f], tree.threshold[i], side="left"))
    active = np.flatnonzero(tree.feature[node] >= 0)
    thr_bin = np.array([bin_of.get(i, 0) for i in range(len(tree.feature))])
    while active.size:
        nd = node[active]
        go_left = Xb[active, tree.feature[nd]] <= thr_bin[nd]
        node[active] = np.where(go_left, tree.left[nd], tree.right[nd])
        active = active[tree.feature[node[active]] >= 0]
    return node


def _train_adaboost(X, y, p, rng):
    binner = Binner.fit(X, p["max_bins"])
    Xb = binner.transform(X)
    n = len(y)
    w = np.full(n, 1.0 / n)
    sign = 2.0 * y - 1.0
    ones = np.ones(n)
    trees, alphas = [], []
    crit = GiniCriterion()
    for _ in range(int(p["n_rounds"])):
        stats = np.column_stack([w, w * y, ones])
        tree = grow_tree(Xb, binner, stats, crit, max_depth=p["stump_depth"], rng=rng)
        tree.value = np.where(tree.value >= 0.5, 1.0, -1.0)
        pred = tree.value[_apply_binned(tree, Xb, binner)]
        wrong = pred != sign
        err = float(w[wrong].sum() / w.sum())
        if err >= 0.5:
            break
        err = max(err, 1e-10)
        alpha = 0.5 * math.log((1 - err) / err)
        trees.append(tree)
        alphas.append(alpha)
        if err <= 1e-10:
            break
        w = w * np.exp(alpha * np.where(wrong, 1.0, -1.0))
        w /= w.sum()
    return {"trees": trees, "alphas": alphas}


# -- public API ---------------------------------------------------------------------


def train(spec: ModelSpec, X, y, feature_names: Sequence[str] | None = None) -> TrainedModel:
    """Fit ``spec`` on a dense matrix ``X`` and binary labels ``y``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ModelError("X must be 2-D with one row per label")
    if np.isnan(X).any():
        raise ModelError("X contains missing values; impute before training")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise ModelError("feature_names length does not match X")
    classes = np.unique(y)
    if spec.family in TRAINABLE and len(classes) < 2:
        raise ModelError(f"{spec.family} needs both classes in y")
    p = spec.params()
    rng = np.random.default_rng(spec.rng_seed)
    if spec.family == "logistic_l2":
        w, gnorm, iters = fit_logistic(X, y, p["l2_strength"], p["max_iterations"], p["tolerance"])
        params = {"coef": w, "gradient_norm": gnorm, "iterations": iters}
    elif spec.family == "random_forest":
        params = _train_forest(X, y, p, rng)
    elif spec.family == "gradient_boosted_trees":
        params = _train_gbt(X, y, p, rng)
    elif spec.family == "adaptive_boosting":
        params = _train_adaboost(X, y, p, rng)
    elif spec.family == "majority_baseline":
        # ties go to the positive class
        params = {"constant": 1.0 if y.mean() >= 0.5 else 0.0}
    else:
        params = {"seed": spec.rng_seed}
    return TrainedModel(spec, params, names)


def predict_proba(model: TrainedModel, X, feature_names: Sequence[str] | None = None) -> np.ndarray:
    """Positive-class scores in [0, 1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ModelError(f"expected {len(model.feature_names)} features, got {X.shape[-1] if X.ndim else 0}")
    if feature_names is not None and tuple(feature_names) != model.feature_names:
        raise ModelError("feature names do not match the model's schema")
    fam, p = model.spec.family, model.params
    if fam == "logistic_l2":
        w = np.asarray(p["coef"])
        return _sigmoid(w[0] + X @ w[1:])
    if fam == "random_forest":
        return np.mean([t.predict(X) for t in p["trees"]], axis=0) if p["trees"] else np.full(len(X), 0.5)
    if fam == "gradient_boosted_trees":
        score = np.full(len(X), p["base_score"])
        for t in p["trees"]:
            score += t.predict(X)
        return _sigmoid(score)
    if fam == "adaptive_boosting":
        score = np.zeros(len(X))
        for a, t in zip(p["alphas"], p["trees"]):
            score += a * t.predict(X)
        return _sigmoid(2.0 * score)
    if fam == "majority_baseline":
        return np.full(len(X), p["constant"])
    return np.random.default_rng(p["seed"]).random(len(X))
