"""Grid search over user-disjoint validation folds."""

from __future__ import annotations

import itertools
import logging
from typing import Any, Mapping, Sequence

import numpy as np

from . import models
from .metrics import auc
from .preprocess import PreprocessConfig, smote_arrays
from .splits import user_folds

logger = logging.getLogger(__name__)


def expand_grid(grid: Mapping[str, Sequence[Any]] | Sequence[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """Grid points in declaration order (last key varies fastest)."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return [dict(p) for p in grid]


def cv_auc(
    spec: models.ModelSpec,
    X: np.ndarray,
    y: np.ndarray,
    folds: list[tuple[np.ndarray, np.ndarray]],
    smote_cfg: PreprocessConfig | None = None,
    binary_columns: np.ndarray | None = None,
) -> float:
    """Mean validation AUC over ``folds``; folds with a single class are skipped."""
    scores = []
    for i, (tr, va) in enumerate(folds):
        yv = y[va]
        if len(np.unique(yv)) < 2 or len(np.unique(y[tr])) < 2:
            continue
        Xt, yt = X[tr], y[tr]
        if smote_cfg is not None:
            res = smote_arrays(
                Xt, yt, smote_cfg.smote_neighbors, smote_cfg.smote_target_ratio, spec.rng_seed + i, binary_columns
            )
            Xt, yt = res.X, res.y
        model = models.train(spec, Xt, yt)
        scores.append(auc(model.predict_proba(X[va]), yv))
    return float(np.mean(scores)) if scores else 0.5


def evaluate_grid(
    family: str,
    grid,
    X,
    y,
    groups,
    folds: int = 3,
    seed: int = 0,
    smote_cfg: PreprocessConfig | None = None,
    binary_columns=None,
) -> list[tuple[dict[str, Any], float]]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    split = user_folds(groups, folds, seed)
    return [
        (point, cv_auc(models.ModelSpec(family, point, seed), X, y, split, smote_cfg, binary_columns))
        for point in expand_grid(grid)
    ]


def grid_search(
    family: str,
    grid,
    X,
    y,
    groups,
    folds: int = 3,
    seed: int = 0,
    smote_cfg: PreprocessConfig | None = None,
    binary_columns=None,
) -> models.ModelSpec:
    """Grid point with the best mean validation AUC; ties go to the earlier point."""
    points = expand_grid(grid)
    if not points:
        raise ValueError("empty hyperparameter grid")
    if len(points) == 1:
        return models.ModelSpec(family, points[0], seed)
    table = evaluate_grid(family, points, X, y, groups, folds, seed, smote_cfg, binary_columns)
    best_point, best = table[0]
    for point, score in table[1:]:
        if score > best:
            best_point, best = point, score
    logger.debug("grid search %s: best %s (AUC %.4f)", family, best_point, best)
    return models.ModelSpec(family, best_point, seed)
