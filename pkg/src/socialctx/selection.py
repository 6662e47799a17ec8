"""Sequential forward feature selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import models
from .preprocess import PreprocessConfig
from .splits import user_folds
from .tuning import cv_auc


@dataclass
class SelectionResult:
    features: list[str]
    trajectory: list[float]
    stopping_step: int
    full_path: list[str] = field(default_factory=list)
    full_trajectory: list[float] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "feature", "auc"])
            for i, (f, a) in enumerate(zip(self.features, self.trajectory), start=1):
                w.writerow([i, f, repr(a)])


def forward_select(
    X,
    y,
    groups,
    feature_names: Sequence[str],
    family: str = "random_forest",
    max_features: int | None = None,
    patience: int = 5,
    seed: int = 0,
    folds: int = 3,
    spec: models.ModelSpec | None = None,
    smote_cfg: PreprocessConfig | None = None,
    binary_features: Sequence[str] = (),
) -> SelectionResult:
    """Greedy forward selection scored by user-fold validation AUC.

    Each step adds the candidate with the highest mean AUC (ties: lower
    column index). The search stops after ``patience`` steps without
    improvement or at ``max_features``, and the returned features are the
    prefix ending at the best step. Folds are drawn once and reused.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    names = list(feature_names)
    max_features = len(names) if max_features is None else min(max_features, len(names))
    spec = (spec or models.ModelSpec(family)).with_seed(seed)
    split = user_folds(groups, folds, seed)
    binary = set(binary_features)

    selected: list[int] = []
    trajectory: list[float] = []
    best, best_step, stale = -np.inf, 0, 0
    while len(selected) < max_features:
        remaining = [j for j in range(len(names)) if j not in selected]
        if not remaining:
            break
        step_best, step_j = -np.inf, -1
        for j in remaining:
            cols = selected + [j]
            bcols = np.array([i for i, c in enumerate(cols) if names[c] in binary], dtype=int)
            score = cv_auc(spec, X[:, cols], y, split, smote_cfg, bcols)
            if score > step_best:
                step_best, step_j = score, j
        selected.append(step_j)
        trajectory.append(step_best)
        if step_best > best:
            best, best_step, stale = step_best, len(selected), 0
        else:
            stale += 1
            if stale >= patience:
                break
    return SelectionResult(
        features=[names[j] for j in selected[:best_step]],
        trajectory=trajectory[:best_step],
        stopping_step=best_step,
        full_path=[names[j] for j in selected],
        full_trajectory=trajectory,
    )
