"""Experiment orchestration: country approaches x personalisation x seeds."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import models, preprocess, selection, tuning
from .features import FeatureMatrix
from .metrics import auc, f1_macro
from .splits import hybrid_split_indices, population_split_indices

logger = logging.getLogger(__name__)

APPROACHES = (
    "multi_country",
    "country_specific",
    "country_agnostic_one_to_many",
    "country_agnostic_many_to_one",
)
PERSONALIZATIONS = ("population", "hybrid")
ALL = "ALL"
RECORD_COLUMNS = (
    "approach",
    "train_countries",
    "test_country",
    "model",
    "personalization",
    "feature_selection",
    "seed",
    "auc",
    "f1",
    "n_train",
    "n_test",
    "n_features",
    "hyperparameters",
)


class ExperimentError(RuntimeError):
    def __init__(self, approach: str, country: str, seed: int, cause: BaseException):
        super().__init__(f"{approach} / {country} / seed {seed}: {cause}")
        self.approach, self.country, self.seed = approach, country, seed


@dataclass(frozen=True)
class EvalConfig:
    approach: str = "multi_country"
    personalization: str = "population"
    n_seeds: int = 10
    plm_test_fraction: float = 0.2
    hm_initial_test_fraction: float = 0.4
    hm_transfer_fraction: float = 0.5
    families: tuple[str, ...] = ("random_forest",)
    use_feature_selection: bool = False
    master_seed: int = 0
    grids: dict[str, Any] | None = None  # family -> grid; None uses the defaults
    tuning_folds: int = 3
    freeze_grid: bool = False
    selection_max_features: int | None = None
    selection_patience: int = 5
    selection_hyperparameters: dict[str, dict[str, Any]] = field(default_factory=dict)
    preprocess: preprocess.PreprocessConfig = field(default_factory=preprocess.PreprocessConfig)
    smote: bool = True

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"approach must be one of {APPROACHES}")
        if self.personalization not in PERSONALIZATIONS:
            raise ValueError(f"personalization must be one of {PERSONALIZATIONS}")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        for name in ("plm_test_fraction", "hm_initial_test_fraction", "hm_transfer_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.approach.startswith("country_agnostic") and self.personalization != "population":
            raise ValueError("country-agnostic approaches train without test-country rows; use population")
        for fam in self.families:
            if fam not in models.FAMILIES:
                raise ValueError(f"unknown model family {fam!r}")
        if not self.families:
            raise ValueError("at least one model family is required")

    def grid_for(self, family: str):
        if self.grids is not None and family in self.grids:
            return self.grids[family]
        return models.DEFAULT_GRIDS[family]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["families"] = list(self.families)
        return d


# -- results -------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: EvalConfig
    records: list[dict[str, Any]]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=RECORD_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in self.records:
                w.writerow({k: _fmt(r[k]) for k in RECORD_COLUMNS})

    def to_json(self, path: str | Path) -> None:
        doc = {"config": self.config.to_dict(), "records": self.records, "summary": self.summary()}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")

    @staticmethod
    def read_csv(path: str | Path) -> list[dict[str, Any]]:
        out = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                row["seed"] = int(row["seed"])
                for k in ("auc", "f1"):
                    row[k] = float(row[k])
                out.append(row)
        return out

    def summary(self) -> list[dict[str, Any]]:
        return summarize(self.records)

    def write_summary(self, path: str | Path) -> None:
        rows = self.summary()
        cols = ["approach", "train_countries", "test_country", "model", "personalization", "feature_selection",
                "n_seeds", "auc_mean", "auc_std", "f1_mean", "f1_std", "auc_cell", "f1_cell"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(r[k]) for k in cols})

    def matrix(self, model: str, metric: str = "auc") -> tuple[list[str], list[str], np.ndarray]:
        """Mean metric (percent) as a train-country x test-country matrix."""
        rows = [r for r in self.summary() if r["model"] == model]
        trains = sorted({r["train_countries"] for r in rows})
        tests = sorted({r["test_country"] for r in rows})
        M = np.full((len(trains), len(tests)), np.nan)
        for r in rows:
            M[trains.index(r["train_countries"]), tests.index(r["test_country"])] = r[f"{metric}_mean"]
        return trains, tests, M

    def write_matrix(self, path: str | Path, model: str, metric: str = "auc") -> None:
        trains, tests, M = self.matrix(model, metric)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["train \\ test"] + tests)
            for name, row in zip(trains, M):
                cells = []
                for t, v in zip(tests, row):
                    s = "" if np.isnan(v) else f"{v:.1f}"
                    cells.append(f"[{s}]" if t == name and s else s)  # diagonal is country-specific
                w.writerow([name] + cells)


def summarize(records: Sequence[dict[str, Any]]) -> list[dict[str, Any]]:
    """Mean and (population) standard deviation over seeds, in percent."""
    keys = ("approach", "train_countries", "test_country", "model", "personalization", "feature_selection")
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        rs = groups[key]
        row = dict(zip(keys, key))
        row["n_seeds"] = len(rs)
        for m in ("auc", "f1"):
            v = 100.0 * np.array([float(r[m]) for r in rs])
            mean = float(np.nanmean(v)) if np.isfinite(v).any() else float("nan")
            std = float(np.nanstd(v)) if np.isfinite(v).any() else float("nan")
            row[f"{m}_mean"], row[f"{m}_std"] = mean, std
            row[f"{m}_cell"] = f"{mean:.1f} ({std:.1f})"
        out.append(row)
    return out


def weighted_country_mean(summary_rows, weights: dict[str, float], model: str, metric: str = "auc") -> float:
    """Average of per-country means weighted by e.g. each country's row count."""
    num = den = 0.0
    for r in summary_rows:
        if r["model"] == model and r["test_country"] in weights and r["train_countries"] == r["test_country"]:
            num += weights[r["test_country"]] * r[f"{metric}_mean"]
            den += weights[r["test_country"]]
    return num / den


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True, default=_json_default)
    return v


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


# -- tasks ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Task:
    seed_index: int
    train_countries: tuple[str, ...] | None  # None: every country (pooled)
    test_countries: tuple[str, ...] | None  # None: same rows as train, split by personalization
    frozen: tuple[tuple[str, str], ...] = ()  # (family, json params) fixed by an earlier search

    @property
    def label(self) -> str:
        return ALL if self.train_countries is None else "+".join(self.train_countries)


def plan_tasks(cfg: EvalConfig, countries: Sequence[str]) -> list[_Task]:
    countries = sorted(countries)
    cells: list[tuple] = []
    if cfg.approach == "multi_country":
        cells = [(None, None)]
    elif cfg.approach == "country_specific":
        cells = [((c,), None) for c in countries]
    elif cfg.approach == "country_agnostic_one_to_many":
        for c in countries:
            cells.append(((c,), None))  # diagonal: country-specific split
            others = tuple(o for o in countries if o != c)
            if others:
                cells.append(((c,), others))
    else:
        for c in countries:
            others = tuple(o for o in countries if o != c)
            if not others:
                raise ValueError("many-to-one needs at least two countries")
            cells.append((others, (c,)))
    return [_Task(i, tr, te) for i in range(cfg.n_seeds) for tr, te in cells]


def _split(cfg: EvalConfig, fm: FeatureMatrix, seed: int):
    if cfg.personalization == "population":
        tr, te = population_split_indices(fm.participant_id, cfg.plm_test_fraction, seed)
        assert not set(fm.participant_id[tr]) & set(fm.participant_id[te])
    else:
        tr, te = hybrid_split_indices(
            fm.participant_id, fm.timestamp, seed, cfg.hm_initial_test_fraction, cfg.hm_transfer_fraction
        )
    return fm.take(tr), fm.take(te)


def _smote(cfg: EvalConfig, train: FeatureMatrix, seed: int) -> FeatureMatrix:
    if not cfg.smote:
        return train
    if not cfg.preprocess.smote_per_country:
        return preprocess.smote(train, cfg.preprocess, seed)
    parts = [preprocess.smote(train.where_country([c]), cfg.preprocess, seed) for c in sorted(set(train.country))]
    return _concat(parts)


def _concat(parts: Sequence[FeatureMatrix]) -> FeatureMatrix:
    p0 = parts[0]
    return FeatureMatrix(
        p0.schema,
        np.concatenate([p.participant_id for p in parts]),
        np.concatenate([p.country for p in parts]),
        np.concatenate([p.timestamp for p in parts]),
        np.concatenate([p.label for p in parts]),
        np.vstack([p.values for p in parts]),
        np.vstack([p.group_missing for p in parts]),
        np.concatenate([p.synthetic for p in parts]),
    )


def run_task(cfg: EvalConfig, fm: FeatureMatrix, task: _Task) -> list[dict[str, Any]]:
    seed = cfg.master_seed + task.seed_index
    scope = fm if task.train_countries is None else fm.where_country(task.train_countries)
    if task.test_countries is None:
        train_raw, test_sets = _split(cfg, scope, seed)
        test_sets = [(ALL if task.train_countries is None else task.label, test_sets)]
    else:
        train_raw = scope
        test_sets = [(c, fm.where_country([c])) for c in task.test_countries]

    fitted = preprocess.fit(train_raw, cfg.preprocess)
    train = preprocess.transform(fitted, train_raw)
    tests = [(c, preprocess.transform(fitted, t)) for c, t in test_sets]
    augmented = _smote(cfg, train, seed)

    X_train, names = train.design()
    X_aug, _ = augmented.design()
    markers = set(train.schema.markers)
    smote_cfg = cfg.preprocess if cfg.smote else None
    frozen = dict(task.frozen)

    records = []
    for family in cfg.families:
        cols = np.arange(len(names))
        if cfg.use_feature_selection and family in models.TRAINABLE:
            sel_spec = models.ModelSpec(family, cfg.selection_hyperparameters.get(family, {}), seed)
            res = selection.forward_select(
                X_train, train.label, train.participant_id, names, family,
                max_features=cfg.selection_max_features, patience=cfg.selection_patience, seed=seed,
                folds=cfg.tuning_folds, spec=sel_spec, smote_cfg=smote_cfg, binary_features=markers,
            )
            cols = np.array([names.index(f) for f in res.features], dtype=int)
            if len(cols) == 0:
                cols = np.arange(len(names))
        sel_names = [names[j] for j in cols]
        binary_cols = np.array([i for i, n in enumerate(sel_names) if n in markers], dtype=int)
        if family in frozen:
            spec = models.ModelSpec(family, json.loads(frozen[family]), seed)
        else:
            spec = tuning.grid_search(
                family, cfg.grid_for(family), X_train[:, cols], train.label, train.participant_id,
                cfg.tuning_folds, seed, smote_cfg, binary_cols,
            )
        model = models.train(spec, X_aug[:, cols], augmented.label, sel_names)
        for country, test in tests:
            X_test, _ = test.design()
            scores = model.predict_proba(X_test[:, cols])
            y = test.label
            if len(np.unique(y)) < 2:
                logger.warning("test set %s / seed %d has one class; AUC undefined", country, seed)
                a = float("nan")
            else:
                a = auc(scores, y)
            records.append({
                "approach": cfg.approach,
                "train_countries": task.label,
                "test_country": country,
                "model": family,
                "personalization": cfg.personalization,
                "feature_selection": bool(cfg.use_feature_selection),
                "seed": seed,
                "auc": a,
                "f1": f1_macro(scores, y),
                "n_train": len(augmented),
                "n_test": len(test),
                "n_features": len(cols),
                "hyperparameters": spec.hyperparameters,
            })
    return records


_WORKER: dict[str, Any] = {}


def _init_worker(cfg, fm):
    _WORKER["cfg"], _WORKER["fm"] = cfg, fm


def _run_in_worker(task):
    return _guarded(_WORKER["cfg"], _WORKER["fm"], task)


def _guarded(cfg, fm, task):
    try:
        return run_task(cfg, fm, task)
    except Exception as exc:
        raise ExperimentError(cfg.approach, task.label, cfg.master_seed + task.seed_index, exc) from exc


def _execute(cfg, fm, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_guarded(cfg, fm, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks)), initializer=_init_worker, initargs=(cfg, fm)) as ex:
        return list(ex.map(_run_in_worker, tasks))


def _sort_key(r):
    return (r["train_countries"], r["test_country"], r["model"], r["seed"])


def run_experiment(cfg: EvalConfig, fm: FeatureMatrix, jobs: int = 1) -> ExperimentResult:
    """Run every (seed, cell) task of ``cfg`` and collect per-seed metrics.

    Tasks are independent; results are sorted, so the output does not depend
    on ``jobs``. With ``freeze_grid`` the first seed's grid-search choice of
    each cell is reused for the remaining seeds.
    """
    if len(fm) == 0:
        raise ValueError("empty feature matrix")
    jobs = jobs or os.cpu_count() or 1
    tasks = plan_tasks(cfg, sorted(set(fm.country.tolist())))
    if cfg.freeze_grid and cfg.n_seeds > 1:
        first = [t for t in tasks if t.seed_index == 0]
        rest = [t for t in tasks if t.seed_index > 0]
        first_records = _execute(cfg, fm, first, jobs)
        chosen = {}
        for t, recs in zip(first, first_records):
            chosen[(t.train_countries, t.test_countries)] = tuple(
                sorted({(r["model"], json.dumps(r["hyperparameters"], sort_keys=True)) for r in recs})
            )
        rest = [_Task(t.seed_index, t.train_countries, t.test_countries, chosen[(t.train_countries, t.test_countries)])
                for t in rest]
        batches = first_records + _execute(cfg, fm, rest, jobs)
    else:
        batches = _execute(cfg, fm, tasks, jobs)
    records = sorted((r for b in batches for r in b), key=_sort_key)
    return ExperimentResult(cfg, records)
