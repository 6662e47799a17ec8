"""Training-fitted preprocessing: sparse-group dropping, kNN imputation, scaling, SMOTE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .features import FeatureMatrix, FeatureSchema

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreprocessConfig:
    sparse_group_threshold: float = 0.9
    knn_k: int = 2
    smote_neighbors: int = 5
    smote_target_ratio: float = 1.0
    standardize: bool = True
    smote_per_country: bool = False

    def __post_init__(self):
        if not 0.0 < self.sparse_group_threshold <= 1.0:
            raise ValueError("sparse_group_threshold must be in (0, 1]")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.smote_neighbors < 1:
            raise ValueError("smote_neighbors must be >= 1")
        if self.smote_target_ratio <= 0:
            raise ValueError("smote_target_ratio must be positive")


@dataclass(frozen=True)
class FittedPreprocessor:
    """State learned from one training matrix; never updated afterwards."""

    source_schema: FeatureSchema
    schema: FeatureSchema
    dropped_groups: tuple[str, ...]
    columns: np.ndarray  # indices of retained features in the source schema
    marker_columns: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    train_values: np.ndarray  # scaled, NaN where missing
    k: int


def fit(train: FeatureMatrix, cfg: PreprocessConfig = PreprocessConfig()) -> FittedPreprocessor:
    """Learn group retention, scaling statistics and the kNN reference rows."""
    if len(train) == 0:
        raise ValueError("cannot fit a preprocessor on an empty matrix")
    schema = train.schema
    missing_frac = train.group_missing.mean(axis=0)
    dropped = tuple(g for g, f in zip(schema.marker_groups, missing_frac) if f > cfg.sparse_group_threshold)
    kept = [g for g in schema.groups if g not in dropped]
    if not [g for g in kept if g != "time"]:
        raise ValueError("every sensor group was dropped as too sparse")
    new_schema = schema.project(kept)
    columns = np.array([schema.index(f) for f in new_schema.features], dtype=int)
    marker_columns = np.array([schema.marker_groups.index(g) for g in new_schema.marker_groups], dtype=int)
    if dropped:
        logger.info("dropping sparse groups: %s", ", ".join(dropped))

    raw = train.values[:, columns]
    observed = ~np.isnan(raw)
    counts = observed.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, np.nansum(raw, axis=0) / np.maximum(counts, 1), 0.0)
        centred = np.where(observed, raw - means, 0.0)
        stds = np.sqrt((centred**2).sum(axis=0) / np.maximum(counts, 1))
    if not cfg.standardize:
        means = np.zeros_like(means)
        stds = np.ones_like(stds)
    stds = np.where(stds > 0, stds, 1.0)
    scaled = (raw - means) / stds
    return FittedPreprocessor(
        source_schema=schema,
        schema=new_schema,
        dropped_groups=dropped,
        columns=columns,
        marker_columns=marker_columns,
        means=means,
        stds=stds,
        train_values=scaled,
        k=cfg.knn_k,
    )


def masked_sq_distances(queries: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Squared distances over mutually observed coordinates.

    ``d2 = sum_sq * n_features / n_used``; pairs sharing no observed
    coordinate get ``inf``.
    """
    mq = ~np.isnan(queries)
    mr = ~np.isnan(reference)
    q0 = np.where(mq, queries, 0.0)
    r0 = np.where(mr, reference, 0.0)
    mqf, mrf = mq.astype(float), mr.astype(float)
    sq = (q0**2) @ mrf.T - 2.0 * (q0 @ r0.T) + mqf @ (r0**2).T
    np.maximum(sq, 0.0, out=sq)
    used = mqf @ mrf.T
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = sq * queries.shape[1] / used
    d2[used == 0] = np.inf
    return d2


def _k_smallest(d2: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` smallest finite entries per row, ascending index order.

    Ties at the k-th distance go to the lower column index. Rows with fewer
    than ``k`` finite entries are padded with -1.
    """
    n = d2.shape[1]
    if n == 0:
        return np.full((d2.shape[0], k), -1)
    kk = min(k, n)
    kth = np.partition(d2, kk - 1, axis=1)[:, kk - 1 : kk]
    chosen = d2 < kth
    need = kk - chosen.sum(axis=1)
    eq = d2 == kth
    tied = np.flatnonzero(eq.sum(axis=1) > need)
    # only rows with surplus ties at the k-th distance need the index rule
    eq[tied] &= np.cumsum(eq[tied], axis=1) <= need[tied, None]
    chosen |= eq
    chosen &= np.isfinite(d2)
    r, c = np.nonzero(chosen)
    counts = np.bincount(r, minlength=d2.shape[0])
    pos = np.arange(len(r)) - np.repeat(np.cumsum(counts) - counts, counts)
    order = np.full((d2.shape[0], kk), -1)
    order[r, pos] = c
    if kk < k:
        order = np.hstack([order, np.full((d2.shape[0], k - kk), -1)])
    return order


def knn_impute(queries: np.ndarray, reference: np.ndarray, k: int, chunk: int = 512) -> tuple[np.ndarray, int]:
    """Fill NaNs in ``queries`` with the mean of the k nearest reference rows.

    Candidates for a cell are the reference rows observing that column.
    Returns the filled array and the number of cells that fell back to the
    column mean of ``reference`` for lack of any usable neighbour.
    """
    out = queries.copy()
    missing_rows = np.flatnonzero(np.isnan(queries).any(axis=1))
    ref_obs = ~np.isnan(reference)
    n_obs = ref_obs.sum(axis=0)
    col_means = np.where(n_obs > 0, np.where(ref_obs, reference, 0.0).sum(axis=0) / np.maximum(n_obs, 1), 0.0)
    fallbacks = 0
    # columns that share a candidate set are imputed together
    col_key: dict[bytes, list[int]] = {}
    for j in range(queries.shape[1]):
        col_key.setdefault(ref_obs[:, j].tobytes(), []).append(j)
    for lo in range(0, len(missing_rows), chunk):
        rows = missing_rows[lo : lo + chunk]
        q = queries[rows]
        d2 = masked_sq_distances(q, reference)
        qmiss = np.isnan(q)
        for cols in col_key.values():
            cols = np.array(cols)
            # batch rows by which of these columns they miss
            patterns: dict[bytes, list[int]] = {}
            for i in np.flatnonzero(qmiss[:, cols].any(axis=1)):
                patterns.setdefault(qmiss[i, cols].tobytes(), []).append(i)
            cand = np.flatnonzero(ref_obs[:, cols[0]])
            for pat_rows in patterns.values():
                pat_rows = np.array(pat_rows)
                target = cols[qmiss[pat_rows[0], cols]]
                nn = _k_smallest(d2[np.ix_(pat_rows, cand)], k)
                full = (nn >= 0).all(axis=1)
                if full.any():
                    picked = reference[cand[nn[full]]][:, :, target]
                    out[np.ix_(rows[pat_rows[full]], target)] = picked.mean(axis=1)
                for r, idx in zip(pat_rows[~full], nn[~full]):
                    idx = idx[idx >= 0]
                    if idx.size == 0:
                        out[rows[r], target] = col_means[target]
                        fallbacks += 1
                    else:
                        out[rows[r], target] = reference[cand[idx]][:, target].mean(axis=0)
    return out, fallbacks


def transform(fp: FittedPreprocessor, m: FeatureMatrix) -> FeatureMatrix:
    """Project to the retained schema, scale, and kNN-impute missing cells.

    Markers of the output flag the groups that were imputed in each row.
    """
    if m.schema != fp.source_schema:
        raise ValueError("matrix schema does not match the fitted preprocessor")
    scaled = (m.values[:, fp.columns] - fp.means) / fp.stds
    filled, fallbacks = knn_impute(scaled, fp.train_values, fp.k)
    if fallbacks:
        logger.warning("%d rows had no usable neighbours; imputed with training means", fallbacks)
    return FeatureMatrix(
        fp.schema,
        m.participant_id,
        m.country,
        m.timestamp,
        m.label,
        filled,
        m.group_missing[:, fp.marker_columns],
        m.synthetic,
    )


# -- SMOTE ---------------------------------------------------------------------


@dataclass
class SmoteResult:
    X: np.ndarray
    y: np.ndarray
    seed_rows: np.ndarray  # original row index of each synthetic row's seed
    neighbor_rows: np.ndarray
    lambdas: np.ndarray
    n_original: int


def smote_arrays(
    X: np.ndarray,
    y: np.ndarray,
    k: int = 5,
    target_ratio: float = 1.0,
    rng: np.random.Generator | int | None = None,
    binary_columns: np.ndarray | None = None,
) -> SmoteResult:
    """Oversample the minority class by interpolating towards minority neighbours.

    New rows are ``x + lam * (x_nn - x)`` with ``lam ~ U[0, 1]`` and ``x_nn``
    drawn from the ``k`` nearest minority rows of ``x``. Enough rows are added
    to bring minority/majority to at least ``target_ratio``. Columns listed in
    ``binary_columns`` are rounded back to {0, 1}.
    """
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    empty = SmoteResult(X, y, np.empty(0, int), np.empty(0, int), np.empty(0), len(y))
    if len(classes) < 2:
        raise ValueError("SMOTE needs both classes in the training data")
    minority = classes[np.argmin(counts)]
    n_min, n_maj = counts.min(), counts.max()
    n_new = int(math.ceil(target_ratio * n_maj - 1e-9)) - n_min
    if n_new <= 0:
        return empty
    min_rows = np.flatnonzero(y == minority)
    if n_min < k + 1:
        logger.warning("only %d minority rows; using %d SMOTE neighbours", n_min, max(n_min - 1, 0))
        k = n_min - 1
    Xm = X[min_rows]
    seeds = rng.integers(n_min, size=n_new)
    lambdas = rng.random(n_new)
    if k == 0:
        nbr = seeds.copy()
    else:
        nn = np.empty((n_min, k), dtype=int)
        sq = (Xm**2).sum(axis=1)
        for lo in range(0, n_min, 1024):
            blk = slice(lo, lo + 1024)
            d2 = sq[blk, None] - 2.0 * Xm[blk] @ Xm.T + sq[None, :]
            d2[np.arange(d2.shape[0]), np.arange(lo, lo + d2.shape[0])] = np.inf
            part = np.argpartition(d2, k - 1, axis=1)[:, :k]
            # order the k neighbours by distance, then index
            pd = np.take_along_axis(d2, part, axis=1)
            order = np.lexsort((part, pd), axis=1)
            nn[blk] = np.take_along_axis(part, order, axis=1)
        nbr = nn[seeds, rng.integers(k, size=n_new)]
    base, other = Xm[seeds], Xm[nbr]
    new = base + lambdas[:, None] * (other - base)
    if binary_columns is not None and len(binary_columns):
        new[:, binary_columns] = np.round(new[:, binary_columns])
    return SmoteResult(
        X=np.vstack([X, new]),
        y=np.concatenate([y, np.full(n_new, minority, dtype=y.dtype)]),
        seed_rows=min_rows[seeds],
        neighbor_rows=min_rows[nbr],
        lambdas=lambdas,
        n_original=len(y),
    )


def smote(train: FeatureMatrix, cfg: PreprocessConfig = PreprocessConfig(), rng_seed: int = 0) -> FeatureMatrix:
    """Append SMOTE rows to a dense training matrix.

    Markers take part in distances and interpolation and are rounded in the
    synthetic rows; synthetic rows copy their seed row's metadata.
    """
    if np.isnan(train.values).any():
        raise ValueError("SMOTE expects an imputed (dense) matrix")
    X, _ = train.design()
    nf = len(train.schema)
    binary = np.arange(nf, X.shape[1])
    res = smote_arrays(X, train.label, cfg.smote_neighbors, cfg.smote_target_ratio, rng_seed, binary)
    n_new = len(res.lambdas)
    if n_new == 0:
        return train
    src = res.seed_rows
    new = res.X[res.n_original :]
    return FeatureMatrix(
        train.schema,
        np.concatenate([train.participant_id, train.participant_id[src]]),
        np.concatenate([train.country, train.country[src]]),
        np.concatenate([train.timestamp, train.timestamp[src]]),
        res.y,
        np.vstack([train.values, new[:, :nf]]),
        np.vstack([train.group_missing, new[:, nf:] > 0.5]),
        np.concatenate([train.synthetic, np.ones(n_new, dtype=bool)]),
    )
