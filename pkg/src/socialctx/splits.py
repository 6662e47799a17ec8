"""User-disjoint and hybrid (partially personalised) train/test splits."""

from __future__ import annotations

import math

import numpy as np

from .features import FeatureMatrix


def _user_sizes(groups: np.ndarray):
    users, inverse, sizes = np.unique(groups, return_inverse=True, return_counts=True)
    return users, inverse, sizes


def greedy_user_subset(sizes: np.ndarray, fraction: float, order: np.ndarray) -> np.ndarray:
    """Users (as positions into ``sizes``) whose row share approaches ``fraction``.

    Users are visited in ``order``; each is taken if that moves the share
    strictly closer to ``fraction``. At least one user is always taken and at
    least one is always left out.
    """
    total = float(sizes.sum())
    chosen = []
    share = 0.0
    for u in order:
        new = share + sizes[u] / total
        if abs(new - fraction) < abs(share - fraction):
            chosen.append(u)
            share = new
    if not chosen:
        devs = [abs(sizes[u] / total - fraction) for u in order]
        chosen = [order[int(np.argmin(devs))]]
    if len(chosen) == len(sizes):
        chosen = chosen[:-1]
    return np.array(sorted(chosen), dtype=int)


def population_split_indices(groups, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of a user-disjoint split with ~``test_fraction`` of rows in test."""
    groups = np.asarray(groups)
    users, inverse, sizes = _user_sizes(groups)
    if len(users) < 2:
        raise ValueError("a user-disjoint split needs at least two users")
    order = np.random.default_rng(seed).permutation(len(users))
    test_users = greedy_user_subset(sizes, test_fraction, order)
    in_test = np.isin(inverse, test_users)
    return np.flatnonzero(~in_test), np.flatnonzero(in_test)


def hybrid_split_indices(
    groups,
    timestamps,
    seed: int = 0,
    initial_test_fraction: float = 0.4,
    transfer_fraction: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """User split followed by moving each test user's earliest rows into train.

    The first ``ceil(transfer_fraction * n_u)`` rows (by time) of every test
    user go to train, so no training row of a test user postdates any of
    that user's test rows.
    """
    groups = np.asarray(groups)
    timestamps = np.asarray(timestamps)
    train, test = population_split_indices(groups, initial_test_fraction, seed)
    moved = []
    keep = []
    for user in np.unique(groups[test]):
        rows = test[groups[test] == user]
        rows = rows[np.argsort(timestamps[rows], kind="stable")]
        # every test user keeps at least one test row
        n_move = min(math.ceil(transfer_fraction * len(rows)), len(rows) - 1)
        moved.append(rows[:n_move])
        keep.append(rows[n_move:])
    train = np.sort(np.concatenate([train] + moved))
    test = np.sort(np.concatenate(keep)) if keep else np.empty(0, dtype=int)
    return train, test


def split_population(fm: FeatureMatrix, test_fraction: float = 0.2, seed: int = 0) -> tuple[FeatureMatrix, FeatureMatrix]:
    train, test = population_split_indices(fm.participant_id, test_fraction, seed)
    return fm.take(train), fm.take(test)


def split_hybrid(
    fm: FeatureMatrix,
    seed: int = 0,
    initial_test_fraction: float = 0.4,
    transfer_fraction: float = 0.5,
) -> tuple[FeatureMatrix, FeatureMatrix]:
    train, test = hybrid_split_indices(fm.participant_id, fm.timestamp, seed, initial_test_fraction, transfer_fraction)
    return fm.take(train), fm.take(test)


def user_folds(groups, n_folds: int = 3, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """User-disjoint (train, validation) index pairs.

    Users are shuffled and each goes to the fold holding the fewest rows so
    far. With fewer users than folds, the fold count shrinks accordingly.
    """
    groups = np.asarray(groups)
    users, inverse, sizes = _user_sizes(groups)
    k = min(n_folds, len(users))
    if k < 2:
        raise ValueError("user folds need at least two users")
    fold_of_user = np.empty(len(users), dtype=int)
    load = np.zeros(k)
    for u in np.random.default_rng(seed).permutation(len(users)):
        f = int(np.argmin(load))
        fold_of_user[u] = f
        load[f] += sizes[u]
    fold = fold_of_user[inverse]
    return [(np.flatnonzero(fold != f), np.flatnonzero(fold == f)) for f in range(k)]
