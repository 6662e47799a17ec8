"""Histogram-based decision trees grown level by level.

One grower serves every tree family: random-forest members split on Gini
impurity, boosting members on second-order logistic loss. Split search runs
on pre-binned features and is vectorised across all nodes of a level; ties in
gain go to the lower feature index, then the lower threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Binner:
    """Per-feature split thresholds.

    Features with at most ``max_bins`` distinct values split at midpoints
    between neighbouring values (exact splits); others at quantiles.
    """

    edges: list[np.ndarray]

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int | None = 64) -> "Binner":
        edges = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            if max_bins is None or len(u) <= max_bins:
                e = (u[:-1] + u[1:]) / 2.0
            else:
                qs = np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)[1:-1])
                e = np.unique(qs)
                e = e[e < u[-1]]
            edges.append(e)
        return cls(edges)

    @property
    def n_bins(self) -> int:
        return max((len(e) for e in self.edges), default=0) + 1

    def transform(self, X: np.ndarray) -> np.ndarray:
        dtype = np.uint8 if self.n_bins <= 256 else np.uint16 if self.n_bins <= 65536 else np.int64
        out = np.empty(X.shape, dtype=dtype)
        for j, e in enumerate(self.edges):
            # bin b holds x with e[b-1] < x <= e[b]
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )


class GiniCriterion:
    """Weighted Gini impurity; stats per sample are (w, w * y, n)."""

    n_stats = 3

    def __init__(self, min_impurity_decrease: float = 0.0):
        self.min_gain = min_impurity_decrease

    def gain(self, left, total):
        wl, pl = left[..., 0], left[..., 1]
        wt, pt = total[..., 0], total[..., 1]
        wr, pr = wt - wl, pt - pl
        with np.errstate(divide="ignore", invalid="ignore"):
            parent = pt * (wt - pt) / wt
            gl = np.where(wl > 0, pl * (wl - pl) / wl, 0.0)
            gr = np.where(wr > 0, pr * (wr - pr) / wr, 0.0)
        return 2.0 * (parent - gl - gr)

    def valid(self, left, total, min_leaf):
        wl, nl = left[..., 0], left[..., 2]
        wr, nr = total[..., 0] - wl, total[..., 2] - nl
        return (nl >= min_leaf) & (nr >= min_leaf) & (wl > 0) & (wr > 0)

    def leaf_value(self, total):
        return total[..., 1] / total[..., 0]

    def size(self, total):
        return total[..., 2]

    def is_pure(self, total):
        w, p = total[..., 0], total[..., 1]
        return (p <= 1e-12 * w) | (p >= w * (1 - 1e-12))


class NewtonCriterion:
    """Second-order loss reduction; stats per sample are (g, h, n)."""

    n_stats = 3

    def __init__(self, l2: float = 1.0, gamma: float = 0.0, min_child_weight: float = 1.0):
        self.l2, self.gamma, self.min_child_weight = l2, gamma, min_child_weight

    def _score(self, g, h):
        return g * g / (h + self.l2)

    def gain(self, left, total):
        gl, hl = left[..., 0], left[..., 1]
        gt, ht = total[..., 0], total[..., 1]
        return 0.5 * (self._score(gl, hl) + self._score(gt - gl, ht - hl) - self._score(gt, ht)) - self.gamma

    def valid(self, left, total, min_leaf):
        hl = left[..., 1]
        hr = total[..., 1] - hl
        nl = left[..., 2]
        nr = total[..., 2] - nl
        return (hl >= self.min_child_weight) & (hr >= self.min_child_weight) & (nl >= min_leaf) & (nr >= min_leaf)

    def leaf_value(self, total):
        return -total[..., 0] / (total[..., 1] + self.l2)

    def size(self, total):
        return total[..., 2]

    def is_pure(self, total):
        return np.zeros(total.shape[:-1], dtype=bool)


def grow_tree(
    Xb: np.ndarray,
    binner: Binner,
    stats: np.ndarray,
    criterion,
    max_depth: int | None = None,
    min_samples_split: float = 2,
    min_samples_leaf: float = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    sample_mask: np.ndarray | None = None,
) -> Tree:
    """Grow one tree on binned features ``Xb`` with per-sample ``stats``.

    ``max_features`` features are drawn (without replacement) for every node;
    ``None`` uses all of them. Rows outside ``sample_mask`` are ignored.
    """
    n, d = Xb.shape
    n_bins = binner.n_bins
    m = d if max_features is None else max(1, min(int(max_features), d))
    n_edges = np.array([len(e) for e in binner.edges])

    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    samples = np.arange(n) if sample_mask is None else np.flatnonzero(sample_mask)
    node_of = np.zeros(len(samples), dtype=np.int64)  # index into the current level
    level_nodes = np.array([0])
    depth = 0
    S = criterion.n_stats
    root_total = stats[samples].sum(axis=0)
    value[0] = float(criterion.leaf_value(root_total))
    totals = root_total[None, :]

    while len(level_nodes):
        K = len(level_nodes)
        splittable = (criterion.size(totals) >= min_samples_split) & ~criterion.is_pure(totals)
        if max_depth is not None and depth >= max_depth:
            splittable[:] = False
        if not splittable.any():
            break
        if m < d:
            feats = np.sort(np.argsort(rng.random((K, d)), axis=1)[:, :m], axis=1)
        else:
            feats = np.broadcast_to(np.arange(d), (K, d))
        live = splittable[node_of]
        s_idx = samples[live]
        s_node = node_of[live]
        cols = feats[s_node]  # (n_live, m)
        bins = Xb[s_idx[:, None], cols].astype(np.int64)
        keys = ((s_node[:, None] * m + np.arange(m)) * n_bins + bins).ravel()
        hist = np.empty((K * m * n_bins, S))
        s_stats = stats[s_idx]
        for s in range(S):
            w = np.repeat(s_stats[:, s], m)
            hist[:, s] = np.bincount(keys, weights=w, minlength=K * m * n_bins)
        hist = hist.reshape(K, m, n_bins, S)
        cum = np.cumsum(hist, axis=2)[:, :, :-1, :]  # left side for split after bin b
        tot = totals[:, None, None, :]
        gain = criterion.gain(cum, tot)
        ok = criterion.valid(cum, tot, min_samples_leaf)
        ok &= np.arange(n_bins - 1)[None, None, :] < n_edges[feats][:, :, None]
        ok &= splittable[:, None, None]
        gain = np.where(ok & np.isfinite(gain), gain, -np.inf)
        flat = gain.reshape(K, -1)
        top = flat.max(axis=1, keepdims=True)
        # gains equal up to rounding are ties: lowest feature, then lowest bin
        near = flat >= top - 1e-9 * np.maximum(np.abs(top), 1e-300)
        best = np.argmax(near, axis=1)
        best_gain = flat[np.arange(K), best]
        do_split = np.isfinite(best_gain) & (best_gain > getattr(criterion, "min_gain", 0.0))
        if isinstance(criterion, NewtonCriterion):
            do_split &= best_gain > 0
        if not do_split.any():
            break
        bj, bb = np.divmod(best, n_bins - 1)
        bf = feats[np.arange(K), bj]

        new_nodes, new_totals = [], []
        child_of = np.full((K, 2), -1, dtype=np.int64)
        for k in np.flatnonzero(do_split):
            nid = level_nodes[k]
            f, b = int(bf[k]), int(bb[k])
            lt = cum[k, bj[k], b]
            rt = totals[k] - lt
            feature[nid] = f
            threshold[nid] = float(binner.edges[f][b])
            for side, t in ((0, lt), (1, rt)):
                cid = len(feature)
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(criterion.leaf_value(t)))
                child_of[k, side] = len(new_nodes)
                new_nodes.append(cid)
                new_totals.append(t)
            left[nid] = len(feature) - 2
            right[nid] = len(feature) - 1

        # route samples of split nodes to their children
        moving = do_split[node_of]
        samples = samples[moving]
        old = node_of[moving]
        go_right = Xb[samples, bf[old]] > bb[old]
        node_of = child_of[old, go_right.astype(np.int64)]
        level_nodes = np.array(new_nodes, dtype=np.int64)
        totals = np.array(new_totals).reshape(-1, S)
        depth += 1

    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )
