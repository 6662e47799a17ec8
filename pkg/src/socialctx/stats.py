"""Per-feature mixed-effects logistic screening.

Each feature gets its own model ``logit P(NotAlone) = b0 + b1 * x + u_p`` with
a participant random intercept ``u_p ~ N(0, sigma^2)``. The marginal
likelihood is Laplace-approximated and maximised over (b0, b1, log sigma^2)
with L-BFGS-B using the analytic gradient below.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import norm

from .features import FeatureMatrix

logger = logging.getLogger(__name__)

LOG_VAR_BOUNDS = (-20.0, 5.0)


class GLMMError(RuntimeError):
    def __init__(self, message: str, gradient_norm: float = float("nan")):
        super().__init__(f"{message} (gradient norm {gradient_norm:.3g})")
        self.gradient_norm = gradient_norm


@dataclass
class MixedEffectsResult:
    feature: str
    coefficient: float
    std_error: float
    z_score: float
    p_value: float
    p_adjusted: float
    random_intercept_variance: float
    intercept: float = float("nan")
    log_likelihood: float = float("nan")
    n_rows: int = 0


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log1pexp(z):
    return np.logaddexp(0.0, z)


class _Problem:
    """Data for one univariate fit, grouped by participant."""

    def __init__(self, x, y, groups):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        _, self.g = np.unique(np.asarray(groups), return_inverse=True)
        self.n_groups = int(self.g.max()) + 1

    def _gsum(self, v):
        return np.bincount(self.g, weights=v, minlength=self.n_groups)

    def modes(self, b0, b1, s, iterations: int = 100, tol: float = 1e-12):
        """Conditional modes of the random intercepts (per-participant Newton)."""
        inv_var = math.exp(-s)
        lin = b0 + b1 * self.x
        u = np.zeros(self.n_groups)
        for _ in range(iterations):
            mu = _sigmoid(lin + u[self.g])
            grad = self._gsum(self.y - mu) - u * inv_var
            hess = self._gsum(mu * (1.0 - mu)) + inv_var
            step = np.clip(grad / hess, -2.0, 2.0)
            u += step
            if np.max(np.abs(step)) < tol:
                break
        return u

    def objective(self, theta) -> tuple[float, np.ndarray]:
        """Negative Laplace log-likelihood and its gradient in (b0, b1, s)."""
        b0, b1, s = (float(t) for t in theta)
        var = math.exp(s)
        u = self.modes(b0, b1, s)
        eta = b0 + b1 * self.x + u[self.g]
        mu = _sigmoid(eta)
        w = mu * (1.0 - mu)
        dw = w * (1.0 - 2.0 * mu)
        D = self._gsum(w) + 1.0 / var
        ll_rows = self._gsum(self.y * eta - _log1pexp(eta))
        ll = ll_rows - u * u / (2.0 * var) - 0.5 * np.log(var * D)

        # implicit derivatives of the modes
        du_b0 = -self._gsum(w) / D
        du_b1 = -self._gsum(w * self.x) / D
        du_s = u / (var * D)
        r = self.y - mu
        g_b0 = self._gsum(r) - 0.5 * self._gsum(dw * (1.0 + du_b0[self.g])) / D
        g_b1 = self._gsum(r * self.x) - 0.5 * self._gsum(dw * (self.x + du_b1[self.g])) / D
        g_s = u * u / (2.0 * var) - 0.5 - 0.5 * (self._gsum(dw * du_s[self.g]) - 1.0 / var) / D
        grad = np.array([g_b0.sum(), g_b1.sum(), g_s.sum()])
        return -float(ll.sum()), -grad


def glmm_objective(theta, x, y, groups) -> tuple[float, np.ndarray]:
    """Negative Laplace-approximated log-likelihood and gradient."""
    return _Problem(x, y, groups).objective(theta)


def _plain_logistic(x, y) -> np.ndarray:
    X = np.column_stack([np.ones_like(x), x])
    w = np.zeros(2)
    for _ in range(100):
        mu = _sigmoid(X @ w)
        g = X.T @ (y - mu)
        H = (X * (mu * (1 - mu))[:, None]).T @ X + 1e-12 * np.eye(2)
        step = np.linalg.solve(H, g)
        w += step
        if np.max(np.abs(step)) < 1e-12:
            break
    return w


def _numeric_hessian(f, theta, h=1e-5):
    k = len(theta)
    H = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        H[i] = (f(theta + e)[1] - f(theta - e)[1]) / (2 * h)
    return 0.5 * (H + H.T)


def fit_glmm(
    feature_values,
    labels,
    participant_ids,
    feature: str = "x",
    max_iterations: int = 500,
    gtol: float = 1e-6,
) -> MixedEffectsResult:
    """Fit the univariate random-intercept model; ``labels`` are NotAlone = 1.

    The feature is standardised internally; the coefficient and its standard
    error are reported on the original scale, so z and p do not depend on
    the feature's units.
    """
    x = np.asarray(feature_values, dtype=float)
    y = np.asarray(labels, dtype=float)
    groups = np.asarray(participant_ids)
    if not (len(x) == len(y) == len(groups)):
        raise ValueError("feature_values, labels and participant_ids must align")
    if len(np.unique(groups)) < 2:
        raise ValueError("a random intercept needs at least two participants")
    if len(np.unique(y)) < 2:
        raise ValueError("both classes must be present")
    center, scale = float(x.mean()), float(x.std())
    if not np.isfinite(scale) or scale <= 0:
        raise ValueError(f"feature {feature!r} is constant")
    z = (x - center) / scale
    prob = _Problem(z, y, groups)

    start_beta = _plain_logistic(z, y)
    best = None
    for s0 in (0.0, LOG_VAR_BOUNDS[0]):
        res = optimize.minimize(
            prob.objective,
            np.array([start_beta[0], start_beta[1], s0]),
            jac=True,
            method="L-BFGS-B",
            bounds=[(None, None), (None, None), LOG_VAR_BOUNDS],
            options={"maxiter": max_iterations, "gtol": gtol, "ftol": 1e-15},
        )
        if best is None or res.fun < best.fun:
            best = res
    theta = best.x
    grad = best.jac.copy()
    at_bound = theta[2] <= LOG_VAR_BOUNDS[0] + 1e-8 or theta[2] >= LOG_VAR_BOUNDS[1] - 1e-8
    free = grad[:2] if at_bound else grad
    gnorm = float(np.max(np.abs(free)) / max(1.0, abs(best.fun)))
    if not best.success and gnorm > 1e-4:
        raise GLMMError(f"GLMM for {feature!r} did not converge: {best.message}", gnorm)

    if at_bound:
        def f_beta(b):
            v, g = prob.objective(np.array([b[0], b[1], theta[2]]))
            return v, g[:2]

        cov = np.linalg.pinv(_numeric_hessian(f_beta, theta[:2].copy()))
    else:
        cov = np.linalg.pinv(_numeric_hessian(prob.objective, theta.copy()))
    se_std = math.sqrt(max(cov[1, 1], 0.0))
    if not se_std > 0:
        raise GLMMError(f"GLMM for {feature!r} has a singular information matrix", gnorm)
    coef = theta[1] / scale
    se = se_std / scale
    zscore = theta[1] / se_std
    p = float(2.0 * norm.sf(abs(zscore)))
    return MixedEffectsResult(
        feature=feature,
        coefficient=float(coef),
        std_error=float(se),
        z_score=float(zscore),
        p_value=p,
        p_adjusted=float("nan"),
        random_intercept_variance=float(math.exp(theta[2])) if not theta[2] <= LOG_VAR_BOUNDS[0] + 1e-8 else 0.0,
        intercept=float(theta[0] - theta[1] * center / scale),
        log_likelihood=-float(best.fun),
        n_rows=len(x),
    )


def bonferroni(p_values: Sequence[float]) -> np.ndarray:
    p = np.asarray(p_values, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    return np.minimum(1.0, p * len(p))


def rank_features(
    fm: FeatureMatrix,
    top_k: int = 10,
    scope: str | Sequence[str] = "all",
    features: Sequence[str] | None = None,
) -> list[MixedEffectsResult]:
    """Univariate GLMM per feature, ranked by Bonferroni-adjusted p-value.

    ``scope`` is ``"all"`` (pooled rows) or one or more country names. Rows
    where a feature is missing are left out of that feature's fit. Fits that
    fail are logged and excluded; the correction counts only successful fits.
    """
    if scope != "all":
        fm = fm.where_country([scope] if isinstance(scope, str) else list(scope))
    if len(fm) == 0:
        raise ValueError(f"no rows in scope {scope!r}")
    if top_k <= 0:
        return []
    names = list(features) if features is not None else list(fm.schema.features)
    y = 1 - fm.label.astype(int)  # NotAlone = 1
    results = []
    for name in names:
        col = fm.values[:, fm.schema.index(name)]
        ok = np.isfinite(col)
        try:
            res = fit_glmm(col[ok], y[ok], fm.participant_id[ok], feature=name)
        except (ValueError, GLMMError, np.linalg.LinAlgError) as exc:
            logger.warning("skipping %s: %s", name, exc)
            continue
        results.append(res)
    adjusted = bonferroni([r.p_value for r in results]) if results else []
    for r, a in zip(results, adjusted):
        r.p_adjusted = float(a)
    order = {n: i for i, n in enumerate(names)}
    results.sort(key=lambda r: (r.p_adjusted, r.p_value, order[r.feature]))
    return results[:top_k]


RESULT_COLUMNS = (
    "rank",
    "feature",
    "coefficient",
    "std_error",
    "z_score",
    "p_value",
    "p_adjusted",
    "random_intercept_variance",
    "n_rows",
)


def write_ranking(rankings: Mapping[str, Sequence[MixedEffectsResult]], path: str | Path) -> None:
    """CSV of ranked results, one block per scope."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scope",) + RESULT_COLUMNS)
        for scope, results in rankings.items():
            for i, r in enumerate(results, start=1):
                d = asdict(r)
                w.writerow([scope, i] + [d[c] if isinstance(d[c], (str, int)) else repr(d[c]) for c in RESULT_COLUMNS[1:]])
