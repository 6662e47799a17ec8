"""Static SVG figures for experiment summaries."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "socialctx"
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def auc_by_country(summary: Sequence[dict[str, Any]], path, metric: str = "auc") -> Path:
    """Grouped bars: one group per test country, one bar per model."""
    countries = sorted({r["test_country"] for r in summary})
    models = sorted({r["model"] for r in summary})
    width = 0.8 / max(1, len(models))
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(countries)), 4))
    x = np.arange(len(countries))
    for i, m in enumerate(models):
        means, stds = [], []
        for c in countries:
            rows = [r for r in summary if r["model"] == m and r["test_country"] == c]
            means.append(np.mean([r[f"{metric}_mean"] for r in rows]) if rows else np.nan)
            stds.append(np.mean([r[f"{metric}_std"] for r in rows]) if rows else np.nan)
        ax.bar(x + i * width - 0.4 + width / 2, means, width, yerr=stds, label=m, capsize=2)
    ax.set_xticks(x)
    ax.set_xticklabels(countries)
    ax.set_ylabel(f"{metric.upper()} (%)")
    ax.set_ylim(0, 100)
    ax.axhline(50, color="grey", lw=0.8, ls="--")
    ax.legend(fontsize=7, ncol=2)
    return _save(fig, path)


def population_vs_hybrid(summary: Sequence[dict[str, Any]], path, metric: str = "auc") -> Path:
    """Paired bars of population-level and hybrid results per test country."""
    countries = sorted({r["test_country"] for r in summary})
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(countries)), 4))
    x = np.arange(len(countries))
    for i, pers in enumerate(("population", "hybrid")):
        vals = []
        for c in countries:
            rows = [r for r in summary if r["personalization"] == pers and r["test_country"] == c]
            vals.append(max((r[f"{metric}_mean"] for r in rows), default=np.nan))
        ax.bar(x + (i - 0.5) * 0.4, vals, 0.4, label={"population": "PLM", "hybrid": "HM"}[pers])
    ax.set_xticks(x)
    ax.set_xticklabels(countries)
    ax.set_ylabel(f"best {metric.upper()} (%)")
    ax.set_ylim(0, 100)
    ax.legend()
    return _save(fig, path)


def matrix_heatmap(trains: Sequence[str], tests: Sequence[str], M: np.ndarray, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(1.2 * len(tests) + 2, 1.0 * len(trains) + 1.5))
    im = ax.imshow(M, vmin=0, vmax=100, cmap="viridis")
    for i in range(len(trains)):
        for j in range(len(tests)):
            if np.isfinite(M[i, j]):
                grey = trains[i] == tests[j]
                ax.text(j, i, f"{M[i, j]:.1f}", ha="center", va="center", color="lightgrey" if grey else "white")
    ax.set_xticks(range(len(tests)))
    ax.set_xticklabels(tests)
    ax.set_yticks(range(len(trains)))
    ax.set_yticklabels(trains)
    ax.set_xlabel("test country")
    ax.set_ylabel("train country")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _save(fig, path)
