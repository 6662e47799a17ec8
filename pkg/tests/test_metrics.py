import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialctx.metrics import auc, f1_macro


def _pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


@pytest.mark.parametrize(
    "scores,labels,expected",
    [
        ([0.9, 0.1], [1, 0], 1.0),
        ([0.3, 0.3, 0.3, 0.3], [1, 0, 1, 0], 0.5),
        ([0.8, 0.7, 0.6, 0.2], [1, 0, 1, 0], 0.75),
    ],
)
def test_auc_examples(scores, labels, expected):
    assert auc(scores, labels) == pytest.approx(expected)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=25))
def test_auc_matches_pairwise_oracle(rows):
    scores = [s / 6 for s, _ in rows]
    labels = [l for _, l in rows]
    if len(set(labels)) < 2:
        with pytest.raises(ValueError):
            auc(scores, labels)
        return
    assert auc(scores, labels) == pytest.approx(_pairwise_auc(scores, labels), abs=1e-12)


def _f1_by_hand(pred, labels):
    out = []
    for c in (0, 1):
        tp = sum(p == c and l == c for p, l in zip(pred, labels))
        fp = sum(p == c and l != c for p, l in zip(pred, labels))
        fn = sum(p != c and l == c for p, l in zip(pred, labels))
        out.append(2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0)
    return sum(out) / 2


@pytest.mark.parametrize(
    "scores,labels,expected",
    [
        ([0.9, 0.6, 0.4, 0.2], [1, 0, 1, 0], 0.5),  # each class: tp 1, fp 1, fn 1
        ([0.9, 0.6, 0.4, 0.2], [1, 1, 1, 0], (0.8 + 2 / 3) / 2),
        ([0.9, 0.1], [1, 0], 1.0),
    ],
)
def test_f1_toy_cases(scores, labels, expected):
    got = f1_macro(scores, labels)
    assert got == pytest.approx(expected)
    assert got == pytest.approx(_f1_by_hand([int(s >= 0.5) for s in scores], labels))


def test_f1_constant_majority_predictor():
    labels = np.r_[np.ones(5131), np.zeros(4869)]
    assert f1_macro(np.ones_like(labels), labels) == pytest.approx(0.337, abs=0.005)


def test_f1_zero_denominator_class():
    assert f1_macro([1.0, 1.0], [1, 1]) == pytest.approx(0.5)
