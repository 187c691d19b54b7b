"""Rank statistics and search-progress curves."""

from __future__ import annotations

import bisect
from typing import Iterable, Sequence

import numpy as np


class UndefinedCorrelationError(ValueError):
    """A ranking has zero variance, so rank correlation is undefined."""


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=float)
    ranks[order] = np.arange(1, v.size + 1, dtype=float)
    _, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=ranks)
    return (sums / counts)[inverse]


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1:
        raise ValueError("spearman expects 1-d sequences")
    if xs.size != ys.size:
        raise ValueError(f"spearman length mismatch: {xs.size} vs {ys.size}")
    if xs.size < 2:
        raise ValueError("spearman needs at least 2 points")
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    nx = float(rx @ rx)
    ny = float(ry @ ry)
    if nx == 0.0 or ny == 0.0:
        raise UndefinedCorrelationError("zero rank variance (all values tied)")
    return float((rx @ ry) / np.sqrt(nx * ny))


def top_m_curve(
    accuracies: Iterable[float], m_values: Sequence[int] = (1, 5, 25)
) -> list[dict]:
    """Running mean accuracy of the best M models seen so far.

    One row per prefix of the evaluation sequence; the ``topM`` column is
    omitted (key absent) until at least M models have been evaluated.
    """
    if any(m < 1 for m in m_values):
        raise ValueError("top-M sizes must be >= 1")
    cap = max(m_values)
    neg_best: list[float] = []  # ascending list of negated accuracies
    rows: list[dict] = []
    for i, acc in enumerate(accuracies, start=1):
        bisect.insort(neg_best, -float(acc))
        del neg_best[cap:]
        row: dict = {"models": i}
        for m in m_values:
            if m <= i:
                row[f"top{m}"] = -sum(neg_best[:m]) / m
        rows.append(row)
    return rows


def aggregate_curves(curves: Sequence[list[dict]], m_values: Sequence[int] = (1, 5, 25)) -> list[dict]:
    """Mean and standard error across same-budget trial curves."""
    if not curves:
        raise ValueError("no curves to aggregate")
    length = len(curves[0])
    if any(len(c) != length for c in curves):
        raise ValueError("curves cover different budgets")
    rows = []
    for i in range(length):
        row: dict = {"models": curves[0][i]["models"]}
        for m in m_values:
            col = f"top{m}"
            if col not in curves[0][i]:
                continue
            vals = np.array([c[i][col] for c in curves])
            row[f"{col}_mean"] = float(vals.mean())
            row[f"{col}_stderr"] = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows
