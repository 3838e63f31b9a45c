"""Clustering-based evaluation of feature rankings.

Selected features are judged by running k-means on them repeatedly and
scoring the partitions against ground-truth classes with clustering
accuracy (best one-to-one label matching) and normalized mutual
information.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, DimensionMismatchError
from .solver import FeatureRanking

__all__ = [
    "ClusteringResult",
    "EvalReport",
    "kmeans",
    "accuracy",
    "nmi",
    "evaluate_features",
    "evaluate_ranking",
    "maxvar_baseline",
    "planted_clusters",
]


@dataclass(frozen=True)
class ClusteringResult:
    labels: np.ndarray
    inertia: float
    n_clusters: int
    inertia_trace: tuple = ()
    n_iter: int = 0
    reseeded: int = 0


def _sq_dists(points, centers):
    d = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def kmeans(x_selected, n_clusters: int, seed: int = 0, max_iters: int = 300) -> ClusteringResult:
    """Lloyd's algorithm on the columns of an ``m x n`` matrix.

    Centers start at ``n_clusters`` distinct samples drawn with
    ``numpy.random.default_rng(seed)``. A center left without points is moved
    to the sample farthest from its current center (lowest index on ties).
    """
    points = np.asarray(getattr(x_selected, "values", x_selected), dtype=np.float64)
    if points.ndim == 1:
        points = points[None, :]
    points = points.T
    n = points.shape[0]
    if not 1 <= n_clusters <= n:
        raise ConfigError(f"n_clusters={n_clusters} must lie in [1, n={n}]")
    rng = np.random.default_rng(seed)
    centers = points[rng.choice(n, size=n_clusters, replace=False)].copy()
    labels = None
    trace: List[float] = []
    reseeded = 0
    it = 0
    for it in range(1, max_iters + 1):
        dist = _sq_dists(points, centers)
        new_labels = np.argmin(dist, axis=1)
        own = dist[np.arange(n), new_labels]
        trace.append(float(own.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=n_clusters)
        for j in np.flatnonzero(counts):
            centers[j] = points[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(own))
            centers[j] = points[far]
            own[far] = 0.0
            reseeded += 1
    dist = _sq_dists(points, centers)
    inertia = float(dist[np.arange(n), labels].sum())
    return ClusteringResult(labels, inertia, n_clusters, tuple(trace), it, reseeded)


def _check_pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise DimensionMismatchError(f"label vectors differ in length: {pred.size} vs {truth.size}")
    return pred, truth


def _contingency(pred, truth):
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def accuracy(pred, truth) -> float:
    """Fraction of samples correct under the best one-to-one cluster/class map."""
    pred, truth = _check_pair(pred, truth)
    if pred.size == 0:
        return 0.0
    table = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / pred.size)


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information over the geometric mean of the two entropies.

    Two single-cluster partitions count as identical (1.0); a single cluster
    against a nontrivial partition scores 0.
    """
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth).astype(np.float64)
    h_pred = _entropy(table.sum(axis=1))
    h_true = _entropy(table.sum(axis=0))
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    nz_rows = np.count_nonzero(table, axis=1)
    if table.shape[0] == table.shape[1] and np.all(nz_rows == 1) and np.all(np.count_nonzero(table, axis=0) == 1):
        # same partition up to relabeling: MI equals both entropies
        return 1.0
    joint = table / table.sum()
    outer = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return float(min(max(mi / np.sqrt(h_pred * h_true), 0.0), 1.0))


@dataclass
class EvalReport:
    """Per-feature-count ACC/NMI statistics plus the grid average."""

    m_grid: List[int]
    seeds: List[int]
    acc: np.ndarray  # shape (len(m_grid), len(seeds))
    nmi: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def per_feature_count(self):
        return [
            (m, float(a.mean()), float(a.std()), float(v.mean()), float(v.std()))
            for m, a, v in zip(self.m_grid, self.acc, self.nmi)
        ]

    @property
    def aggregated(self):
        return float(self.acc.mean(axis=1).mean()), float(self.nmi.mean(axis=1).mean())

    def to_dict(self) -> dict:
        agg_acc, agg_nmi = self.aggregated
        return {
            "m_grid": list(self.m_grid),
            "seeds": list(self.seeds),
            "per_feature_count": [
                {"m": m, "mean_acc": a, "std_acc": sa, "mean_nmi": v, "std_nmi": sv}
                for m, a, sa, v, sv in self.per_feature_count
            ],
            "aggregated": {"mean_acc": agg_acc, "mean_nmi": agg_nmi},
            "raw": {"acc": self.acc.tolist(), "nmi": self.nmi.tolist()},
            **({"meta": self.meta} if self.meta else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["m", "mean_acc", "std_acc", "mean_nmi", "std_nmi"])
        for row in self.per_feature_count:
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])
        return buf.getvalue()


def _n_clusters(truth, n_clusters):
    return int(np.unique(truth).size) if n_clusters is None else int(n_clusters)


def evaluate_features(
    x, truth, features: Sequence[int], seeds: Iterable[int], n_clusters: Optional[int] = None
):
    """ACC and NMI of k-means on the chosen feature rows, one pair per seed."""
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    truth = np.asarray(truth)
    if truth.size != values.shape[1]:
        raise DimensionMismatchError(f"{truth.size} labels for {values.shape[1]} samples")
    k = _n_clusters(truth, n_clusters)
    sub = values[np.asarray(features, dtype=np.int64)]
    accs, nmis = [], []
    for seed in seeds:
        labels = kmeans(sub, k, seed=seed).labels
        accs.append(accuracy(labels, truth))
        nmis.append(nmi(labels, truth))
    return np.array(accs), np.array(nmis)


def evaluate_ranking(
    x,
    truth,
    ranking: FeatureRanking,
    m_grid: Sequence[int],
    n_repeats: int = 20,
    n_clusters: Optional[int] = None,
    seeds: Optional[Sequence[int]] = None,
) -> EvalReport:
    """Cluster on the top-``m`` features for every ``m`` in the grid.

    The same seed list (default ``0 .. n_repeats-1``) is used for every
    ``m``, so the report is a deterministic function of its inputs.
    """
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    d = values.shape[0]
    m_grid = [int(m) for m in m_grid]
    if not m_grid or min(m_grid) < 1 or max(m_grid) > d:
        raise ConfigError(f"feature counts must lie in [1, d={d}], got {m_grid}")
    seeds = list(range(n_repeats)) if seeds is None else [int(s) for s in seeds]
    order = np.asarray(getattr(ranking, "order", ranking))
    acc = np.empty((len(m_grid), len(seeds)))
    nm = np.empty_like(acc)
    for row, m in enumerate(m_grid):
        acc[row], nm[row] = evaluate_features(values, truth, order[:m], seeds, n_clusters)
    return EvalReport(m_grid, seeds, acc, nm)


def maxvar_baseline(x) -> FeatureRanking:
    """Rank features by decreasing variance (population); ties by index."""
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    var = values.var(axis=1)
    top = var.max()
    # round away float noise so equal variances really tie
    key = np.round(var / top, 12) if top > 0 else var
    order = np.argsort(-key, kind="stable")
    return FeatureRanking(order, var)


def planted_clusters(
    seed: int,
    n_samples: int = 150,
    n_informative: int = 5,
    n_noise: int = 45,
    n_clusters: int = 3,
    separation: float = 2.0,
):
    """Gaussian clusters that differ only along the first ``n_informative`` features.

    Returns ``(x, labels)`` with ``x`` of shape ``(n_informative + n_noise, n_samples)``.
    On every informative feature the cluster means sit on an evenly spaced
    grid with step ``separation`` (in noise standard deviations), assigned to
    clusters in a random order per feature, so each one carries the same
    signal. All features have unit Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % n_clusters
    rng.shuffle(labels)
    levels = separation * (np.arange(n_clusters) - 0.5 * (n_clusters - 1))
    centers = np.stack([rng.permutation(levels) for _ in range(n_informative)])
    x = rng.standard_normal((n_informative + n_noise, n_samples))
    x[:n_informative] += centers[:, labels]
    return x, labels
