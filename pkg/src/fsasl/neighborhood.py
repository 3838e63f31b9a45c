"""Probabilistic neighborhood graph.

Row ``i`` of ``P`` minimizes ``sum_j d_ij P_ij + mu P_ij^2`` over the
probability simplex, where ``d_ij`` is the squared distance between the
projected samples ``i`` and ``j``. Completing the square turns this into a
Euclidean projection of ``a_i = -d_i / (2 mu)`` onto the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError

__all__ = [
    "LocalGraph",
    "project_simplex",
    "squared_distances",
    "compute_mu",
    "update_local_graph",
    "local_laplacian",
    "MU_FLOOR",
]

MU_FLOOR = 1e-12


@dataclass(frozen=True)
class LocalGraph:
    p: np.ndarray
    mu: float
    k: int

    def __post_init__(self):
        p = self.p
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("P must be square")
        if np.any(p < 0) or np.any(p > 1 + 1e-12):
            raise ValueError("P entries must lie in [0, 1]")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-10:
            raise ValueError("rows of P must sum to 1")

    @property
    def mean_support(self) -> float:
        """Average number of nonzero entries per row."""
        return float(np.count_nonzero(self.p, axis=1).mean())


def project_simplex(a):
    """Euclidean projection onto ``{p : p >= 0, sum(p) = 1}``.

    Works on a vector or row-wise on a 2-D array. Sort descending, find the
    last index ``rho`` where ``b_rho + (1 - sum(b_1..b_rho)) / rho > 0``,
    then shift by ``z = (1 - sum(b_1..b_rho)) / rho`` and clip at zero.
    """
    a = np.asarray(a, dtype=np.float64)
    rows = np.atleast_2d(a)
    n = rows.shape[1]
    b = -np.sort(-rows, axis=1)
    z_all = (1.0 - np.cumsum(b, axis=1)) / np.arange(1, n + 1)
    positive = b + z_all > 0
    # rho = largest index with a positive entry (j = 1 always qualifies)
    rho = n - np.argmax(positive[:, ::-1], axis=1)
    z = z_all[np.arange(rows.shape[0]), rho - 1]
    p = np.maximum(rows + z[:, None], 0.0)
    return p.reshape(a.shape)


def squared_distances(x_prime):
    """Pairwise squared Euclidean distances between the columns."""
    x_prime = np.asarray(x_prime, dtype=np.float64)
    d = cdist(x_prime.T, x_prime.T, "sqeuclidean")
    np.fill_diagonal(d, 0.0)
    return d


def _sorted_neighbor_distances(dist):
    n = dist.shape[0]
    off = ~np.eye(n, dtype=bool)
    others = dist[off].reshape(n, n - 1)
    # stable sort keeps ties in sample-index order
    return np.sort(others, axis=1, kind="stable")


def compute_mu(x_prime, k: int) -> float:
    """Regularizer that leaves about ``k`` neighbors per row of ``P``.

    Averages ``(k/2) d_(k+1) - (1/2) sum_{m<=k} d_(m)`` over samples, with
    ``d_(m)`` the m-th smallest squared distance to another sample.
    """
    x_prime = np.asarray(x_prime, dtype=np.float64)
    n = x_prime.shape[1]
    if not 1 <= k <= n - 2:
        raise ConfigError(f"neighborhood size k={k} must lie in [1, n-2] = [1, {n - 2}]")
    d = _sorted_neighbor_distances(squared_distances(x_prime))
    per_sample = 0.5 * k * d[:, k] - 0.5 * d[:, :k].sum(axis=1)
    return max(float(per_sample.mean()), MU_FLOOR)


def neighborhood_rows(dist, mu):
    """Project every row of ``-dist / (2 mu)`` onto the simplex, self excluded."""
    n = dist.shape[0]
    off = ~np.eye(n, dtype=bool)
    a = (-dist[off] / (2.0 * mu)).reshape(n, n - 1)
    p = np.zeros((n, n))
    p[off] = project_simplex(a).ravel()
    return p


def update_local_graph(x_prime, k: int, mu: float | None = None) -> LocalGraph:
    """Recompute ``mu`` (unless given) and the neighborhood graph of ``x_prime``."""
    if mu is None:
        mu = compute_mu(x_prime, k)
    elif not mu > 0:
        raise ConfigError("mu must be positive")
    p = neighborhood_rows(squared_distances(x_prime), mu)
    return LocalGraph(p, float(mu), int(k))


def local_laplacian(g) -> np.ndarray:
    """``D - (P + P^T)/2`` with ``D`` the row sums of the symmetrized graph."""
    p = g.p if isinstance(g, LocalGraph) else np.asarray(g, dtype=np.float64)
    w = 0.5 * (p + p.T)
    return np.diag(w.sum(axis=1)) - w
