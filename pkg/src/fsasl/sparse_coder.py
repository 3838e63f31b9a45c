"""Sparse self-representation of samples.

Column ``i`` of the global graph solves::

    min_s ||x_i - X s||^2 + alpha * ||s||_1    subject to s[i] = 0

where ``X`` is the (projected) data with samples as columns. All columns
share the Gram matrix ``X^T X``, so the solvers work on it directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import ConvergenceError, DimensionMismatchError

__all__ = [
    "LassoSettings",
    "GlobalGraph",
    "lasso_objective",
    "kkt_residual",
    "solve_lasso_column",
    "update_global_graph",
]

ZERO_THRESHOLD = 1e-12
ALGORITHMS = ("active-set", "coordinate-descent", "proximal-gradient")


@dataclass(frozen=True)
class LassoSettings:
    max_iters: int = 20000
    kkt_tol: float = 1e-6
    algorithm: str = "active-set"

    def __post_init__(self):
        if self.kkt_tol <= 0:
            raise ValueError("kkt_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass(frozen=True)
class GlobalGraph:
    """Reconstruction coefficients; column ``i`` rebuilds sample ``i``."""

    s: np.ndarray
    alpha: float
    kkt: float = 0.0
    iterations: int = 0

    @property
    def n(self) -> int:
        return self.s.shape[0]


def lasso_objective(x_prime, i, s, alpha):
    r = x_prime[:, i] - x_prime @ s
    return float(r @ r + alpha * np.abs(s).sum())


@njit(cache=True)
def _kkt_from_grad(grad, s, i, alpha):
    worst = 0.0
    for j in range(s.shape[0]):
        if j == i:
            continue
        if s[j] > 0.0:
            v = abs(grad[j] + alpha)
        elif s[j] < 0.0:
            v = abs(grad[j] - alpha)
        else:
            v = abs(grad[j]) - alpha
        if v > worst:
            worst = v
    return worst


def kkt_residual(x_prime, i, s, alpha):
    """Largest violation of the optimality conditions of column ``i``."""
    grad = 2.0 * (x_prime.T @ (x_prime @ s - x_prime[:, i]))
    return float(_kkt_from_grad(grad, np.asarray(s, dtype=np.float64), i, alpha))


@njit(cache=True)
def _cd_sweep(gram, b, q, s, i, half_alpha, active_only):
    biggest = 0.0
    n = s.shape[0]
    for j in range(n):
        if j == i:
            continue
        old = s[j]
        if active_only and old == 0.0:
            continue
        gjj = gram[j, j]
        if gjj <= 0.0:
            continue
        r = b[j] - q[j] + gjj * old
        if r > half_alpha:
            new = (r - half_alpha) / gjj
        elif r < -half_alpha:
            new = (r + half_alpha) / gjj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            s[j] = new
            for t in range(n):
                q[t] += gram[t, j] * delta
            ad = abs(delta)
            if ad > biggest:
                biggest = ad
    return biggest


@njit(cache=True)
def _cd_column(gram, b, i, alpha, s, max_iters, tol):
    """Cyclic coordinate descent with covariance updates on one column.

    Alternates a full sweep (which may grow the support) with sweeps over
    the current support until it settles. Returns (kkt, sweeps).
    """
    half_alpha = 0.5 * alpha
    s[i] = 0.0
    q = gram @ s
    sweeps = 0
    kkt = np.inf
    while sweeps < max_iters:
        _cd_sweep(gram, b, q, s, i, half_alpha, False)
        sweeps += 1
        kkt = _kkt_from_grad(2.0 * (q - b), s, i, alpha)
        if kkt <= tol:
            break
        while sweeps < max_iters:
            moved = _cd_sweep(gram, b, q, s, i, half_alpha, True)
            sweeps += 1
            if moved <= 1e-15 * (1.0 + np.max(np.abs(s))):
                break
    return kkt, sweeps


def _prox_grad_column(gram, b, i, alpha, s, max_iters, tol):
    """Accelerated proximal gradient (FISTA) with restart, coordinate i pinned to 0."""
    lip = 2.0 * max(np.linalg.eigvalsh(gram)[-1], 1e-300)
    step = 1.0 / lip
    thr = alpha * step
    s = s.copy()
    s[i] = 0.0
    z = s.copy()
    t = 1.0
    kkt = np.inf
    for it in range(1, max_iters + 1):
        grad = 2.0 * (gram @ z - b)
        nxt = z - step * grad
        nxt = np.sign(nxt) * np.maximum(np.abs(nxt) - thr, 0.0)
        nxt[i] = 0.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        # restart momentum when it points uphill
        if (z - nxt) @ (nxt - s) > 0:
            t_next = 1.0
            z = nxt.copy()
        else:
            z = nxt + ((t - 1.0) / t_next) * (nxt - s)
            z[i] = 0.0
        s, t = nxt, t_next
        if it % 10 == 0 or it == max_iters:
            kkt = _kkt_from_grad(2.0 * (gram @ s - b), s, i, alpha)
            if kkt <= tol:
                return s, kkt, it
    return s, kkt, max_iters


def _null_vector(g):
    """Unit null vector of a PSD block, or ``None`` if it is nonsingular."""
    w, v = np.linalg.eigh(g)
    if w[0] > 1e-10 * max(w[-1], 1e-300):
        return None
    return v[:, 0]


@njit(cache=True)
def _pivot(s, idx, v):
    """Slide ``s`` along a null direction ``v`` (support ``idx``) until an
    entry reaches zero; that entry leaves the support."""
    best_t = np.inf
    k = -1
    for m in range(idx.shape[0]):
        cur = s[idx[m]]
        if cur != 0.0 and v[m] != 0.0:
            t = -cur / v[m]
            if t > 0.0 and t < best_t:
                best_t = t
                k = m
    if k < 0:
        return False
    for m in range(idx.shape[0]):
        s[idx[m]] += best_t * v[m]
    s[idx[k]] = 0.0
    return True


def _reduce_support(gram, s):
    # Warm starts may carry a support wider than rank(X); shrink it without
    # raising the objective (the smooth part is constant along null vectors).
    while True:
        idx = np.flatnonzero(s)
        if idx.size == 0:
            return s
        v = _null_vector(gram[np.ix_(idx, idx)])
        if v is None:
            return s
        if np.sign(s[idx]) @ v > 0:
            v = -v
        if not _pivot(s, idx, v):
            return s


@njit(cache=True)
def _support_objective(g, bs, x, alpha):
    return x @ (g @ x) - 2.0 * (bs @ x) + alpha * np.sum(np.abs(x))


@njit(cache=True)
def _active_set_column(gram, b, i, alpha, s, max_iters, tol):
    """Active-set solver in the feature-sign family.

    The support is kept linearly independent. Each step either solves the
    signed least-squares problem on the support (with a line search over
    sign changes), or adds the worst violating coordinate. When adding it
    would make the support dependent, a null-space pivot swaps out an
    existing coordinate instead. Every step lowers the objective.
    Returns (kkt, steps).
    """
    n = s.shape[0]
    allowed = np.empty(n, dtype=np.bool_)
    for j in range(n):
        allowed[j] = gram[j, j] > 0.0 and j != i
        if not allowed[j]:
            s[j] = 0.0
    grad = np.empty(n)
    for it in range(max_iters):
        idx = np.flatnonzero(s)
        sign = np.sign(s)
        for j in range(n):
            acc = -b[j]
            for m in range(idx.shape[0]):
                acc += gram[j, idx[m]] * s[idx[m]]
            grad[j] = 2.0 * acc
        kkt = _kkt_from_grad(grad, s, i, alpha)
        if kkt <= tol:
            return kkt, it
        on_support = 0.0
        for m in range(idx.shape[0]):
            on_support = max(on_support, abs(grad[idx[m]] + alpha * sign[idx[m]]))
        if on_support <= tol:
            j = -1
            worst = alpha + tol
            for t in range(n):
                if allowed[t] and s[t] == 0.0 and abs(grad[t]) > worst:
                    worst = abs(grad[t])
                    j = t
            if j < 0:
                return kkt, it
            sign[j] = -np.sign(grad[j])
            if idx.shape[0] > 0:
                # x_j lies in the span of the support iff its Schur complement vanishes
                gjA = np.empty(idx.shape[0])
                for m in range(idx.shape[0]):
                    gjA[m] = gram[idx[m], j]
                coef = np.linalg.solve(gram[idx][:, idx], gjA)
                schur = gram[j, j] - gjA @ coef
                if schur <= 1e-10 * gram[j, j]:
                    # the smooth part is flat along v while the l1 part falls
                    ext = np.append(idx, j)
                    v = np.append(-coef, 1.0) * sign[j]
                    if not _pivot(s, ext, v):
                        break
                    continue
            idx = np.sort(np.append(idx, j))
        g = gram[idx][:, idx]
        bs = b[idx]
        rhs = bs - 0.5 * alpha * sign[idx]
        target = np.linalg.solve(g, rhs)
        cur = s[idx]
        delta = target - cur
        best = cur.copy()
        best_obj = _support_objective(g, bs, cur, alpha)
        # candidate points: the target and every zero crossing on the way
        cands = [1.0]
        for m in range(idx.shape[0]):
            if delta[m] != 0.0:
                t = -cur[m] / delta[m]
                if t > 0.0 and t < 1.0:
                    cands.append(t)
        improved = False
        for t in cands:
            trial = cur + t * delta
            for m in range(trial.shape[0]):
                if abs(trial[m]) < ZERO_THRESHOLD:
                    trial[m] = 0.0
            obj = _support_objective(g, bs, trial, alpha)
            if obj < best_obj:
                best = trial
                best_obj = obj
                improved = True
        if not improved:
            break
        for m in range(idx.shape[0]):
            s[idx[m]] = best[m]
    for j in range(n):
        acc = -b[j]
        for t in range(n):
            acc += gram[j, t] * s[t]
        grad[j] = 2.0 * acc
    return _kkt_from_grad(grad, s, i, alpha), max_iters


def _solve(gram, b, i, alpha, settings, s0):
    s = np.zeros(gram.shape[0]) if s0 is None else np.array(s0, dtype=np.float64, copy=True)
    s[i] = 0.0
    tol = settings.kkt_tol
    if settings.algorithm == "proximal-gradient":
        s, kkt, iters = _prox_grad_column(gram, b, i, alpha, s, settings.max_iters, tol)
    elif settings.algorithm == "active-set":
        s = _reduce_support(gram, s)
        kkt, iters = _active_set_column(gram, b, i, alpha, s, settings.max_iters, 0.01 * tol)
    else:
        kkt, iters = _cd_column(gram, b, i, alpha, s, settings.max_iters, tol)
    s[np.abs(s) < ZERO_THRESHOLD] = 0.0
    s[i] = 0.0
    kkt = float(_kkt_from_grad(2.0 * (gram @ s - b), s, i, alpha))
    return s, kkt, iters


def _check(x_prime, alpha):
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x_prime.ndim != 2:
        raise DimensionMismatchError("x_prime must be a 2-D (c x n) matrix")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return x_prime


def solve_lasso_column(
    x_prime: np.ndarray,
    i: int,
    alpha: float,
    settings: LassoSettings = LassoSettings(),
    s0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Reconstruct sample ``i`` sparsely from the other columns of ``x_prime``.

    Raises
    ------
    ConvergenceError
        If the KKT residual is still above ``settings.kkt_tol`` after
        ``settings.max_iters`` iterations; the residual is attached.
    """
    x_prime = _check(x_prime, alpha)
    n = x_prime.shape[1]
    if not 0 <= i < n:
        raise IndexError(f"sample index {i} out of range for n={n}")
    if s0 is not None and np.shape(s0) != (n,):
        raise DimensionMismatchError(f"warm start has shape {np.shape(s0)}, expected ({n},)")
    gram = x_prime.T @ x_prime
    s, kkt, _ = _solve(gram, gram[:, i].copy(), i, alpha, settings, s0)
    if kkt > settings.kkt_tol:
        raise ConvergenceError(
            f"lasso column {i} stopped with KKT residual {kkt:.3e} > {settings.kkt_tol:.1e}",
            residual=kkt, index=i,
        )
    return s


def update_global_graph(
    x_prime: np.ndarray,
    alpha: float,
    settings: LassoSettings = LassoSettings(),
    s_init: Optional[np.ndarray] = None,
) -> GlobalGraph:
    """Solve every column; ``s_init`` warm-starts from a previous graph."""
    x_prime = _check(x_prime, alpha)
    n = x_prime.shape[1]
    if s_init is not None and np.shape(s_init) != (n, n):
        raise DimensionMismatchError(f"warm start has shape {np.shape(s_init)}, expected ({n}, {n})")
    gram = np.ascontiguousarray(x_prime.T @ x_prime)
    S = np.zeros((n, n))
    worst, total = 0.0, 0
    for i in range(n):
        s0 = None if s_init is None else s_init[:, i]
        s, kkt, iters = _solve(gram, gram[:, i].copy(), i, alpha, settings, s0)
        if kkt > settings.kkt_tol:
            raise ConvergenceError(
                f"lasso column {i} stopped with KKT residual {kkt:.3e} > {settings.kkt_tol:.1e}",
                residual=kkt, index=i,
            )
        S[:, i] = s
        worst = max(worst, kkt)
        total += iters
    return GlobalGraph(S, float(alpha), worst, total)
