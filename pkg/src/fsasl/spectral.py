"""Graph Laplacians, spectral embedding and the row-sparse projection ``W``.

Two routes produce ``W`` from a combined Laplacian ``L``:

* two-step: embed with the ``c`` smallest eigenvectors ``Y`` of ``L``, then
  regress ``Y`` on the features under an l2,1 penalty (:func:`solve_l21`);
* direct: the ``c`` smallest eigenvectors of the generalized problem
  ``(X L X^T + gamma D) w = lambda X X^T w`` (:func:`solve_w_generalized`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import ConvergenceError, DimensionMismatchError, SingularSystemError

__all__ = [
    "CombinedLaplacian",
    "Embedding",
    "SelectionMatrix",
    "global_laplacian",
    "combine",
    "smallest_eigenpairs",
    "l21_norm",
    "l21_objective",
    "gamma_max",
    "solve_l21",
    "solve_w_generalized",
]

IRLS_DELTA = 1e-8
DENSE_EIGEN_LIMIT = 2000


@dataclass(frozen=True)
class CombinedLaplacian:
    l: np.ndarray
    beta: float = 0.0


@dataclass(frozen=True)
class Embedding:
    y: np.ndarray
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class SelectionMatrix:
    """Feature projection ``W`` (d x c); row norms score the features."""

    w: np.ndarray
    gamma: float
    eigenvalues: Optional[np.ndarray] = None
    objective_trace: Tuple[float, ...] = field(default=())

    @property
    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.w, axis=1)


def _values(x):
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def _matrix(l):
    return np.asarray(getattr(l, "l", l), dtype=np.float64)


def _fix_signs(v):
    """Flip columns so that each one's largest-magnitude entry is positive."""
    if v.size == 0:
        return v
    pick = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pick, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def global_laplacian(s) -> np.ndarray:
    """``(I - S)(I - S)^T`` for a reconstruction matrix ``S``."""
    s = np.asarray(getattr(s, "s", s), dtype=np.float64)
    m = np.eye(s.shape[0]) - s
    return m @ m.T


def combine(l_s, l_p, beta: float) -> CombinedLaplacian:
    l_s = np.asarray(l_s, dtype=np.float64)
    l_p = np.asarray(l_p, dtype=np.float64)
    if l_s.shape != l_p.shape or l_s.ndim != 2 or l_s.shape[0] != l_s.shape[1]:
        raise DimensionMismatchError(f"cannot combine Laplacians of shape {l_s.shape} and {l_p.shape}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    l = l_s + beta * l_p
    return CombinedLaplacian(0.5 * (l + l.T), float(beta))


def smallest_eigenpairs(l, c: int) -> Embedding:
    """The ``c`` algebraically smallest eigenpairs of a symmetric matrix.

    Eigenvector signs are normalized; inside a repeated eigenvalue the basis
    is whatever the solver returns.
    """
    l = _matrix(l)
    n = l.shape[0]
    if not 1 <= c <= n - 1:
        raise ValueError(f"c={c} must lie in [1, n-1] = [1, {n - 1}]")
    if n <= DENSE_EIGEN_LIMIT:
        vals, vecs = scipy.linalg.eigh(l, subset_by_index=[0, c - 1])
    else:
        # shift-invert just below the spectrum of a PSD matrix
        shift = -1e-6 * max(np.abs(l).sum(axis=1).max(), 1.0)
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(l, k=c, sigma=shift, which="LM")
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    return Embedding(_fix_signs(vecs), vals)


def l21_norm(w) -> float:
    return float(np.linalg.norm(w, axis=1).sum())


def l21_objective(x, y, w, gamma: float) -> float:
    """``||Y - X^T W||_F^2 + gamma ||W||_{2,1}``."""
    r = np.asarray(y) - _values(x).T @ w
    return float(np.sum(r * r) + gamma * l21_norm(w))


def gamma_max(x, y) -> float:
    """Smallest ``gamma`` for which ``W = 0`` solves the l2,1 regression."""
    return float(np.linalg.norm(2.0 * _values(x) @ np.asarray(y), axis=1).max())


def _reweighted_solve(x, xxt, xy, y, gamma, scale):
    """``(X X^T + gamma diag(1/scale))^{-1} X Y``; ``scale`` = 2||w_i|| + delta."""
    d, n = x.shape
    try:
        if d <= n:
            a = xxt + np.diag(gamma / scale)
            return scipy.linalg.solve(a, xy, assume_a="pos")
        # push-through identity keeps the solve n x n when d > n
        inner = gamma * np.eye(n) + (x.T * scale) @ x
        return scale[:, None] * (x @ scipy.linalg.solve(inner, y, assume_a="pos"))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystemError(f"reweighted system is singular: {exc}") from exc


def solve_l21(
    x,
    y,
    gamma: float,
    max_iters: int = 10000,
    tol: float = 1e-10,
    w0: Optional[np.ndarray] = None,
    delta: float = IRLS_DELTA,
    strict: bool = False,
) -> SelectionMatrix:
    """Minimize ``||Y - X^T W||^2 + gamma ||W||_{2,1}`` by reweighted least squares.

    Each sweep solves ``(X X^T + gamma D) W = X Y`` with
    ``D = diag(1 / (2 ||w_i|| + delta))``; iteration stops when the relative
    objective change drops to ``tol``. With ``strict`` a run that exhausts
    ``max_iters`` raises :class:`ConvergenceError`.
    """
    x = _values(x)
    y = np.asarray(getattr(y, "y", y), dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    d, n = x.shape
    if y.shape[0] != n:
        raise DimensionMismatchError(f"embedding has {y.shape[0]} rows, data has {n} samples")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    xxt = x @ x.T
    xy = x @ y
    if w0 is None:
        w = _reweighted_solve(x, xxt, xy, y, gamma, np.ones(d))
    else:
        w = np.array(w0, dtype=np.float64, copy=True)
        if w.shape != (d, y.shape[1]):
            raise DimensionMismatchError(f"w0 has shape {w.shape}, expected {(d, y.shape[1])}")
    obj = l21_objective(x, y, w, gamma)
    trace = [obj]
    converged = False
    for _ in range(max_iters):
        scale = 2.0 * np.linalg.norm(w, axis=1) + delta
        w = _reweighted_solve(x, xxt, xy, y, gamma, scale)
        new = l21_objective(x, y, w, gamma)
        trace.append(new)
        done = abs(obj - new) <= tol * max(abs(obj), 1e-300)
        obj = new
        if done:
            converged = True
            break
    if strict and not converged:
        raise ConvergenceError(f"l2,1 regression not converged after {max_iters} sweeps", residual=obj)
    return SelectionMatrix(w, float(gamma), objective_trace=tuple(trace))


def _ridge(xxt, d, n, ridge):
    if ridge is None:
        ridge = d > n
    if ridge:
        return xxt + (1e-8 * np.trace(xxt) / d) * np.eye(d)
    return xxt


def solve_w_generalized(
    x,
    l,
    gamma: float,
    w_prev=None,
    c: Optional[int] = None,
    ridge: Optional[bool] = None,
    delta: float = IRLS_DELTA,
) -> SelectionMatrix:
    """``c`` smallest generalized eigenvectors of ``(X L X^T + gamma D, X X^T)``.

    ``D = diag(1 / (2 ||w_i|| + delta))`` comes from ``w_prev``; without one
    every row is weighted as if it had unit norm. The result satisfies
    ``W^T X X^T W = I``. ``ridge=None`` adds a tiny ridge to ``X X^T`` only
    when there are more features than samples.
    """
    x = _values(x)
    lm = _matrix(l)
    d, n = x.shape
    if lm.shape != (n, n):
        raise DimensionMismatchError(f"Laplacian has shape {lm.shape}, data has {n} samples")
    if w_prev is not None:
        w_prev = np.asarray(getattr(w_prev, "w", w_prev), dtype=np.float64)
        if c is None:
            c = w_prev.shape[1]
    if c is None or not 1 <= c <= d:
        raise ValueError(f"c={c} must lie in [1, d] = [1, {d}]")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if w_prev is None:
        scale = np.full(d, 2.0 + delta)
    else:
        scale = 2.0 * np.linalg.norm(w_prev, axis=1) + delta
    a = x @ lm @ x.T + np.diag(gamma / scale)
    a = 0.5 * (a + a.T)
    b = _ridge(x @ x.T, d, n, ridge)
    try:
        vals, w = scipy.linalg.eigh(a, b, subset_by_index=[0, c - 1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystemError(
            "X X^T is singular; enable the ridge or reduce the feature count"
        ) from exc
    return SelectionMatrix(_fix_signs(w), float(gamma), eigenvalues=vals)
