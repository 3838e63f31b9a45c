"""Alternating solver for feature selection with adaptive structure learning.

One outer iteration refreshes, in order, the sparse reconstruction graph
``S``, the neighborhood graph ``P``, the combined Laplacian, and the
projection ``W``. By default ``mu`` is set once from the first projection;
``mu_policy="per-iteration"`` recomputes it every iteration instead. The variant
switches select which structure terms exist and whether they adapt.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .errors import ConfigError, FsaslError, SolverError
from .neighborhood import (
    LocalGraph,
    compute_mu,
    local_laplacian,
    squared_distances,
    update_local_graph,
)
from .sparse_coder import GlobalGraph, LassoSettings, update_global_graph
from .spectral import (
    SelectionMatrix,
    combine,
    gamma_max,
    global_laplacian,
    l21_norm,
    smallest_eigenpairs,
    solve_l21,
    solve_w_generalized,
)

__all__ = [
    "VARIANTS",
    "FsaslConfig",
    "FsaslState",
    "FeatureRanking",
    "objective",
    "run",
    "rank_features",
    "initial_structures",
    "auto_gamma_max",
]

log = logging.getLogger(__name__)

VARIANTS = ("full", "global-only", "local-only", "fixed-structure")
W_PATHS = ("two-step", "generalized")
MU_POLICIES = ("fixed", "per-iteration")
INITS = ("structures", "zero-s")


@dataclass(frozen=True)
class FsaslConfig:
    alpha: float = 1e-3
    beta: float = 1.0
    gamma: float = 1e-2
    k: int = 5
    c: int = 2
    max_outer_iters: int = 30
    obj_tol: float = 1e-5
    variant: str = "full"
    adaptive: bool = True
    w_path: str = "two-step"
    mu_policy: str = "fixed"
    init: str = "structures"
    lasso: LassoSettings = field(default_factory=LassoSettings)
    l21_max_iters: int = 2000
    l21_tol: float = 1e-10

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.mu_policy not in MU_POLICIES:
            raise ConfigError(f"unknown mu policy {self.mu_policy!r}; choose from {MU_POLICIES}")
        if self.init not in INITS:
            raise ConfigError(f"unknown init {self.init!r}; choose from {INITS}")
        if self.w_path not in W_PATHS:
            raise ConfigError(f"unknown W path {self.w_path!r}; choose from {W_PATHS}")
        for name in ("alpha", "beta", "gamma", "obj_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.k < 1 or self.c < 1 or self.max_outer_iters < 1:
            raise ConfigError("k, c and max_outer_iters must be positive integers")

    @property
    def uses_global(self) -> bool:
        return self.variant != "local-only"

    @property
    def uses_local(self) -> bool:
        return self.variant != "global-only"

    @property
    def is_adaptive(self) -> bool:
        return self.adaptive and self.variant != "fixed-structure"

    def validate_for(self, d: int, n: int) -> None:
        if self.c > min(d, n - 1):
            raise ConfigError(f"c={self.c} exceeds min(d, n-1) = {min(d, n - 1)}")
        if self.uses_local and self.k > n - 2:
            raise ConfigError(f"k={self.k} exceeds n-2 = {n - 2}")


@dataclass
class FsaslState:
    w: SelectionMatrix
    s: Optional[GlobalGraph]
    p: Optional[LocalGraph]
    mu: float
    objective_trace: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    timings: List[float] = field(default_factory=list)
    monotone_violations: int = 0


@dataclass(frozen=True)
class FeatureRanking:
    """Feature indices (0-based) ordered by decreasing score."""

    order: np.ndarray
    scores: np.ndarray

    def top(self, m: int) -> np.ndarray:
        return self.order[:m]


def _values(x):
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def objective(x, state: FsaslState, config: FsaslConfig) -> float:
    """Value of the unified objective at ``state``.

    Terms whose structure is absent (``state.s`` or ``state.p`` is ``None``)
    are left out, which gives the global-only and local-only objectives.
    """
    xv = _values(x)
    w = getattr(state.w, "w", state.w)
    xp = w.T @ xv
    total = 0.0
    if state.s is not None:
        s = getattr(state.s, "s", state.s)
        r = xp - xp @ s
        total += float(np.sum(r * r)) + config.alpha * float(np.abs(s).sum())
    if state.p is not None:
        p = getattr(state.p, "p", state.p)
        dist = squared_distances(xp)
        total += config.beta * float(np.sum(dist * p) + state.mu * np.sum(p * p))
    return total + config.gamma * l21_norm(w)


def _structure_input(xv, c):
    # put raw data on the scale the constraint W^T X X^T W = I imposes on
    # projected data (total energy c) so alpha means the same thing throughout
    energy = float(np.sum(xv * xv))
    return xv * np.sqrt(c / energy) if energy > 0 else xv


def initial_structures(x, config: FsaslConfig):
    """Structures learned on all (rescaled) features: ``(S, P)``, either may be ``None``.

    With ``init="zero-s"`` the global graph starts empty (``S = 0``).
    """
    xv = _values(x)
    x0 = _structure_input(xv, config.c)
    s = None
    if config.uses_global:
        if config.init == "zero-s":
            n = xv.shape[1]
            s = GlobalGraph(np.zeros((n, n)), config.alpha)
        else:
            s = update_global_graph(x0, config.alpha, config.lasso)
    p = update_local_graph(x0, config.k) if config.uses_local else None
    return s, p


def _laplacian(s, p, config, n):
    l_s = global_laplacian(s) if s is not None else np.zeros((n, n))
    l_p = local_laplacian(p) if p is not None else np.zeros((n, n))
    # sum_ij P_ij ||y_i - y_j||^2 = 2 tr(Y^T L_P Y), hence the factor 2
    return combine(l_s, l_p, 2.0 * config.beta if p is not None else 0.0)


def _w_step(xv, lap, config, w_prev):
    if config.w_path == "generalized":
        return solve_w_generalized(xv, lap, config.gamma, w_prev=w_prev, c=config.c)
    emb = smallest_eigenpairs(lap, config.c)
    w0 = None if w_prev is None else w_prev.w
    return solve_l21(xv, emb.y, config.gamma, max_iters=config.l21_max_iters, tol=config.l21_tol, w0=w0)


def auto_gamma_max(x, config: FsaslConfig) -> float:
    """``gamma_max`` for the embedding of the initial structures."""
    xv = _values(x)
    s, p = initial_structures(xv, config)
    emb = smallest_eigenpairs(_laplacian(s, p, config, xv.shape[1]), config.c)
    return gamma_max(xv, emb.y)


def run(
    x,
    config: FsaslConfig,
    callback: Optional[Callable[[int, FsaslState], None]] = None,
) -> FsaslState:
    """Alternate structure and projection updates until the objective settles.

    Stops when the relative objective change is at most ``config.obj_tol``
    or after ``config.max_outer_iters`` iterations. Subsolver failures are
    re-raised with the iteration number attached.
    """
    xv = _values(x)
    d, n = xv.shape
    config.validate_for(d, n)

    s, p = initial_structures(xv, config)
    w = _w_step(xv, _laplacian(s, p, config, n), config, None)
    state = FsaslState(w=w, s=s, p=p, mu=p.mu if p is not None else 0.0)

    # With mu_policy="fixed", mu comes from the first projection W0^T X and
    # stays put, so the objective is one fixed function across iterations.
    fixed_mu = None
    if config.uses_local and config.mu_policy == "fixed":
        fixed_mu = compute_mu(state.w.w.T @ xv, config.k)

    prev = None
    for it in range(1, config.max_outer_iters + 1):
        t0 = time.perf_counter()
        try:
            if config.is_adaptive:
                xp = state.w.w.T @ xv
                if config.uses_global:
                    s_init = None if state.s is None else state.s.s
                    state.s = update_global_graph(xp, config.alpha, config.lasso, s_init=s_init)
                if config.uses_local:
                    state.p = update_local_graph(xp, config.k, mu=fixed_mu)
                    state.mu = state.p.mu
            lap = _laplacian(state.s, state.p, config, n)
            state.w = _w_step(xv, lap, config, state.w)
        except FsaslError as exc:
            raise type(exc)(f"outer iteration {it}: {exc}") from exc
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"outer iteration {it}: {exc}") from exc
        obj = objective(xv, state, config)
        state.timings.append(time.perf_counter() - t0)
        state.objective_trace.append(obj)
        state.iterations = it
        if prev is not None and obj > prev + 1e-9 * abs(prev):
            state.monotone_violations += 1
            log.info("objective rose from %.10g to %.10g at iteration %d", prev, obj, it)
        if callback is not None:
            callback(it, state)
        if prev is not None and abs(prev - obj) <= config.obj_tol * max(abs(prev), 1e-300):
            state.converged = True
            break
        prev = obj
    return state


def rank_features(state) -> FeatureRanking:
    """Sort features by decreasing row norm of ``W``; ties keep index order."""
    w = state.w if isinstance(state, FsaslState) else state
    scores = np.linalg.norm(np.asarray(getattr(w, "w", w)), axis=1)
    order = np.argsort(-scores, kind="stable")
    return FeatureRanking(order, scores)


def with_params(config: FsaslConfig, **changes) -> FsaslConfig:
    return replace(config, **changes)
