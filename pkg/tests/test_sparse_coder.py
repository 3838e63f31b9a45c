import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsasl.errors import ConvergenceError, DimensionMismatchError
from fsasl.sparse_coder import (
    ALGORITHMS,
    LassoSettings,
    kkt_residual,
    lasso_objective,
    solve_lasso_column,
    update_global_graph,
)
from oracles import lasso_enumerate


def test_duplicate_column_takes_all_weight():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(3)
    x = np.column_stack([v, v, rng.standard_normal(3)])
    s = solve_lasso_column(x, 0, 1e-6)
    assert np.count_nonzero(s) == 1 and s[1] == pytest.approx(1.0, abs=1e-5)
    r = x[:, 0] - x @ s
    assert np.linalg.norm(r) < 1e-5


def test_large_alpha_deactivates():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 6))
    i = 2
    g = x.T @ x[:, i]
    g[i] = 0
    s = solve_lasso_column(x, i, 2.0 * np.abs(g).max() * (1 + 1e-12))
    assert not s.any()


def test_hand_instance():
    x = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    s = solve_lasso_column(x, 2, 0.1)
    assert np.allclose(s, [0.95, 0.95, 0.0], atol=1e-6)
    ref, _ = lasso_enumerate(x, 2, 0.1)
    assert np.allclose(s, ref, atol=1e-6)


def test_identical_samples_share_weight():
    x = np.tile(np.array([[1.0], [2.0]]), (1, 3))
    g = update_global_graph(x, 1e-3)
    assert np.all(np.diag(g.s) == 0)
    # the reconstruction term pins the column sum at 1 - alpha / (2 ||x||^2)
    assert np.allclose(g.s.sum(axis=0), 1 - 1e-3 / 10, atol=1e-7)


def test_huge_alpha_gives_zero_graph():
    x = np.random.default_rng(2).standard_normal((3, 8))
    assert not update_global_graph(x, 1e6).s.any()


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_algorithms_agree_with_enumeration(algorithm):
    rng = np.random.default_rng(3)
    cfg = LassoSettings(max_iters=200000, algorithm=algorithm)
    for _ in range(5):
        x = rng.standard_normal((3, 7))
        for i in (0, 4):
            s = solve_lasso_column(x, i, 0.05, cfg)
            _, best = lasso_enumerate(x, i, 0.05)
            assert lasso_objective(x, i, s, 0.05) <= best + 1e-6
            assert kkt_residual(x, i, s, 0.05) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(3, 12), st.floats(1e-3, 1.0), st.integers(0, 2**31))
def test_objective_certificate(c, n, alpha, seed):
    x = np.random.default_rng(seed).standard_normal((c, n))
    i = seed % n
    s = solve_lasso_column(x, i, alpha)
    _, best = lasso_enumerate(x, i, alpha)
    assert s[i] == 0
    assert lasso_objective(x, i, s, alpha) <= best + 1e-6
    assert kkt_residual(x, i, s, alpha) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(3, 15), st.integers(0, 2**31))
def test_zero_diagonal_and_threshold(c, n, seed):
    x = np.random.default_rng(seed).standard_normal((c, n))
    s = update_global_graph(x, 1e-2).s
    assert np.all(np.diag(s) == 0.0)
    nz = s[s != 0]
    assert np.all(np.abs(nz) >= 1e-12)


def test_sparsity_monotone_in_alpha():
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal((4, 12))
        counts = [np.count_nonzero(update_global_graph(x, a).s) for a in (1e-3, 1e-2, 1e-1, 1.0, 10.0)]
        assert all(a >= b for a, b in zip(counts, counts[1:])), counts


def test_warm_start_reaches_same_objective():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 15))
    cold = update_global_graph(x, 1e-2)
    start = cold.s + 0.1 * rng.standard_normal(cold.s.shape)
    warm = update_global_graph(x, 1e-2, s_init=start)
    assert warm.kkt <= 1e-6
    for i in range(15):
        a = lasso_objective(x, i, warm.s[:, i], 1e-2)
        b = lasso_objective(x, i, cold.s[:, i], 1e-2)
        assert a == pytest.approx(b, abs=1e-9)


def test_rank_deficient_large_n():
    x = np.random.default_rng(6).standard_normal((3, 150))
    x *= np.sqrt(3 / np.sum(x * x))
    g = update_global_graph(x, 1e-3)
    assert g.kkt <= 1e-6


def test_errors():
    x = np.random.default_rng(7).standard_normal((3, 6))
    with pytest.raises(DimensionMismatchError):
        solve_lasso_column(x, 0, 0.1, s0=np.zeros(3))
    with pytest.raises(IndexError):
        solve_lasso_column(x, 6, 0.1)
    with pytest.raises(ConvergenceError) as info:
        solve_lasso_column(x, 0, 1e-3, LassoSettings(max_iters=1, algorithm="proximal-gradient"))
    assert info.value.residual is not None
    with pytest.raises(ConvergenceError) as info:
        update_global_graph(x, 1e-3, LassoSettings(max_iters=1, algorithm="proximal-gradient"))
    assert info.value.index == 0
