import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import normalized_mutual_info_score

from fsasl.errors import ConfigError, DimensionMismatchError
from fsasl.evaluation import (
    accuracy,
    evaluate_features,
    evaluate_ranking,
    kmeans,
    maxvar_baseline,
    nmi,
    planted_clusters,
)
from fsasl.solver import FeatureRanking
from oracles import accuracy_exhaustive

labels = st.lists(st.integers(0, 3), min_size=2, max_size=30)


def test_kmeans_examples():
    x = np.array([[0.0, 0.1, 10.0, 10.1], [0.0, 0.0, 5.0, 5.0]])
    for seed in range(10):
        lab = kmeans(x, 2, seed=seed).labels
        assert lab[0] == lab[1] and lab[2] == lab[3] and lab[0] != lab[2]
    res = kmeans(x, 4, seed=3)
    assert sorted(res.labels.tolist()) == [0, 1, 2, 3] and res.inertia == 0.0
    a = kmeans(np.random.default_rng(0).standard_normal((3, 40)), 4, seed=7)
    b = kmeans(np.random.default_rng(0).standard_normal((3, 40)), 4, seed=7)
    assert np.array_equal(a.labels, b.labels)
    with pytest.raises(ConfigError):
        kmeans(x, 5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_kmeans_inertia_nonincreasing(seed, k):
    x = np.random.default_rng(seed).standard_normal((2, 25))
    res = kmeans(x, k, seed=seed)
    t = np.array(res.inertia_trace)
    assert np.all(t[1:] <= t[:-1] * (1 + 1e-12) + 1e-12)
    assert set(res.labels.tolist()) <= set(range(k))


def test_kmeans_reseeds_empty_cluster():
    # duplicate points make two initial centers coincide
    x = np.array([[0.0, 0.0, 0.0, 5.0, 9.0]])
    for seed in range(20):
        res = kmeans(x, 3, seed=seed)
        assert len(set(res.labels.tolist())) == 3


def test_accuracy_examples():
    t = [0, 0, 1, 1, 2]
    assert accuracy(t, t) == 1.0
    assert accuracy([2, 2, 0, 0, 1], t) == 1.0
    assert accuracy([0, 0, 1, 1], [0, 1, 0, 1]) == 0.5
    with pytest.raises(DimensionMismatchError):
        accuracy([0, 1], [0, 1, 1])


def test_nmi_examples():
    assert nmi([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0)
    assert nmi([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-15)
    # H(truth) = ln 2, H(pred) = 1.5 ln 2, I = ln 2  ->  1 / sqrt(1.5)
    assert nmi([0, 0, 1, 2], [0, 0, 1, 1]) == pytest.approx(1 / np.sqrt(1.5), abs=1e-15)
    assert nmi([0, 0, 0], [1, 1, 1]) == 1.0
    assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0
    with pytest.raises(DimensionMismatchError):
        nmi([0], [0, 1])


@settings(max_examples=200, deadline=None)
@given(labels.flatmap(lambda a: st.tuples(st.just(a), st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))))
def test_metrics_against_oracles(pair):
    pred, truth = pair
    assert accuracy(pred, truth) == pytest.approx(accuracy_exhaustive(pred, truth), abs=1e-15)
    ref = normalized_mutual_info_score(truth, pred, average_method="geometric")
    if len(set(pred)) > 1 and len(set(truth)) > 1:
        assert nmi(pred, truth) == pytest.approx(ref, abs=1e-10)
    assert 0.0 <= nmi(pred, truth) <= 1.0


@settings(max_examples=100, deadline=None)
@given(labels.flatmap(lambda a: st.tuples(st.just(a), st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))), st.permutations([0, 1, 2, 3]))
def test_metrics_relabel_invariant(pair, perm):
    pred, truth = pair
    relabeled = [perm[v] for v in pred]
    assert accuracy(relabeled, truth) == pytest.approx(accuracy(pred, truth))
    assert nmi(relabeled, truth) == pytest.approx(nmi(pred, truth))
    assert nmi(pred, [perm[v] for v in truth]) == pytest.approx(nmi(pred, truth))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=40))
def test_single_cluster_accuracy_is_majority(truth):
    counts = np.bincount(truth)
    assert accuracy([7] * len(truth), truth) == pytest.approx(counts.max() / len(truth))


def test_evaluate_ranking_report():
    x, y = planted_clusters(0)
    ranking = FeatureRanking(np.arange(50), np.zeros(50))
    rep = evaluate_ranking(x, y, ranking, list(range(5, 55, 5)), n_repeats=20)
    assert len(rep.per_feature_count) == 10
    assert rep.acc.shape == (10, 20)
    acc_all, _ = evaluate_features(x, y, range(50), range(20))
    assert rep.per_feature_count[0][1] >= acc_all.mean()
    for row in rep.per_feature_count:
        assert all(0 <= v <= 1 for v in row[1:])
    agg = rep.aggregated
    assert agg[0] == pytest.approx(np.mean([r[1] for r in rep.per_feature_count]))
    again = evaluate_ranking(x, y, ranking, list(range(5, 55, 5)), n_repeats=20)
    assert again.to_json() == rep.to_json()
    assert again.to_csv() == rep.to_csv()
    assert json.loads(rep.to_json())["aggregated"]["mean_acc"] == agg[0]
    with pytest.raises(ConfigError):
        evaluate_ranking(x, y, ranking, [5, 51])


def test_maxvar_examples():
    x = np.array([[0.0, 1.0, 0.0, 1.0], [0.0, 3.0, 0.0, 3.0], [0.0, 2.0, 0.0, 2.0], [1.0, 1.0, 1.0, 1.0]])
    assert maxvar_baseline(x).order.tolist() == [1, 2, 0, 3]
    z = np.random.default_rng(0).standard_normal((6, 30)) * np.arange(1, 7)[:, None]
    z = (z - z.mean(axis=1, keepdims=True)) / z.std(axis=1, keepdims=True)
    assert maxvar_baseline(z).order.tolist() == list(range(6))


def test_planted_generator():
    x, y = planted_clusters(3)
    assert x.shape == (50, 150) and np.bincount(y).tolist() == [50, 50, 50]
    means = np.array([[x[j, y == c].mean() for c in range(3)] for j in range(50)])
    assert np.all(np.ptp(means[:5], axis=1) > 3.0)
    assert np.all(np.ptp(means[5:], axis=1) < 1.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=40), st.permutations(list(range(6))))
def test_relabeled_identical_partition_is_exactly_one(truth, perm):
    pred = [perm[v] for v in truth]
    assert accuracy(pred, truth) == 1.0
    assert nmi(pred, truth) == 1.0
