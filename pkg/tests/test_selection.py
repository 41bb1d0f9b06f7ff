import math
from collections import Counter

import numpy as np
import pytest

from longal.core import ChangeLabel
from longal.errors import DimensionMismatch, EmptyUnlabeledSet
from longal.learner import ChangeDetector
from longal.strategies import STRATEGIES, StrategyConfig, query, score_pool
from longal.strategies.cluster_margin import select_cluster_margin
from longal.strategies.hybrid import cosine_density, hybrid_scores, mutual_information_matrix, quantize, select_hybrid
from longal.strategies.kcenter import select_kcenter
from longal.strategies.kmeans import kmeans
from longal.strategies.random import select_random

from oracles import brute_kcenter


# -------------------------------------------------------------------- k-center
def test_kcenter_farthest_point():
    keys = ["a", "b"]
    assert select_kcenter(keys, [[1.0], [10.0]], [[0.0]], 1) == ["b"]
    assert select_kcenter(keys, [[1.0], [10.0]], [[0.0]], 2) == ["b", "a"]


def test_kcenter_identical_embeddings_follow_pool_order():
    keys = ["d", "b", "a", "c"]
    assert select_kcenter(keys, np.ones((4, 3)), np.ones((1, 3)), 3) == ["a", "b", "c"]
    assert select_kcenter(keys, np.ones((4, 3)), np.empty((0, 3)), 2) == ["a", "b"]


def test_kcenter_matches_brute_force(rng):
    for trial in range(40):
        n, D = int(rng.integers(2, 30)), int(rng.integers(1, 6))
        U = rng.integers(0, 4, (n, D)).astype(float) if trial % 2 else rng.normal(size=(n, D))
        L = rng.normal(size=(int(rng.integers(0, 4)), D))
        keys = [f"k{i:02d}" for i in rng.permutation(n)]
        q = int(rng.integers(1, n + 1))
        assert select_kcenter(keys, U, L, q) == brute_kcenter(keys, U, L, q)


def test_kcenter_errors():
    with pytest.raises(DimensionMismatch):
        select_kcenter(["a"], [[1.0, 2.0]], [[1.0]], 1)
    with pytest.raises(EmptyUnlabeledSet):
        select_kcenter([], np.empty((0, 2)), np.empty((0, 2)), 1)


# --------------------------------------------------------------------- k-means
def test_kmeans_separated_blobs(rng):
    X = np.concatenate([rng.normal(0, 0.1, (20, 2)), rng.normal(5, 0.1, (20, 2))])
    labels, centers = kmeans(X, 2, seed=42)
    assert len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1 and labels[0] != labels[-1]
    a, b = kmeans(X, 2, seed=42)
    assert np.array_equal(labels, a) and np.array_equal(centers, b)


def test_kmeans_more_clusters_than_points():
    labels, centers = kmeans(np.arange(3.0)[:, None], 20)
    assert len(centers) == 3 and sorted(labels) == [0, 1, 2]


# -------------------------------------------------------------- cluster margin
def test_single_cluster_is_pure_margin(rng):
    keys = [f"k{i}" for i in range(30)]
    s = rng.random(30)
    E = rng.normal(size=(30, 3))
    expect = [keys[i] for i in np.argsort(-s, kind="stable")[:5]]
    assert select_cluster_margin(keys, E, s, 5, n_clusters=1) == expect


def test_saturated_candidates_are_pure_margin(rng):
    keys = [f"k{i}" for i in range(12)]
    s = rng.random(12)
    E = rng.normal(size=(12, 2))
    expect = [keys[i] for i in np.argsort(-s, kind="stable")[:3]]
    assert select_cluster_margin(keys, E, s, 3, n_clusters=4, candidate_multiplier=10) == expect


@pytest.mark.parametrize("order", ["diversity_first", "uncertainty_first"])
def test_two_clusters_one_pick_each(order):
    keys = ["a", "b", "c", "d"]
    E = np.array([[0.0], [0.1], [5.0], [5.1]])
    s = np.array([0.9, 0.8, 0.2, 0.1])
    got = select_cluster_margin(keys, E, s, 2, n_clusters=2, candidate_multiplier=1, order=order)
    if order == "diversity_first":
        assert got == ["a", "c"]
    else:  # the two lowest-margin pairs both sit in the first cluster
        assert got == ["a", "b"]


# ----------------------------------------------------------------------- hybrid
def _mi_brute(a, b):
    n = len(a)
    pa, pb, pj = Counter(a), Counter(b), Counter(zip(a, b))
    return sum(c / n * math.log((c / n) / (pa[x] / n * pb[y] / n)) for (x, y), c in pj.items())


def test_mi_matrix_matches_counting(rng):
    A = rng.integers(0, 4, (5, 12))
    B = rng.integers(0, 4, (3, 12))
    M = mutual_information_matrix(A, B, 4)
    for i in range(5):
        for j in range(3):
            assert M[i, j] == pytest.approx(_mi_brute(A[i].tolist(), B[j].tolist()), abs=1e-12)
    assert mutual_information_matrix(A[:1], A[:1], 4)[0, 0] == pytest.approx(_mi_brute(A[0].tolist(), A[0].tolist()))


def test_hybrid_three_candidates_exhaustive():
    E = np.array([[1.0, 0.0, 2.0, 3.0], [3.0, 1.0, 0.0, 2.0], [0.0, 0.0, 3.0, 3.0]])
    L = np.array([[0.0, 1.0, 2.0, 3.0]])
    parts = hybrid_scores(E, L, mi_bins=4)
    cos = [[float(np.dot(u, v) / np.linalg.norm(u) / np.linalg.norm(v)) for v in E] for u in E]
    dens = [(sum(row) - row[i]) / 2 for i, row in enumerate(cos)]
    np.testing.assert_allclose(parts["density"], dens, atol=1e-12)
    # codes: the grid 0..3 maps one-to-one onto 4 bins
    codes_e, codes_l = quantize(E, 0, 3, 4), quantize(L, 0, 3, 4)
    assert np.array_equal(codes_e, E.astype(int))
    div = [-_mi_brute(codes_e[i].tolist(), codes_l[0].tolist()) for i in range(3)]
    np.testing.assert_allclose(parts["diversity"], div, atol=1e-12)

    def mm(x):
        x = np.asarray(x)
        return (x - x.min()) / (x.max() - x.min())

    score = (2 * mm(div) + mm(dens)) / 3
    np.testing.assert_allclose(parts["score"], score, atol=1e-12)
    got = select_hybrid(["x", "y", "z"], [0.3, 0.2, 0.1], E, L, 3, mi_bins=4)
    assert got == [["x", "y", "z"][i] for i in np.argsort(-score, kind="stable")]


def test_hybrid_degenerate_falls_back_to_prefilter_rank():
    keys = ["a", "b", "c", "d"]
    E = np.ones((4, 3))
    got = select_hybrid(keys, [0.1, 0.4, 0.3, 0.2], E, np.ones((2, 3)), 2)
    assert got == ["b", "c"]


def test_hybrid_prefilter(rng):
    keys = [f"k{i:02d}" for i in range(30)]
    u = rng.random(30)
    E = rng.normal(size=(30, 4))
    top = {keys[i] for i in np.argsort(-u)[:5]}
    assert set(select_hybrid(keys, u, E, rng.normal(size=(3, 4)), 5, prefilter=5)) == top
    assert len(select_hybrid(keys, u, E, rng.normal(size=(3, 4)), 30, prefilter=500)) == 30


def test_cosine_density_single_row():
    assert cosine_density(np.ones((1, 3))).tolist() == [0.0]


# ----------------------------------------------------------------------- random
def test_random_whole_pool_and_determinism():
    keys = list("edcba")
    assert sorted(select_random(keys, 5, 0)) == sorted(keys)
    assert select_random(keys, 3, 9) == select_random(list("abcde"), 3, 9)


def test_random_frequencies_binomial():
    keys, n = ["a", "b", "c", "d"], 10_000
    counts = Counter(select_random(keys, 1, np.random.default_rng(s))[0] for s in range(n))
    sigma = math.sqrt(n * 0.25 * 0.75)
    for k in keys:
        assert abs(counts[k] - n / 4) <= 3 * sigma


# ------------------------------------------------------------------- dispatch
@pytest.fixture(scope="module")
def labeled_state(small_splits):
    train, _, _ = small_splits
    pool = train.pair_pool()
    for key in pool.keys[::4]:
        pool.add_label(ChangeLabel(key, train.mask(key)))
    keys = pool.labeled_keys
    m = ChangeDetector(base_channels=4, max_epochs=2, patience=2, lr=1e-3).fit(pool.inputs(keys), pool.masks(keys))
    return pool, m


@pytest.mark.parametrize("name", STRATEGIES)
def test_query_contract(labeled_state, name):
    pool, m = labeled_state
    cfg = StrategyConfig(name=name, n_drop=3, n_clusters=3)
    got = query(cfg, m, pool, 5, np.random.default_rng(0))
    assert len(got) == len(set(got)) == 5
    assert not set(got) & pool.labeled
    assert got == query(cfg, m, pool, 5, np.random.default_rng(0))


def test_query_random_delegates(labeled_state):
    pool, m = labeled_state
    got = query(StrategyConfig("random"), m, pool, 4, np.random.default_rng(3))
    assert got == select_random(pool.unlabeled_keys, 4, np.random.default_rng(3))


def test_query_entropy_is_score_top(labeled_state):
    pool, m = labeled_state
    cfg = StrategyConfig("entropy")
    chosen, scores = query(cfg, m, pool, 4, return_scores=True)
    assert chosen == scores.top(4) == score_pool(cfg, m, pool).top(4)


def test_query_whole_pool_and_bounds(labeled_state):
    pool, m = labeled_state
    n = len(pool.unlabeled_keys)
    assert sorted(query(StrategyConfig("kcenter"), m, pool, n)) == pool.unlabeled_keys
    with pytest.raises(ValueError):
        query(StrategyConfig("margin"), m, pool, n + 1)


def test_strategy_config_validation():
    with pytest.raises(ValueError):
        StrategyConfig(name="coreset-ish")
    with pytest.raises(ValueError):
        StrategyConfig(aggregate="median")
