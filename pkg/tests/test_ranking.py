import itertools

import numpy as np
import pytest
from hypothesis import given

from hirenet.errors import InputError
from hirenet.netcore import WeightedDigraph
from hirenet.ranking import (RankPermutation, bootstrap_network, check_ranks, hillside_violations,
                             initial_ranking, mvs1_strength, mvs2_strength, mvs_index,
                             objective_value, swap_search, violation_weight)

from conftest import matrix_and_perm, strict_hierarchy


def oracle(Y, ranks):
    """Double-loop reference: (violations, mvs1, mvs2), loops excluded."""
    n = len(Y)
    v = s1 = s2 = 0
    for u in range(n):
        for w in range(n):
            if u == w:
                continue
            gap = ranks[u] - ranks[w]
            if gap > 0:
                v += Y[u, w]
                s1 += gap * Y[u, w]
            s2 += abs(gap) * Y[u, w]
    return v, s1, s2


def exhaustive_min_violations(Y):
    n = len(Y)
    return min(oracle(Y, np.array(p) + 1)[0] for p in itertools.permutations(range(n)))


# --- objectives ------------------------------------------------------------

def test_hand_examples():
    Y = np.zeros((3, 3), int)
    Y[2, 0] = 2
    ident = [1, 2, 3]
    assert violation_weight(Y, ident) == 2
    assert mvs1_strength(Y, ident) == 4
    Y = np.zeros((3, 3), int)
    Y[0, 2] = 1
    assert mvs1_strength(Y, ident) == 0
    assert mvs2_strength(Y, ident) == 2


def test_upper_triangular_and_reversal():
    Y = strict_hierarchy(6, 2) + np.diag(np.full(6, 3))
    assert violation_weight(Y, np.arange(1, 7)) == 0
    assert mvs1_strength(Y, np.arange(1, 7)) == 0
    assert violation_weight(Y, np.arange(6, 0, -1)) == np.triu(Y, 1).sum()


def test_against_oracle_random(rng):
    for _ in range(100):
        Y = rng.poisson(1.5, (6, 6))
        r = rng.permutation(6) + 1
        ov = objective_value(Y, r)
        assert (ov.violation_weight, ov.mvs1_strength, ov.mvs2_strength) == oracle(Y, r)


@given(matrix_and_perm(min_n=2, max_n=8))
def test_oracle_property(args):
    Y, perm = args
    r = perm + 1
    ov = objective_value(Y, r)
    assert (ov.violation_weight, ov.mvs1_strength, ov.mvs2_strength) == oracle(Y, r)


@given(matrix_and_perm(min_n=2, max_n=8))
def test_transpose_identity(args):
    Y, perm = args
    r = perm + 1
    assert mvs2_strength(Y, r) == mvs1_strength(Y, r) + mvs1_strength(Y.T, r)


@given(matrix_and_perm(min_n=2, max_n=8))
def test_symmetric_mvs2_doubles_mvs1(args):
    Y, perm = args
    S = Y + Y.T
    assert mvs2_strength(S, perm + 1) == 2 * mvs1_strength(S, perm + 1)


@given(matrix_and_perm(min_n=2, max_n=7))
def test_relabel_invariance(args):
    Y, perm = args
    rng = np.random.default_rng(0)
    r = rng.permutation(len(Y)) + 1
    g = WeightedDigraph(Y)
    h = g.permuted(perm)
    # position k of h holds old node perm[k], which keeps its rank
    r_h = r[perm]
    assert np.array_equal(h.Y, Y[np.ix_(perm, perm)])
    assert objective_value(h, r_h) == objective_value(g, r)


def test_zero_strength_when_no_violations(rng):
    for _ in range(20):
        Y = np.triu(rng.poisson(2, (6, 6)))
        assert mvs1_strength(Y, np.arange(1, 7)) == 0


def test_check_ranks():
    with pytest.raises(InputError):
        check_ranks([1, 1, 2])
    with pytest.raises(InputError):
        check_ranks([0, 1, 2])
    assert RankPermutation.from_order([2, 0, 1]).ranks.tolist() == [2, 3, 1]
    assert RankPermutation.from_order([2, 0, 1]).order.tolist() == [2, 0, 1]


def test_hillside():
    assert hillside_violations(np.full((4, 4), 3), np.arange(1, 5)) == (0, 0)
    assert hillside_violations(np.array([[1, 0], [2, 0]]), [1, 2]) == (0, 1)


# --- swap search -------------------------------------------------------------

def test_initial_ranking_out_strength():
    Y = np.array([[5, 1, 0], [2, 0, 3], [0, 0, 0]])
    assert initial_ranking(Y).order.tolist() == [1, 0, 2]


def test_single_node():
    res = swap_search(np.array([[3]]), seed=0)
    assert res.final.ranks.tolist() == [1]
    assert res.best.violation_weight == 0


def test_planted_recovery():
    rng = np.random.default_rng(4)
    n = 20
    Y = np.triu(rng.poisson(2, (n, n)) + 1, 1)
    perm = rng.permutation(n)
    g = WeightedDigraph(Y).permuted(perm)
    res = swap_search(g, "mvs2", burnin=20_000, iterations=2000, interval=100, seed=1)
    assert res.best.violation_weight == 0


@pytest.mark.parametrize("objective", ["mvr", "mvs1", "mvs2"])
def test_trace_monotone(objective):
    Y = np.random.default_rng(7).poisson(1.0, (9, 9))
    res = swap_search(Y, objective, burnin=3000, iterations=0, seed=2)
    viol, strength = res.trace[:, 1], res.trace[:, 2]
    keys = list(zip(viol, strength))
    assert all(a >= b for a, b in zip(keys, keys[1:]))
    kind = {"mvr": mvs1_strength, "mvs1": mvs1_strength, "mvs2": mvs2_strength}[objective]
    assert viol[-1] == violation_weight(Y, res.final) and strength[-1] == kind(Y, res.final)


def test_exhaustive_small_instances():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(3, 7))
        Y = rng.poisson(1.0, (n, n))
        res = swap_search(Y, "mvr", burnin=300, iterations=100, interval=10, seed=3, restarts=30)
        assert res.best.violation_weight == exhaustive_min_violations(Y)


def test_samples_and_reproducibility():
    Y = np.random.default_rng(1).poisson(1.0, (7, 7))
    a = swap_search(Y, burnin=500, iterations=1000, interval=100, seed=5)
    b = swap_search(Y, burnin=500, iterations=1000, interval=100, seed=5)
    assert a.rank_samples.shape == (10, 7)
    assert np.array_equal(a.rank_samples, b.rank_samples)
    for row in a.rank_samples:
        assert sorted(row) == list(range(1, 8))


def test_search_rejects_bad_parameters():
    with pytest.raises(InputError):
        swap_search(np.eye(3, dtype=int), objective="nope")
    with pytest.raises(InputError):
        swap_search(np.eye(3, dtype=int), interval=0)


# --- bootstrap ---------------------------------------------------------------

def test_bootstrap_single_edge():
    g = WeightedDigraph(np.array([[0, 4], [0, 0]]))
    for s in range(5):
        assert np.array_equal(bootstrap_network(g, s).Y, g.Y)


def test_bootstrap_total_and_mean():
    Y = np.array([[2, 5, 0], [1, 0, 7], [3, 0, 2]])
    g = WeightedDigraph(Y)
    draws = np.array([bootstrap_network(g, s).Y for s in range(3000)])
    assert np.all(draws.sum(axis=(1, 2)) == Y.sum())
    mean = draws.mean(axis=0)
    p = Y / Y.sum()
    se = np.sqrt(Y.sum() * p * (1 - p) / len(draws))
    assert np.all(np.abs(mean - Y) <= 3 * se + 1e-12)


def test_mvs_index_planted_b1():
    n = 10
    g = WeightedDigraph(strict_hierarchy(n, 5))
    ens = mvs_index(g, "mvs2", B=1, burnin=5000, iterations=1000, interval=100, seed=0)
    assert np.array_equal(ens.mean_rank, np.arange(1, n + 1))
    assert ens.order.tolist() == list(range(n))


def test_mvs_index_threads_independent():
    g = WeightedDigraph(np.random.default_rng(3).poisson(1.0, (8, 8)))
    kw = dict(B=6, burnin=500, iterations=500, interval=50, seed=4)
    a = mvs_index(g, "mvs1", threads=1, **kw)
    b = mvs_index(g, "mvs1", threads=3, **kw)
    assert np.array_equal(a.rank_samples, b.rank_samples)
    q = a.quantiles()
    assert q.shape == (5, 8)
    assert np.all(np.diff(q, axis=0) >= 0)
    assert np.all(a.iqr() >= 0)
