import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hirenet.centrality import (MEASURES, centrality_panel, competition_ranks, spearman_matrix)
from hirenet.netcore import WeightedDigraph

from conftest import matrix_and_perm, strict_hierarchy


def dense_oracle(A):
    """Eigen-solver answers for the power-iteration measures."""
    vals, vecs = np.linalg.eig(A)
    v = np.abs(np.real(vecs[:, np.argmax(np.real(vals))]))
    eig = v / v.sum()
    n = len(A)
    hired = A.sum(axis=0)
    T = np.where(hired > 0, A / np.where(hired > 0, hired, 1), 1.0 / n)
    M = 0.85 * T + 0.15 / n
    vals, vecs = np.linalg.eig(M)
    p = np.abs(np.real(vecs[:, np.argmin(np.abs(vals - 1))]))
    pr = p / p.sum()
    w, V = np.linalg.eigh(A.T @ A)
    a = np.abs(V[:, -1])
    auth = a / a.sum()
    h = A @ auth
    return eig, pr, h / h.sum(), auth


def rank_oracle(x):
    """Average ranks by explicit tie grouping."""
    x = np.asarray(x, float)
    order = sorted(range(len(x)), key=lambda i: x[i])
    r = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for k in range(i, j + 1):
            r[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return r


def spearman_oracle(x, y):
    rx, ry = rank_oracle(x), rank_oracle(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    return (rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry))


def test_two_node_mutual():
    p = centrality_panel(WeightedDigraph(np.array([[0, 1], [1, 0]])))
    assert np.allclose(p.pagerank, 0.5)
    assert np.allclose(p.hub, 0.5) and np.allclose(p.authority, 0.5)


def test_chain_betweenness():
    Y = np.zeros((3, 3), int)
    Y[0, 1] = Y[1, 2] = 1
    p = centrality_panel(WeightedDigraph(Y))
    assert p.betweenness.tolist() == [0.0, 1.0, 0.0]


def test_against_dense_oracle(rng):
    for _ in range(20):
        A = rng.poisson(1.0, (10, 10)).astype(float)
        np.fill_diagonal(A, 0)
        p = centrality_panel(WeightedDigraph(A.astype(int)))
        eig, pr, hub, auth = dense_oracle(A)
        assert np.allclose(p.eigenvector, eig, atol=1e-8)
        assert np.allclose(p.pagerank, pr, atol=1e-8)
        assert np.allclose(p.hub, hub, atol=1e-8)
        assert np.allclose(p.authority, auth, atol=1e-8)


def test_pagerank_matches_networkx_on_reversed_graph(rng):
    A = rng.poisson(0.6, (12, 12))
    np.fill_diagonal(A, 0)
    p = centrality_panel(WeightedDigraph(A))
    G = nx.from_numpy_array(A, create_using=nx.DiGraph).reverse()
    ref = nx.pagerank(G, alpha=0.85, weight="weight", tol=1e-14, max_iter=10_000)
    assert np.allclose(p.pagerank, [ref[i] for i in range(12)], atol=1e-8)


def test_self_loops_ignored():
    Y = np.array([[0, 2, 1], [1, 0, 3], [0, 1, 0]])
    a = centrality_panel(WeightedDigraph(Y))
    b = centrality_panel(WeightedDigraph(Y + np.diag([5, 0, 9])))
    for m in MEASURES:
        assert np.allclose(getattr(a, m), getattr(b, m), atol=1e-12)


@given(matrix_and_perm(min_n=3, max_n=7))
def test_label_invariance(args):
    Y, perm = args
    g = WeightedDigraph(Y)
    a, b = centrality_panel(g), centrality_panel(g.permuted(perm))
    for m in ("in_strength", "out_strength", "pagerank", "betweenness"):
        assert np.allclose(getattr(a, m)[perm], getattr(b, m), atol=1e-12)


def test_top_hub_on_planted_hierarchy():
    n = 8
    p = centrality_panel(WeightedDigraph(strict_hierarchy(n)))
    assert p.ranks["hub"][0] == 1
    assert p.ranks["out_strength"][0] == 1
    assert p.ranks["pagerank"][0] == 1


def test_competition_ranks():
    assert competition_ranks([5, 3, 3, 1]).tolist() == [1, 2, 2, 4]


def test_spearman_trivial():
    x = np.array([3.0, 1, 4, 1, 5, 9, 2, 6])
    cm = spearman_matrix({"a": x, "b": x, "c": -x})
    assert cm.get("a", "b") == pytest.approx(1.0)
    assert cm.get("a", "c") == pytest.approx(-1.0)
    assert np.allclose(np.diag(cm.rho), 1.0)
    assert np.allclose(cm.rho, cm.rho.T)


def test_spearman_against_oracle(rng):
    for _ in range(20):
        vecs = {k: rng.integers(0, 6, 15).astype(float) for k in "abcd"}
        cm = spearman_matrix(vecs)
        for a in "abcd":
            for b in "abcd":
                assert cm.get(a, b) == pytest.approx(spearman_oracle(vecs[a], vecs[b]), abs=1e-12)


def test_spearman_missing_entries():
    a = np.array([1.0, 2, 3, 4, np.nan, 6])
    b = np.array([2.0, 1, 4, 3, 5, np.nan])
    cm = spearman_matrix({"a": a, "b": b})
    ok = np.isfinite(a) & np.isfinite(b)
    assert cm.counts[0, 1] == 4
    assert cm.get("a", "b") == pytest.approx(spearman_oracle(a[ok], b[ok]), abs=1e-12)
    cm = spearman_matrix({"a": a, "b": np.full(6, np.nan)})
    assert np.isnan(cm.get("a", "b"))


@given(st.lists(st.integers(-100, 100), min_size=5, max_size=20, unique=True))
def test_spearman_monotone_invariance(xs):
    x = np.array(xs, dtype=float)
    y = np.random.default_rng(len(xs)).permutation(x)
    base = spearman_matrix({"x": x, "y": y}).get("x", "y")
    moved = spearman_matrix({"x": np.exp(x / 50), "y": y ** 3}).get("x", "y")
    assert base == pytest.approx(moved, abs=1e-12)
