import io
import math

import numpy as np
import pytest
from hypothesis import given

from hirenet.errors import LoadError, UndefinedStatisticError
from hirenet.netcore import (NodeRecord, WeightedDigraph, assortativity, density, describe,
                             load_graph, lorenz_gini, reciprocity, save_graph, self_edge_stats,
                             top_share, write_edges, write_nodes)

from conftest import matrix_and_perm, matrices


def graph_from_csv(nodes, edges):
    return load_graph(io.StringIO(nodes), io.StringIO(edges))


# --- loading ---------------------------------------------------------------

def test_duplicate_edges_are_summed():
    g = graph_from_csv("id,name\n0,a\n1,b\n", "src,dst,count\n0,1,2\n0,1,3\n")
    assert g.Y[0, 1] == 5


def test_self_loop_retained():
    g = graph_from_csv("id,name\n0,a\n", "src,dst,count\n0,0,4\n")
    assert g.Y[0, 0] == 4


def test_unknown_node_error():
    with pytest.raises(LoadError, match="unknown node 7"):
        graph_from_csv("id,name\n0,a\n1,b\n", "src,dst,count\n0,7,1\n")


def test_negative_count_error():
    with pytest.raises(LoadError, match="negative count"):
        graph_from_csv("id,name\n0,a\n1,b\n", "src,dst,count\n0,1,-1\n")


def test_bad_headers():
    with pytest.raises(LoadError):
        graph_from_csv("name,id\na,0\n", "src,dst,count\n")
    with pytest.raises(LoadError):
        graph_from_csv("id,name\n0,a\n", "from,to,n\n")


def test_rank_and_group_columns():
    g = graph_from_csv("id,name,usnews,region,group\n0,a,2,east,1\n1,b,,west,2\n2,c,1,east,1\n",
                       "src,dst,count\n0,1,1\n")
    assert g.extern_rank_columns() == ["usnews"]
    assert np.isnan(g.extern_rank_vector("usnews")[1])
    assert g.nodes[0].attrs["region"] == "east"
    assert [nd.group for nd in g.nodes] == [1, 2, 1]


def test_roundtrip(tmp_path):
    nodes = tuple(NodeRecord(i, f"n{i}", {"r": i + 1}, {"x": "y"}, i % 2 + 1) for i in range(4))
    g = WeightedDigraph(np.array([[1, 2, 0, 0], [0, 0, 3, 0], [0, 0, 0, 1], [5, 0, 0, 2]]), nodes)
    save_graph(g, tmp_path / "n.csv", tmp_path / "e.csv")
    h = load_graph(tmp_path / "n.csv", tmp_path / "e.csv")
    assert np.array_equal(g.Y, h.Y)
    assert h.nodes == g.nodes


@given(matrices(min_n=1, max_n=6))
def test_roundtrip_property(Y):
    g = WeightedDigraph(Y)
    nfh, efh = io.StringIO(), io.StringIO()
    write_nodes(g, nfh)
    write_edges(g, efh)
    h = load_graph(io.StringIO(nfh.getvalue()), io.StringIO(efh.getvalue()))
    assert np.array_equal(h.Y, g.Y)


def test_adjacency_validation():
    with pytest.raises(ValueError):
        WeightedDigraph(np.array([[0, -1], [0, 0]]))
    with pytest.raises(ValueError):
        WeightedDigraph(np.zeros((2, 3)))


# --- statistics ----------------------------------------------------------

def test_density_examples():
    assert density(WeightedDigraph(np.array([[0, 5], [0, 0]]))) == 0.5
    assert density(WeightedDigraph(np.ones((4, 4), int))) == 1.0


def test_reciprocity_examples():
    assert reciprocity(WeightedDigraph(np.array([[0, 1], [1, 0]]))) == 1.0
    assert reciprocity(WeightedDigraph(np.array([[0, 1], [0, 0]]))) == 0.0
    with pytest.raises(UndefinedStatisticError):
        reciprocity(WeightedDigraph(np.eye(3, dtype=int)))


def test_self_edges():
    frac, count, per = self_edge_stats(WeightedDigraph(np.diag([1, 2, 3])))
    assert frac == 1.0 and count == 3
    assert np.allclose(per, 1.0)
    frac, count, _ = self_edge_stats(WeightedDigraph(np.array([[0, 1], [2, 0]])))
    assert frac == 0.0 and count == 0


def test_assortativity_perfect():
    Y = np.zeros((4, 4), int)
    Y[0, 1] = Y[1, 0] = Y[2, 3] = Y[3, 2] = 1
    assert assortativity(WeightedDigraph(Y), [1, 1, 9, 9]) == pytest.approx(1.0)


def _pearson_oracle(Y, x):
    src, dst = [], []
    n = len(x)
    for i in range(n):
        for j in range(n):
            if i != j:
                src += [x[i]] * Y[i, j]
                dst += [x[j]] * Y[i, j]
    return np.corrcoef(src, dst)[0, 1]


def test_assortativity_star_against_oracle():
    n = 6
    Y = np.zeros((n, n), int)
    Y[0, 1:] = [1, 2, 1, 3, 1]
    Y[1:, 0] = [2, 1, 1, 1, 1]
    Y[1, 2] = 1
    x = np.array([10.0, 1, 1, 1, 1, 1])
    val = assortativity(WeightedDigraph(Y), x)
    assert val < 0
    assert val == pytest.approx(_pearson_oracle(Y, x), abs=1e-12)


def test_assortativity_random_against_oracle(rng):
    for _ in range(20):
        Y = rng.poisson(1.0, (7, 7))
        x = rng.random(7)
        assert assortativity(WeightedDigraph(Y), x) == pytest.approx(_pearson_oracle(Y, x), abs=1e-10)


def test_degree_assortativity_uses_total_strength(rng):
    Y = rng.poisson(1.0, (6, 6))
    g = WeightedDigraph(Y)
    deg = Y.sum(axis=0) + Y.sum(axis=1)
    assert assortativity(g, mode="total-degree") == pytest.approx(_pearson_oracle(Y, deg), abs=1e-10)


def test_lorenz_equal_production():
    curve, gini = lorenz_gini(WeightedDigraph(np.ones((5, 5), int)))
    assert gini == pytest.approx(0.0, abs=1e-12)
    for x, y in curve:
        assert y == pytest.approx(x)


def test_lorenz_single_producer():
    n = 6
    Y = np.zeros((n, n), int)
    Y[0, 1:] = 3
    curve, gini = lorenz_gini(WeightedDigraph(Y))
    assert gini == pytest.approx((n - 1) / n)
    assert top_share(curve, 1 / n) == pytest.approx(1.0)


@given(matrices(min_n=2, max_n=8))
def test_lorenz_shape(Y):
    if Y.sum() == 0:
        return
    curve, gini = lorenz_gini(WeightedDigraph(Y))
    ys = np.array([y for _, y in curve])
    inc = np.diff(ys)
    assert np.all(inc >= -1e-12)
    assert np.all(np.diff(inc) <= 1e-12)  # concave from the top producer
    assert 0.0 <= gini < 1.0


@given(matrix_and_perm(min_n=3, max_n=7))
def test_describe_label_invariance(args):
    Y, perm = args
    g = WeightedDigraph(Y)
    a, b = describe(g), describe(g.permuted(perm))
    for field in ("n", "total_weight", "density", "self_edge_fraction", "self_hiring_node_count",
                  "reciprocity", "degree_assortativity", "gini"):
        x, y = getattr(a, field), getattr(b, field)
        if isinstance(x, float) and math.isnan(x):
            assert math.isnan(y)
        else:
            assert x == pytest.approx(y, abs=1e-12)


@given(matrices(min_n=2, max_n=8))
def test_describe_ranges(Y):
    st = describe(WeightedDigraph(Y))
    for v in (st.density, st.reciprocity, st.self_edge_fraction):
        assert math.isnan(v) or 0.0 <= v <= 1.0
    assert math.isnan(st.degree_assortativity) or -1.0 <= st.degree_assortativity <= 1.0
