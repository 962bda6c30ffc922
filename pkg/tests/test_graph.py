import numpy as np
import pytest
import scipy.sparse.csgraph as csgraph
from hypothesis import given, strategies as st

from netfair.graph import (GraphError, build_graph, color_multiset, computation_tree, k_hop_neighborhood,
                           read_edge_list, wl_colors, write_edge_list)


@st.composite
def graphs(draw, max_n=20):
    n = draw(st.integers(1, max_n))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    return build_graph(n, [(i, j) for i, j in pairs if i != j], dedupe=True)


def test_build_graph_normalises_orientation():
    g = build_graph(4, [(2, 0), (1, 3)])
    assert g.edges == frozenset({(0, 2), (1, 3)})
    assert g.adjacency[0] == (2,) and g.adjacency[3] == (1,)
    assert list(g.degree()) == [1, 1, 1, 1]


@pytest.mark.parametrize("edges, msg", [
    ([(0, 5)], r"\(0, 5\) out of range"),
    ([(1, 1)], r"self-loop \(1, 1\)"),
    ([(0, 1), (1, 0)], r"duplicate edge \(1, 0\)"),
])
def test_build_graph_errors(edges, msg):
    with pytest.raises(GraphError, match=msg):
        build_graph(3, edges)


def test_dedupe_drops_reverse_duplicates():
    assert build_graph(3, [(0, 1), (1, 0), (0, 1)], dedupe=True).num_edges == 1


@given(graphs(), st.integers(0, 4), st.data())
def test_k_hop_matches_shortest_paths(g, k, data):
    i = data.draw(st.integers(0, g.n - 1))
    dist = csgraph.shortest_path(g.adjacency_matrix(), unweighted=True, indices=i)
    expected = tuple(int(j) for j in np.flatnonzero(dist <= k))
    assert k_hop_neighborhood(g, i, k).members == expected


def test_k_hop_errors():
    g = build_graph(3, [(0, 1)])
    with pytest.raises(GraphError):
        k_hop_neighborhood(g, 3, 1)
    with pytest.raises(GraphError):
        k_hop_neighborhood(g, 0, -1)


@given(graphs(), st.integers(1, 3), st.randoms(use_true_random=False))
def test_wl_respects_isomorphism(g, rounds, rnd):
    perm = list(range(g.n))
    rnd.shuffle(perm)
    h = g.permute(perm)
    a, b = wl_colors(g, rounds), wl_colors(h, rounds)
    # relabelled colour classes coincide as a partition of the nodes
    part_a = sorted(sorted(perm[i] for i in cls) for cls in a.classes().values())
    part_b = sorted(sorted(cls) for cls in b.classes().values())
    assert part_a == part_b


@given(graphs(max_n=12), st.integers(1, 3))
def test_equal_colors_iff_equal_computation_trees(g, rounds):
    colors = wl_colors(g, rounds).colors
    trees = [computation_tree(g, i, rounds) for i in range(g.n)]
    for i in range(g.n):
        for j in range(g.n):
            assert (colors[i] == colors[j]) == (trees[i] == trees[j])


def test_wl_separates_path_ends_from_middle():
    g = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    c = wl_colors(g, 2).colors
    assert c[0] == c[4] and c[1] == c[3]
    assert len({c[0], c[1], c[2]}) == 3
    assert color_multiset(wl_colors(g, 1), [0, 1, 4]) == {c[0]: 2, wl_colors(g, 1).colors[1]: 1}


def test_wl_cannot_split_regular_graphs():
    hexagon = build_graph(6, [(i, (i + 1) % 6) for i in range(6)])
    two_triangles = build_graph(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    assert wl_colors(hexagon, 3).num_colors == wl_colors(two_triangles, 3).num_colors == 1


def test_wl_rounds_validated():
    with pytest.raises(GraphError):
        wl_colors(build_graph(2, [(0, 1)]), 0)


def test_edge_list_round_trip(tmp_path):
    g = build_graph(4, [(0, 3), (2, 1)])
    path = tmp_path / "edges.csv"
    write_edge_list(path, g)
    pairs, n = read_edge_list(path, n=4)
    assert build_graph(n, pairs) == g


def test_edge_list_errors_name_line(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("src,dst\n0,1\n1,99\n")
    with pytest.raises(GraphError, match=r":3: edge \(1, 99\)"):
        read_edge_list(path, n=10)
    path.write_text("a,b\n0,1\n")
    with pytest.raises(GraphError, match="header"):
        read_edge_list(path)
    path.write_text("src,dst\n0,x\n")
    with pytest.raises(GraphError, match=":2: non-integer"):
        read_edge_list(path)
