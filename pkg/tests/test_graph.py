import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphfuse.errors import DegenerateLayoutError, StructuralError, UnsupportedStructureError
from graphfuse.graph import (FIRST_DIFFERENCE, LAPLACIAN, TREND, DifferenceOperator, ProximityGraph,
                             build_knn_graph, build_lattice_graph, build_operator, build_path_graph,
                             whiten_locations)


def edge_set(g):
    return {tuple(e) for e in g.edges.tolist()}


def test_lattice_single_node():
    g = build_lattice_graph(1, 1)
    assert (g.n, g.p) == (1, 0)


def test_lattice_2x2_edges_in_order():
    g = build_lattice_graph(2, 2)
    assert g.edges.tolist() == [[0, 1], [2, 3], [0, 2], [1, 3]]


def test_lattice_710_edge_count(oracles):
    g = build_lattice_graph(710, 710)
    assert g.p == oracles["lattice_710_edges"] == 1_006_780


@given(st.integers(1, 12), st.integers(1, 12))
def test_lattice_edge_count_formula(h, w):
    g = build_lattice_graph(h, w)
    assert g.n == h * w
    assert g.p == h * (w - 1) + w * (h - 1)
    assert np.all(g.edges[:, 0] < g.edges[:, 1])


def test_lattice_rejects_empty():
    with pytest.raises(StructuralError):
        build_lattice_graph(0, 3)


@pytest.mark.parametrize("edges", [[[1, 0]], [[0, 0]], [[0, 5]], [[0, 1], [0, 1]]])
def test_graph_validation(edges):
    with pytest.raises(StructuralError):
        ProximityGraph(3, edges)


def test_whiten_two_points_one_dimensional():
    w = whiten_locations(np.array([0.0, 2.0]))
    assert np.allclose(w.mean(axis=0), 0.0)
    assert np.allclose(w.var(axis=0, ddof=1), 1.0)


def test_whiten_two_points_in_plane_is_degenerate():
    # the y-coordinate never varies, so the plane layout has no spread along y
    with pytest.raises(DegenerateLayoutError) as exc:
        whiten_locations(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.allclose(np.abs(exc.value.direction), [0.0, 1.0])


def test_whiten_constant_coordinate_raises():
    loc = np.column_stack([np.arange(10.0), np.full(10, 3.0)])
    with pytest.raises(DegenerateLayoutError, match="direction"):
        whiten_locations(loc)


@given(st.integers(0, 2**31), st.sampled_from([2, 3]), st.integers(5, 60))
def test_whiten_gives_identity_covariance(seed, q, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(q, q)) + 2 * np.eye(q)
    loc = rng.normal(size=(n, q)) @ A.T + rng.normal(size=q) * 10
    w = whiten_locations(loc)
    assert np.allclose(w.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(np.cov(w, rowvar=False), np.eye(q), atol=1e-8)


def test_knn_three_collinear_points(oracles):
    case = oracles["knn_three_points"]
    g = build_knn_graph(np.array(case["points"]), k=1, r=np.inf)
    assert g.edges.tolist() == case["edges"]


def test_knn_zero_radius_gives_no_edges(rng):
    g = build_knn_graph(rng.normal(size=(20, 2)), k=1, r=0.0)
    assert g.p == 0


def test_knn_full_k_is_complete(rng, oracles):
    n = oracles["complete_graph_k"]["n"]
    g = build_knn_graph(rng.normal(size=(n, 3)), k=n - 1)
    assert g.edges.tolist() == oracles["complete_graph_k"]["edges"]
    assert g.p == n * (n - 1) // 2


def test_knn_symmetrized_by_union():
    # node 3 is far; its nearest neighbour is 2, but 2 prefers 1
    loc = np.array([0.0, 1.0, 1.8, 5.0])
    g = build_knn_graph(loc, k=1)
    assert edge_set(g) == {(0, 1), (1, 2), (2, 3)}


@given(st.integers(0, 2**31))
def test_knn_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    loc = rng.normal(size=(25, 2))
    A = rng.normal(size=(2, 2))
    if abs(np.linalg.det(A)) < 0.2:
        A += 2 * np.eye(2)
    moved = loc @ A.T + rng.normal(size=2) * 5
    g1 = build_knn_graph(loc, k=2)
    g2 = build_knn_graph(moved, k=2)
    assert edge_set(g1) == edge_set(g2)


def test_first_difference_path3():
    op = build_operator(build_path_graph(3), FIRST_DIFFERENCE)
    assert op.rows == [[(0, 1.0), (1, -1.0)], [(1, 1.0), (2, -1.0)]]


def test_trend_path4():
    op = build_operator(build_path_graph(4), TREND)
    assert op.p == 2
    assert op.rows[0] == [(0, -1.0), (1, 2.0), (2, -1.0)]
    assert np.allclose(np.asarray(op.matrix.sum(axis=1)).ravel(), 0.0)


def test_trend_needs_path():
    with pytest.raises(UnsupportedStructureError):
        build_operator(build_lattice_graph(2, 2), TREND)


def test_laplacian_2x2(oracles):
    op = build_operator(build_lattice_graph(2, 2), LAPLACIAN)
    L = op.matrix.toarray()
    assert np.diag(L).tolist() == oracles["lattice_2x2_laplacian_diag"] == [2, 2, 2, 2]
    assert np.allclose(L.sum(axis=1), 0.0)


def test_unknown_kind():
    with pytest.raises(UnsupportedStructureError):
        build_operator(build_path_graph(3), "wavelet")


random_graphs = st.integers(2, 30).flatmap(
    lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                                            .filter(lambda e: e[0] < e[1]), max_size=60)))


@given(random_graphs, st.integers(0, 2**31))
def test_first_difference_rows_and_energy(graph_spec, seed):
    n, edges = graph_spec
    g = ProximityGraph(n, sorted(edges) or np.empty((0, 2)))
    op = build_operator(g, FIRST_DIFFERENCE)
    M = op.matrix.toarray()
    if g.p:
        assert np.all((M == 1).sum(axis=1) == 1) and np.all((M == -1).sum(axis=1) == 1)
    beta = np.random.default_rng(seed).normal(size=(n, 3))
    diffs = np.array([beta[i] - beta[j] for i, j in g.edges]).reshape(-1, 3)
    assert np.allclose(op.apply(beta), diffs)
    assert np.isclose((op.row_norms(beta) ** 2).sum(), (diffs ** 2).sum())


@given(random_graphs)
def test_laplacian_equals_dtd(graph_spec):
    n, edges = graph_spec
    g = ProximityGraph(n, sorted(edges) or np.empty((0, 2)))
    D = build_operator(g, FIRST_DIFFERENCE).matrix.toarray()
    L = build_operator(g, LAPLACIAN).matrix.toarray()
    assert np.array_equal(L, D.T @ D)


def test_operator_from_matrix():
    op = DifferenceOperator.from_matrix(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0]]))
    assert (op.n, op.p, op.kind) == (3, 2, "custom")
