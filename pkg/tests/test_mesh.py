import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from crebound import meshgen
from crebound.errors import (
    DegenerateTriangle,
    DisconnectedMesh,
    ElementWithTwoBorderEdges,
    NonManifoldEdge,
    UntaggedBorderEdge,
)
from crebound.mesh import (
    DIRICHLET,
    INTERNAL,
    NEUMANN,
    boundary,
    build_mesh,
    co_boundary,
    incidence_matrix,
    kernel_basis,
    line_coefficients,
    read_mesh,
    star_patch,
    write_mesh,
)

SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]
CENTRE = SQUARE + [(0.5, 0.5)]
FAN = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]


def all_d(a, b):
    return "D"


@pytest.fixture
def two():
    # 1-based (1,2,3),(1,3,4) in the text format
    return build_mesh(SQUARE, [(0, 1, 2), (0, 2, 3)], all_d, allow_corner_elements=True)


@pytest.fixture
def four():
    return build_mesh(CENTRE, FAN, all_d)


def annulus(h=1 / 3):
    return meshgen.square_with_hole(h, all_d, (1 / 3, 2 / 3))


def test_two_triangle_counts(two):
    c = two.counts()
    assert (c["T"], c["E"], c["E_int"], c["V_int"], c["holes"]) == (2, 5, 1, 0, 0)


def test_four_triangle_counts(four):
    c = four.counts()
    assert (c["T"], c["E_int"], c["V_int"]) == (4, 4, 1)
    assert c["E_int"] - np.linalg.matrix_rank(incidence_matrix(four).toarray()) == 1


@pytest.mark.parametrize("h", [1 / 3, 1 / 9])
def test_annulus_topology(h):
    m = annulus(h)
    c = m.counts()
    assert c["holes"] == 1
    assert c["T"] - c["E"] + c["V"] == 0


def test_clockwise_input_is_reoriented():
    m = build_mesh(SQUARE, [(0, 2, 1), (0, 3, 2)], all_d, allow_corner_elements=True)
    assert np.all(m.areas > 0)
    p = m.points[m.triangles]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (
        p[:, 2, 0] - p[:, 0, 0]
    )
    assert np.all(cross > 0)


def test_edge_classification_from_tags():
    tags = {(0, 1): "D", (1, 2): "N", (2, 3): "N", (3, 0): "N"}
    m = build_mesh(SQUARE, [(0, 1, 2), (0, 2, 3)], tags, allow_corner_elements=True)
    assert sorted(m.edge_class.tolist()) == [INTERNAL, NEUMANN, NEUMANN, NEUMANN, DIRICHLET]


def test_errors():
    with pytest.raises(UntaggedBorderEdge):
        build_mesh(CENTRE, FAN, {(0, 1): "D"})
    with pytest.raises(NonManifoldEdge):
        build_mesh(CENTRE + [(0.5, -1)], FAN + [(0, 5, 1)] + [(1, 0, 5)], all_d)
    pts = CENTRE + [(p[0] + 3, p[1]) for p in CENTRE]
    with pytest.raises(DisconnectedMesh):
        build_mesh(pts, FAN + [tuple(v + 5 for v in t) for t in FAN], all_d)
    with pytest.raises(ElementWithTwoBorderEdges):
        build_mesh(SQUARE, [(0, 1, 2), (0, 2, 3)], all_d)
    with pytest.raises(DegenerateTriangle):
        build_mesh([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)], all_d)


def test_boundary_operator(four):
    for t in range(4):
        assert boundary(four, [t]) == set(four.tri_edges[t].tolist())
    outer = set(four.border_edges.tolist())
    centre = 4
    assert boundary(four, star_patch(four, centre)) == outer
    assert boundary(four, boundary(four, star_patch(four, centre)), "edges") == set()


def test_co_boundary(two, four):
    assert len(co_boundary(four, 4)) == 4
    assert star_patch(four, 4) == {0, 1, 2, 3}
    # border vertices of the 2-triangle square: 3 edges at diagonal ends, 2 elsewhere
    assert sorted(len(co_boundary(two, v)) for v in range(4)) == [2, 2, 3, 3]
    for e in two.internal_edges:
        assert len(co_boundary(two, int(e), "edge")) == 2


def test_incidence_two_triangles(two):
    D = incidence_matrix(two).toarray()
    assert D.shape == (2, 1)
    assert sorted(D[:, 0].tolist()) == [-1, 1]


def test_incidence_four_triangles(four):
    D = incidence_matrix(four).toarray()
    assert D.shape == (4, 4)
    assert np.linalg.matrix_rank(D) == 3
    assert not np.any(np.ones(4, dtype=np.int64) @ D)


def test_kernel_basis_examples(two, four):
    assert kernel_basis(two).ncols == 0
    kb = kernel_basis(four)
    assert kb.ncols == 1
    col = kb.N.toarray()[:, 0]
    assert np.count_nonzero(col) == 4
    assert (incidence_matrix(four) @ kb.N).count_nonzero() == 0


def test_kernel_basis_annulus():
    m = annulus(1 / 9)
    kb = kernel_basis(m)
    assert kb.N_V.shape[1] == m.counts()["V_int"]
    assert kb.N_h.shape[1] == 1
    assert (incidence_matrix(m) @ kb.N_h).count_nonzero() == 0
    # the hole column is not a combination of star columns
    N = kb.N.toarray().astype(float)
    assert np.linalg.matrix_rank(N) == kb.ncols


def test_line_coefficients_examples():
    pts = np.array([(0, 0), (1, 0), (0, 2), (1, 0), (0, 1)], dtype=float)
    edges = np.array([[0, 1], [0, 2], [3, 4]])
    a, b, c = line_coefficients(pts, edges)
    mid = 0.5 * (pts[edges[:, 0]] + pts[edges[:, 1]])
    assert np.allclose([a[0], b[0], c[0]], [0, -1, 0]) and np.allclose(mid[0], [0.5, 0])
    assert np.allclose([a[1], b[1], c[1]], [2, 0, 0]) and np.allclose(mid[1], [0, 1])
    assert np.allclose([a[2], b[2], c[2]], [1, 1, -1])
    for p in ((1, 0), (0, 1)):
        assert abs(a[2] * p[0] + b[2] * p[1] + c[2]) < 1e-15


def test_border_normals_point_outwards():
    m = meshgen.rectangle(2.0, 1.0, 0.25, all_d)
    be = m.border_edges
    out = m.edge_midpoints[be] - m.centroids[m.edge_tris[be, 0]]
    assert np.all(np.sum(out * m.edge_normals[be], axis=1) > 0)
    assert np.all(m.edge_tris[be, 1] == -1)


def test_mesh_file_round_trip(tmp_path):
    m = meshgen.square_with_hole(1 / 9, lambda a, b: "D" if a[1] < 1e-9 and b[1] < 1e-9 else "N", (1 / 3, 2 / 3))
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.points, m2.points)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(m.edges, m2.edges)
    assert np.array_equal(m.edge_class, m2.edge_class)
    assert m2.counts() == m.counts()


def test_structured_mesh_sizes():
    m = meshgen.rectangle(8.0, 1.0, 0.25, all_d)
    assert m.n_triangles == 256
    assert 2 * m.n_vertices == 330


@given(st.integers(min_value=10, max_value=300), st.integers(min_value=0, max_value=2**31))
def test_random_mesh_invariants(n, seed):
    m = meshgen.random_disc_mesh(n, np.random.default_rng(seed))
    c = m.counts()
    assert c["T"] - c["E"] + c["V"] == 1
    D = incidence_matrix(m)
    # every internal edge column has one +1 and one -1
    assert np.all(np.asarray(D.sum(axis=0)).ravel() == 0)
    assert np.all(np.asarray(abs(D).sum(axis=0)).ravel() == 2)
    # the signs agree with the stored per-triangle orientation coefficients
    ie = m.edge_to_internal
    rows, cols = np.nonzero(ie[m.tri_edges] >= 0)
    assert np.all(D[rows, ie[m.tri_edges[rows, cols]]].A1 == m.tri_signs[rows, cols])
    # d o d = 0 on arbitrary triangle sets
    rng = np.random.default_rng(seed)
    subset = np.flatnonzero(rng.random(m.n_triangles) < 0.5)
    assert boundary(m, boundary(m, subset), "edges") == set()
    assert sp.linalg.norm(D @ kernel_basis(m, D).N.astype(float)) == 0
