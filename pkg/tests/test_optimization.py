import numpy as np
import pytest
import scipy.sparse as sp

from crebound import meshgen
from crebound.element import ElementSpace, element_estimate, recover_linear_traction
from crebound.fem import LoadCase, Material, solve
from crebound.mesh import build_mesh
from crebound.optimization import (
    eet_norm_matrix,
    erdc_optimize,
    fe_edge_works,
    optimize_norm,
    scatter_works,
)
from crebound.problems import make_problem
from crebound.prolongation import build_system, corrected_residuals
from crebound.quadrature import gauss_segment


def setup(name, h=None):
    p = make_problem(name, h)
    sol = solve(p.mesh, p.material, p.load)
    system = build_system(p.mesh)
    R, bw = corrected_residuals(sol, system.frame)
    return p, sol, system, R, bw


def test_fe_works_constant_stress_vertical_edge():
    mesh = meshgen.rectangle(2.0, 2.0, 1.0, lambda a, b: "D")
    sol = solve(mesh, Material(1.0, 0.0), LoadCase(dirichlet=lambda x, y: np.stack([x, 0 * x], -1)))
    system = build_system(mesh)
    fw = fe_edge_works(system, sol)
    ie = mesh.internal_edges
    ne = len(ie)
    vertical = np.flatnonzero(np.abs(mesh.edge_normals[ie, 1]) < 1e-12)
    assert len(vertical) == 2
    for k in vertical:
        L = mesh.edge_lengths[ie[k]]
        assert fw.W_H[k, 0] == pytest.approx(L * mesh.edge_normals[ie[k], 0])  # +-L
        assert fw.W_H[k, 1] == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(fw.theta, 0.5)
    assert fw.W_H.shape == (3 * ne, 2)


def test_fe_works_consistency_random_mesh():
    rng = np.random.default_rng(4)
    mesh = meshgen.random_disc_mesh(300, rng)
    load = LoadCase(dirichlet=lambda x, y: np.stack([x * y, x - y * y], -1))
    sol = solve(mesh, Material(), load)
    system = build_system(mesh)
    W = fe_edge_works(system, sol).W_H
    g, ne = system.geom, system.n_int_edges
    terms = [g.c[:, None] * W[:ne], g.a[:, None] * W[ne : 2 * ne], g.b[:, None] * W[2 * ne :]]
    assert np.abs(sum(terms)).max() <= 1e-12 * max(np.abs(t).max() for t in terms)


def test_empty_kernel_returns_w0():
    W0 = np.arange(6.0).reshape(3, 2)
    res = optimize_norm(W0, sp.csc_matrix((3, 0)), np.zeros_like(W0))
    assert np.array_equal(res.W, W0) and res.gamma.shape == (0, 2)


def test_projection_property():
    p, sol, system, R, bw = setup("analytic_rectangle", 0.25)
    W0 = system.particular_solution(R)
    rng = np.random.default_rng(1)
    W_H = W0 + system.Z @ rng.normal(size=(system.Z.shape[1], 2))
    W_H += 1e-3 * rng.normal(size=W_H.shape)  # leave the affine space
    W = optimize_norm(W0, system.Z, W_H).W
    assert np.abs(system.Z.T @ (W - W_H)).max() <= 1e-10 * np.abs(W_H).max()
    assert system.verify(W, R).ok


def _hat_forms(system, e):
    """Works against the endpoint hats of the linear traction carried by unit works, by quadrature."""
    g = system.geom
    L = system.mesh.edge_lengths[system.mesh.internal_edges[e]]
    s, w = gauss_segment(3)
    out = np.zeros((2, 3))
    for j in range(3):
        d = np.zeros(3)
        d[j] = 1.0
        F0, F1 = recover_linear_traction(*d, g.a[e], g.b[e], g.xo[e], g.yo[e], L, check=False)
        F = F0 + F1 * s
        out[0, j] = np.sum(w * F * (0.5 - s)) * L
        out[1, j] = np.sum(w * F * (0.5 + s)) * L
    return out


def test_eet_matrix_blocks_match_quadrature():
    p, sol, system, R, bw = setup("square_shear", 0.25)
    M = eet_norm_matrix(system).toarray()
    ne = system.n_int_edges
    ends = p.mesh.edges[p.mesh.internal_edges]
    interior = p.mesh.vertex_class == 0
    checked = {0: 0, 1: 0, 2: 0}
    for e in range(ne):
        forms = _hat_forms(system, e)
        want = sum(np.outer(forms[k], forms[k]) for k in range(2) if interior[ends[e, k]])
        if not np.ndim(want):
            want = np.zeros((3, 3))
        idx = e + ne * np.arange(3)
        assert np.allclose(M[np.ix_(idx, idx)], want, rtol=1e-10, atol=1e-14)
        checked[int(interior[ends[e]].sum())] += 1
    assert checked[1] and checked[2]
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > -1e-12


def test_eet_matrix_vacuous_without_interior_vertices():
    mesh = build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1, 2), (0, 2, 3)], lambda a, b: "D", allow_corner_elements=True)
    system = build_system(mesh)
    assert eet_norm_matrix(system).nnz == 0
    assert system.Z.shape[1] == 0


def _estimate(system, p, sol, W, bw):
    space = ElementSpace(p.mesh, system.frame, p.material, 3)
    return element_estimate(space, sol, scatter_works(system, W, bw)).global_estimate


def test_erdc_minimises_over_kernel():
    p, sol, system, R, bw = setup("square_with_hole", 1 / 9)
    W0 = system.particular_solution(R)
    space = ElementSpace(p.mesh, system.frame, p.material, 3)
    body = space.body_loads(p.load.body_force)
    opt = erdc_optimize(system, space, W0, bw, body)
    best = _estimate(system, p, sol, opt.W, bw)
    rng = np.random.default_rng(9)
    for scale in (1e-3, 1e-1):
        g = opt.gamma + scale * rng.normal(size=opt.gamma.shape)
        assert _estimate(system, p, sol, W0 + system.Z @ g, bw) >= best
    W_H = fe_edge_works(system, sol).W_H
    for M in (None, eet_norm_matrix(system)):
        assert best <= _estimate(system, p, sol, optimize_norm(W0, system.Z, W_H, M).W, bw) + 1e-8


def test_erdc_empty_kernel():
    mesh = build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1, 2), (0, 2, 3)], lambda a, b: "D", allow_corner_elements=True)
    system = build_system(mesh)
    assert system.Z.shape[1] == 0
    sol = solve(mesh, Material(), LoadCase(dirichlet=lambda x, y: np.stack([x * y, y], -1)))
    R, bw = corrected_residuals(sol, system.frame)
    W0 = system.particular_solution(R)
    space = ElementSpace(mesh, system.frame, Material(), 3)
    res = erdc_optimize(system, space, W0, bw, space.body_loads(sol.load.body_force))
    assert np.array_equal(res.W, W0)
