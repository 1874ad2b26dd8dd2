"""Closing the kernel freedom ``W = W0 + Z gamma`` of the global work system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .element import ElementSpace
from .errors import IndefiniteNormMatrix, SingularReducedSystem
from .fem import FESolution
from .prolongation import ProlongationSystem

REG_EPS = 1e-12


@dataclass(frozen=True)
class FEWorks:
    W_H: np.ndarray  # (3 E_int, 2)
    theta: np.ndarray  # (E_int, 2) area weights of the (+, -) triangles


def fe_edge_works(system: ProlongationSystem, solution: FESolution) -> FEWorks:
    """Works of the area-weighted average FE traction on internal edges."""
    mesh = system.mesh
    ie = mesh.internal_edges
    tp, tm = mesh.edge_tris[ie, 0], mesh.edge_tris[ie, 1]
    Ap, Am = mesh.areas[tp], mesh.areas[tm]
    theta = np.column_stack([Ap, Am]) / (Ap + Am)[:, None]
    sig = theta[:, :1] * solution.sigma[tp] + theta[:, 1:] * solution.sigma[tm]
    n = mesh.edge_normals[ie]
    F = np.column_stack(
        [sig[:, 0] * n[:, 0] + sig[:, 2] * n[:, 1], sig[:, 2] * n[:, 0] + sig[:, 1] * n[:, 1]]
    )
    FL = F * mesh.edge_lengths[ie][:, None]
    g = system.geom
    W_H = np.vstack([FL, FL * g.xo[:, None], FL * g.yo[:, None]])
    return FEWorks(W_H, theta)


def eet_norm_matrix(system: ProlongationSystem) -> sp.csr_matrix:
    """Quadratic form summing, over interior vertices, the squared work gaps in the hat functions.

    For a work difference ``d = (d1, dx, dy)`` on an edge A -> B carried by a
    linear traction, the works against the endpoint hat functions are
    ``P - Q`` (at A) and ``P + Q`` (at B) with ``P = d1 / 2`` and
    ``Q = (a dy - b dx - (a yO - b xO) d1) / l^2``.  Each interior endpoint
    contributes the square of its linear form.
    """
    mesh = system.mesh
    ne = system.n_int_edges
    g = system.geom
    l2 = g.length**2
    P = np.column_stack([np.full(ne, 0.5), np.zeros(ne), np.zeros(ne)])
    Q = np.column_stack([-(g.a * g.yo - g.b * g.xo), -g.b, g.a]) / l2[:, None]
    ends = mesh.edges[mesh.internal_edges]
    interior = mesh.vertex_class == 0
    rows, cols, vals = [], [], []
    idx = np.arange(ne)[:, None] + ne * np.arange(3)[None, :]  # (ne, 3) block rows
    for k, sgn in ((0, -1.0), (1, 1.0)):
        mask = interior[ends[:, k]]
        ell = (P + sgn * Q)[mask]  # (m, 3)
        ii = idx[mask]
        rows.append(np.repeat(ii, 3, axis=1).ravel())
        cols.append(np.tile(ii, (1, 3)).ravel())
        vals.append(np.einsum("mi,mj->mij", ell, ell).ravel())
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(3 * ne, 3 * ne)
    )
    return M


@dataclass(frozen=True)
class OptimizationResult:
    gamma: np.ndarray
    W: np.ndarray
    regularized: bool = False


def _spd_factor(A: sp.spmatrix, what: str):
    """Sparse LU with diagonal pivoting; a positive pivot sequence certifies positive definiteness."""
    A = sp.csc_matrix(A)
    regularized = False
    for attempt in range(2):
        try:
            lu = splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError:
            lu = None
        if lu is not None:
            d = lu.U.diagonal()
            tol = REG_EPS * np.abs(d).max(initial=0.0)
            if np.all(d > tol):
                return lu, regularized
            if np.any(d < -tol):
                raise IndefiniteNormMatrix(f"{what} is indefinite")
        if attempt == 0:
            shift = REG_EPS * A.diagonal().sum() / max(A.shape[0], 1)
            A = (A + shift * sp.identity(A.shape[0], format="csc")).tocsc()
            regularized = True
    raise IndefiniteNormMatrix(f"{what} is singular")


def optimize_norm(W0: np.ndarray, Z: sp.spmatrix, W_H: np.ndarray, M: sp.spmatrix | None = None):
    """``gamma = -(Z^T M Z)^{-1} Z^T M (W0 - W_H)``, independently for each direction."""
    if Z.shape[1] == 0:
        return OptimizationResult(np.zeros((0, W0.shape[1])), W0.copy())
    if M is None:
        M = sp.identity(Z.shape[0], format="csr")
    MZ = M @ Z
    A = (Z.T @ MZ).tocsc()
    lu, reg = _spd_factor(A, "Z^T M Z")
    rhs = -(MZ.T @ (W0 - W_H))
    gamma = lu.solve(np.asarray(rhs))
    return OptimizationResult(gamma, W0 + Z @ gamma, reg)


# ---------------------------------------------------------------------------
# direct minimisation of the estimator
# ---------------------------------------------------------------------------


def scatter_works(system: ProlongationSystem, W: np.ndarray, bworks: np.ndarray) -> np.ndarray:
    """Works on all edges: ``bworks`` on the border, ``W`` on internal edges."""
    mesh = system.mesh
    out = bworks.reshape(3, mesh.n_edges, 2).copy()
    out[:, mesh.internal_edges] = W.reshape(3, system.n_int_edges, 2)
    return out.reshape(3 * mesh.n_edges, 2)


def _kernel_loads(system: ProlongationSystem, space: ElementSpace):
    """Per-element load columns of the kernel directions and their global indices.

    Returns ``BZ`` (nt, nb, 6) and ``cols`` (nt, 6) with ``-1`` for local
    vertices that carry no kernel direction (boundary vertices).
    """
    mesh = system.mesh
    nt = mesh.n_triangles
    nvi = len(system.kernel.interior_vertices)
    ivx = -np.ones(mesh.n_vertices, dtype=np.int64)
    ivx[system.kernel.interior_vertices] = np.arange(nvi)
    loc = system.frame.to_local(mesh.points)

    te = mesh.tri_edges
    internal = mesh.edge_class[te] == 0
    BZ = np.zeros((nt, space.nb, 3, 2))
    for m in range(3):
        v = mesh.triangles[:, m]
        vec = np.column_stack([np.ones(nt), loc[v, 0], loc[v, 1]])  # (nt, 3)
        for k in range(3):
            e = te[:, k]
            sgn = np.where(mesh.edges[e, 0] == v, 1.0, np.where(mesh.edges[e, 1] == v, -1.0, 0.0))
            sgn = sgn * internal[:, k]
            BZ[:, :, m, :] += np.einsum(
                "t,tidj,tj->tid", sgn, space.edge_map[:, : space.nb, k], vec
            )
    cols = np.where(ivx[mesh.triangles] >= 0, ivx[mesh.triangles], -1)  # (nt, 3)
    cols = np.stack([cols, np.where(cols >= 0, cols + nvi, -1)], axis=2)  # (nt, 3, 2)
    return BZ.reshape(nt, space.nb, 6), cols.reshape(nt, 6)


def erdc_optimize(
    system: ProlongationSystem,
    space: ElementSpace,
    W0: np.ndarray,
    bworks: np.ndarray,
    body: np.ndarray,
) -> OptimizationResult:
    """Kernel coefficients minimising the total complementary energy of the element solutions.

    With element loads ``c_T + B_T Z gamma`` the objective
    ``sum_T (c_T + B_T Z gamma)^T K_T^{-1} (c_T + B_T Z gamma) / 2`` is
    quadratic; ``gamma`` couples both directions (length ``2 |V_int|``).
    """
    nvi = len(system.kernel.interior_vertices)
    if nvi == 0:
        return OptimizationResult(np.zeros((0, 2)), W0.copy())
    c = space.loads(body, scatter_works(system, W0, bworks))[:, : space.nb]
    BZ, cols = _kernel_loads(system, space)
    KinvBZ = space.solve_many(BZ)  # (nt, nb, 6)
    Hloc = np.einsum("tia,tib->tab", BZ, KinvBZ)
    gloc = np.einsum("tia,ti->ta", KinvBZ, c)
    valid = cols >= 0
    n = 2 * nvi
    r = np.broadcast_to(cols[:, :, None], Hloc.shape)
    q = np.broadcast_to(cols[:, None, :], Hloc.shape)
    mask = valid[:, :, None] & valid[:, None, :]
    H = sp.csc_matrix((Hloc[mask], (r[mask], q[mask])), shape=(n, n))
    g = np.zeros(n)
    np.add.at(g, cols[valid], gloc[valid])
    try:
        lu, reg = _spd_factor(H, "reduced energy matrix")
    except IndefiniteNormMatrix as exc:
        raise SingularReducedSystem(str(exc)) from exc
    gamma = lu.solve(-g)
    G2 = gamma.reshape(2, nvi).T  # columns: e_x, e_y
    return OptimizationResult(G2, W0 + system.Z @ G2, reg)
