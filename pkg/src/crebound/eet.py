"""Classical vertex-by-vertex equilibration, used as a reference for the global solver.

For each vertex ``N`` the unknowns are the works, against the hat function
``phi_N``, of the tractions on the internal edges radiating from ``N``.  Each
triangle of the star gives one balance equation.  Under-determined stars are
closed by the solution nearest to the works of the averaged FE traction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .element import ElementSpace, ErrorEstimate, element_estimate
from .errors import InconsistentPatch
from .fem import FESolution, body_force_loads, neumann_loads, p1_gradients
from .mesh import DIRICHLET
from .prolongation import Frame, border_works, reaction_partition

PATCH_TOL = 1e-9


def hat_residuals(solution: FESolution) -> np.ndarray:
    """(nt, 3, 2) residuals ``int_T sigma_H : eps(phi_m e_d) - f_d phi_m``."""
    mesh = solution.mesh
    g = p1_gradients(mesh)  # (nt, 3, 2)
    s = solution.sigma
    A = mesh.areas[:, None]
    stress = np.stack(
        [
            A * (s[:, None, 0] * g[..., 0] + s[:, None, 2] * g[..., 1]),
            A * (s[:, None, 2] * g[..., 0] + s[:, None, 1] * g[..., 1]),
        ],
        axis=-1,
    )
    return stress - body_force_loads(mesh, solution.load.body_force)


def border_vertex_works(solution: FESolution, alpha: np.ndarray) -> np.ndarray:
    """(ne, 2, 2) known works of border tractions against the endpoint hat functions."""
    mesh = solution.mesh
    out = np.zeros((mesh.n_edges, 2, 2))
    edges, loads = neumann_loads(mesh, solution.load.traction)
    out[edges] = loads
    de = np.flatnonzero(mesh.edge_class == DIRICHLET)
    lam = solution.reaction_full
    for k in range(2):
        out[de, k] = alpha[de, k][:, None] * lam[mesh.edges[de, k]]
    return out


def averaged_traction(solution: FESolution) -> np.ndarray:
    """(ne, 2) area-weighted FE traction on internal edges (zero on the border)."""
    mesh = solution.mesh
    F = np.zeros((mesh.n_edges, 2))
    ie = mesh.internal_edges
    tp, tm = mesh.edge_tris[ie, 0], mesh.edge_tris[ie, 1]
    Ap, Am = mesh.areas[tp], mesh.areas[tm]
    sig = (Ap[:, None] * solution.sigma[tp] + Am[:, None] * solution.sigma[tm]) / (Ap + Am)[:, None]
    n = mesh.edge_normals[ie]
    F[ie, 0] = sig[:, 0] * n[:, 0] + sig[:, 2] * n[:, 1]
    F[ie, 1] = sig[:, 2] * n[:, 0] + sig[:, 1] * n[:, 1]
    return F


@dataclass
class StarPatchSystem:
    vertex: int
    triangles: np.ndarray
    edges: np.ndarray  # internal edges radiating from the vertex (unknowns)
    matrix: np.ndarray  # (n_triangles, n_edges) signs
    rhs: np.ndarray  # (n_triangles, 2)
    rank: int = field(default=-1)


def star_patch_system(mesh, vertex, star, hat_res, bvw) -> StarPatchSystem:
    """Balance equations of the star of ``vertex`` (one row per triangle)."""
    tris = star
    loc = np.argmax(mesh.triangles[tris] == vertex, axis=1)
    cand = np.concatenate([mesh.tri_edges[tris, loc], mesh.tri_edges[tris, (loc + 2) % 3]])
    unknowns = np.unique(cand[mesh.edge_class[cand] == 0])
    col = {int(e): i for i, e in enumerate(unknowns)}
    A = np.zeros((len(tris), len(unknowns)))
    r = hat_res[tris, loc].copy()
    for i, t in enumerate(tris):
        for k in (loc[i], (loc[i] + 2) % 3):  # the two local edges through the vertex
            e = mesh.tri_edges[t, k]
            if mesh.edge_class[e] == 0:
                A[i, col[int(e)]] += mesh.tri_signs[t, k]
            else:
                end = 0 if mesh.edges[e, 0] == vertex else 1
                r[i] -= bvw[e, end]
    return StarPatchSystem(int(vertex), tris, unknowns, A, r)


def solve_star_patch(system: StarPatchSystem, w_H: np.ndarray) -> np.ndarray:
    """Works nearest to ``w_H`` among the solutions of the star balance equations."""
    A, r = system.matrix, system.rhs
    if A.shape[1] == 0:
        res = np.abs(r).max(initial=0.0)
        if res > PATCH_TOL * max(1.0, np.abs(system.rhs).max(initial=0.0)):
            raise InconsistentPatch(f"vertex {system.vertex}: unbalanced star ({res:.3e})")
        return np.zeros((0, 2))
    corr, _, rank, _ = np.linalg.lstsq(A, r - A @ w_H, rcond=None)
    system.rank = int(rank)
    w = w_H + corr
    res = np.abs(A @ w - r).max()
    scale = np.abs(r).max() + np.abs(w).max()
    if res > PATCH_TOL * max(scale, np.finfo(float).tiny):
        raise InconsistentPatch(f"vertex {system.vertex}: star residual {res:.3e}")
    return w


def tractions_from_vertex_works(length, W_A, W_B):
    """Nodal values of the linear traction whose works against the hat functions are given."""
    L = np.asarray(length, dtype=float)
    L = L.reshape(L.shape + (1,) * (np.ndim(W_A) - L.ndim))
    return (4 * W_A - 2 * W_B) / L, (4 * W_B - 2 * W_A) / L


def vertex_to_canonical(mesh, frame: Frame, vertex_works: np.ndarray) -> np.ndarray:
    """Canonical works (3 E_int, 2) from works against the endpoint hat functions."""
    ie = mesh.internal_edges
    loc = frame.to_local(mesh.points)
    WA, WB = vertex_works[ie, 0], vertex_works[ie, 1]
    A, B = mesh.edges[ie, 0], mesh.edges[ie, 1]
    return np.vstack(
        [
            WA + WB,
            WA * loc[A, 0][:, None] + WB * loc[B, 0][:, None],
            WA * loc[A, 1][:, None] + WB * loc[B, 1][:, None],
        ]
    )


@dataclass(frozen=True)
class ClassicResult:
    estimate: ErrorEstimate
    W: np.ndarray  # canonical works on internal edges (3 E_int, 2)
    vertex_works: np.ndarray  # (ne, 2, 2)
    timings: dict


def equilibrate(solution: FESolution, alpha: np.ndarray | str = "half") -> np.ndarray:
    """Vertex works (ne, 2 endpoints, 2 directions) on internal edges, patch by patch."""
    mesh = solution.mesh
    if isinstance(alpha, str):
        alpha = reaction_partition(mesh, alpha)
    hat_res = hat_residuals(solution)
    bvw = border_vertex_works(solution, alpha)
    F = averaged_traction(solution)
    wH = 0.5 * F * mesh.edge_lengths[:, None]
    nt = mesh.n_triangles
    v2t = sp.csr_matrix(
        (np.ones(3 * nt), (mesh.triangles.ravel(), np.repeat(np.arange(nt), 3))),
        shape=(mesh.n_vertices, nt),
    )
    out = np.zeros((mesh.n_edges, 2, 2))
    for v in range(mesh.n_vertices):  # ascending vertex id
        star = v2t.indices[v2t.indptr[v] : v2t.indptr[v + 1]]
        system = star_patch_system(mesh, v, star, hat_res, bvw)
        w = solve_star_patch(system, wH[system.edges])
        end = (mesh.edges[system.edges, 1] == v).astype(int)
        out[system.edges, end] = w
    return out


def estimate_classic(
    solution: FESolution,
    frame: Frame | None = None,
    alpha: np.ndarray | str = "half",
    order: int = 3,
    space: ElementSpace | None = None,
) -> ClassicResult:
    mesh = solution.mesh
    frame = frame or Frame.for_mesh(mesh)
    if isinstance(alpha, str):
        alpha = reaction_partition(mesh, alpha)
    t0 = time.perf_counter()
    vw = equilibrate(solution, alpha)
    W = vertex_to_canonical(mesh, frame, vw)
    t1 = time.perf_counter()
    if space is None:
        space = ElementSpace(mesh, frame, solution.material, order)
    bw = border_works(solution, frame, alpha)
    W_all = bw.reshape(3, mesh.n_edges, 2).copy()
    W_all[:, mesh.internal_edges] = W.reshape(3, -1, 2)
    est = element_estimate(space, solution, W_all.reshape(-1, 2))
    t2 = time.perf_counter()
    return ClassicResult(est, W, vw, {"works": t1 - t0, "elements": t2 - t1})
