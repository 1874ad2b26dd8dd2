"""Global work system: residuals, boundary works, tree factorization and kernels.

Works are stored as ``(3 * n, 2)`` arrays: rows are the blocks of the scalar
test functions ``(1, x, y)`` (each block has one row per edge) and columns the
directions ``e_x, e_y``.  Coordinates ``x, y`` are taken in a :class:`Frame`
that centres and scales the domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AlphaNotPartition, InconsistentRHS, RankDeficiencyUnexpected
from .fem import BODY_QUAD_DEGREE, EDGE_QUAD_POINTS, FESolution
from .mesh import DIRICHLET, NEUMANN, KernelBasisN, Mesh, incidence_matrix, kernel_basis
from .quadrature import gauss_segment, gauss_triangle, map_triangle_points

RHS_TOL = 1e-10


@dataclass(frozen=True)
class Frame:
    """Affine map ``x -> (x - origin) / scale`` applied to the test functions."""

    origin: np.ndarray
    scale: float

    @classmethod
    def for_mesh(cls, mesh: Mesh) -> "Frame":
        origin = (mesh.areas[:, None] * mesh.centroids).sum(axis=0) / mesh.areas.sum()
        span = mesh.points.max(axis=0) - mesh.points.min(axis=0)
        return cls(origin, 0.5 * float(np.hypot(*span)))

    @classmethod
    def identity(cls) -> "Frame":
        return cls(np.zeros(2), 1.0)

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts) - self.origin) / self.scale


@dataclass(frozen=True)
class EdgeGeometry:
    """Line coefficients and midpoints of a set of edges in a given frame."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    xo: np.ndarray
    yo: np.ndarray
    length: np.ndarray  # length in the frame, sqrt(a**2 + b**2)

    @classmethod
    def of(cls, mesh: Mesh, frame: Frame, edges: np.ndarray | None = None) -> "EdgeGeometry":
        e = np.arange(mesh.n_edges) if edges is None else np.asarray(edges)
        p = frame.to_local(mesh.points)
        pa, pb = p[mesh.edges[e, 0]], p[mesh.edges[e, 1]]
        a = pb[:, 1] - pa[:, 1]
        b = pa[:, 0] - pb[:, 0]
        c = pb[:, 0] * pa[:, 1] - pb[:, 1] * pa[:, 0]
        mid = 0.5 * (pa + pb)
        return cls(a, b, c, mid[:, 0], mid[:, 1], np.hypot(a, b))


# ---------------------------------------------------------------------------
# residuals and boundary works
# ---------------------------------------------------------------------------


def internal_residuals(solution: FESolution, frame: Frame) -> np.ndarray:
    """Residuals ``int_T sigma_H : eps(v) - f . v`` for ``v in {1, x, y} e_d``.

    Returns a ``(3T, 2)`` array.
    """
    mesh = solution.mesh
    nt = mesh.n_triangles
    A = mesh.areas
    s = solution.sigma
    bary, w = gauss_triangle(BODY_QUAD_DEGREE)
    xq = map_triangle_points(mesh.points[mesh.triangles], bary)
    fq = solution.load.body_force(xq[..., 0], xq[..., 1])  # (nt, nq, 2)
    lq = frame.to_local(xq)
    f1 = np.einsum("q,tqd,t->td", w, fq, A)
    fx = np.einsum("q,tqd,tq,t->td", w, fq, lq[..., 0], A)
    fy = np.einsum("q,tqd,tq,t->td", w, fq, lq[..., 1], A)
    R = np.empty((3 * nt, 2))
    sx = A / frame.scale
    R[:nt] = -f1
    R[nt : 2 * nt, 0] = sx * s[:, 0] - fx[:, 0]
    R[nt : 2 * nt, 1] = sx * s[:, 2] - fx[:, 1]
    R[2 * nt :, 0] = sx * s[:, 2] - fy[:, 0]
    R[2 * nt :, 1] = sx * s[:, 1] - fy[:, 1]
    return R


def reaction_partition(mesh: Mesh, kind: str = "half") -> np.ndarray:
    """Per-edge ``(ne, 2)`` weights splitting each Dirichlet vertex reaction.

    ``half`` shares a vertex reaction equally between its Dirichlet edges
    (1/2 inside a Dirichlet segment, 1 at its ends); ``length`` weights by edge
    length.  Rows of non-Dirichlet edges are zero.
    """
    alpha = np.zeros((mesh.n_edges, 2))
    de = np.flatnonzero(mesh.edge_class == DIRICHLET)
    ends = mesh.edges[de]
    if kind == "half":
        weight = np.ones(len(de))
    elif kind == "length":
        weight = mesh.edge_lengths[de]
    else:
        raise ValueError(f"unknown alpha partition {kind!r}")
    total = np.zeros(mesh.n_vertices)
    np.add.at(total, ends[:, 0], weight)
    np.add.at(total, ends[:, 1], weight)
    alpha[de, 0] = weight / total[ends[:, 0]]
    alpha[de, 1] = weight / total[ends[:, 1]]
    return alpha


def check_partition(mesh: Mesh, alpha: np.ndarray, tol: float = 1e-12) -> None:
    de = np.flatnonzero(mesh.edge_class == DIRICHLET)
    if np.any(alpha[de] < -tol):
        raise AlphaNotPartition("negative reaction weight")
    total = np.zeros(mesh.n_vertices)
    np.add.at(total, mesh.edges[de, 0], alpha[de, 0])
    np.add.at(total, mesh.edges[de, 1], alpha[de, 1])
    dv = np.unique(mesh.edges[de].ravel())
    bad = np.abs(total[dv] - 1.0) > tol
    if np.any(bad):
        raise AlphaNotPartition(f"weights at vertex {int(dv[bad][0])} sum to {total[dv[bad][0]]}")


def border_works(solution: FESolution, frame: Frame, alpha: np.ndarray) -> np.ndarray:
    """Known works on every edge (zero on internal edges), shape ``(3E, 2)``.

    Neumann edges: ``int g . v`` with a two-point rule.  Dirichlet edges: the
    share ``alpha`` of the endpoint reactions times ``v`` at the endpoint.
    """
    mesh = solution.mesh
    load = solution.load
    check_partition(mesh, alpha)
    ne = mesh.n_edges
    W = np.zeros((3, ne, 2))
    p = frame.to_local(mesh.points)

    nedges = np.flatnonzero(mesh.edge_class == NEUMANN)
    if len(nedges):
        s, w = gauss_segment(EDGE_QUAD_POINTS)
        lam = 0.5 + s
        pa = mesh.points[mesh.edges[nedges, 0]]
        pb = mesh.points[mesh.edges[nedges, 1]]
        xq = pa[:, None] * (1 - lam)[None, :, None] + pb[:, None] * lam[None, :, None]
        n = np.broadcast_to(mesh.edge_normals[nedges][:, None, :], xq.shape)
        g = load.traction(xq[..., 0], xq[..., 1], n)
        lq = frame.to_local(xq)
        L = mesh.edge_lengths[nedges]
        W[0, nedges] = np.einsum("q,eqd,e->ed", w, g, L)
        W[1, nedges] = np.einsum("q,eqd,eq,e->ed", w, g, lq[..., 0], L)
        W[2, nedges] = np.einsum("q,eqd,eq,e->ed", w, g, lq[..., 1], L)

    dedges = np.flatnonzero(mesh.edge_class == DIRICHLET)
    if len(dedges):
        lam_full = solution.reaction_full
        for k in range(2):
            v = mesh.edges[dedges, k]
            share = alpha[dedges, k][:, None] * lam_full[v]  # (nd, 2)
            W[0, dedges] += share
            W[1, dedges] += share * p[v, 0][:, None]
            W[2, dedges] += share * p[v, 1][:, None]
    return W.reshape(3 * ne, 2)


def boundary_correction(mesh: Mesh, residuals: np.ndarray, bworks: np.ndarray) -> np.ndarray:
    """Move the known border works to the right-hand side (border signs are +1)."""
    nt, ne = mesh.n_triangles, mesh.n_edges
    R = residuals.reshape(3, nt, 2).copy()
    bw = bworks.reshape(3, ne, 2)
    be = mesh.border_edges
    t = mesh.edge_tris[be, 0]
    for k in range(3):
        np.subtract.at(R[k], t, bw[k, be])
    return R.reshape(3 * nt, 2)


def corrected_residuals(solution: FESolution, frame: Frame, alpha: np.ndarray | str = "half"):
    """Return the corrected residuals ``R`` (3T, 2) and the border works (3E, 2)."""
    if isinstance(alpha, str):
        alpha = reaction_partition(solution.mesh, alpha)
    R0 = internal_residuals(solution, frame)
    bw = border_works(solution, frame, alpha)
    return boundary_correction(solution.mesh, R0, bw), bw


# ---------------------------------------------------------------------------
# exact factorization of the incidence matrix
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SmithFactors:
    """Spanning-tree factorization of the incidence matrix.

    ``U = [U_tilde; 1^T]`` and ``V = [V_tilde, N]`` are signed-boolean and give
    ``U @ delta @ V = [[I, 0], [0, 0]]``.  Row ``k`` of ``U_tilde`` is the signed
    indicator of the dual-tree subtree hanging below tree edge ``k`` and column
    ``k`` of ``V_tilde`` selects that edge, so ``V_tilde @ U_tilde @ r`` solves
    ``delta @ w = r`` for any ``r`` orthogonal to the all-ones vector.
    """

    order: np.ndarray  # BFS order of triangles (root first)
    parent: np.ndarray  # parent triangle, -1 for the root
    parent_edge: np.ndarray  # internal-edge column linking to the parent, -1 for the root
    sign: np.ndarray  # delta[t, parent_edge[t]]
    n_edges: int
    kernel: KernelBasisN

    @property
    def rank(self) -> int:
        return len(self.order) - 1

    @cached_property
    def tree_nodes(self) -> np.ndarray:
        return self.order[1:]

    def solve(self, r: np.ndarray) -> np.ndarray:
        """``V_tilde @ U_tilde @ r`` in O(T): signed subtree sums on tree edges."""
        r = np.asarray(r, dtype=float)
        acc = r.copy()
        for t in self.order[:0:-1]:  # leaves before parents, root excluded
            acc[self.parent[t]] += acc[t]
        out = np.zeros((self.n_edges,) + r.shape[1:])
        nodes = self.tree_nodes
        s = self.sign[nodes].reshape((-1,) + (1,) * (r.ndim - 1))
        out[self.parent_edge[nodes]] = s * acc[nodes]
        return out

    def U_tilde(self) -> sp.csr_matrix:
        nt = len(self.order)
        nodes = self.tree_nodes
        row_of = -np.ones(nt, dtype=np.int64)
        row_of[nodes] = np.arange(len(nodes))
        rows, cols, vals = [], [], []
        for t in nodes:
            # walk from t to the root; t belongs to every ancestor's subtree
            a = t
            while a != self.order[0]:
                rows.append(row_of[a])
                cols.append(t)
                vals.append(self.sign[a])
                a = self.parent[a]
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(nodes), nt), dtype=np.int64)

    def V_tilde(self) -> sp.csr_matrix:
        nodes = self.tree_nodes
        return sp.csr_matrix(
            (np.ones(len(nodes), dtype=np.int64), (self.parent_edge[nodes], np.arange(len(nodes)))),
            shape=(self.n_edges, len(nodes)),
        )

    def U(self) -> sp.csr_matrix:
        ones = sp.csr_matrix(np.ones((1, len(self.order)), dtype=np.int64))
        return sp.vstack([self.U_tilde(), ones], format="csr")

    def V(self) -> sp.csr_matrix:
        return sp.hstack([self.V_tilde(), self.kernel.N], format="csr").astype(np.int64)


def smith_factorize(mesh: Mesh, delta: sp.spmatrix | None = None, kernel: KernelBasisN | None = None):
    """Breadth-first dual spanning tree from triangle 0.

    Every column of the incidence matrix has exactly two nonzeros, so the pivot
    of each elimination step is known in advance and the whole factorization
    is a graph traversal.
    """
    if delta is None:
        delta = incidence_matrix(mesh)
    if kernel is None:
        kernel = kernel_basis(mesh, delta)
    nt = mesh.n_triangles
    ie = mesh.internal_edges
    tp, tm = mesh.edge_tris[ie, 0], mesh.edge_tris[ie, 1]
    # adjacency: for each triangle the (neighbour, column) pairs
    nbr = sp.csr_matrix(
        (np.concatenate([np.arange(len(ie)), np.arange(len(ie))]) + 1,
         (np.concatenate([tp, tm]), np.concatenate([tm, tp]))),
        shape=(nt, nt),
    )
    parent = -np.ones(nt, dtype=np.int64)
    parent_edge = -np.ones(nt, dtype=np.int64)
    seen = np.zeros(nt, dtype=bool)
    order = [0]
    seen[0] = True
    head = 0
    indptr, indices, data = nbr.indptr, nbr.indices, nbr.data
    while head < len(order):
        t = order[head]
        head += 1
        for k in range(indptr[t], indptr[t + 1]):
            u = indices[k]
            if not seen[u]:
                seen[u] = True
                parent[u] = t
                parent_edge[u] = data[k] - 1
                order.append(u)
    if len(order) != nt:
        raise RankDeficiencyUnexpected(f"rank {len(order) - 1} != |T| - 1 = {nt - 1}")
    order = np.array(order, dtype=np.int64)
    sign = np.zeros(nt, dtype=np.int64)
    nodes = order[1:]
    # +1 when the node is the '+' triangle of its parent edge
    sign[nodes] = np.where(tp[parent_edge[nodes]] == nodes, 1, -1)
    return SmithFactors(order, parent, parent_edge, sign, len(ie), kernel)


# ---------------------------------------------------------------------------
# the global system
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ProlongationSystem:
    mesh: Mesh
    frame: Frame
    delta: sp.csc_matrix
    kernel: KernelBasisN
    smith: SmithFactors
    geom: EdgeGeometry  # internal edges, in the frame

    @property
    def n_int_edges(self) -> int:
        return self.delta.shape[1]

    @cached_property
    def G(self) -> sp.csr_matrix:
        """(3T + E_int) x 3E_int operator acting on each direction column."""
        D = self.delta
        g = self.geom
        geo = sp.hstack([sp.diags(g.c), sp.diags(g.a), sp.diags(g.b)])
        return sp.vstack([sp.block_diag([D, D, D]), geo], format="csr")

    @cached_property
    def Z(self) -> sp.csc_matrix:
        return kernel_Z(self.kernel, self.frame.to_local(self.mesh.points))

    def rhs(self, R: np.ndarray) -> np.ndarray:
        return np.vstack([R, np.zeros((self.n_int_edges, R.shape[1]))])

    def particular_solution(self, R: np.ndarray) -> np.ndarray:
        return particular_solution(self, R)

    def verify(self, W: np.ndarray, R: np.ndarray) -> "ProlongationReport":
        return verify_prolongation(self, W, R)


def build_system(mesh: Mesh, frame: Frame | None = None) -> ProlongationSystem:
    frame = frame or Frame.for_mesh(mesh)
    delta = incidence_matrix(mesh)
    kernel = kernel_basis(mesh, delta)
    smith = smith_factorize(mesh, delta, kernel)
    geom = EdgeGeometry.of(mesh, frame, mesh.internal_edges)
    return ProlongationSystem(mesh, frame, delta, kernel, smith, geom)


def kernel_Z(kernel: KernelBasisN, local_points: np.ndarray) -> sp.csc_matrix:
    """Kernel of G generated by the interior vertices: ``(N_V; N_V x_V; N_V y_V)``."""
    NV = kernel.N_V.astype(float)
    iv = kernel.interior_vertices
    X = sp.diags(local_points[iv, 0])
    Y = sp.diags(local_points[iv, 1])
    return sp.vstack([NV, NV @ X, NV @ Y], format="csc")


def _beta_matrix(system: ProlongationSystem) -> sp.csc_matrix:
    g = system.geom
    N = system.kernel.N.astype(float)
    Nh = system.kernel.N_h.astype(float)
    scale = sp.diags(1.0 / g.length)
    blocks = [sp.diags(g.c) @ Nh, sp.diags(g.a) @ N, sp.diags(g.b) @ N]
    return (scale @ sp.hstack(blocks)).tocsc()


def particular_solution(system: ProlongationSystem, R: np.ndarray) -> np.ndarray:
    """One solution of ``G W = (R; 0)`` for each direction column of ``R``.

    The three Delta-blocks are solved through the tree factorization, then the
    hole and kernel coefficients ``beta`` are chosen so that the geometric
    consistency rows hold.  ``beta`` comes from the (consistent) overdetermined
    system ``[c N_h, a N, b N] beta = -(c S0 + a S1 + b S2)``, solved as a
    sparse augmented least-squares system.
    """
    nt = system.mesh.n_triangles
    ne = system.n_int_edges
    R = np.asarray(R, dtype=float)
    ncol = R.shape[1]
    S = [system.smith.solve(R[k * nt : (k + 1) * nt]) for k in range(3)]
    g = system.geom
    rhs = -(g.c[:, None] * S[0] + g.a[:, None] * S[1] + g.b[:, None] * S[2]) / g.length[:, None]

    A = _beta_matrix(system)
    nh = system.kernel.N_h.shape[1]
    nN = system.kernel.ncols
    beta = np.zeros((A.shape[1], ncol))
    if A.shape[1] and np.any(rhs):
        beta = _augmented_lstsq(A, rhs)
    N = system.kernel.N.astype(float)
    Nh = system.kernel.N_h.astype(float)
    W = np.vstack(
        [
            S[0] + Nh @ beta[:nh],
            S[1] + N @ beta[nh : nh + nN],
            S[2] + N @ beta[nh + nN :],
        ]
    )
    rep = verify_prolongation(system, W, R)
    if rep.delta_residual > RHS_TOL or rep.consistency_residual > RHS_TOL:
        raise InconsistentRHS(
            f"particular solution residuals: delta {rep.delta_residual:.3e}, "
            f"consistency {rep.consistency_residual:.3e}"
        )
    assert W.shape == (3 * ne, ncol)
    return W


def _augmented_lstsq(A: sp.csc_matrix, b: np.ndarray, refine: int = 3) -> np.ndarray:
    """Least squares via the sparse augmented system ``[[I, A], [A^T, 0]]``."""
    m, n = A.shape
    K = sp.bmat([[sp.identity(m), A], [A.T, None]], format="csc")
    lu = splu(K)
    rhs = np.vstack([b, np.zeros((n, b.shape[1]))])
    sol = lu.solve(rhs)
    for _ in range(refine):
        sol += lu.solve(rhs - K @ sol)
    return sol[m:]


@dataclass(frozen=True)
class ProlongationReport:
    delta_residual: float  # ||Delta W - R|| / ||R||
    consistency_residual: float  # ||c W1 + a Wx + b Wy|| / sum of term norms

    @property
    def ok(self) -> bool:
        return max(self.delta_residual, self.consistency_residual) <= RHS_TOL


def verify_prolongation(system: ProlongationSystem, W: np.ndarray, R: np.ndarray):
    nt = system.mesh.n_triangles
    ne = system.n_int_edges
    D = system.delta
    res = np.vstack([D @ W[k * ne : (k + 1) * ne] for k in range(3)]) - R
    rn = np.linalg.norm(R)
    delta_res = np.linalg.norm(res) / rn if rn > 0 else np.linalg.norm(res)
    g = system.geom
    terms = [g.c[:, None] * W[:ne], g.a[:, None] * W[ne : 2 * ne], g.b[:, None] * W[2 * ne :]]
    scale = sum(np.linalg.norm(t) for t in terms)
    cons = np.linalg.norm(sum(terms))
    cons_res = cons / scale if scale > 0 else cons
    assert res.shape[0] == 3 * nt
    return ProlongationReport(float(delta_res), float(cons_res))


def hat_left_kernel(system: ProlongationSystem, vertex: int) -> np.ndarray:
    """Left-kernel vector of ``G`` built from the hat function of ``vertex``.

    On each triangle the hat function reads ``p0 + p1 x + p2 y``; the first
    three blocks hold these coefficients and the last block the jump of the
    affine pieces across internal edges, ``-(a D^T p1 + b D^T p2) / l^2``.
    """
    mesh = system.mesh
    P = system.frame.to_local(mesh.points)[mesh.triangles]  # (nt, 3, 2)
    loc = mesh.triangles == vertex
    coef = np.zeros((mesh.n_triangles, 3))
    M = np.concatenate([np.ones((mesh.n_triangles, 3, 1)), P], axis=2)  # rows (1, x, y)
    rows = np.flatnonzero(loc.any(axis=1))
    for t in rows:
        e = loc[t].astype(float)
        coef[t] = np.linalg.solve(M[t], e)
    g = system.geom
    Dt = system.delta.T
    mu = -(g.a * (Dt @ coef[:, 1]) + g.b * (Dt @ coef[:, 2])) / g.length**2
    return np.concatenate([coef[:, 0], coef[:, 1], coef[:, 2], mu])
