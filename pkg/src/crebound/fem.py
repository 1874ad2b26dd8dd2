"""Plane-stress P1 displacement solver with Dirichlet reaction recovery."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NegativeRadicand, SingularSystem
from .mesh import DIRICHLET, NEUMANN, Mesh
from .quadrature import gauss_segment, gauss_triangle, map_triangle_points

# Degree of the triangle rule used for body-force integrals.  High enough to be
# exact for the quartic loads of the benchmark problems.
BODY_QUAD_DEGREE = 10
EDGE_QUAD_POINTS = 2
EXACT_QUAD_DEGREE = 10

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]
TractionField = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _zero_field(x, y):
    return np.zeros(np.shape(x) + (2,))


def _zero_traction(x, y, n):
    return np.zeros(np.shape(x) + (2,))


@dataclass(frozen=True)
class Material:
    young_modulus: float = 1.0
    poisson_ratio: float = 0.3

    def __post_init__(self):
        if self.young_modulus <= 0 or not (-1.0 < self.poisson_ratio < 0.5):
            raise ValueError(f"invalid material {self}")

    @cached_property
    def hooke(self) -> np.ndarray:
        E, nu = self.young_modulus, self.poisson_ratio
        return E / (1 - nu * nu) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])

    @cached_property
    def compliance(self) -> np.ndarray:
        return np.linalg.inv(self.hooke)


@dataclass(frozen=True)
class LoadCase:
    """Vectorised load data: every callable returns an array of shape ``x.shape + (2,)``.

    ``traction(x, y, n)`` receives the outward unit normal ``n`` of the edge.
    """

    body_force: Field = _zero_field
    traction: TractionField = _zero_traction
    dirichlet: Field = _zero_field


@dataclass(eq=False)
class FESolution:
    mesh: Mesh
    material: Material
    load: LoadCase
    u: np.ndarray  # (nv, 2)
    sigma: np.ndarray  # (nt, 3) Voigt (xx, yy, xy)
    strain: np.ndarray  # (nt, 3) (xx, yy, 2xy)
    dirichlet_vertices: np.ndarray
    reactions: np.ndarray  # (nd, 2)
    element_energy: np.ndarray  # (nt,) int eps:C:eps
    K: sp.csr_matrix = field(repr=False)
    f: np.ndarray = field(repr=False)

    @property
    def strain_energy(self) -> float:
        return float(self.element_energy.sum())

    @property
    def ndof(self) -> int:
        return 2 * self.mesh.n_vertices

    @cached_property
    def reaction_full(self) -> np.ndarray:
        """Reactions scattered on all vertices (zero away from the Dirichlet boundary)."""
        out = np.zeros((self.mesh.n_vertices, 2))
        out[self.dirichlet_vertices] = self.reactions
        return out


def p1_gradients(mesh: Mesh) -> np.ndarray:
    """(nt, 3, 2) constant gradients of the barycentric hat functions."""
    p = mesh.points[mesh.triangles]
    two_a = 2.0 * mesh.areas
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / two_a
        grads[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / two_a
    return grads


def strain_operator(mesh: Mesh) -> np.ndarray:
    """(nt, 3, 6) element B matrices; dof order (u0x, u0y, u1x, u1y, u2x, u2y)."""
    g = p1_gradients(mesh)
    B = np.zeros((mesh.n_triangles, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


def _element_dofs(mesh: Mesh) -> np.ndarray:
    t = mesh.triangles
    return np.stack([2 * t, 2 * t + 1], axis=-1).reshape(len(t), 6)


def body_force_loads(mesh: Mesh, body_force: Field, degree: int = BODY_QUAD_DEGREE) -> np.ndarray:
    """(nt, 3, 2) integrals of f * phi_i over each triangle."""
    bary, w = gauss_triangle(degree)
    xq = map_triangle_points(mesh.points[mesh.triangles], bary)
    fq = body_force(xq[..., 0], xq[..., 1])  # (nt, nq, 2)
    return np.einsum("q,qi,tqd,t->tid", w, bary, fq, mesh.areas)


def neumann_loads(mesh: Mesh, traction: TractionField) -> tuple[np.ndarray, np.ndarray]:
    """Edge ids and (n_edges, 2, 2) integrals of g * phi at the two endpoints."""
    edges = np.flatnonzero(mesh.edge_class == NEUMANN)
    s, w = gauss_segment(EDGE_QUAD_POINTS)
    pa = mesh.points[mesh.edges[edges, 0]]
    pb = mesh.points[mesh.edges[edges, 1]]
    lam = 0.5 + s  # coordinate along A -> B in [0, 1]
    xq = pa[:, None, :] * (1 - lam)[None, :, None] + pb[:, None, :] * lam[None, :, None]
    n = np.broadcast_to(mesh.edge_normals[edges][:, None, :], xq.shape)
    g = traction(xq[..., 0], xq[..., 1], n)  # (ne, nq, 2)
    phi = np.stack([1 - lam, lam], axis=1)  # (nq, 2)
    loads = np.einsum("q,qk,eqd,e->ekd", w, phi, g, mesh.edge_lengths[edges])
    return edges, loads


def assemble(mesh: Mesh, material: Material, load: LoadCase):
    """Global stiffness (2nv x 2nv, interleaved dofs) and force vector."""
    B = strain_operator(mesh)
    Ke = np.einsum("t,tai,ab,tbj->tij", mesh.areas, B, material.hooke, B)
    dofs = _element_dofs(mesh)
    n = 2 * mesh.n_vertices
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))

    f = np.zeros((mesh.n_vertices, 2))
    fb = body_force_loads(mesh, load.body_force)
    np.add.at(f, mesh.triangles, fb)
    edges, fn = neumann_loads(mesh, load.traction)
    np.add.at(f, mesh.edges[edges], fn)
    return K, f.ravel()


def dirichlet_vertices(mesh: Mesh) -> np.ndarray:
    return np.unique(mesh.edges[mesh.edge_class == DIRICHLET].ravel())


def solve(mesh: Mesh, material: Material, load: LoadCase, K=None, f=None) -> FESolution:
    """Eliminate Dirichlet dofs, solve, and recover reactions from the full rows."""
    if K is None or f is None:
        K, f = assemble(mesh, material, load)
    dv = dirichlet_vertices(mesh)
    if len(dv) < 2:
        raise SingularSystem("at least two Dirichlet vertices are needed to remove rigid modes")
    n = 2 * mesh.n_vertices
    ddofs = np.stack([2 * dv, 2 * dv + 1], axis=1).ravel()
    ud = np.asarray(load.dirichlet(mesh.points[dv, 0], mesh.points[dv, 1]), dtype=float)
    free = np.setdiff1d(np.arange(n), ddofs)

    u = np.zeros(n)
    u[ddofs] = ud.ravel()
    Kc = K.tocsc()
    if len(free):
        Kff = Kc[free][:, free].tocsc()
        rhs = f[free] - Kc[free][:, ddofs] @ u[ddofs]
        try:
            lu = splu(Kff)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        u[free] = lu.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise SingularSystem("non-finite displacement")

    reactions = (K @ u - f)[ddofs].reshape(-1, 2)
    B = strain_operator(mesh)
    ue = u[_element_dofs(mesh)]
    strain = np.einsum("tai,ti->ta", B, ue)
    sigma = strain @ material.hooke.T
    energy = mesh.areas * np.einsum("ta,ta->t", strain, sigma)
    return FESolution(
        mesh=mesh,
        material=material,
        load=load,
        u=u.reshape(-1, 2),
        sigma=sigma,
        strain=strain,
        dirichlet_vertices=dv,
        reactions=reactions,
        element_energy=energy,
        K=K,
        f=f,
    )


@dataclass(frozen=True)
class ExactError:
    e_ex: float
    exact_energy: float
    fe_energy: float

    @property
    def galerkin_gap(self) -> float:
        """``exact_energy - fe_energy``; equals ``e_ex**2`` under Galerkin orthogonality."""
        return self.exact_energy - self.fe_energy


def exact_error(
    solution: FESolution, exact_strain: Field, degree: int = EXACT_QUAD_DEGREE
) -> ExactError:
    """Energy-norm error of the FE solution against an analytic strain field.

    ``exact_strain(x, y)`` returns Voigt strains ``(xx, yy, 2xy)`` with shape
    ``x.shape + (3,)``.  The error is integrated directly, which avoids the
    cancellation in ``||u||^2 - ||u_H||^2`` for small errors; the difference
    form is returned alongside and checked for a negative radicand.
    """
    mesh = solution.mesh
    C = solution.material.hooke
    bary, w = gauss_triangle(degree)
    xq = map_triangle_points(mesh.points[mesh.triangles], bary)
    eps = exact_strain(xq[..., 0], xq[..., 1])  # (nt, nq, 3)
    exact_energy = float(np.einsum("q,tqa,ab,tqb,t->", w, eps, C, eps, mesh.areas))
    d = eps - solution.strain[:, None, :]
    err2 = float(np.einsum("q,tqa,ab,tqb,t->", w, d, C, d, mesh.areas))
    fe_energy = solution.strain_energy
    tol = 1e-10 * max(exact_energy, 1e-300)
    if exact_energy - fe_energy < -tol:
        raise NegativeRadicand(
            f"exact energy {exact_energy:.16g} below FE energy {fe_energy:.16g}"
        )
    return ExactError(np.sqrt(max(err2, 0.0)), exact_energy, fe_energy)


def exact_error_norm(solution: FESolution, exact_strain: Field) -> float:
    return exact_error(solution, exact_strain).e_ex
