"""Element-level equilibrated stress recovery and the error estimate.

Each element receives the edge works, turns them into linear tractions, and
solves a pure-traction problem in a polynomial displacement space without
rigid modes.  The complementary energy of the resulting stress, minus the FE
strain energy, is the element contribution to the squared estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InconsistentWorks, UnbalancedElement
from .fem import BODY_QUAD_DEGREE, FESolution, Material
from .mesh import Mesh
from .prolongation import EdgeGeometry, Frame
from .quadrature import gauss_segment, gauss_triangle, map_triangle_points

FREDHOLM_TOL = 1e-8
CONSISTENCY_TOL = 1e-8
MISMATCH_FLOOR = 1e-6

# ---------------------------------------------------------------------------
# edge tractions
# ---------------------------------------------------------------------------


def recover_linear_traction(W1, Wx, Wy, a, b, xo, yo, length, check=True):
    """Linear traction ``F0 + s F1`` (s in [-1/2, 1/2] from A to B) with given works.

    ``a, b, xo, yo`` and the works may be expressed in a scaled frame while
    ``length`` stays physical.  Broadcasts over edges and directions.
    """
    W1, Wx, Wy = (np.asarray(v, dtype=float) for v in (W1, Wx, Wy))
    if check:
        c = -(a * xo + b * yo)
        res = np.abs(c * W1 + a * Wx + b * Wy)
        ref = np.abs(c * W1) + np.abs(a * Wx) + np.abs(b * Wy)
        if np.any(res > CONSISTENCY_TOL * np.maximum(ref, np.finfo(float).tiny)):
            raise InconsistentWorks(f"geometric consistency violated: {float(res.max()):.3e}")
    lt2 = a * a + b * b
    F0 = W1 / length
    F1 = 12.0 * (a * Wy - b * Wx - (a * yo - b * xo) * W1) / (length * lt2)
    return F0, F1


def traction_works(F0, F1, a, b, xo, yo, length, npts: int = 2):
    """Works of ``F0 + s F1`` against ``(1, x, y)`` by Gauss quadrature."""
    s, w = gauss_segment(npts)
    F = F0[..., None] + F1[..., None] * s
    x = xo[..., None] - s * b[..., None]
    y = yo[..., None] + s * a[..., None]
    L = np.asarray(length)[..., None]
    return (
        np.sum(w * F * L, axis=-1),
        np.sum(w * F * x * L, axis=-1),
        np.sum(w * F * y * L, axis=-1),
    )


def higher_degree_works(W1, Wx, Wy, a, b, xo, yo):
    """Works against ``(x^2, xy, y^2)`` of the linear traction carrying ``(W1, Wx, Wy)``."""
    Wxx = (b * b / 12 - xo * xo) * W1 + 2 * xo * Wx
    Wxy = (-a * b / 12 - xo * yo) * W1 + xo * Wy + yo * Wx
    Wyy = (a * a / 12 - yo * yo) * W1 + 2 * yo * Wy
    return Wxx, Wxy, Wyy


# ---------------------------------------------------------------------------
# polynomial displacement space
# ---------------------------------------------------------------------------

# each field is a list of terms (coefficient, component, power of xi, power of eta)
_ORDER2 = [
    [(1, 0, 1, 0)],
    [(1, 1, 0, 1)],
    [(1, 0, 0, 1), (1, 1, 1, 0)],
    [(1, 0, 1, 1)],
    [(1, 1, 1, 1)],
    [(1, 0, 2, 0)],
    [(1, 1, 2, 0)],
    [(1, 0, 0, 2)],
    [(1, 1, 0, 2)],
]
_ORDER3 = _ORDER2 + [[(1, d, px, 3 - px)] for px in (3, 2, 1, 0) for d in (0, 1)]
_RIGID = [[(1, 0, 0, 0)], [(1, 1, 0, 0)], [(-1, 0, 0, 1), (1, 1, 1, 0)]]


def basis_fields(order: int) -> list:
    """Vector monomial fields of total degree <= ``order`` minus the rigid modes."""
    if order == 2:
        return _ORDER2
    if order == 3:
        return _ORDER3
    raise ValueError(f"element order must be 2 or 3, got {order}")


def _eval_fields(fields, xi, eta):
    """Values (..., nf, 2) of the fields at local points."""
    out = np.zeros(np.shape(xi) + (len(fields), 2))
    for i, terms in enumerate(fields):
        for c, d, px, py in terms:
            out[..., i, d] += c * xi**px * eta**py
    return out


def _eval_strains(fields, xi, eta, rho):
    """Voigt strains (..., nf, 3) in physical coordinates."""
    out = np.zeros(np.shape(xi) + (len(fields), 3))
    for i, terms in enumerate(fields):
        for c, d, px, py in terms:
            dxi = c * px * xi ** max(px - 1, 0) * eta**py if px else 0.0
            deta = c * py * xi**px * eta ** max(py - 1, 0) if py else 0.0
            if d == 0:
                out[..., i, 0] += dxi / rho
                out[..., i, 2] += deta / rho
            else:
                out[..., i, 1] += deta / rho
                out[..., i, 2] += dxi / rho
    return out


@dataclass(eq=False)
class ElementSpace:
    """Batched element operators for one mesh, material and polynomial order.

    ``edge_map[t, i, k, d, j]`` is the generalized load on field ``i`` of
    triangle ``t`` produced by a unit work ``W(m_j e_d)`` (``m = 1, x, y``) on
    its local edge ``k``, sign included.  The last three fields are the rigid
    modes, used only to check element equilibrium.
    """

    mesh: Mesh
    frame: Frame
    material: Material
    order: int

    def __post_init__(self):
        mesh = self.mesh
        self.fields = basis_fields(self.order)
        self.nb = len(self.fields)
        allf = self.fields + _RIGID
        self.centre = mesh.centroids
        p = mesh.points[mesh.triangles]
        self.rho = np.sqrt(np.max(np.sum((p - self.centre[:, None]) ** 2, axis=2), axis=1))

        # stiffness
        bary, w = gauss_triangle(2 * self.order)
        xq = map_triangle_points(p, bary)
        xi, eta = self._local(xq)
        eps = _eval_strains(self.fields, xi, eta, self.rho[:, None])  # (nt, nq, nb, 3)
        C = self.material.hooke
        self.K = np.einsum("q,tqia,ab,tqjb,t->tij", w, eps, C, eps, mesh.areas)
        self.L = np.linalg.cholesky(self.K)

        # body force
        bary, w = gauss_triangle(BODY_QUAD_DEGREE + self.order)
        xq = map_triangle_points(p, bary)
        xi, eta = self._local(xq)
        vals = _eval_fields(allf, xi, eta)  # (nt, nq, nf, 2)
        self._body_xq, self._body_vals, self._body_w = xq, vals, w

        # edge loads
        geom = EdgeGeometry.of(mesh, self.frame)
        self.geom = geom
        s, ws = gauss_segment(self.order + 1)
        e = mesh.tri_edges  # (nt, 3)
        a, b = geom.a[e], geom.b[e]
        xo, yo = geom.xo[e], geom.yo[e]
        L = mesh.edge_lengths[e]
        lt2 = a * a + b * b
        pts = mesh.points
        A = pts[mesh.edges[e, 0]]  # (nt, 3, 2)
        B = pts[mesh.edges[e, 1]]
        xq = 0.5 * (A + B)[:, :, None, :] + s[None, None, :, None] * (B - A)[:, :, None, :]
        xi, eta = self._local(xq.reshape(mesh.n_triangles, -1, 2))
        vals = _eval_fields(allf, xi, eta).reshape(mesh.n_triangles, 3, len(s), len(allf), 2)
        # traction at point q as a combination of (W1, Wx, Wy)
        k12 = 12.0 / (L * lt2)
        coef = np.empty(e.shape + (len(s), 3))
        coef[..., 0] = 1.0 / L[..., None] - s * (k12 * (a * yo - b * xo))[..., None]
        coef[..., 1] = -s * (k12 * b)[..., None]
        coef[..., 2] = s * (k12 * a)[..., None]
        sign = mesh.tri_signs.astype(float)
        self.edge_map = np.einsum("q,tk,tk,tkqid,tkqj->tikdj", ws, sign, L, vals, coef)

    # ------------------------------------------------------------------
    def _local(self, xq):
        d = (xq - self.centre[:, None, :]) / self.rho[:, None, None]
        return d[..., 0], d[..., 1]

    def body_loads(self, body_force) -> np.ndarray:
        """(nt, nb + 3) integrals of f . v (rigid modes last)."""
        fq = body_force(self._body_xq[..., 0], self._body_xq[..., 1])
        return np.einsum("q,tqd,tqid,t->ti", self._body_w, fq, self._body_vals, self.mesh.areas)

    def loads(self, body: np.ndarray, W_all: np.ndarray) -> np.ndarray:
        """Element loads for works on all edges, ``W_all`` of shape (3E, 2)."""
        ne = self.mesh.n_edges
        Wt = W_all.reshape(3, ne, 2)[:, self.mesh.tri_edges]  # (3, nt, 3, 2)
        return body + np.einsum("tikdj,jtkd->ti", self.edge_map, Wt)

    def solve(self, loads: np.ndarray) -> np.ndarray:
        """Displacement coefficients (nt, nb) of the element problems."""
        return self.solve_many(loads[:, : self.nb, None])[..., 0]

    def solve_many(self, rhs: np.ndarray) -> np.ndarray:
        """``K_T^{-1} rhs_T`` for a batch of right-hand sides of shape (nt, nb, m)."""
        y = np.linalg.solve(self.L, rhs)
        return np.linalg.solve(np.swapaxes(self.L, 1, 2), y)

    @cached_property
    def _stress_rule(self):
        bary, w = gauss_triangle(2 * self.order + 2)
        xq = map_triangle_points(self.mesh.points[self.mesh.triangles], bary)
        xi, eta = self._local(xq)
        return w, _eval_strains(self.fields, xi, eta, self.rho[:, None])

    def direct_error(self, coeffs: np.ndarray, strain_H: np.ndarray) -> np.ndarray:
        """Per-element ``int (eps_p - eps_H) : C : (eps_p - eps_H)`` by quadrature."""
        w, eps = self._stress_rule
        ep = np.einsum("tqia,ti->tqa", eps, coeffs)
        d = ep - strain_H[:, None, :]
        return np.einsum("q,tqa,ab,tqb,t->t", w, d, self.material.hooke, d, self.mesh.areas)


@dataclass(frozen=True)
class ElementSolution:
    """Recovered displacement field of one element and its stress energy."""

    space: ElementSpace
    triangle: int
    coeffs: np.ndarray  # (nb,)
    energy: float  # int sigma_p : C^-1 : sigma_p

    def strain(self, x, y) -> np.ndarray:
        t = self.triangle
        xi = (np.asarray(x, dtype=float) - self.space.centre[t, 0]) / self.space.rho[t]
        eta = (np.asarray(y, dtype=float) - self.space.centre[t, 1]) / self.space.rho[t]
        eps = _eval_strains(self.space.fields, xi, eta, self.space.rho[t])
        return np.einsum("...ia,i->...a", eps, self.coeffs)

    def stress(self, x, y) -> np.ndarray:
        return self.strain(x, y) @ self.space.material.hooke.T


def solve_element(space: ElementSpace, t: int, body: np.ndarray, W_all: np.ndarray) -> ElementSolution:
    """Solve the pure-traction problem of triangle ``t`` for works on all edges (3E, 2).

    ``body`` holds the body-force loads of all elements (see ``ElementSpace.body_loads``).
    """
    b = space.loads(body, W_all)[t]
    scale = max(float(np.abs(b).max(initial=0.0)), 1e-300)
    if np.abs(b[space.nb :]).max(initial=0.0) > FREDHOLM_TOL * scale:
        raise UnbalancedElement(f"element {t}: loads do not balance rigid modes")
    y = np.linalg.solve(space.L[t], b[: space.nb])
    u = np.linalg.solve(space.L[t].T, y)
    return ElementSolution(space, int(t), u, float(b[: space.nb] @ u))


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorEstimate:
    """Per-element squared estimate and the quantities it is checked against.

    ``per_element`` is ``int (sigma_p - sigma_H) : C^-1 : (sigma_p - sigma_H)``
    integrated directly.  ``energy_form`` is the same quantity obtained as the
    difference of the stress and FE energies, which holds because the element
    loads reproduce the FE residuals on linear fields; the two are compared in
    ``mismatch``.  The direct form is reported because it does not suffer
    from cancellation when the error is small.
    """

    per_element: np.ndarray
    energy_form: np.ndarray
    fe_energy: np.ndarray  # int eps_H : C : eps_H
    complementary: np.ndarray  # int sigma_p : C^-1 : sigma_p
    rigid_residual: float  # max relative rigid-mode imbalance of the element loads
    mismatch: float

    @property
    def global_estimate(self) -> float:
        return float(np.sqrt(max(self.per_element.sum(), 0.0)))

    @property
    def bound_ok(self) -> bool:
        scale = max(float(self.complementary.max(initial=0.0)), 1e-300)
        return bool(np.all(self.energy_form >= -1e-10 * scale))


def element_estimate(
    space: ElementSpace, solution: FESolution, W_all: np.ndarray, body: np.ndarray | None = None
) -> ErrorEstimate:
    """Solve all element problems for the given works and accumulate the estimate."""
    if body is None:
        body = space.body_loads(solution.load.body_force)
    b = space.loads(body, W_all)
    rigid = np.abs(b[:, space.nb :])
    scale = max(float(np.abs(b).max(initial=0.0)), float(np.abs(body).max(initial=0.0)), 1e-300)
    rigid_res = float(rigid.max(initial=0.0)) / scale
    if rigid_res > FREDHOLM_TOL:
        raise UnbalancedElement(f"element loads do not balance rigid modes: {rigid_res:.3e}")
    u = space.solve(b)
    comp = np.einsum("ti,ti->t", b[:, : space.nb], u)
    energy_form = comp - solution.element_energy
    direct = space.direct_error(u, solution.strain)
    # relative to the squared estimate; the energy form carries cancellation noise of
    # order eps * sum(comp), so the denominator is floored at MISMATCH_FLOOR * sum(comp)
    denom = max(float(direct.sum()), MISMATCH_FLOOR * float(comp.sum()), 1e-300)
    mismatch = abs(float(direct.sum() - energy_form.sum())) / denom
    return ErrorEstimate(direct, energy_form, solution.element_energy, comp, rigid_res, mismatch)
