"""Benchmark problem library."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .fem import Field, LoadCase, Material
from .mesh import Mesh
from . import meshgen

TOL = 1e-9


@dataclass(eq=False)
class Problem:
    name: str
    mesh: Mesh
    material: Material
    load: LoadCase
    h: float
    exact_strain: Field | None = None
    exact_displacement: Field | None = None

    @property
    def ndof(self) -> int:
        return 2 * self.mesh.n_vertices


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


# ---------------------------------------------------------------------------
# polynomial solution on ]0, 8l[ x ]0, l[
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RectangleSolution:
    """u_x = p(x) q(y), u_y = p(x) r(y) with p = x(x - 8l), q = y(y - l)^3, r = y^2 (y - l)."""

    material: Material
    l: float = 1.0

    def _factors(self, x, y):
        l = self.l
        p = x * (x - 8 * l)
        dp = 2 * x - 8 * l
        ddp = 2.0
        q = y * (y - l) ** 3
        dq = (y - l) ** 2 * (4 * y - l)
        ddq = 6 * (y - l) * (2 * y - l)
        r = y * y * (y - l)
        dr = 3 * y * y - 2 * l * y
        ddr = 6 * y - 2 * l
        return p, dp, ddp, q, dq, ddq, r, dr, ddr

    def displacement(self, x, y):
        p, _, _, q, _, _, r, _, _ = self._factors(x, y)
        return _stack(p * q, p * r)

    def strain(self, x, y):
        p, dp, _, q, dq, _, r, dr, _ = self._factors(x, y)
        return _stack(dp * q, p * dr, p * dq + dp * r)

    def stress(self, x, y):
        return self.strain(x, y) @ self.material.hooke.T

    def body_force(self, x, y):
        """``-div(C : eps(u))``."""
        E, nu = self.material.young_modulus, self.material.poisson_ratio
        D = E / (1 - nu * nu)
        G = 0.5 * (1 - nu)
        p, dp, ddp, q, dq, ddq, r, dr, ddr = self._factors(x, y)
        fx = -D * (ddp * q + nu * dp * dr + G * (p * ddq + dp * dr))
        fy = -D * (G * (dp * dq + ddp * r) + nu * dp * dq + p * ddr)
        return _stack(fx, fy)


def analytic_rectangle(h: float = 0.25, material: Material | None = None, l: float = 1.0):
    material = material or Material()
    sol = RectangleSolution(material, l)
    mesh = meshgen.rectangle(8 * l, l, h * l, lambda a, b: "D")
    load = LoadCase(body_force=sol.body_force)
    return Problem(
        "analytic_rectangle", mesh, material, load, h,
        exact_strain=sol.strain, exact_displacement=sol.displacement,
    )


# ---------------------------------------------------------------------------
# unit square under top shear
# ---------------------------------------------------------------------------


def _bottom_clamped(a, b):
    return "D" if abs(a[1]) < TOL and abs(b[1]) < TOL else "N"


def _top_shear(x, y, n):
    on_top = np.abs(y - 1.0) < TOL
    return _stack(np.where(on_top, 1.0, 0.0), np.zeros_like(x))


def _shear_problem(name: str, mesh: Mesh, h: float, material: Material | None):
    load = LoadCase(traction=_top_shear)
    return Problem(name, mesh, material or Material(), load, h)


def square_shear(h: float = 0.05, material: Material | None = None):
    mesh = meshgen.rectangle(1.0, 1.0, h, _bottom_clamped)
    return _shear_problem("square_shear", mesh, h, material)


def thin_triangles(material: Material | None = None):
    mesh = meshgen.thin_triangle_mesh(_bottom_clamped)
    return _shear_problem("thin_triangles", mesh, 0.5, material)


# ---------------------------------------------------------------------------
# square with a square hole under internal pressure
# ---------------------------------------------------------------------------

HOLE = (1 / 3, 2 / 3)


def _on_hole(x, y):
    lo, hi = HOLE
    return (x > lo - TOL) & (x < hi + TOL) & (y > lo - TOL) & (y < hi + TOL)


def _hole_pressure(x, y, n):
    mask = _on_hole(x, y)[..., None]
    return np.where(mask, -n, 0.0)


def square_with_hole(h: float = 1 / 9, material: Material | None = None):
    mesh = meshgen.square_with_hole(h, _bottom_clamped, HOLE)
    load = LoadCase(traction=_hole_pressure)
    return Problem("square_with_hole", mesh, material or Material(), load, h)


# ---------------------------------------------------------------------------
# linear patch test
# ---------------------------------------------------------------------------

PATCH_GRADIENT = np.array([[0.2, 0.3], [0.05, -0.15]])
PATCH_SHIFT = np.array([0.1, -0.1])


def patch_test(h: float = 0.25, material: Material | None = None):
    """Linear displacement imposed on the bottom, exact tractions elsewhere, no body force."""
    material = material or Material()
    Gm = PATCH_GRADIENT
    eps = np.array([Gm[0, 0], Gm[1, 1], Gm[0, 1] + Gm[1, 0]])
    sig = material.hooke @ eps
    S = np.array([[sig[0], sig[2]], [sig[2], sig[1]]])

    def displacement(x, y):
        return PATCH_SHIFT + _stack(x, y) @ Gm.T

    def strain(x, y):
        return np.broadcast_to(eps, np.shape(x) + (3,))

    def traction(x, y, n):
        return n @ S.T

    mesh = meshgen.rectangle(1.0, 1.0, h, _bottom_clamped)
    load = LoadCase(traction=traction, dirichlet=displacement)
    return Problem("patch_test", mesh, material, load, h, strain, displacement)


PROBLEMS: dict[str, Callable[..., Problem]] = {
    "analytic_rectangle": analytic_rectangle,
    "square_shear": square_shear,
    "thin_triangles": lambda h=None, material=None: thin_triangles(material),
    "square_with_hole": square_with_hole,
    "patch_test": patch_test,
}


def make_problem(name: str, h: float | None = None) -> Problem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory() if h is None else factory(h)
