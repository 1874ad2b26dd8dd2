import numpy as np
import pytest

from crebound import meshgen
from crebound.fem import Material
from crebound.problems import PROBLEMS, RectangleSolution, make_problem


def fd_body_force(sol: RectangleSolution, x, y, h=1e-4):
    """-div sigma by central differences of the analytic stress."""

    def s(a, b):
        return sol.stress(np.asarray(a), np.asarray(b))

    dsx = (s(x + h, y) - s(x - h, y)) / (2 * h)
    dsy = (s(x, y + h) - s(x, y - h)) / (2 * h)
    return -np.stack([dsx[..., 0] + dsy[..., 2], dsx[..., 2] + dsy[..., 1]], axis=-1)


@pytest.mark.parametrize("nu", [0.0, 0.3])
def test_body_force_matches_finite_differences(nu):
    sol = RectangleSolution(Material(1.0, nu))
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 8, 100), rng.uniform(0, 1, 100)
    f = sol.body_force(x, y)
    ref = fd_body_force(sol, x, y)
    assert np.abs(f - ref).max() <= 1e-6 * max(1.0, np.abs(ref).max())
    f0 = sol.body_force(np.array(4.0), np.array(0.5))
    assert np.allclose(f0, fd_body_force(sol, np.array(4.0), np.array(0.5)), atol=1e-6)


def test_displacement_vanishes_on_boundary():
    sol = RectangleSolution(Material())
    t = np.linspace(0, 1, 11)
    for x, y in ((8 * t, 0 * t), (8 * t, 0 * t + 1), (0 * t, t), (0 * t + 8, t)):
        assert np.abs(sol.displacement(x, y)).max() < 1e-12


def test_strain_matches_displacement_gradient():
    sol = RectangleSolution(Material())
    rng = np.random.default_rng(1)
    x, y, h = rng.uniform(0, 8, 50), rng.uniform(0, 1, 50), 1e-6
    ux = (sol.displacement(x + h, y) - sol.displacement(x - h, y)) / (2 * h)
    uy = (sol.displacement(x, y + h) - sol.displacement(x, y - h)) / (2 * h)
    eps = np.stack([ux[:, 0], uy[:, 1], ux[:, 1] + uy[:, 0]], axis=-1)
    assert np.allclose(sol.strain(x, y), eps, atol=1e-6)


def test_square_shear_load():
    p = make_problem("square_shear", 0.25)
    be = p.mesh.border_edges
    mid = p.mesh.edge_midpoints[be]
    g = p.load.traction(mid[:, 0], mid[:, 1], p.mesh.edge_normals[be])
    total = (g * p.mesh.edge_lengths[be][:, None]).sum(axis=0)
    assert np.allclose(total, [1.0, 0.0])


def test_thin_triangles_are_thin():
    p = make_problem("thin_triangles")
    assert meshgen.aspect_ratios(p.mesh).max() >= 10


def test_square_with_hole_has_one_hole():
    p = make_problem("square_with_hole", 1 / 9)
    assert p.mesh.n_holes == 1
    # hole pressure integrates to zero net force
    be = p.mesh.border_edges
    mid = p.mesh.edge_midpoints[be]
    g = p.load.traction(mid[:, 0], mid[:, 1], p.mesh.edge_normals[be])
    assert np.abs(g).max() == pytest.approx(1.0)
    assert np.allclose((g * p.mesh.edge_lengths[be][:, None]).sum(axis=0), 0, atol=1e-14)


def test_registry():
    assert set(PROBLEMS) == {"analytic_rectangle", "square_shear", "thin_triangles", "square_with_hole", "patch_test"}
    with pytest.raises(ValueError):
        make_problem("nope")
