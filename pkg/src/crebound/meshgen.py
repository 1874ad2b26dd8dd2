"""Structured and random triangulations used by the benchmarks and tests."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshError
from .mesh import Mesh, build_mesh

TagFn = Callable[[np.ndarray, np.ndarray], str]


def _split_cells(ids: np.ndarray, xs: np.ndarray, ys: np.ndarray, keep, pattern: str):
    """Two triangles per kept cell.

    ``pattern="same"`` cuts every cell along its '/' diagonal; ``"quadrant"``
    uses '/' in the lower-left and upper-right quadrants and '\\' elsewhere.
    Whatever the pattern, a cell whose cut would leave a triangle with two
    border edges (a domain corner) is cut along the other diagonal instead.
    """
    nx, ny = len(xs) - 1, len(ys) - 1

    def inside(i, j):
        return 0 <= i < nx and 0 <= j < ny and keep(i, j)

    xm, ym = 0.5 * (xs[0] + xs[-1]), 0.5 * (ys[0] + ys[-1])
    tris = []
    for i in range(nx):
        for j in range(ny):
            if not keep(i, j):
                continue
            bottom, top = not inside(i, j - 1), not inside(i, j + 1)
            left, right = not inside(i - 1, j), not inside(i + 1, j)
            if pattern == "same":
                slash = True
            elif pattern == "quadrant":
                xc = 0.5 * (xs[i] + xs[i + 1])
                yc = 0.5 * (ys[j] + ys[j + 1])
                slash = (xc - xm) * (yc - ym) > 0
            else:
                raise ValueError(f"unknown diagonal pattern {pattern!r}")
            slash_bad = (bottom and right) or (top and left)
            back_bad = (bottom and left) or (top and right)
            if slash and slash_bad and not back_bad:
                slash = False
            elif not slash and back_bad and not slash_bad:
                slash = True
            v00, v10 = ids[i, j], ids[i + 1, j]
            v01, v11 = ids[i, j + 1], ids[i + 1, j + 1]
            if slash:
                tris += [(v00, v10, v11), (v00, v11, v01)]
            else:
                tris += [(v00, v10, v01), (v10, v11, v01)]
    return np.array(tris, dtype=np.int64)


def grid_mesh(xs, ys, tag: TagFn, keep=None, pattern: str = "same") -> Mesh:
    """Tensor grid on the coordinates ``xs`` x ``ys``, optionally skipping cells."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    ids = np.arange(len(pts)).reshape(len(xs), len(ys))
    keep = keep or (lambda i, j: True)
    tris = _split_cells(ids, xs, ys, keep, pattern)
    used = np.unique(tris)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return build_mesh(pts[used], remap[tris], tag)


def _n_cells(length: float, h: float) -> int:
    n = length / h
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise MeshError(f"h={h} does not divide length {length}")
    return int(round(n))


def rectangle(width: float, height: float, h: float, tag: TagFn, pattern: str = "same") -> Mesh:
    nx, ny = _n_cells(width, h), _n_cells(height, h)
    xs, ys = np.linspace(0, width, nx + 1), np.linspace(0, height, ny + 1)
    return grid_mesh(xs, ys, tag, pattern=pattern)


def square_with_hole(
    h: float, tag: TagFn, hole: tuple[float, float] = (1 / 3, 2 / 3), pattern: str = "same"
) -> Mesh:
    """Unit square minus the centred square ``hole[0] < x, y < hole[1]``."""
    n = _n_cells(1.0, h)
    xs = np.linspace(0.0, 1.0, n + 1)
    lo, hi = hole

    def keep(i, j):
        xc = 0.5 * (xs[i] + xs[i + 1])
        yc = 0.5 * (xs[j] + xs[j + 1])
        return not (lo < xc < hi and lo < yc < hi)

    if not any(np.isclose(xs, lo)) or not any(np.isclose(xs, hi)):
        raise MeshError("h must resolve the hole boundary")
    return grid_mesh(xs, xs, tag, keep, pattern)


def thin_triangle_mesh(tag: TagFn, pattern: str = "same") -> Mesh:
    """Unit square meshed with a band of 10:1 triangles in the middle (36 dofs)."""
    xs = np.array([0.0, 0.3, 0.475, 0.525, 0.7, 1.0])
    ys = np.array([0.0, 0.5, 1.0])
    return grid_mesh(xs, ys, tag, pattern=pattern)


def aspect_ratios(mesh: Mesh) -> np.ndarray:
    """Longest edge squared over twice the area (base over height)."""
    p = mesh.points[mesh.triangles]
    l2 = np.max([np.sum((p[:, i] - p[:, (i + 1) % 3]) ** 2, axis=1) for i in range(3)], axis=0)
    return l2 / (2.0 * mesh.areas)


def random_disc_mesh(n_triangles: int, rng: np.random.Generator, tag: TagFn | str = "D") -> Mesh:
    """Delaunay mesh of a disc with roughly ``n_triangles`` elements.

    Boundary points lie on the unit circle and all other points strictly inside,
    so the Delaunay criterion forbids boundary ears (a triangle on three
    consecutive circle points has an interior point in its circumcircle).
    """
    nb = max(4, int(round(np.sqrt(2.0 * n_triangles))))
    ni = max(1, (n_triangles - nb + 2) // 2)
    if callable(tag):
        tag_fn = tag
    else:
        tag_fn = lambda a, b: tag  # noqa: E731
    for _ in range(20):
        theta = 2 * np.pi * (np.arange(nb) + rng.uniform(-0.3, 0.3, nb)) / nb
        bpts = np.column_stack([np.cos(theta), np.sin(theta)])
        # stay inside the polygon of boundary points (largest gap 1.6 * 2 pi / nb)
        r = 0.95 * np.cos(min(1.6 * np.pi / nb, 0.45 * np.pi)) * np.sqrt(rng.uniform(0, 1, ni))
        phi = rng.uniform(0, 2 * np.pi, ni)
        ipts = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        pts = np.vstack([bpts, ipts])
        tri = Delaunay(pts)
        if len(tri.simplices) != nb + 2 * ni - 2:  # an interior point reached the hull
            continue
        try:
            return build_mesh(pts, tri.simplices, tag_fn)
        except MeshError:
            continue
    raise MeshError("could not generate a valid random mesh")
