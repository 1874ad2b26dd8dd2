"""Oriented triangular meshes, boundary operators and the incidence matrix.

Conventions used throughout the package:

* triangles are stored counter-clockwise; local edge ``k`` of a triangle joins
  local vertices ``k`` and ``k + 1``;
* internal edges are oriented from their lower vertex id to their higher one;
  border edges follow the counter-clockwise traversal of their only triangle;
* ``tri_signs[t, k]`` is +1 when the traversal of triangle ``t`` follows the
  orientation of its edge ``k`` and -1 otherwise.  Border edges always carry +1.
* line coefficients ``(a, b, c)`` of an edge A->B are ``a = yB - yA``,
  ``b = xA - xB``, ``c = xB yA - yB xA``; ``(a, b) / length`` is the outward
  unit normal of the triangle whose sign on that edge is +1.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateEdge,
    DegenerateTriangle,
    DisconnectedMesh,
    ElementWithTwoBorderEdges,
    HoleLoopNotFound,
    MeshError,
    NonManifoldEdge,
    UntaggedBorderEdge,
)

EPS_GEOM = 1e-12

INTERNAL, NEUMANN, DIRICHLET = 0, 1, 2
EDGE_CLASS_NAMES = {INTERNAL: "internal", NEUMANN: "neumann", DIRICHLET: "dirichlet"}
_TAG_CODES = {"N": NEUMANN, "D": DIRICHLET, "neumann": NEUMANN, "dirichlet": DIRICHLET}

V_INTERIOR, V_NEUMANN, V_DIRICHLET, V_MIXED = 0, 1, 2, 3
VERTEX_CLASS_NAMES = {
    V_INTERIOR: "interior",
    V_NEUMANN: "neumann_boundary",
    V_DIRICHLET: "dirichlet_boundary",
    V_MIXED: "mixed_corner",
}


@dataclass(frozen=True)
class Vertex:
    id: int
    x: float
    y: float
    boundary_class: str


@dataclass(frozen=True)
class Edge:
    id: int
    endpoints: tuple[int, int]
    line_coeffs: tuple[float, float, float]
    length: float
    midpoint: tuple[float, float]
    edge_class: str


@dataclass(frozen=True)
class Triangle:
    id: int
    vertices: tuple[int, int, int]
    edges: tuple[int, int, int]
    incidence_signs: tuple[int, int, int]
    area: float


@dataclass(frozen=True)
class KernelBasisN:
    """Right-kernel basis of the incidence matrix: star patches then hole loops."""

    N_V: sp.csc_matrix
    N_h: sp.csc_matrix
    interior_vertices: np.ndarray

    @property
    def N(self) -> sp.csc_matrix:
        return sp.hstack([self.N_V, self.N_h], format="csc")

    @property
    def ncols(self) -> int:
        return self.N_V.shape[1] + self.N_h.shape[1]


@dataclass(eq=False)
class Mesh:
    """Immutable-by-convention triangular mesh (struct of arrays)."""

    points: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counter-clockwise
    edges: np.ndarray  # (ne, 2), low -> high id (internal), ccw (border)
    edge_class: np.ndarray  # (ne,) INTERNAL / NEUMANN / DIRICHLET
    tri_edges: np.ndarray  # (nt, 3)
    tri_signs: np.ndarray  # (nt, 3) in {+1, -1}
    edge_tris: np.ndarray  # (ne, 2): [+1 side, -1 side or -1]
    boundary_loops: list[np.ndarray] = field(default_factory=list)
    hole_loops: list[np.ndarray] = field(default_factory=list)

    # -- sizes ---------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_holes(self) -> int:
        return len(self.hole_loops)

    @cached_property
    def internal_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_class == INTERNAL)

    @cached_property
    def border_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_class != INTERNAL)

    @cached_property
    def edge_to_internal(self) -> np.ndarray:
        """Column index in the incidence matrix for each edge, -1 for border edges."""
        out = np.full(self.n_edges, -1, dtype=np.int64)
        out[self.internal_edges] = np.arange(len(self.internal_edges))
        return out

    @cached_property
    def vertex_class(self) -> np.ndarray:
        cls = np.full(self.n_vertices, V_INTERIOR, dtype=np.int8)
        touch_n = np.zeros(self.n_vertices, dtype=bool)
        touch_d = np.zeros(self.n_vertices, dtype=bool)
        for code, flag in ((NEUMANN, touch_n), (DIRICHLET, touch_d)):
            flag[self.edges[self.edge_class == code].ravel()] = True
        cls[touch_n] = V_NEUMANN
        cls[touch_d] = V_DIRICHLET
        cls[touch_n & touch_d] = V_MIXED
        return cls

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_class == V_INTERIOR)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_class != V_INTERIOR)

    def counts(self) -> dict[str, int]:
        n_int_e = len(self.internal_edges)
        n_int_v = len(self.interior_vertices)
        return {
            "T": self.n_triangles,
            "E": self.n_edges,
            "E_int": n_int_e,
            "E_border": self.n_edges - n_int_e,
            "V": self.n_vertices,
            "V_int": n_int_v,
            "V_border": self.n_vertices - n_int_v,
            "holes": self.n_holes,
            "components": 1,
        }

    # -- geometry ------------------------------------------------------------
    @cached_property
    def areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        return 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.points[self.triangles].mean(axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.points[self.edges[:, 1]] - self.points[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        return self.points[self.edges].mean(axis=1)

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normals (a, b)/length, outward for the +1 triangle."""
        a, b, _ = line_coefficients(self.points, self.edges)
        return np.column_stack([a, b]) / self.edge_lengths[:, None]

    @cached_property
    def vertex_edge_incidence(self) -> sp.csr_matrix:
        """Signed (nv, ne) matrix: -1 at the origin of each edge, +1 at its end."""
        ne = self.n_edges
        rows = self.edges.ravel()
        cols = np.repeat(np.arange(ne), 2)
        vals = np.tile(np.array([-1, 1], dtype=np.int64), ne)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_vertices, ne))

    @cached_property
    def _edge_tri_incidence(self) -> sp.csr_matrix:
        nt = self.n_triangles
        rows = self.tri_edges.ravel()
        cols = np.repeat(np.arange(nt), 3)
        return sp.csr_matrix(
            (np.ones(3 * nt, dtype=np.int64), (rows, cols)), shape=(self.n_edges, nt)
        )

    # -- record views ---------------------------------------------------------
    def vertex(self, i: int) -> Vertex:
        x, y = self.points[i]
        return Vertex(int(i), float(x), float(y), VERTEX_CLASS_NAMES[int(self.vertex_class[i])])

    def edge(self, i: int) -> Edge:
        a, b, c = line_coefficients(self.points, self.edges[i : i + 1])
        mx, my = self.edge_midpoints[i]
        return Edge(
            int(i),
            (int(self.edges[i, 0]), int(self.edges[i, 1])),
            (float(a[0]), float(b[0]), float(c[0])),
            float(self.edge_lengths[i]),
            (float(mx), float(my)),
            EDGE_CLASS_NAMES[int(self.edge_class[i])],
        )

    def triangle(self, i: int) -> Triangle:
        return Triangle(
            int(i),
            tuple(int(v) for v in self.triangles[i]),
            tuple(int(e) for e in self.tri_edges[i]),
            tuple(int(s) for s in self.tri_signs[i]),
            float(self.areas[i]),
        )


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def line_coefficients(points: np.ndarray, edges: np.ndarray):
    """``(a, b, c)`` of the line ``a x + b y + c = 0`` through each oriented edge."""
    pa = points[edges[:, 0]]
    pb = points[edges[:, 1]]
    a = pb[:, 1] - pa[:, 1]
    b = pa[:, 0] - pb[:, 0]
    c = pb[:, 0] * pa[:, 1] - pb[:, 1] * pa[:, 0]
    return a, b, c


def edge_line_coefficients(mesh: Mesh, frame=None):
    """Per-edge ``(a, b, c)`` and midpoints ``(x_O, y_O)`` from the oriented endpoints.

    With a ``frame`` (any object with ``to_local``), coordinates are first mapped
    into that frame, so ``a**2 + b**2`` equals the squared length measured in it.
    """
    pts = mesh.points if frame is None else frame.to_local(mesh.points)
    a, b, c = line_coefficients(pts, mesh.edges)
    length2 = a * a + b * b
    if np.any(length2 <= 0.0):
        bad = int(np.flatnonzero(length2 <= 0.0)[0])
        raise DegenerateEdge(f"edge {bad} has zero length")
    mid = pts[mesh.edges].mean(axis=1)
    return (a, b, c), (mid[:, 0], mid[:, 1])


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

TagSpec = Mapping[tuple[int, int], str] | Callable[[np.ndarray, np.ndarray], str]


def build_mesh(vertices, triangles, boundary_tags: TagSpec, allow_corner_elements: bool = False) -> Mesh:
    """Build and validate a mesh.

    ``boundary_tags`` maps unordered vertex pairs of border edges to ``"N"`` or
    ``"D"``; a callable ``tag(pa, pb)`` receiving the endpoint coordinates is
    also accepted.  Vertex ids are 0-based here (the text format is 1-based).
    Triangles with two border edges are rejected unless ``allow_corner_elements``
    is set (useful for tiny hand-made meshes such as a square cut in two).
    """
    points = np.asarray(vertices, dtype=float).reshape(-1, 2)
    tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    nv = len(points)
    if tris.size == 0:
        raise MeshError("mesh has no triangles")
    if tris.min() < 0 or tris.max() >= nv:
        raise MeshError("triangle references an unknown vertex")
    if np.any(tris[:, 0] == tris[:, 1]) or np.any(tris[:, 1] == tris[:, 2]) or np.any(
        tris[:, 0] == tris[:, 2]
    ):
        raise DegenerateTriangle("triangle with repeated vertex")

    p = points[tris]
    signed = 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    scale2 = np.max(
        [np.sum((p[:, i] - p[:, (i + 1) % 3]) ** 2, axis=1) for i in range(3)], axis=0
    )
    if np.any(np.abs(signed) <= EPS_GEOM * scale2):
        bad = int(np.flatnonzero(np.abs(signed) <= EPS_GEOM * scale2)[0])
        raise DegenerateTriangle(f"triangle {bad} has (near) zero area")
    flip = signed < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    # local edge k joins local vertices k and k+1
    va = tris[:, [0, 1, 2]].ravel()
    vb = tris[:, [1, 2, 0]].ravel()
    lo = np.minimum(va, vb)
    hi = np.maximum(va, vb)
    keys = lo * nv + hi
    uniq, inv, count = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(count > 2):
        e = int(np.flatnonzero(count > 2)[0])
        raise NonManifoldEdge(f"edge {divmod(int(uniq[e]), nv)} shared by {count[e]} triangles")
    edges = np.column_stack([uniq // nv, uniq % nv]).astype(np.int64)
    ne = len(edges)
    nt = len(tris)
    tri_edges = inv.reshape(nt, 3)
    follows = (va == lo).reshape(nt, 3)  # traversal goes low -> high
    tri_signs = np.where(follows, 1, -1).astype(np.int64)

    border = count == 1
    # border edges follow the traversal of their only triangle, so the sign is
    # +1 and (a, b) is the outward normal
    edge_follows = np.zeros(ne, dtype=bool)
    edge_follows[inv[follows.ravel()]] = True
    swap = border & ~edge_follows
    edges[swap] = edges[swap][:, ::-1]
    tri_signs[border[tri_edges]] = 1

    edge_tris = np.full((ne, 2), -1, dtype=np.int64)
    flat_t = np.repeat(np.arange(nt), 3)
    flat_e = tri_edges.ravel()
    flat_s = tri_signs.ravel()
    edge_tris[flat_e[flat_s > 0], 0] = flat_t[flat_s > 0]
    edge_tris[flat_e[flat_s < 0], 1] = flat_t[flat_s < 0]
    internal_bad = (~border) & ((edge_tris[:, 0] < 0) | (edge_tris[:, 1] < 0))
    if np.any(internal_bad):
        e = int(np.flatnonzero(internal_bad)[0])
        raise MeshError(f"inconsistent orientation across edge {tuple(edges[e])}")

    nborder_per_tri = border[tri_edges].sum(axis=1)
    limit = 4 if allow_corner_elements else 2
    if np.any(nborder_per_tri >= limit):
        t = int(np.flatnonzero(nborder_per_tri >= limit)[0])
        raise ElementWithTwoBorderEdges(f"triangle {t} has {nborder_per_tri[t]} border edges")

    edge_class = np.full(ne, INTERNAL, dtype=np.int8)
    for e in np.flatnonzero(border):
        i, j = int(edges[e, 0]), int(edges[e, 1])
        edge_class[e] = _lookup_tag(boundary_tags, i, j, points)

    used = np.zeros(nv, dtype=bool)
    used[tris.ravel()] = True
    if not used.all():
        raise DisconnectedMesh(f"{int((~used).sum())} vertices belong to no triangle")
    internal = np.flatnonzero(~border)
    dual = sp.csr_matrix(
        (np.ones(len(internal)), (edge_tris[internal, 0], edge_tris[internal, 1])), shape=(nt, nt)
    )
    ncomp, _ = connected_components(dual, directed=False)
    if ncomp != 1:
        raise DisconnectedMesh(f"mesh has {ncomp} connected components")

    loops = _boundary_loops(points, edges[border])
    areas = [_polygon_area(points[loop]) for loop in loops]
    outer = int(np.argmax(np.abs(areas))) if loops else -1
    holes = [loop for i, loop in enumerate(loops) if i != outer]

    mesh = Mesh(
        points=points,
        triangles=tris,
        edges=edges,
        edge_class=edge_class,
        tri_edges=tri_edges,
        tri_signs=tri_signs,
        edge_tris=edge_tris,
        boundary_loops=loops,
        hole_loops=holes,
    )
    c = mesh.counts()
    if c["T"] - c["E"] + c["V"] != 1 - c["holes"]:
        raise MeshError(
            f"Euler identity violated: T-E+V={c['T'] - c['E'] + c['V']}, 1-h={1 - c['holes']}"
        )
    return mesh


def _lookup_tag(tags: TagSpec, i: int, j: int, points: np.ndarray) -> int:
    if callable(tags):
        raw = tags(points[i], points[j])
    else:
        raw = tags.get((i, j), tags.get((j, i)))
    if raw is None:
        raise UntaggedBorderEdge(f"border edge ({i}, {j}) has no boundary tag")
    try:
        return _TAG_CODES[raw]
    except KeyError:
        raise UntaggedBorderEdge(f"border edge ({i}, {j}) has unknown tag {raw!r}") from None


def _boundary_loops(points: np.ndarray, bedges: np.ndarray) -> list[np.ndarray]:
    nbr: dict[int, list[int]] = {}
    for i, j in bedges:
        nbr.setdefault(int(i), []).append(int(j))
        nbr.setdefault(int(j), []).append(int(i))
    if any(len(v) != 2 for v in nbr.values()):
        raise MeshError("boundary vertex shared by more than two border edges (pinched boundary)")
    seen: set[int] = set()
    loops = []
    for start in sorted(nbr):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = start, nbr[start][0]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            a, b = nbr[cur]
            prev, cur = cur, (b if a == prev else a)
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ---------------------------------------------------------------------------
# boundary / co-boundary
# ---------------------------------------------------------------------------


def boundary(mesh: Mesh, ids: Iterable[int], kind: str = "triangles") -> set[int]:
    """Mod-2 boundary: triangles -> edges, or edges -> vertices."""
    ids = np.fromiter(ids, dtype=np.int64)
    if kind == "triangles":
        members = mesh.tri_edges[ids].ravel()
    elif kind == "edges":
        members = mesh.edges[ids].ravel()
    else:
        raise ValueError(f"kind must be 'triangles' or 'edges', got {kind!r}")
    uniq, cnt = np.unique(members, return_counts=True)
    return {int(u) for u in uniq[cnt % 2 == 1]}


def co_boundary(mesh: Mesh, entity: int, kind: str = "vertex") -> set[int]:
    """Edges ending at a vertex, or triangles containing an edge."""
    if kind == "vertex":
        row = mesh.vertex_edge_incidence.getrow(entity)
        return {int(e) for e in row.indices}
    if kind == "edge":
        return {int(t) for t in mesh.edge_tris[entity] if t >= 0}
    raise ValueError(f"kind must be 'vertex' or 'edge', got {kind!r}")


def star_patch(mesh: Mesh, vertex: int) -> set[int]:
    """Triangles sharing ``vertex`` (co-boundary applied twice)."""
    out: set[int] = set()
    for e in co_boundary(mesh, vertex, "vertex"):
        out |= co_boundary(mesh, e, "edge")
    return out


# ---------------------------------------------------------------------------
# algebraic topology
# ---------------------------------------------------------------------------


def incidence_matrix(mesh: Mesh) -> sp.csc_matrix:
    """Signed |T| x |E_int| integer matrix of orientation coefficients."""
    ie = mesh.internal_edges
    t_plus = mesh.edge_tris[ie, 0]
    t_minus = mesh.edge_tris[ie, 1]
    cols = np.arange(len(ie))
    rows = np.concatenate([t_plus, t_minus])
    vals = np.concatenate([np.ones(len(ie), np.int64), -np.ones(len(ie), np.int64)])
    return sp.csc_matrix(
        (vals, (rows, np.concatenate([cols, cols]))), shape=(mesh.n_triangles, len(ie))
    )


def kernel_basis(mesh: Mesh, delta: sp.spmatrix | None = None) -> KernelBasisN:
    """Star-patch columns (one per interior vertex) and one loop per hole.

    A star column is +1 on internal edges leaving the vertex and -1 on those
    entering it.  A hole column is the sum of the star columns of the vertices
    on that hole's boundary restricted to internal edges; the border-edge
    contributions cancel around the closed loop, which is what makes it a
    kernel vector.
    """
    if delta is None:
        delta = incidence_matrix(mesh)
    star = (-mesh.vertex_edge_incidence).T.tocsr()  # (ne, nv): +1 leaving, -1 entering
    star_int = star[mesh.internal_edges]
    iv = mesh.interior_vertices
    N_V = star_int[:, iv].tocsc()

    cols = []
    for k, loop in enumerate(mesh.hole_loops):
        full = np.asarray(star[:, loop].sum(axis=1)).ravel()
        if np.any(full[mesh.border_edges] != 0):
            raise HoleLoopNotFound(f"hole {k}: boundary contributions do not cancel")
        col = full[mesh.internal_edges]
        if not np.any(col):
            raise HoleLoopNotFound(f"hole {k}: empty loop")
        cols.append(sp.csc_matrix(col.reshape(-1, 1).astype(np.int64)))
    if cols:
        N_h = sp.hstack(cols, format="csc")
    else:
        N_h = sp.csc_matrix((len(mesh.internal_edges), 0), dtype=np.int64)
    if (delta @ N_h).count_nonzero():
        raise HoleLoopNotFound("hole loop is not annihilated by the incidence matrix")
    return KernelBasisN(N_V=N_V.astype(np.int64), N_h=N_h, interior_vertices=iv)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def read_mesh(path) -> Mesh:
    """Read ``nv nt ne_tagged`` / coordinates / 1-based triangles / tagged edges."""
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip() and not line.lstrip().startswith("#")]
    try:
        nv, nt, ne = (int(v) for v in tokens[0][:3])
        pts = np.array([[float(v) for v in row[:2]] for row in tokens[1 : 1 + nv]])
        tris = np.array([[int(v) - 1 for v in row[:3]] for row in tokens[1 + nv : 1 + nv + nt]])
        tag_rows = tokens[1 + nv + nt : 1 + nv + nt + ne]
        tags = {(int(r[0]) - 1, int(r[1]) - 1): r[2] for r in tag_rows}
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(pts) != nv or len(tris) != nt or len(tag_rows) != ne:
        raise MeshError(f"malformed mesh file {path}: section sizes do not match header")
    return build_mesh(pts, tris, tags)


def write_mesh(mesh: Mesh, path) -> None:
    code = {NEUMANN: "N", DIRICHLET: "D"}
    be = mesh.border_edges
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(be)}\n")
        for x, y in mesh.points:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for t in mesh.triangles + 1:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")
        for e in be:
            i, j = mesh.edges[e] + 1
            fh.write(f"{i} {j} {code[int(mesh.edge_class[e])]}\n")
