"""Quadrilateral meshes with marked boundary loops.

A mesh is a flat container: vertex coordinates, counter-clockwise cell
4-tuples, and oriented boundary edges tagged with integer marker ids.
Boundary edges are oriented so the domain lies on their left, which makes
the outer loop counter clockwise and hole loops clockwise; the outward
normal of a directed edge (t is the unit tangent) is (t_y, -t_x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised for malformed meshes or unparseable mesh files."""


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 2) float
    cells: np.ndarray  # (C, 4) int, CCW
    boundary_edges: np.ndarray  # (E, 3) int: v0, v1, marker id
    markers: dict[int, str] = field(default_factory=dict)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def cell_areas(self) -> np.ndarray:
        x = self.vertices[self.cells, 0]
        y = self.vertices[self.cells, 1]
        xn = np.roll(x, -1, axis=1)
        yn = np.roll(y, -1, axis=1)
        return 0.5 * np.sum(x * yn - xn * y, axis=1)

    def area(self) -> float:
        return float(self.cell_areas().sum())


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _cell_edge_map(mesh: Mesh) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Map undirected edge -> list of (cell, local edge index)."""
    owners: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for c, cell in enumerate(mesh.cells):
        for k in range(4):
            key = _edge_key(int(cell[k]), int(cell[(k + 1) % 4]))
            owners.setdefault(key, []).append((c, k))
    return owners


def validate(mesh: Mesh) -> None:
    """Check the structural invariants; raises MeshError naming the offender."""
    V = mesh.num_vertices
    if mesh.vertices.ndim != 2 or mesh.vertices.shape[1] != 2:
        raise MeshError("vertices must be a (V, 2) array")
    if np.any(mesh.cells < 0) or np.any(mesh.cells >= V):
        raise MeshError("cell references a vertex out of range")
    for c, cell in enumerate(mesh.cells):
        if len(set(int(v) for v in cell)) != 4:
            raise MeshError(f"cell {c} repeats a vertex")
    areas = mesh.cell_areas()
    bad = np.nonzero(areas <= 0)[0]
    if bad.size:
        raise MeshError(f"cell {bad[0]} is not counter clockwise or degenerate")

    owners = _cell_edge_map(mesh)
    interior_ok = all(len(v) <= 2 for v in owners.values())
    if not interior_ok:
        key = next(k for k, v in owners.items() if len(v) > 2)
        raise MeshError(f"edge {key} is shared by more than two cells")

    declared = set()
    for e, (v0, v1, m) in enumerate(mesh.boundary_edges):
        key = _edge_key(int(v0), int(v1))
        if key in declared:
            raise MeshError(f"boundary edge {e} duplicates {key}")
        declared.add(key)
        own = owners.get(key)
        if own is None:
            raise MeshError(f"boundary edge {e} = {key} is not an edge of any cell")
        if len(own) != 1:
            raise MeshError(f"boundary edge {e} = {key} lies on two cells")
        if int(m) not in mesh.markers:
            raise MeshError(f"boundary edge {e} carries unknown marker id {int(m)}")

    free = {k for k, v in owners.items() if len(v) == 1}
    missing = free - declared
    if missing:
        raise MeshError(f"cell edge {sorted(missing)[0]} is on the boundary but not declared")

    # orientation: the single owning cell must traverse the edge as written
    for e, (v0, v1, _) in enumerate(mesh.boundary_edges):
        c, k = owners[_edge_key(int(v0), int(v1))][0]
        a, b = int(mesh.cells[c, k]), int(mesh.cells[c, (k + 1) % 4])
        if (a, b) != (int(v0), int(v1)):
            raise MeshError(
                f"boundary edge {e} = ({int(v0)}, {int(v1)}) is oriented against its cell"
            )

    # every boundary vertex must have exactly one outgoing and one incoming edge
    outdeg: dict[int, int] = {}
    indeg: dict[int, int] = {}
    for v0, v1, _ in mesh.boundary_edges:
        outdeg[int(v0)] = outdeg.get(int(v0), 0) + 1
        indeg[int(v1)] = indeg.get(int(v1), 0) + 1
    for v in set(outdeg) | set(indeg):
        if outdeg.get(v, 0) != 1 or indeg.get(v, 0) != 1:
            raise MeshError(f"boundary at vertex {v} does not form closed loops")


def _orient_boundary(mesh: Mesh) -> None:
    """Flip boundary edges written against their owning cell's orientation."""
    owners = _cell_edge_map(mesh)
    for e, (v0, v1, m) in enumerate(mesh.boundary_edges):
        own = owners.get(_edge_key(int(v0), int(v1)))
        if own and len(own) == 1:
            c, k = own[0]
            a, b = int(mesh.cells[c, k]), int(mesh.cells[c, (k + 1) % 4])
            if (a, b) == (int(v1), int(v0)):
                mesh.boundary_edges[e, 0], mesh.boundary_edges[e, 1] = a, b


def boundary_loops(mesh: Mesh):
    """Ordered boundary loops as (vertex array, marker id set) pairs.

    The outer loop (positive signed area) comes first, holes follow in
    ascending order of their smallest marker id.
    """
    nxt: dict[int, tuple[int, int]] = {}
    for v0, v1, m in mesh.boundary_edges:
        if int(v0) in nxt:
            raise MeshError(f"boundary vertex {int(v0)} has two outgoing edges")
        nxt[int(v0)] = (int(v1), int(m))
    loops = []
    seen: set[int] = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        verts = [start]
        marks = set()
        v = start
        while True:
            if v not in nxt:
                raise MeshError(f"boundary loop through vertex {start} is not closed")
            v, m = nxt[v]
            marks.add(m)
            if v == start:
                break
            if v in seen:
                raise MeshError(f"boundary loops intersect at vertex {v}")
            verts.append(v)
        seen.update(verts)
        loops.append((np.array(verts, dtype=np.int64), marks))

    def signed_area(verts):
        p = mesh.vertices[verts]
        q = np.roll(p, -1, axis=0)
        return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))

    # outer loop (positive area) first, then holes by ascending marker id
    loops.sort(key=lambda lm: (signed_area(lm[0]) <= 0, min(lm[1])))
    return loops


def generate_unit_square(n: int) -> Mesh:
    """Uniform quad mesh of (0,1)^2 with 2^n cells per side.

    The single boundary marker is ``0: boundary``.  Vertices are numbered
    row by row from the origin, so meshes nest under refinement.
    """
    if n < 0:
        raise ValueError("refinement level must be nonnegative")
    m = 2**n
    h = 1.0 / m
    ij = np.arange(m + 1)
    X, Y = np.meshgrid(ij * h, ij * h, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(ix, iy):
        return iy * (m + 1) + ix

    cells = np.empty((m * m, 4), dtype=np.int64)
    c = 0
    for iy in range(m):
        for ix in range(m):
            cells[c] = (vid(ix, iy), vid(ix + 1, iy), vid(ix + 1, iy + 1), vid(ix, iy + 1))
            c += 1

    edges = []
    for ix in range(m):  # bottom, left to right
        edges.append((vid(ix, 0), vid(ix + 1, 0), 0))
    for iy in range(m):  # right, upward
        edges.append((vid(m, iy), vid(m, iy + 1), 0))
    for ix in range(m, 0, -1):  # top, right to left
        edges.append((vid(ix, m), vid(ix - 1, m), 0))
    for iy in range(m, 0, -1):  # left, downward
        edges.append((vid(0, iy), vid(0, iy - 1), 0))

    mesh = Mesh(vertices, cells, np.array(edges, dtype=np.int64), {0: "boundary"})
    validate(mesh)
    return mesh


def generate_square_with_hole(
    n: int, center=(0.5, 0.5), radius: float = 0.1
) -> Mesh:
    """Structured annular mesh of the unit square with a circular hole.

    The mesh is a single ring of cells between the inscribed polygon of the
    circle and the outer square: 16 * 2^n stations around, 5 * 2^(n-1)
    layers outward, giving 40 * 4^n cells.  Markers are ``0: outer`` and
    ``1: hole``.  Requires n >= 1 and the closed ball strictly inside the
    square.
    """
    if n < 1:
        raise ValueError("square-with-hole meshes need refinement level n >= 1")
    cx, cy = float(center[0]), float(center[1])
    if radius <= 0:
        raise ValueError("hole radius must be positive")
    if min(cx, cy, 1 - cx, 1 - cy) <= radius:
        raise MeshError("geometry infeasible: hole touches the outer boundary")

    a = 16 * 2**n  # angular stations
    nr = 5 * 2 ** (n - 1)  # radial layers
    theta = 2 * np.pi * np.arange(a) / a
    inner = np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])

    corners = np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0], [1.0, 0.0]])
    cang = np.arctan2(corners[:, 1] - cy, corners[:, 0] - cx) % (2 * np.pi)
    st = np.rint(cang / (2 * np.pi) * a).astype(int) % a
    if len(set(st.tolist())) != 4:
        raise MeshError("geometry infeasible: hole too close to a corner")

    outer = np.empty((a, 2))
    for c in range(4):
        j0, j1 = st[c], st[(c + 1) % 4]
        span = (j1 - j0) % a
        p0, p1 = corners[c], corners[(c + 1) % 4]
        for k in range(span):
            outer[(j0 + k) % a] = p0 + (k / span) * (p1 - p0)

    t = np.arange(nr + 1) / nr
    pts = inner[None, :, :] + t[:, None, None] * (outer - inner)[None, :, :]
    vertices = pts.reshape(-1, 2)  # ring major: index = i * a + j

    def vid(j, i):
        return i * a + (j % a)

    cells = np.empty((a * nr, 4), dtype=np.int64)
    c = 0
    for i in range(nr):
        for j in range(a):
            cells[c] = (vid(j, i), vid(j, i + 1), vid(j + 1, i + 1), vid(j + 1, i))
            c += 1

    edges = []
    for j in range(a):  # outer loop, counter clockwise
        edges.append((vid(j, nr), vid(j + 1, nr), 0))
    for j in range(a, 0, -1):  # hole loop, clockwise
        edges.append((vid(j, 0), vid(j - 1, 0), 1))

    mesh = Mesh(vertices, cells, np.array(edges, dtype=np.int64), {0: "outer", 1: "hole"})
    validate(mesh)
    return mesh


def export_mesh(mesh: Mesh, path) -> None:
    """Write the plain text mesh format (full precision, round-trip exact)."""
    lines = ["mesh 2", f"vertices {mesh.num_vertices}"]
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    lines.append(f"cells {mesh.num_cells}")
    for cell in mesh.cells:
        lines.append(" ".join(str(int(v)) for v in cell))
    lines.append(f"boundary {mesh.boundary_edges.shape[0]}")
    for v0, v1, m in mesh.boundary_edges:
        lines.append(f"{int(v0)} {int(v1)} {int(m)}")
    lines.append(f"markers {len(mesh.markers)}")
    for mid in sorted(mesh.markers):
        lines.append(f"{mid} {mesh.markers[mid]}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def import_mesh(path) -> Mesh:
    """Parse and validate a mesh file; errors carry the offending line number."""
    with open(path) as f:
        raw = f.readlines()
    rows = []  # (line number, tokens)
    for i, line in enumerate(raw, start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            rows.append((i, body.split()))

    pos = 0

    def take(what: str):
        nonlocal pos
        if pos >= len(rows):
            raise MeshError(f"unexpected end of file while reading {what}")
        row = rows[pos]
        pos += 1
        return row

    def header(keyword: str) -> int:
        ln, tok = take(f"'{keyword}' header")
        if tok[0] != keyword or len(tok) != 2:
            raise MeshError(f"line {ln}: expected '{keyword} <count>', got {' '.join(tok)}")
        try:
            return int(tok[1])
        except ValueError:
            raise MeshError(f"line {ln}: bad count in '{keyword}' header") from None

    ln, tok = take("format header")
    if tok != ["mesh", "2"]:
        raise MeshError(f"line {ln}: expected 'mesh 2' header")

    nv = header("vertices")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        ln, tok = take("vertex")
        if len(tok) != 2:
            raise MeshError(f"line {ln}: vertex needs two coordinates")
        try:
            vertices[i] = (float(tok[0]), float(tok[1]))
        except ValueError:
            raise MeshError(f"line {ln}: bad vertex coordinate") from None

    nc = header("cells")
    cells = np.empty((nc, 4), dtype=np.int64)
    for i in range(nc):
        ln, tok = take("cell")
        if len(tok) != 4:
            raise MeshError(f"line {ln}: cell needs four vertex ids")
        try:
            cells[i] = [int(t) for t in tok]
        except ValueError:
            raise MeshError(f"line {ln}: bad cell vertex id") from None

    ne = header("boundary")
    bedges = np.empty((ne, 3), dtype=np.int64)
    for i in range(ne):
        ln, tok = take("boundary edge")
        if len(tok) != 3:
            raise MeshError(f"line {ln}: boundary edge needs 'v0 v1 marker'")
        try:
            bedges[i] = [int(t) for t in tok]
        except ValueError:
            raise MeshError(f"line {ln}: bad boundary edge entry") from None

    nm = header("markers")
    markers: dict[int, str] = {}
    for i in range(nm):
        ln, tok = take("marker")
        if len(tok) < 2:
            raise MeshError(f"line {ln}: marker needs 'id name'")
        try:
            mid = int(tok[0])
        except ValueError:
            raise MeshError(f"line {ln}: bad marker id") from None
        markers[mid] = " ".join(tok[1:])
    if pos != len(rows):
        ln = rows[pos][0]
        raise MeshError(f"line {ln}: trailing content after markers section")

    mesh = Mesh(vertices, cells, bedges, markers)
    _orient_boundary(mesh)
    validate(mesh)
    return mesh
