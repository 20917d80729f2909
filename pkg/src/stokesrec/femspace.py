"""Taylor-Hood space layout: biquadratic velocity, bilinear pressure.

Scalar velocity nodes are the mesh vertices, edge midpoints and cell
centers.  Per component they are split into two contiguous blocks:

* interior block [0, N): nodes off the unknown boundary, including nodes
  on the known boundary (those are flagged ``constrained`` and eliminated
  from all test spaces),
* boundary block [N, N + N_b): nodes on the unknown boundary.

Within each block nodes are ordered lexicographically by (y, x), ties
broken by node kind (vertex < edge midpoint < center).  Pressure
coefficients are indexed by mesh vertex, so Ntilde equals the vertex
count.  Vector fields stack components: entry c * (N + N_b) + i is
component c at scalar node i.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh, MeshError, _cell_edge_map, _edge_key

KIND_VERTEX, KIND_EDGE, KIND_CENTER = 0, 1, 2


@dataclass
class DofLayout:
    mesh: Mesh
    unknown_markers: frozenset[int]
    N: int
    N_b: int
    node_xy: np.ndarray  # (N + N_b, 2), by scalar dof index
    node_kind: np.ndarray  # (N + N_b,) int8
    constrained: np.ndarray  # (N + N_b,) bool, True only inside [0, N)
    cell_dofs: np.ndarray  # (C, 9) scalar dof per cell, local order of quadrature.Q2_NODES

    d: int = 2

    @property
    def T(self) -> int:
        """Scalar velocity dofs per component."""
        return self.N + self.N_b

    @property
    def Ntilde(self) -> int:
        return self.mesh.num_vertices

    @property
    def vel_size(self) -> int:
        return self.d * self.T

    @cached_property
    def interior_idx(self) -> np.ndarray:
        """Velocity dof indices of the interior blocks of both components."""
        one = np.arange(self.N)
        return np.concatenate([one + c * self.T for c in range(self.d)])

    @cached_property
    def boundary_idx(self) -> np.ndarray:
        one = np.arange(self.N, self.T)
        return np.concatenate([one + c * self.T for c in range(self.d)])

    @cached_property
    def free_mask(self) -> np.ndarray:
        """Within the stacked interior block (length d*N): unconstrained dofs."""
        return np.concatenate([~self.constrained[: self.N]] * self.d)

    def __post_init__(self):
        for arr in (self.node_xy, self.node_kind, self.constrained, self.cell_dofs):
            arr.setflags(write=False)


def build_layout(mesh: Mesh, unknown_markers=None) -> DofLayout:
    """Number the scalar velocity nodes of the Taylor-Hood space.

    ``unknown_markers`` selects the part of the boundary carrying unknown
    velocity data (by marker id or name); ``None`` means the whole
    boundary.  An empty set is the degenerate all-known layout used only
    for plain boundary value solves.  A vertex shared by an unknown and a
    known edge is kept in the known (constrained) block, which pins the
    unknown trace at the junction.
    """
    name_to_id = {v: k for k, v in mesh.markers.items()}
    if unknown_markers is None:
        ids = frozenset(mesh.markers)
    else:
        ids = set()
        for m in unknown_markers:
            if isinstance(m, str):
                if m not in name_to_id:
                    raise MeshError(f"unknown boundary marker name {m!r}")
                ids.add(name_to_id[m])
            else:
                if int(m) not in mesh.markers:
                    raise MeshError(f"unknown boundary marker id {int(m)}")
                ids.add(int(m))
        ids = frozenset(ids)

    V = mesh.num_vertices
    C = mesh.num_cells
    owners = _cell_edge_map(mesh)
    edge_ids: dict[tuple[int, int], int] = {}
    for key in sorted(owners):
        edge_ids[key] = V + len(edge_ids)
    E = len(edge_ids)
    total = V + E + C

    xy = np.empty((total, 2))
    kind = np.empty(total, dtype=np.int8)
    xy[:V] = mesh.vertices
    kind[:V] = KIND_VERTEX
    for key, nid in edge_ids.items():
        xy[nid] = 0.5 * (mesh.vertices[key[0]] + mesh.vertices[key[1]])
    kind[V : V + E] = KIND_EDGE
    xy[V + E :] = mesh.vertices[mesh.cells].mean(axis=1)
    kind[V + E :] = KIND_CENTER

    on_unknown = np.zeros(total, dtype=bool)
    on_known = np.zeros(total, dtype=bool)
    for v0, v1, m in mesh.boundary_edges:
        tgt = on_unknown if int(m) in ids else on_known
        tgt[int(v0)] = True
        tgt[int(v1)] = True
        tgt[edge_ids[_edge_key(int(v0), int(v1))]] = True
    in_boundary_block = on_unknown & ~on_known

    order = np.lexsort((kind, xy[:, 0], xy[:, 1]))
    interior_nodes = order[~in_boundary_block[order]]
    boundary_nodes = order[in_boundary_block[order]]
    N, N_b = interior_nodes.size, boundary_nodes.size

    dof_of_node = np.empty(total, dtype=np.int64)
    dof_of_node[interior_nodes] = np.arange(N)
    dof_of_node[boundary_nodes] = N + np.arange(N_b)

    node_xy = np.empty((total, 2))
    node_kind = np.empty(total, dtype=np.int8)
    node_xy[dof_of_node] = xy
    node_kind[dof_of_node] = kind

    constrained = np.zeros(total, dtype=bool)
    constrained[dof_of_node[(on_known | on_unknown) & ~in_boundary_block]] = True

    cell_dofs = np.empty((C, 9), dtype=np.int64)
    cell_dofs[:, :4] = dof_of_node[mesh.cells]
    for c in range(C):
        for k in range(4):
            key = _edge_key(int(mesh.cells[c, k]), int(mesh.cells[c, (k + 1) % 4]))
            cell_dofs[c, 4 + k] = dof_of_node[edge_ids[key]]
    cell_dofs[:, 8] = dof_of_node[V + E + np.arange(C)]

    return DofLayout(
        mesh=mesh,
        unknown_markers=ids,
        N=N,
        N_b=N_b,
        node_xy=node_xy,
        node_kind=node_kind,
        constrained=constrained,
        cell_dofs=cell_dofs,
    )


@dataclass
class TraceMesh:
    """Quadratic 1D segments covering the unknown boundary, arc-length metric.

    ``segments[s]`` holds the three boundary-block indices (end0, mid,
    end1) in loop direction; -1 marks a pinned junction endpoint that is
    not part of the boundary block.  ``cells``/``local_edge``/``flip``
    identify the owning 2D cell for in-cell trace evaluation.
    """

    layout: DofLayout
    segments: np.ndarray  # (S, 3) int, boundary block indices or -1
    lengths: np.ndarray  # (S,)
    normals: np.ndarray  # (S, 2) outward unit normals
    endpoints: np.ndarray  # (S, 2, 2) coordinates in loop direction
    cells: np.ndarray  # (S,) owning cell
    local_edge: np.ndarray  # (S,) local edge index in the owning cell
    flip: np.ndarray  # (S,) bool, loop direction opposite to the cell's

    def total_length(self) -> float:
        return float(self.lengths.sum())


def trace_mesh(layout: DofLayout) -> TraceMesh:
    mesh = layout.mesh
    owners = _cell_edge_map(mesh)
    edge_rows = [
        (int(v0), int(v1))
        for v0, v1, m in mesh.boundary_edges
        if int(m) in layout.unknown_markers
    ]
    if not edge_rows:
        raise MeshError("layout has no unknown boundary edges to trace")

    # scalar dof id of every mesh entity, inverted from cell_dofs
    dof_of_vertex = np.empty(mesh.num_vertices, dtype=np.int64)
    dof_of_vertex[mesh.cells.ravel()] = layout.cell_dofs[:, :4].ravel()
    mid_dof: dict[tuple[int, int], int] = {}
    for c, cell in enumerate(mesh.cells):
        for k in range(4):
            key = _edge_key(int(cell[k]), int(cell[(k + 1) % 4]))
            mid_dof[key] = int(layout.cell_dofs[c, 4 + k])

    S = len(edge_rows)
    segments = np.empty((S, 3), dtype=np.int64)
    lengths = np.empty(S)
    normals = np.empty((S, 2))
    endpoints = np.empty((S, 2, 2))
    cells = np.empty(S, dtype=np.int64)
    local_edge = np.empty(S, dtype=np.int64)
    flip = np.zeros(S, dtype=bool)

    def block_index(dof: int) -> int:
        return dof - layout.N if dof >= layout.N else -1

    for s, (v0, v1) in enumerate(edge_rows):
        key = _edge_key(v0, v1)
        c, k = owners[key][0]
        cells[s] = c
        local_edge[s] = k
        flip[s] = int(mesh.cells[c, k]) != v0
        segments[s] = (
            block_index(int(dof_of_vertex[v0])),
            block_index(mid_dof[key]),
            block_index(int(dof_of_vertex[v1])),
        )
        p0, p1 = mesh.vertices[v0], mesh.vertices[v1]
        endpoints[s, 0], endpoints[s, 1] = p0, p1
        t = p1 - p0
        ln = float(np.hypot(*t))
        if ln <= 0:
            raise MeshError(f"zero-length boundary edge ({v0}, {v1})")
        lengths[s] = ln
        normals[s] = (t[1] / ln, -t[0] / ln)
        if segments[s, 1] < 0:
            raise MeshError(f"edge midpoint of ({v0}, {v1}) missing from boundary block")

    return TraceMesh(
        layout=layout,
        segments=segments,
        lengths=lengths,
        normals=normals,
        endpoints=endpoints,
        cells=cells,
        local_edge=local_edge,
        flip=flip,
    )
