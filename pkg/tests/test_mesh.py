import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokesrec.mesh import (
    Mesh,
    MeshError,
    boundary_loops,
    export_mesh,
    generate_square_with_hole,
    generate_unit_square,
    import_mesh,
    validate,
)


@pytest.mark.parametrize("n,cells,verts,bedges", [(1, 4, 9, 8), (2, 16, 25, 16), (3, 64, 81, 32)])
def test_square_counts(n, cells, verts, bedges):
    mesh = generate_unit_square(n)
    assert mesh.num_cells == cells
    assert mesh.num_vertices == verts
    assert mesh.boundary_edges.shape[0] == bedges
    assert mesh.markers == {0: "boundary"}


def test_square_counts_n6():
    mesh = generate_unit_square(6)
    assert mesh.num_cells == 4096
    assert mesh.num_vertices == 4225
    assert mesh.area() == pytest.approx(1.0, abs=1e-14)


def test_square_area_exact():
    assert generate_unit_square(2).area() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize(
    "n,cells,verts",
    [(1, 160, 192), (2, 640, 704), (4, 10240, 10496)],
)
def test_hole_counts(n, cells, verts):
    mesh = generate_square_with_hole(n)
    assert mesh.num_cells == cells
    assert mesh.num_vertices == verts
    # hole loop has as many edges as angular stations
    a = 16 * 2**n
    assert mesh.boundary_edges.shape[0] == 2 * a
    assert mesh.markers == {0: "outer", 1: "hole"}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_hole_area_is_square_minus_inscribed_polygon(n):
    # straight-edged cells tile the square minus the polygon inscribed in
    # the circle, so the mesh area has a closed form
    mesh = generate_square_with_hole(n, radius=0.1)
    a = 16 * 2**n
    poly = 0.5 * a * 0.1**2 * np.sin(2 * np.pi / a)
    assert mesh.area() == pytest.approx(1.0 - poly, abs=1e-12)
    assert mesh.area() < 1.0 - np.pi * 0.01 + 1e-3


def test_hole_geometry_guards():
    with pytest.raises(MeshError):
        generate_square_with_hole(2, center=(0.05, 0.5), radius=0.1)
    with pytest.raises(ValueError):
        generate_square_with_hole(0)
    with pytest.raises(ValueError):
        generate_square_with_hole(2, radius=-1.0)


def test_boundary_loops_orientation():
    mesh = generate_square_with_hole(1)
    loops = boundary_loops(mesh)
    assert len(loops) == 2
    outer, hole = loops

    def signed_area(vs):
        p = mesh.vertices[vs]
        q = np.roll(p, -1, axis=0)
        return 0.5 * np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1])

    assert outer[1] == {0}
    assert hole[1] == {1}
    assert signed_area(outer[0]) > 0  # outer counter clockwise
    assert signed_area(hole[0]) < 0  # hole clockwise


def test_validate_catches_bad_vertex_reference():
    mesh = generate_unit_square(1)
    bad = Mesh(mesh.vertices, mesh.cells.copy(), mesh.boundary_edges, dict(mesh.markers))
    bad.cells[0, 0] = 999
    with pytest.raises(MeshError, match="out of range"):
        validate(bad)


def test_validate_catches_clockwise_cell():
    mesh = generate_unit_square(1)
    bad = Mesh(mesh.vertices, mesh.cells.copy(), mesh.boundary_edges, dict(mesh.markers))
    bad.cells[0] = bad.cells[0, ::-1]
    with pytest.raises(MeshError, match="counter clockwise"):
        validate(bad)


def test_validate_catches_missing_boundary_edge():
    mesh = generate_unit_square(1)
    bad = Mesh(mesh.vertices, mesh.cells, mesh.boundary_edges[:-1], dict(mesh.markers))
    with pytest.raises(MeshError, match="not declared"):
        validate(bad)


def test_validate_catches_unknown_marker():
    mesh = generate_unit_square(1)
    edges = mesh.boundary_edges.copy()
    edges[0, 2] = 7
    bad = Mesh(mesh.vertices, mesh.cells, edges, dict(mesh.markers))
    with pytest.raises(MeshError, match="marker"):
        validate(bad)


def test_validate_catches_reversed_boundary_edge():
    mesh = generate_unit_square(1)
    edges = mesh.boundary_edges.copy()
    edges[0, :2] = edges[0, 1::-1]
    bad = Mesh(mesh.vertices, mesh.cells, edges, dict(mesh.markers))
    with pytest.raises(MeshError, match="oriented against"):
        validate(bad)


def test_export_import_roundtrip_exact(tmp_path):
    mesh = generate_square_with_hole(1)
    path = tmp_path / "ring.mesh"
    export_mesh(mesh, path)
    back = import_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.cells, mesh.cells)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
    assert back.markers == mesh.markers


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=4))
def test_roundtrip_preserves_arbitrary_coordinates(tmp_path_factory, offsets):
    # full-precision repr output must survive a write/read cycle bit for bit
    mesh = generate_unit_square(1)
    verts = mesh.vertices.copy()
    verts[0] += offsets[0] * 1e-7
    verts[4] += offsets[1] * 1e-7
    verts[8] += offsets[2] * 1e-9
    verts[2, 1] += abs(offsets[3]) * 1e-9
    mesh = Mesh(verts, mesh.cells, mesh.boundary_edges, dict(mesh.markers))
    path = tmp_path_factory.mktemp("mesh") / "m.mesh"
    export_mesh(mesh, path)
    back = import_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)


def test_import_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("mesh 3\nvertices 0\ncells 0\nboundary 0\nmarkers 0\n")
    with pytest.raises(MeshError, match="line 1"):
        import_mesh(path)


def test_import_rejects_truncated_file(tmp_path):
    path = tmp_path / "short.mesh"
    path.write_text("mesh 2\nvertices 4\n0.0 0.0\n1.0 0.0\n")
    with pytest.raises(MeshError, match="unexpected end"):
        import_mesh(path)


def test_import_reorients_flipped_boundary_edges(tmp_path):
    # files may write boundary edges in either direction; import fixes them
    mesh = generate_unit_square(1)
    path = tmp_path / "flip.mesh"
    export_mesh(mesh, path)
    lines = path.read_text().splitlines()
    k = lines.index("boundary 8") + 1
    v0, v1, m = lines[k].split()
    lines[k] = f"{v1} {v0} {m}"
    path.write_text("\n".join(lines) + "\n")
    back = import_mesh(path)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)


def test_import_ignores_comments_and_blank_lines(tmp_path):
    mesh = generate_unit_square(1)
    path = tmp_path / "c.mesh"
    export_mesh(mesh, path)
    text = "# header comment\n\n" + path.read_text().replace(
        "cells 4", "cells 4  # four cells"
    )
    path.write_text(text)
    back = import_mesh(path)
    assert np.array_equal(back.cells, mesh.cells)
