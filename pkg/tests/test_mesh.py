import numpy as np
import pytest

from authalic import mesh
from authalic.errors import MeshLoadError, MeshValidationError


def test_triangle_area_unit_right():
    assert mesh.triangle_area((0, 0, 0), (1, 0, 0), (0, 1, 0)) == 0.5


def test_triangle_area_collinear():
    assert mesh.triangle_area((0, 0, 0), (2, 0, 0), (1, 0, 0)) == 0.0


def test_triangle_area_axis_aligned():
    assert mesh.triangle_area((0, 0, 0), (1, 0, 0), (0, 0, 2)) == 1.0


def single_triangle():
    return mesh.TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])


def unit_square():
    return mesh.TriMesh(
        [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)],
        [(0, 1, 2), (0, 2, 3)],
    )


def closed_octahedron():
    v = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    f = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
         (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    return v, f


def test_single_triangle_mesh():
    m = single_triangle()
    assert m.n_vertices == 3
    assert m.n_faces == 1
    assert m.total_area == pytest.approx(0.5, abs=1e-15)
    assert len(m.boundary_loop) == 3


def test_unit_square_mesh():
    m = unit_square()
    assert m.total_area == pytest.approx(1.0, abs=1e-15)
    assert len(m.boundary_loop) == 4
    assert m.total_area == pytest.approx(m.face_areas.sum(), rel=1e-12)


def test_closed_surface_rejected():
    v, f = closed_octahedron()
    with pytest.raises(MeshValidationError, match="no boundary"):
        mesh.TriMesh(v, f)


def test_non_manifold_edge_rejected():
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, -1, 0)]
    f = [(0, 1, 2), (1, 0, 3), (0, 1, 4)]
    with pytest.raises(MeshValidationError):
        mesh.TriMesh(v, f)


def test_inconsistent_orientation_rejected():
    v = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
    f = [(0, 1, 2), (0, 3, 2)]  # second face reversed
    with pytest.raises(MeshValidationError):
        mesh.TriMesh(v, f)


def test_degenerate_face_rejected():
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0.5, 0.5 + 1e-16, 0)]
    f = [(0, 1, 3), (0, 3, 2), (1, 2, 3)]  # last one hugs the diagonal
    with pytest.raises(MeshValidationError, match="degenerate"):
        mesh.TriMesh(v, f)


def test_unreferenced_vertex_rejected():
    with pytest.raises(MeshValidationError, match="not referenced"):
        mesh.TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (5, 5, 5)], [(0, 1, 2)])


def test_boundary_edges_are_multiplicity_one():
    m = mesh.generate_cap("paraboloid", 200, 0)
    counts = {}
    for a, b, c in m.faces:
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            counts[key] = counts.get(key, 0) + 1
    expected = {e for e, n in counts.items() if n == 1}
    loop = m.boundary_loop
    got = {(min(a, b), max(a, b))
           for a, b in zip(loop, np.roll(loop, -1))}
    assert got == expected


def test_orientation_reversal_keeps_areas():
    m = mesh.generate_cap("bumpy_disk", 200, 2)
    rev = mesh.TriMesh(m.vertices, m.faces[:, ::-1])
    np.testing.assert_allclose(rev.face_areas, m.face_areas, rtol=1e-13)
    assert set(rev.boundary_loop) == set(m.boundary_loop)


@pytest.mark.parametrize("kind", ["hemisphere", "paraboloid", "bumpy_disk"])
def test_generate_cap_structure(kind):
    m = mesh.generate_cap(kind, 1000, 0)
    assert abs(m.n_vertices - 1000) < 250
    part = m.partition()
    assert part.n_b + part.n_i == m.n_vertices
    # every face touches at least one interior vertex
    on_boundary = np.zeros(m.n_vertices, dtype=bool)
    on_boundary[m.boundary_loop] = True
    assert not on_boundary[m.faces].all(axis=1).any()


def test_generate_cap_deterministic():
    a = mesh.generate_cap("bumpy_disk", 1000, 0)
    b = mesh.generate_cap("bumpy_disk", 1000, 0)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.faces, b.faces)
    c = mesh.generate_cap("bumpy_disk", 1000, 1)
    assert not np.array_equal(a.vertices, c.vertices)


def test_generate_cap_resolution_too_small():
    with pytest.raises(ValueError, match="resolution too small"):
        mesh.generate_cap("paraboloid", 15, 0)


def test_generate_cap_unknown_kind():
    with pytest.raises(ValueError):
        mesh.generate_cap("torus", 100, 0)


def test_validate_single_triangle_flagged():
    rep = mesh.validate_for_parameterization(single_triangle())
    assert list(rep.all_boundary_faces) == [0]
    assert not rep.clean


def test_validate_unit_square_both_flagged():
    rep = mesh.validate_for_parameterization(unit_square())
    assert list(rep.all_boundary_faces) == [0, 1]


def test_validate_hemisphere_clean(hemisphere_small):
    rep = mesh.validate_for_parameterization(hemisphere_small)
    # independent enumeration: faces whose vertices all sit on the boundary
    on_b = set(hemisphere_small.boundary_loop.tolist())
    expect = [i for i, f in enumerate(hemisphere_small.faces)
              if all(v in on_b for v in f)]
    assert list(rep.all_boundary_faces) == expect == []
    assert len(rep.sliver_faces) == 0


@pytest.mark.parametrize("fmt", ["off", "obj"])
def test_roundtrip(tmp_path, fmt):
    m = mesh.generate_cap("bumpy_disk", 300, 4)
    path = tmp_path / f"cap.{fmt}"
    mesh.write_mesh(path, m)
    back = mesh.load_mesh(path)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=0, atol=1e-12)
    assert np.array_equal(back.faces, m.faces)


def test_obj_with_texture_coords(tmp_path):
    m = single_triangle()
    uv = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    path = tmp_path / "tri.obj"
    mesh.write_mesh(path, m, uv=uv)
    text = path.read_text()
    assert text.count("vt ") == 3
    assert "f 1/1 2/2 3/3" in text
    back = mesh.load_mesh(path)  # reader ignores vt references
    assert np.array_equal(back.faces, m.faces)


def test_off_quad_rejected(tmp_path):
    path = tmp_path / "quad.off"
    path.write_text("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(MeshLoadError, match="triangle"):
        mesh.load_mesh(path)


def test_obj_quad_rejected(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshLoadError, match="triangle"):
        mesh.load_mesh(path)


def test_off_with_comments_and_header_variants(tmp_path):
    path = tmp_path / "tri.off"
    path.write_text("# comment\nOFF 3 1 0\n0 0 0\n1 0 0 # inline\n0 1 0\n3 0 1 2\n")
    m = mesh.load_mesh(path)
    assert m.n_vertices == 3


def test_obj_slash_references(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1\n")
    m = mesh.load_mesh(path)
    assert m.n_faces == 1


def test_missing_file():
    with pytest.raises(MeshLoadError):
        mesh.load_mesh("/nonexistent/mesh.off")


def test_unsupported_format(tmp_path):
    with pytest.raises(MeshLoadError, match="unsupported"):
        mesh.load_mesh(tmp_path / "mesh.stl")
