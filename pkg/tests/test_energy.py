import math

import numpy as np
import pytest

from authalic import energy, mesh, sem
from authalic.energy import DiskMap
from authalic.errors import DegenerateMapError

from conftest import fd_gradient, random_disk_map


def polygon_area_oracle(points):
    # plain shoelace, written out independently of the package
    total = 0.0
    k = len(points)
    for i in range(k):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % k]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


def cotan_laplacian_oracle(points, faces):
    """Dense classical cotangent Laplacian via explicit angles."""
    n = len(points)
    L = np.zeros((n, n))
    for (i, j, k) in faces:
        for (a, b, c) in ((i, j, k), (j, k, i), (k, i, j)):
            u = points[a] - points[c]
            v = points[b] - points[c]
            cos = float(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
            w = 0.5 / math.tan(math.acos(np.clip(cos, -1, 1)))
            L[a, b] -= w
            L[b, a] -= w
            L[a, a] += w
            L[b, b] += w
    return L


# ---------------------------------------------------------------------------
# DiskMap plumbing


def test_pack_unpack_roundtrip(hemisphere_small):
    part = hemisphere_small.partition()
    rng = np.random.default_rng(0)
    dmap = random_disk_map(part, rng)
    back = DiskMap.unpack(part, dmap.pack())
    np.testing.assert_array_equal(back.interior_uv, dmap.interior_uv)
    np.testing.assert_array_equal(back.boundary_theta, dmap.boundary_theta)


def test_boundary_on_unit_circle_exactly(hemisphere_small):
    part = hemisphere_small.partition()
    dmap = random_disk_map(part, np.random.default_rng(1))
    xy = dmap.coords()[part.boundary]
    np.testing.assert_array_equal(
        xy, np.column_stack([np.cos(dmap.boundary_theta), np.sin(dmap.boundary_theta)]))


def test_packed_length(hemisphere_small):
    part = hemisphere_small.partition()
    dmap = random_disk_map(part, np.random.default_rng(2))
    assert len(dmap.pack()) == 2 * part.n_i + part.n_b


# ---------------------------------------------------------------------------
# Laplacian assembly


def test_identity_map_matches_classical_cotan():
    m = mesh.planar_disk(60)
    dmap = DiskMap.from_coords(m.partition(), m.vertices[:, :2])
    lap = energy.assemble_stretch_laplacian(m, dmap)
    dense = cotan_laplacian_oracle(m.vertices[:, :2], m.faces)
    np.testing.assert_allclose(lap.matrix.toarray(), dense, atol=1e-12)


def test_equilateral_weight_closed_form():
    s = math.sqrt(3) / 2
    m = mesh.TriMesh([(0, 0, 0), (1, 0, 0), (0.5, s, 0)], [(0, 1, 2)])
    image = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 2 * s]])  # scaled equilateral
    lap = energy.assemble_stretch_laplacian(m, image)
    img_area = m.total_area * 4
    expected = (1 / math.sqrt(3)) * img_area / (2 * m.total_area)
    assert lap.matrix[0, 1] == pytest.approx(-expected, rel=1e-12)
    assert lap.matrix[1, 2] == pytest.approx(-expected, rel=1e-12)


def test_row_sums_vanish_on_random_maps(hemisphere_small):
    rng = np.random.default_rng(3)
    for _ in range(5):
        dmap = random_disk_map(hemisphere_small.partition(), rng)
        lap = energy.assemble_stretch_laplacian(hemisphere_small, dmap)
        rows = np.asarray(lap.matrix.sum(axis=1)).ravel()
        assert np.abs(rows).max() < 1e-10 * np.abs(lap.matrix.data).max()


def test_laplacian_exactly_symmetric(hemisphere_small):
    dmap = random_disk_map(hemisphere_small.partition(), np.random.default_rng(4))
    m = energy.assemble_stretch_laplacian(hemisphere_small, dmap).matrix
    diff = (m - m.T)
    assert diff.nnz == 0 or np.abs(diff.data).max() == 0.0


def test_degenerate_image_clamped_and_counted():
    m = mesh.TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    collapsed = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]])  # zero image area
    lap = energy.assemble_stretch_laplacian(m, collapsed)
    assert lap.clamp_count > 0
    assert np.isfinite(lap.matrix.data).all()


# ---------------------------------------------------------------------------
# Energies


def test_stretch_energy_planar_identity(planar_400, planar_identity):
    assert energy.stretch_energy(planar_400, planar_identity) == pytest.approx(
        planar_400.total_area, rel=1e-12)


def test_stretch_energy_single_triangle():
    m = mesh.TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    image = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]])  # image area 1.0
    assert energy.stretch_energy(m, image) == pytest.approx(2.0, rel=1e-14)


def test_stretch_energy_scales_quartically(planar_400):
    coords = planar_400.vertices[:, :2]
    base = energy.stretch_energy(planar_400, coords)
    for s in (0.5, 2.0, 10.0):
        scaled = energy.stretch_energy(planar_400, s * coords)
        assert scaled == pytest.approx(s**4 * base, rel=1e-12)


def test_stretch_energy_two_formulas_agree(hemisphere_small):
    rng = np.random.default_rng(5)
    for _ in range(10):
        dmap = random_disk_map(hemisphere_small.partition(), rng)
        es = energy.stretch_energy(hemisphere_small, dmap)
        eq = energy.stretch_energy_quadratic(hemisphere_small, dmap)
        assert eq == pytest.approx(es, rel=1e-10)


def test_image_area_square():
    assert energy.image_area_polar(np.array([0, np.pi / 2, np.pi, 3 * np.pi / 2])) \
        == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("n", [3, 7, 32, 101])
def test_image_area_regular_polygon(n):
    theta = 2 * np.pi * np.arange(n) / n
    assert energy.image_area_polar(theta) == pytest.approx(
        n / 2 * math.sin(2 * math.pi / n), rel=1e-14)


def test_image_area_degenerate():
    assert energy.image_area_polar(np.full(10, 1.3)) == pytest.approx(0.0, abs=1e-15)


def test_image_area_matches_shoelace():
    rng = np.random.default_rng(6)
    for _ in range(20):
        theta = np.sort(rng.uniform(0, 2 * np.pi, rng.integers(4, 80)))
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        assert energy.image_area_polar(theta) == pytest.approx(
            polygon_area_oracle(pts), abs=1e-12)


def test_cyclic_diff_skew_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = rng.integers(3, 60)
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        assert abs(x @ energy.cyclic_diff(y) + y @ energy.cyclic_diff(x)) < 1e-12


def test_authalic_energy_zero_for_planar_identity(planar_400, planar_identity):
    assert abs(energy.normalized_authalic_energy(planar_400, planar_identity)) <= 1e-12


def test_authalic_energy_positive_for_squeezed_map(planar_400, planar_identity):
    squeezed = DiskMap(planar_identity.partition,
                       interior_uv=0.5 * planar_identity.interior_uv,
                       boundary_theta=planar_identity.boundary_theta)
    val = energy.normalized_authalic_energy(planar_400, squeezed)
    # independent evaluation of the defining formula
    coords = squeezed.coords()
    es = 0.0
    for (i, j, k), src in zip(planar_400.faces, planar_400.face_areas):
        a, b, c = coords[i], coords[j], coords[k]
        img = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        es += img * img / src
    area = polygon_area_oracle(coords[planar_400.boundary_loop])
    expect = planar_400.total_area / area * es - area
    assert val == pytest.approx(expect, rel=1e-12)
    assert val > 1e-3


def test_authalic_energy_rejects_inverted_boundary(hemisphere_small):
    part = hemisphere_small.partition()
    dmap = random_disk_map(part, np.random.default_rng(8))
    flipped = DiskMap(part, dmap.interior_uv, dmap.boundary_theta[::-1].copy())
    with pytest.raises(DegenerateMapError):
        energy.normalized_authalic_energy(hemisphere_small, flipped)


def test_scaling_law_raw_path(planar_400):
    rng = np.random.default_rng(9)
    coords = planar_400.vertices[:, :2] * 1.0
    coords[planar_400.partition().interior] += rng.normal(0, 5e-3, (planar_400.partition().n_i, 2))
    base = energy.authalic_energy_raw(planar_400, coords)
    for s in (0.5, 2.0, 10.0):
        assert energy.authalic_energy_raw(planar_400, s * coords) == pytest.approx(
            s * s * base, rel=1e-10)


# ---------------------------------------------------------------------------
# Gradients


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    m = mesh.generate_cap("bumpy_disk", 200, 5)
    part = m.partition()
    start, _ = sem.sem_run(m, 5, update_boundary=False)
    for _ in range(20):
        x = start.pack() + rng.normal(0, 3e-3, len(start.pack()))
        dmap = DiskMap.unpack(part, x)
        g = energy.grad_authalic(m, dmap)
        gfd = fd_gradient(lambda v: energy.normalized_authalic_energy(
            m, DiskMap.unpack(part, v)), x)
        assert np.linalg.norm(g - gfd) <= 1e-6 * np.linalg.norm(gfd)


def test_gradient_rotation_invariant(hemisphere_small):
    part = hemisphere_small.partition()
    rng = np.random.default_rng(11)
    dmap = random_disk_map(part, rng)
    g0 = energy.grad_authalic(hemisphere_small, dmap)
    ang = 0.83
    rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    rotated = DiskMap(part, dmap.interior_uv @ rot.T, dmap.boundary_theta + ang)
    g1 = energy.grad_authalic(hemisphere_small, rotated)
    assert np.linalg.norm(g1) == pytest.approx(np.linalg.norm(g0), rel=1e-10)


def test_area_gradient_theta_matches_fd():
    rng = np.random.default_rng(12)
    for _ in range(10):
        theta = np.sort(rng.uniform(0, 2 * np.pi, rng.integers(5, 60)))
        g = energy.area_gradient_theta(theta)
        gfd = fd_gradient(energy.image_area_polar, theta)
        assert np.abs(g - gfd).max() <= 1e-8


def test_authalic_energy_floor_random_maps(caps_small):
    m = caps_small["paraboloid"]
    part = m.partition()
    rng = np.random.default_rng(13)
    floor = -1e-10 * m.total_area
    for _ in range(100):
        dmap = random_disk_map(part, rng)
        assert energy.normalized_authalic_energy(m, dmap) >= floor
