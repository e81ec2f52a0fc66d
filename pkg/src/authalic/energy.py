"""Stretch Laplacian, stretch/authalic energies, and their gradients.

A disk map stores interior planar coordinates plus boundary polar angles;
boundary positions (cos t, sin t) sit on the unit circle by construction.
The stretch Laplacian carries the modified cotangent weights: the cotangent
of the image angle times the image-to-source face-area ratio.  The
normalized authalic energy rescales the stretch energy by total-source over
total-image area and subtracts the image area, so it is nonnegative and
vanishes exactly on area-preserving maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateMapError
from .mesh import IndexPartition, TriMesh

COT_CLAMP = 1e8
AREA_CLAMP = 1e-14


@dataclass
class DiskMap:
    """Disk parameterization unknowns: interior uv plus boundary angles.

    ``interior_uv`` is (n_I, 2); ``boundary_theta`` is (n_B,) radians in
    boundary-loop order.  The packed vector layout is
    ``(u_interior, v_interior, theta)`` of length 2 n_I + n_B.
    """

    partition: IndexPartition
    interior_uv: np.ndarray
    boundary_theta: np.ndarray

    def boundary_xy(self):
        t = self.boundary_theta
        return np.column_stack([np.cos(t), np.sin(t)])

    def coords(self):
        """Full (n, 2) planar embedding."""
        n = self.partition.n
        out = np.empty((n, 2))
        out[self.partition.interior] = self.interior_uv
        out[self.partition.boundary] = self.boundary_xy()
        return out

    def pack(self):
        return np.concatenate([
            self.interior_uv[:, 0], self.interior_uv[:, 1], self.boundary_theta,
        ])

    @classmethod
    def unpack(cls, partition, packed):
        ni = partition.n_i
        if len(packed) != 2 * ni + partition.n_b:
            raise ValueError("packed vector length does not match partition")
        return cls(partition,
                   interior_uv=np.column_stack([packed[:ni], packed[ni:2 * ni]]),
                   boundary_theta=np.asarray(packed[2 * ni:], dtype=float))

    @classmethod
    def from_coords(cls, partition, coords):
        """Build from a full embedding; boundary rows must lie on the circle."""
        coords = np.asarray(coords, dtype=float)
        b = coords[partition.boundary]
        return cls(partition,
                   interior_uv=coords[partition.interior].copy(),
                   boundary_theta=np.arctan2(b[:, 1], b[:, 0]))


def cyclic_diff(x):
    """Apply the skew circulant next-minus-previous operator.

    (Dx)_i = x_{i+1} - x_{i-1} with cyclic indexing; matrix-free.
    """
    return np.roll(x, -1) - np.roll(x, 1)


def image_area_polar(theta):
    """Area of the inscribed polygon (cos t_i, sin t_i): half the cyclic
    sum of sin(t_{i+1} - t_i)."""
    theta = np.asarray(theta, dtype=float)
    return 0.5 * float(np.sin(np.roll(theta, -1) - theta).sum())


def area_gradient_theta(theta):
    """Gradient of image_area_polar with respect to the angles."""
    c = np.cos(theta)
    s = np.sin(theta)
    return -0.5 * (c * cyclic_diff(c) + s * cyclic_diff(s))


def shoelace_area(points):
    """Signed area of a closed polygon given as (k, 2) points in order."""
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def signed_image_areas(mesh, coords):
    """Per-face signed areas of the planar image under the face orientation."""
    p = coords[mesh.faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _image_coords(mesh, dmap_or_coords):
    if isinstance(dmap_or_coords, DiskMap):
        return dmap_or_coords.coords()
    coords = np.asarray(dmap_or_coords, dtype=float)
    if coords.shape != (mesh.n_vertices, 2):
        raise ValueError("expected a DiskMap or an (n, 2) coordinate array")
    return coords


@dataclass
class StretchLaplacian:
    """Symmetric zero-row-sum weighted Laplacian of a map.

    ``matrix`` is n x n CSR with one assembled entry per unordered edge;
    ``scale`` is total-source over total-image area (the normalized variant
    is ``scale * matrix``); ``clamp_count`` tallies degenerate-geometry
    clamps applied during assembly.
    """

    matrix: sp.csr_matrix
    scale: float
    clamp_count: int

    def normalized(self):
        return self.scale * self.matrix


def _modified_cot_weights(points, faces, source_areas):
    """Per-face, per-corner weights cot(image angle) * |image| / (2 |source|).

    Works for planar (k=2) and spatial (k=3) image points.  Returns the
    (m, 3) weight array (corner c holds the weight of the edge opposite
    vertex c) and the clamp count.
    """
    p = points[faces]
    clamps = 0
    if points.shape[1] == 2:
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        double_area = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    else:
        double_area = np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    clamps += int((double_area < 2.0 * AREA_CLAMP).sum())
    double_area = np.maximum(double_area, 2.0 * AREA_CLAMP)

    weights = np.empty((len(faces), 3))
    for c in range(3):
        d1 = p[:, (c + 1) % 3] - p[:, c]
        d2 = p[:, (c + 2) % 3] - p[:, c]
        dots = (d1 * d2).sum(axis=1)
        cot = dots / double_area
        clamps += int((np.abs(cot) > COT_CLAMP).sum())
        np.clip(cot, -COT_CLAMP, COT_CLAMP, out=cot)
        weights[:, c] = cot * double_area / (4.0 * source_areas)
    return weights, clamps


def _laplacian_from_weights(n, faces, weights):
    # One summed entry per unordered edge keeps the matrix exactly symmetric.
    i = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    j = np.concatenate([faces[:, 2], faces[:, 0], faces[:, 1]])
    w = np.concatenate([weights[:, 0], weights[:, 1], weights[:, 2]])
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    keys = lo * n + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    edge_w = np.bincount(inverse, weights=w, minlength=len(uniq))
    ei = (uniq // n).astype(np.int64)
    ej = (uniq % n).astype(np.int64)
    diag = (np.bincount(ei, weights=edge_w, minlength=n)
            + np.bincount(ej, weights=edge_w, minlength=n))
    rows = np.concatenate([ei, ej, np.arange(n)])
    cols = np.concatenate([ej, ei, np.arange(n)])
    vals = np.concatenate([-edge_w, -edge_w, diag])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def assemble_stretch_laplacian(mesh: TriMesh, dmap) -> StretchLaplacian:
    """Assemble the stretch Laplacian of a map (DiskMap or (n, 2) coords)."""
    coords = _image_coords(mesh, dmap)
    weights, clamps = _modified_cot_weights(coords, mesh.faces, mesh.face_areas)
    matrix = _laplacian_from_weights(mesh.n_vertices, mesh.faces, weights)
    if isinstance(dmap, DiskMap):
        image_area = image_area_polar(dmap.boundary_theta)
    else:
        image_area = shoelace_area(coords[mesh.boundary_loop])
    scale = mesh.total_area / image_area if image_area > 0 else np.inf
    return StretchLaplacian(matrix=matrix, scale=scale, clamp_count=clamps)


def cotan_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """Stretch Laplacian of the identity map: the classical cotangent
    Laplacian of the spatial mesh (image/source area ratio 1)."""
    weights, _ = _modified_cot_weights(mesh.vertices, mesh.faces, mesh.face_areas)
    return _laplacian_from_weights(mesh.n_vertices, mesh.faces, weights)


def stretch_energy(mesh: TriMesh, dmap) -> float:
    """Stretch energy as the face sum of squared image areas over source
    areas."""
    coords = _image_coords(mesh, dmap)
    a = signed_image_areas(mesh, coords)
    return float((a * a / mesh.face_areas).sum())


def stretch_energy_quadratic(mesh: TriMesh, dmap, lap=None) -> float:
    """Stretch energy as the Laplacian quadratic form (used as the
    cross-check of the face-sum formula)."""
    coords = _image_coords(mesh, dmap)
    if lap is None:
        lap = assemble_stretch_laplacian(mesh, dmap)
    lf = lap.matrix @ coords
    return 0.5 * float((coords * lf).sum())


def normalized_authalic_energy(mesh: TriMesh, dmap: DiskMap) -> float:
    """Scale-free authalic energy: (|source|/|image|) E_S - image area.

    Nonnegative, and zero exactly at area-preserving maps.
    """
    area = image_area_polar(dmap.boundary_theta)
    if area <= 0:
        raise DegenerateMapError(f"degenerate or inverted boundary polygon (area {area:g})")
    return mesh.total_area / area * stretch_energy(mesh, dmap) - area


def authalic_energy_raw(mesh: TriMesh, coords) -> float:
    """Normalized authalic energy of a raw (n, 2) embedding.

    The image area comes from the shoelace formula over the boundary
    polygon, so the embedding need not sit on the unit circle.  This is the
    evaluation path for scale-invariance checks.
    """
    coords = _image_coords(mesh, coords)
    area = shoelace_area(coords[mesh.boundary_loop])
    if area <= 0:
        raise DegenerateMapError(f"degenerate or inverted boundary polygon (area {area:g})")
    return mesh.total_area / area * stretch_energy(mesh, coords) - area


def grad_authalic(mesh: TriMesh, dmap: DiskMap, lap: StretchLaplacian | None = None):
    """Gradient of the normalized authalic energy in packed layout.

    Returns the length 2 n_I + n_B vector (d/du_interior, d/dv_interior,
    d/dtheta).  ``lap`` may pass a Laplacian already assembled at this map.
    """
    part = dmap.partition
    coords = dmap.coords()
    if lap is None:
        lap = assemble_stretch_laplacian(mesh, dmap)
    area = image_area_polar(dmap.boundary_theta)
    if area <= 0:
        raise DegenerateMapError(f"degenerate or inverted boundary polygon (area {area:g})")
    q = 2.0 * area  # f_B^1 . D f_B^2
    total = mesh.total_area
    es = stretch_energy(mesh, dmap)

    lf = lap.matrix @ coords  # (n, 2)
    grad_interior = (4.0 * total / q) * lf[part.interior]

    fb = coords[part.boundary]
    f1, f2 = fb[:, 0], fb[:, 1]
    lb = lf[part.boundary]
    rotational = f1 * lb[:, 1] - f2 * lb[:, 0]
    radial = f1 * cyclic_diff(f1) + f2 * cyclic_diff(f2)
    grad_theta = (4.0 * total / q) * rotational \
        + (0.5 + 2.0 * total * es / (q * q)) * radial

    return np.concatenate([grad_interior[:, 0], grad_interior[:, 1], grad_theta])
