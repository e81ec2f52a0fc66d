"""Simply connected open triangle meshes: loading, validation, generation.

Vertices are stored as an (n, 3) float64 array, faces as an (m, 3) int array
of consistently oriented vertex-index triples.  Construction validates the
structure and extracts the single boundary loop; instances are immutable
afterwards and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshLoadError, MeshValidationError

# A face counts as degenerate when its area falls below this fraction of the
# total surface area.
DEGENERATE_AREA_REL = 1e-14


def triangle_area(p, q, r):
    """Area of the triangle spanned by 3D points ``p``, ``q``, ``r``.

    Half the norm of the cross product of the edge vectors; zero for
    collinear points.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    return 0.5 * np.linalg.norm(np.cross(q - p, r - p))


def _face_areas(vertices, faces):
    e1 = vertices[faces[:, 1]] - vertices[faces[:, 0]]
    e2 = vertices[faces[:, 2]] - vertices[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


@dataclass(frozen=True)
class IndexPartition:
    """Boundary/interior split of vertex indices.

    ``boundary`` follows the boundary-loop traversal order; ``interior`` is
    ascending.  Together they partition ``{0..n-1}``.
    """

    boundary: np.ndarray
    interior: np.ndarray

    @property
    def n_b(self):
        return len(self.boundary)

    @property
    def n_i(self):
        return len(self.interior)

    @property
    def n(self):
        return self.n_b + self.n_i


class TriMesh:
    """Immutable simply connected open triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) array_like
        3D vertex positions.
    faces : (m, 3) array_like
        Oriented vertex-index triples.

    Raises
    ------
    MeshValidationError
        For out-of-range indices, degenerate faces, non-manifold or
        inconsistently oriented edges, closed surfaces, unreferenced
        vertices, or a boundary that is not a single loop.
    """

    def __init__(self, vertices, faces):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshValidationError("vertices must be an (n, 3) array")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshValidationError("faces must be an (m, 3) array")
        if not np.isfinite(vertices).all():
            raise MeshValidationError("non-finite vertex coordinate")

        n = len(vertices)
        if faces.size == 0:
            raise MeshValidationError("mesh has no faces")
        if faces.min() < 0 or faces.max() >= n:
            raise MeshValidationError("face index out of range")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) \
                or np.any(faces[:, 0] == faces[:, 2]):
            raise MeshValidationError("face repeats a vertex")

        referenced = np.zeros(n, dtype=bool)
        referenced[faces] = True
        if not referenced.all():
            missing = int(np.flatnonzero(~referenced)[0])
            raise MeshValidationError(f"vertex {missing} not referenced by any face")

        areas = _face_areas(vertices, faces)
        total = float(areas.sum())
        bad = np.flatnonzero(areas < DEGENERATE_AREA_REL * total)
        if bad.size:
            raise MeshValidationError(f"degenerate face {int(bad[0])} (area {areas[bad[0]]:g})")

        self.vertices = vertices
        self.faces = faces
        self.face_areas = areas
        self.total_area = total
        self.boundary_loop = self._extract_boundary()
        self._partition = None

        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self.face_areas.setflags(write=False)
        self.boundary_loop.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def _extract_boundary(self):
        faces = self.faces
        n = self.n_vertices
        heads = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
        tails = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])

        directed = heads * n + tails
        uniq, counts = np.unique(directed, return_counts=True)
        if counts.max() > 1:
            e = int(uniq[np.argmax(counts)])
            raise MeshValidationError(
                f"edge ({e // n}, {e % n}) repeated with the same orientation; "
                "faces are not consistently oriented or the edge is non-manifold"
            )

        undirected = np.minimum(heads, tails) * n + np.maximum(heads, tails)
        uniq_u, counts_u = np.unique(undirected, return_counts=True)
        if counts_u.max() > 2:
            e = int(uniq_u[np.argmax(counts_u)])
            raise MeshValidationError(f"non-manifold edge ({e // n}, {e % n}) used by >2 faces")

        # Boundary edges are exactly the directed edges without a reverse twin.
        directed_set = set(int(d) for d in directed)
        boundary_edges = [(int(h), int(t)) for h, t in zip(heads, tails)
                          if (int(t) * n + int(h)) not in directed_set]
        if not boundary_edges:
            raise MeshValidationError("closed surface: mesh has no boundary")

        succ = {}
        for h, t in boundary_edges:
            if h in succ:
                raise MeshValidationError(
                    f"boundary vertex {h} has two outgoing boundary edges "
                    "(pinched or multiple loops)"
                )
            succ[h] = t

        start = min(succ)
        loop = [start]
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            cur = succ.get(cur)
            if cur is None or len(loop) > len(boundary_edges):
                raise MeshValidationError("boundary does not close into a loop")
        if len(loop) != len(boundary_edges):
            raise MeshValidationError("multiple boundary loops")

        # Disk topology: V - E + F must equal 1.
        n_edges = len(uniq_u)
        if self.n_vertices - n_edges + self.n_faces != 1:
            raise MeshValidationError("surface is not simply connected")
        return np.asarray(loop, dtype=np.int64)

    def partition(self):
        """Boundary/interior IndexPartition, boundary in loop order."""
        if self._partition is None:
            mask = np.zeros(self.n_vertices, dtype=bool)
            mask[self.boundary_loop] = True
            self._partition = IndexPartition(
                boundary=self.boundary_loop,
                interior=np.flatnonzero(~mask),
            )
        return self._partition


@dataclass
class MeshQualityReport:
    """Pre-parameterization diagnostics; advisory, never fatal.

    ``all_boundary_faces`` lists faces whose three vertices all lie on the
    boundary (such faces cannot react to interior solves), ``sliver_faces``
    lists faces whose smallest angle is below ``min_angle_rad``.
    """

    all_boundary_faces: np.ndarray
    sliver_faces: np.ndarray
    min_angle_rad: float

    @property
    def clean(self):
        return len(self.all_boundary_faces) == 0 and len(self.sliver_faces) == 0


def validate_for_parameterization(mesh, min_angle_rad=0.01):
    """Flag faces that commonly break disk parameterization in practice."""
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[mesh.boundary_loop] = True
    all_b = np.flatnonzero(on_boundary[mesh.faces].all(axis=1))

    v = mesh.vertices
    f = mesh.faces
    angles = np.empty((mesh.n_faces, 3))
    for c in range(3):
        a = v[f[:, c]]
        b = v[f[:, (c + 1) % 3]] - a
        d = v[f[:, (c + 2) % 3]] - a
        cosang = (b * d).sum(axis=1) / (
            np.linalg.norm(b, axis=1) * np.linalg.norm(d, axis=1)
        )
        angles[:, c] = np.arccos(np.clip(cosang, -1.0, 1.0))
    slivers = np.flatnonzero(angles.min(axis=1) < min_angle_rad)
    return MeshQualityReport(all_boundary_faces=all_b, sliver_faces=slivers,
                             min_angle_rad=min_angle_rad)


# ---------------------------------------------------------------------------
# Synthetic caps
#
# The disk layout is a fan/ring triangulation with deterministic grading and
# low-frequency jitter of the ring radii and angles.  Scanned meshes are
# never uniformly sampled, and a perfectly regular layout makes the disk
# parameterization problem unrepresentatively easy; the wobble below keeps
# every planar triangle positively oriented at all resolutions while giving
# the caps scan-like sampling irregularity.

_CAP_GRADE = 1.4      # ring radius exponent (denser sampling near the center)
_CAP_RADIAL_JITTER = 0.35   # fraction of the local ring gap
_CAP_ANGULAR_JITTER = 0.35  # fraction of the local angular slot

_BUMP_CENTERS = np.array([
    [0.35, 0.10], [-0.25, 0.40], [-0.30, -0.35], [0.15, -0.45], [0.55, -0.10],
])
_BUMP_WIDTHS = np.array([0.30, 0.25, 0.35, 0.20, 0.25])


def _cap_layout(resolution):
    """Planar fan/ring triangulation of the unit disk, with fixed grading
    and smooth jitter.  Returns (xy, faces)."""
    rings = max(2, round(math.sqrt((resolution - 1) / 3.0)))
    pts = [np.zeros((1, 2))]
    ring_ang = []
    prev_rho = 0.0
    for k in range(1, rings + 1):
        count = 6 * k
        u = 2.0 * np.pi * np.arange(count) / count
        ang = u + (_CAP_ANGULAR_JITTER * 2.0 * np.pi / count) * (
            np.sin(3.0 * u + 2.3 * k) + 0.5 * np.sin(5.0 * u - 1.7 * k))
        ang = np.sort(np.mod(ang, 2.0 * np.pi))
        rho = (k / rings) ** _CAP_GRADE
        gap = rho - prev_rho
        rim = k == rings  # the rim stays exactly on the unit circle
        rr = rho if rim else rho + _CAP_RADIAL_JITTER * gap * (
            0.6 * np.sin(2.0 * ang + 5.7 * k) + 0.4 * np.sin(4.0 * ang - 2.9 * k))
        prev_rho = rho
        ring_ang.append(ang)
        pts.append(np.column_stack([rr * np.cos(ang), rr * np.sin(ang)]))
    xy = np.vstack(pts)

    faces = [(0, 1 + j, 1 + (j + 1) % 6) for j in range(6)]
    start = 1
    for k in range(2, rings + 1):
        c0, c1 = 6 * (k - 1), 6 * k
        s0, s1 = start, start + c0
        # merge the two rings by actual angle, unwrapped from inner vertex 0
        base = ring_ang[k - 2][0]
        t0 = np.mod(ring_ang[k - 2] - base, 2.0 * np.pi)
        t1 = np.mod(ring_ang[k - 1] - base, 2.0 * np.pi)
        j0 = int(np.argmin(t1))
        i = j = 0
        while i < c0 or j < c1:
            nxt_in = t0[(i + 1) % c0] + (2.0 * np.pi if i + 1 >= c0 else 0.0)
            nxt_out = t1[(j0 + j + 1) % c1] + (2.0 * np.pi if j + 1 >= c1 else 0.0)
            if j < c1 and (i >= c0 or nxt_out <= nxt_in):
                faces.append((s0 + i % c0, s1 + (j0 + j) % c1, s1 + (j0 + j + 1) % c1))
                j += 1
            else:
                faces.append((s0 + i % c0, s1 + (j0 + j) % c1, s0 + (i + 1) % c0))
                i += 1
        start = s1
    return xy, np.asarray(faces, dtype=np.int64)


def generate_cap(kind, resolution, seed=0):
    """Deterministic simply connected cap with ~``resolution`` vertices.

    ``kind`` is one of ``hemisphere``, ``paraboloid``, ``bumpy_disk``.  The
    seed only drives bump amplitudes of ``bumpy_disk``.  Every face touches
    at least one interior vertex.
    """
    if resolution < 16:
        raise ValueError(f"resolution too small: {resolution} < 16")
    if kind not in ("hemisphere", "paraboloid", "bumpy_disk"):
        raise ValueError(f"unknown cap kind: {kind!r}")

    xy, faces = _cap_layout(resolution)
    r = np.linalg.norm(xy, axis=1)
    if kind == "hemisphere":
        psi = r * (np.pi / 2.0)
        unit = np.where(r[:, None] > 0, xy / np.where(r == 0, 1.0, r)[:, None], 0.0)
        verts = np.column_stack(
            [np.sin(psi) * unit[:, 0], np.sin(psi) * unit[:, 1], np.cos(psi)])
    elif kind == "paraboloid":
        verts = np.column_stack([xy[:, 0], xy[:, 1], 1.0 - r**2])
    else:
        rng = np.random.default_rng(seed)
        amps = rng.uniform(-0.3, 0.3, size=len(_BUMP_CENTERS))
        z = np.zeros(len(xy))
        for a, c, w in zip(amps, _BUMP_CENTERS, _BUMP_WIDTHS):
            z += a * np.exp(-((xy - c) ** 2).sum(axis=1) / (2.0 * w * w))
        z *= 1.0 - r**2  # keep the rim flat so the boundary stays planar
        verts = np.column_stack([xy[:, 0], xy[:, 1], z])
    return TriMesh(verts, faces)


def planar_disk(resolution):
    """Flat unit-disk mesh (paraboloid triangulation with z = 0).

    The identity embedding of this mesh is an analytically area-preserving
    disk configuration, handy as a known-zero-energy input.
    """
    cap = generate_cap("paraboloid", resolution)
    verts = cap.vertices.copy()
    verts[:, 2] = 0.0
    return TriMesh(verts, cap.faces)


# ---------------------------------------------------------------------------
# File formats

def load_mesh(path, fmt=None):
    """Read an OFF or Wavefront OBJ triangle mesh.

    ``fmt`` overrides extension sniffing ("off" / "obj").
    """
    fmt = _resolve_format(path, fmt)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise MeshLoadError(f"cannot read {path}: {exc}") from exc
    if fmt == "off":
        vertices, faces = _parse_off(text, path)
    else:
        vertices, faces = _parse_obj(text, path)
    return TriMesh(vertices, faces)


def write_mesh(path, mesh, fmt=None, uv=None):
    """Write OFF or OBJ; ``uv`` (n, 2) adds OBJ ``vt`` texture coordinates."""
    fmt = _resolve_format(path, fmt)
    if fmt == "off":
        if uv is not None:
            raise ValueError("OFF has no texture coordinates; use OBJ")
        lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
        lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    else:
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
        if uv is not None:
            uv = np.asarray(uv, dtype=float)
            if uv.shape != (mesh.n_vertices, 2):
                raise ValueError("uv must be (n_vertices, 2)")
            lines += [f"vt {u:.17g} {v:.17g}" for u, v in uv]
            lines += [f"f {a+1}/{a+1} {b+1}/{b+1} {c+1}/{c+1}" for a, b, c in mesh.faces]
        else:
            lines += [f"f {a+1} {b+1} {c+1}" for a, b, c in mesh.faces]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _resolve_format(path, fmt):
    if fmt is None:
        fmt = str(path).rsplit(".", 1)[-1].lower()
    fmt = fmt.lower()
    if fmt not in ("off", "obj"):
        raise MeshLoadError(f"unsupported mesh format: {fmt!r}")
    return fmt


def _tokens(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _parse_off(text, path):
    stream = _tokens(text)
    try:
        lineno, tok = next(stream)
    except StopIteration:
        raise MeshLoadError(f"{path}: empty file") from None
    if tok[0].upper() == "OFF":
        tok = tok[1:]
        if not tok:
            try:
                lineno, tok = next(stream)
            except StopIteration:
                raise MeshLoadError(f"{path}: missing OFF count line") from None
    try:
        nv, nf = int(tok[0]), int(tok[1])
    except (ValueError, IndexError):
        raise MeshLoadError(f"{path}:{lineno}: bad OFF count line") from None

    vertices = np.empty((nv, 3))
    for i in range(nv):
        try:
            lineno, tok = next(stream)
            vertices[i] = [float(tok[0]), float(tok[1]), float(tok[2])]
        except (StopIteration, ValueError, IndexError):
            raise MeshLoadError(f"{path}: bad or missing vertex line {i}") from None
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        try:
            lineno, tok = next(stream)
            cnt = int(tok[0])
        except (StopIteration, ValueError, IndexError):
            raise MeshLoadError(f"{path}: bad or missing face line {i}") from None
        if cnt != 3:
            raise MeshLoadError(f"{path}:{lineno}: only triangle faces accepted (got {cnt}-gon)")
        faces[i] = [int(tok[1]), int(tok[2]), int(tok[3])]
    return vertices, faces


def _parse_obj(text, path):
    vertices = []
    faces = []
    for lineno, tok in _tokens(text):
        if tok[0] == "v":
            try:
                vertices.append((float(tok[1]), float(tok[2]), float(tok[3])))
            except (ValueError, IndexError):
                raise MeshLoadError(f"{path}:{lineno}: bad vertex line") from None
        elif tok[0] == "f":
            refs = tok[1:]
            if len(refs) != 3:
                raise MeshLoadError(
                    f"{path}:{lineno}: only triangle faces accepted (got {len(refs)}-gon)")
            idx = []
            for ref in refs:
                head = ref.split("/", 1)[0]
                try:
                    k = int(head)
                except ValueError:
                    raise MeshLoadError(f"{path}:{lineno}: bad face reference {ref!r}") from None
                if k <= 0:
                    raise MeshLoadError(f"{path}:{lineno}: only positive indices supported")
                idx.append(k - 1)
            faces.append(tuple(idx))
    if not vertices or not faces:
        raise MeshLoadError(f"{path}: no usable geometry found")
    return np.asarray(vertices, dtype=float), np.asarray(faces, dtype=np.int64)
