"""Landmark-driven area-preserving registration between disk-parameterized
surfaces.

Given parameterizations f of S and g of T plus landmark vertex pairs, the
registration finds a disk self-map h minimizing the stretch energy of the
planar source (the f-image of S's mesh) plus a quadratic landmark penalty,
with the boundary pinned to the landmark-optimal rotation of f's boundary.
A few fixed-point solves of the penalized linear system initialize h; the
preconditioned CG engine then refines it with the penalized gradient and
frozen boundary.  The surface-to-surface map is evaluated by locating
h-images inside g's planar triangulation and lifting barycentrically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import linalg
from .aem import LineSearchConfig, default_grad_tol, ncg_minimize
from .energy import DiskMap, assemble_stretch_laplacian, cotan_laplacian, stretch_energy
from .errors import MeshLoadError
from .mesh import TriMesh

LOCATE_TOL = 1e-3  # flag composed vertices projected from farther outside
FIXED_POINT_ROUNDS = 5


@dataclass
class LandmarkSet:
    """Vertex-index landmark pairs (source on S, target on T)."""

    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=np.int64)
        self.target = np.asarray(self.target, dtype=np.int64)
        if self.source.shape != self.target.shape or self.source.ndim != 1:
            raise ValueError("landmark source/target index lists must match in length")
        if len(self.source) == 0:
            raise ValueError("empty landmark set")
        if len(np.unique(self.source)) != len(self.source):
            raise ValueError("duplicate source landmark index")

    def __len__(self):
        return len(self.source)


def load_landmarks(path):
    """Plain-text landmark pairs: one `src_index dst_index` per line."""
    src, dst = [], []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise MeshLoadError(f"{path}:{lineno}: expected `src dst`, got {raw!r}")
                src.append(int(parts[0]))
                dst.append(int(parts[1]))
    except OSError as exc:
        raise MeshLoadError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise MeshLoadError(f"{path}: bad landmark line: {exc}") from exc
    if not src:
        raise MeshLoadError(f"{path}: no landmark pairs found")
    return LandmarkSet(np.asarray(src), np.asarray(dst))


def optimal_rotation(src, dst):
    """Proper 2D rotation minimizing sum ||R p - q||^2 about the origin.

    Solved from the SVD of the 2x2 cross-covariance with reflection
    correction; an all-zero covariance returns the identity.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    cov = src.T @ dst  # maximize tr(R cov)
    if not np.any(cov):
        return np.eye(2)
    u, _, vt = np.linalg.svd(cov)
    r = vt.T @ u.T
    if np.linalg.det(r) < 0:
        r = vt.T @ np.diag([1.0, -1.0]) @ u.T
    return r


def planar_source(mesh, dmap):
    """The f-image of the mesh as a planar TriMesh (z = 0).

    Requires a fold-free map so the image areas are the source areas of the
    registration energy.
    """
    coords = dmap.coords()
    verts = np.column_stack([coords, np.zeros(len(coords))])
    return TriMesh(verts, mesh.faces)


@dataclass
class RegistrationMap:
    """Disk self-map with a prescribed boundary.

    ``coords`` holds all n vertex images; rows at ``partition.boundary``
    equal the prescribed boundary exactly.
    """

    coords: np.ndarray
    partition: object
    lam: float
    landmark_rms: float


def landmark_rms(coords, landmarks, targets):
    d = coords[landmarks.source] - targets
    return float(np.sqrt((d * d).sum(axis=1).mean()))


def _interior_landmark_terms(part, landmarks, targets, n):
    """Diagonal penalty entries and target load restricted to the interior."""
    indicator = np.zeros(n)
    load = np.zeros((n, 2))
    indicator[landmarks.source] = 1.0
    load[landmarks.source] = targets
    return indicator[part.interior], load[part.interior]


def registration_fixed_point(mesh, f, targets, landmarks, lam, boundary, iters=FIXED_POINT_ROUNDS):
    """Initialize h by fixed-point solves of the penalized linear system.

    Each round solves (L_II + lam D_II) h_I = lam (P' targets)_I - L_IB b
    per component, with the Laplacian refreshed from the previous round's
    map and started at the identity (cotangent weights of the planar
    source).
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    src = planar_source(mesh, f)
    part = src.partition()
    boundary = np.asarray(boundary, dtype=float)
    if boundary.shape != (part.n_b, 2):
        raise ValueError("boundary must be (n_B, 2)")
    d_ii, load_i = _interior_landmark_terms(part, landmarks, targets, src.n_vertices)

    matrix = cotan_laplacian(src)
    coords = np.zeros((src.n_vertices, 2))
    coords[part.boundary] = boundary
    for _ in range(iters):
        csr = matrix.tocsr()
        l_ii = csr[part.interior][:, part.interior]
        l_ib = csr[part.interior][:, part.boundary]
        system = (l_ii + sp.diags(lam * d_ii)).tocsc()
        rhs = lam * load_i - l_ib @ boundary
        coords[part.interior] = linalg.factorize(system).solve(rhs)
        matrix = assemble_stretch_laplacian(src, coords).matrix
    return RegistrationMap(coords=coords, partition=part, lam=lam,
                           landmark_rms=landmark_rms(coords, landmarks, targets))


def penalized_stretch_energy(src, coords, landmarks, targets, lam):
    d = coords[landmarks.source] - targets
    return stretch_energy(src, coords) + lam * float((d * d).sum())


def registration_refine(mesh, f, landmarks, targets, lam, boundary, init,
                        max_iters=100, config=None, grad_tol=None):
    """Conjugate-gradient refinement of the penalized stretch energy.

    Boundary rows stay frozen at ``boundary``; the preconditioner is the
    penalized interior block of the initial Laplacian.  Returns the refined
    RegistrationMap and the iteration trace (extras carry landmark_rms).
    """
    config = config or LineSearchConfig()
    src = planar_source(mesh, f)
    part = src.partition()
    ni = part.n_i
    boundary = np.asarray(boundary, dtype=float)
    d_ii, _ = _interior_landmark_terms(part, landmarks, targets, src.n_vertices)

    lap0 = assemble_stretch_laplacian(src, init.coords).matrix.tocsr()
    block = (lap0[part.interior][:, part.interior] + sp.diags(lam * d_ii)).tocsc()
    factor = linalg.factorize(block)

    full_load = np.zeros((src.n_vertices, 2))
    full_load[landmarks.source] = targets
    indicator = np.zeros(src.n_vertices)
    indicator[landmarks.source] = 1.0

    def unpack(x):
        coords = np.empty((src.n_vertices, 2))
        coords[part.interior] = np.column_stack([x[:ni], x[ni:]])
        coords[part.boundary] = boundary
        return coords

    def energy(x):
        return penalized_stretch_energy(src, unpack(x), landmarks, targets, lam)

    def grad(x):
        coords = unpack(x)
        lap = assemble_stretch_laplacian(src, coords).matrix
        full = 2.0 * (lap @ coords + lam * (indicator[:, None] * coords - full_load))
        gi = full[part.interior]
        return np.concatenate([gi[:, 0], gi[:, 1]])

    def precond(gvec):
        sol = factor.solve(np.column_stack([gvec[:ni], gvec[ni:]]))
        return np.concatenate([sol[:, 0], sol[:, 1]])

    def diagnostics(x):
        return {"landmark_rms": landmark_rms(unpack(x), landmarks, targets)}

    x0 = np.concatenate([init.coords[part.interior, 0], init.coords[part.interior, 1]])
    if grad_tol is None:
        grad_tol = default_grad_tol(2 * ni)
    result = ncg_minimize(x0, energy, grad, precond, config, max_iters, grad_tol,
                          diagnostics_fn=diagnostics)
    coords = unpack(result.x)
    refined = RegistrationMap(coords=coords, partition=part, lam=lam,
                              landmark_rms=landmark_rms(coords, landmarks, targets))
    return refined, result.trace


# ---------------------------------------------------------------------------
# Point location and composition


def _barycentric(tri, q):
    """Signed barycentric coordinates of q in a (3, 2) triangle."""
    a, b, c = tri
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if det == 0.0:
        return np.array([np.inf, np.inf, np.inf])
    w1 = ((q[0] - a[0]) * (c[1] - a[1]) - (q[1] - a[1]) * (c[0] - a[0])) / det
    w2 = ((b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])) / det
    return np.array([1.0 - w1 - w2, w1, w2])


def _closest_point_bary(tri, q):
    """Barycentric weights of the closest point of a triangle to q, and the
    distance."""
    a, b, c = tri
    best = None
    # interior candidate
    w = _barycentric(tri, q)
    if np.all(w >= 0.0) and np.all(np.isfinite(w)):
        return w, 0.0
    # edge candidates
    for (p0, p1), idx in (((a, b), (0, 1)), ((b, c), (1, 2)), ((c, a), (2, 0))):
        e = p1 - p0
        den = float(e @ e)
        t = 0.0 if den == 0.0 else float(np.clip((q - p0) @ e / den, 0.0, 1.0))
        point = p0 + t * e
        dist = float(np.hypot(*(q - point)))
        if best is None or dist < best[1]:
            w = np.zeros(3)
            w[idx[0]] = 1.0 - t
            w[idx[1]] = t
            best = (w, dist)
    return best


class PointLocator:
    """Uniform-grid point location over a planar triangulation.

    Faces are bucketed by bounding box into cells of roughly the median
    image edge length; queries fall back to a brute-force scan and, when
    outside the triangulation, to nearest-face projection.
    """

    def __init__(self, coords, faces, bary_tol=1e-12):
        self.coords = np.asarray(coords, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.bary_tol = bary_tol
        tri = self.coords[self.faces]
        edges = np.concatenate([
            tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]])
        self.cell = float(np.median(np.linalg.norm(edges, axis=1))) or 1.0
        self.origin = self.coords.min(axis=0)
        lo = np.floor((tri.min(axis=1) - self.origin) / self.cell).astype(int)
        hi = np.floor((tri.max(axis=1) - self.origin) / self.cell).astype(int)
        self.buckets = {}
        for face, (l, h) in enumerate(zip(lo, hi)):
            for ix in range(l[0], h[0] + 1):
                for iy in range(l[1], h[1] + 1):
                    self.buckets.setdefault((ix, iy), []).append(face)

    def _candidates(self, q):
        key = tuple(np.floor((q - self.origin) / self.cell).astype(int))
        return self.buckets.get(key, ())

    def locate(self, q):
        """Containing face, barycentric weights, and outside distance (0
        when the query is inside)."""
        q = np.asarray(q, dtype=float)
        tri_all = self.coords[self.faces]
        for face in self._candidates(q):
            w = _barycentric(tri_all[face], q)
            if np.all(w >= -self.bary_tol):
                return face, w, 0.0
        # brute-force scan (grid can miss points exactly on cell seams)
        for face in range(len(self.faces)):
            w = _barycentric(tri_all[face], q)
            if np.all(w >= -self.bary_tol):
                return face, w, 0.0
        # outside: nearest-face projection
        best = None
        for face in range(len(self.faces)):
            w, dist = _closest_point_bary(tri_all[face], q)
            if best is None or dist < best[2]:
                best = (face, w, dist)
        return best


def barycentric_locate(coords, faces, query):
    """One-off point location (builds a locator; prefer PointLocator for
    batches)."""
    return PointLocator(coords, faces).locate(query)


def compose_registration(mesh_s, f, mesh_t, g, h, locate_tol=LOCATE_TOL):
    """Per-vertex images of S on T: locate h(f(v)) in g's planar
    triangulation and lift barycentrically to T's surface.

    Returns (points (n, 3), flagged vertex indices) where flagged vertices
    were projected from farther than ``locate_tol`` outside g's image.
    """
    locator = PointLocator(g.coords(), mesh_t.faces)
    h_coords = h.coords if isinstance(h, RegistrationMap) else h.coords()
    out = np.empty((mesh_s.n_vertices, 3))
    flagged = []
    for i, q in enumerate(h_coords):
        face, w, dist = locator.locate(q)
        out[i] = w @ mesh_t.vertices[mesh_t.faces[face]]
        if dist > locate_tol:
            flagged.append(i)
    return out, flagged


def homotopy_frames(mesh_s, composed, t_values):
    """Linear homotopy frames between S's geometry and its composed image."""
    frames = []
    for t in t_values:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"homotopy parameter {t} outside [0, 1]")
        frames.append((1.0 - t) * mesh_s.vertices + t * composed)
    return frames


# ---------------------------------------------------------------------------
# End-to-end driver


@dataclass
class RegistrationResult:
    map: RegistrationMap
    trace: list
    rotation: np.ndarray
    composed: np.ndarray
    flagged: list
    initial_rms: float


def register_surfaces(mesh_s, f, mesh_t, g, landmarks, lam,
                      fixed_point_iters=FIXED_POINT_ROUNDS, max_iters=100,
                      config=None, grad_tol=None):
    """Rotation + fixed-point initialization + CG refinement + composition."""
    if landmarks.source.max() >= mesh_s.n_vertices:
        raise ValueError("source landmark index out of range")
    if landmarks.target.max() >= mesh_t.n_vertices:
        raise ValueError("target landmark index out of range")
    f_coords = f.coords()
    targets = g.coords()[landmarks.target]
    rotation = optimal_rotation(f_coords[landmarks.source], targets)
    boundary = f_coords[mesh_s.partition().boundary] @ rotation.T
    init = registration_fixed_point(mesh_s, f, targets, landmarks, lam, boundary,
                                    iters=fixed_point_iters)
    refined, trace = registration_refine(mesh_s, f, landmarks, targets, lam,
                                         boundary, init, max_iters=max_iters,
                                         config=config, grad_tol=grad_tol)
    composed, flagged = compose_registration(mesh_s, f, mesh_t, g, refined)
    return RegistrationResult(map=refined, trace=trace, rotation=rotation,
                              composed=composed, flagged=flagged,
                              initial_rms=init.landmark_rms)
