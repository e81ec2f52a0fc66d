"""Fixed-point stretch-energy minimization.

One round solves the interior vertices against the current stretch Laplacian
with the boundary held fixed, then (optionally) renormalizes an inverted,
centralized boundary image back onto the unit circle.  The Laplacian starts
from the identity map (classical cotangent weights) and is refreshed from
the updated map after every round.  Five boundary-fixed rounds are the
initializer of the conjugate-gradient solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .energy import (
    DiskMap,
    assemble_stretch_laplacian,
    cotan_laplacian,
    image_area_polar,
    normalized_authalic_energy,
    stretch_energy,
)
from .errors import DegenerateMapError, MeshValidationError

STAGNATION_TOL = 1e-12


def arclength_boundary(mesh):
    """Boundary angles proportional to 3D boundary edge lengths.

    The first loop vertex gets angle 0; the increments sum to 2 pi.
    """
    loop = mesh.boundary_loop
    pts = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    if seg.min() <= 0.0:
        k = int(np.argmin(seg))
        raise MeshValidationError(f"zero-length boundary edge after vertex {loop[k]}")
    theta = np.zeros(len(loop))
    theta[1:] = 2.0 * np.pi * np.cumsum(seg[:-1]) / seg.sum()
    return theta


def _split_blocks(matrix, part):
    bi = part.boundary
    ii = part.interior
    csr = matrix.tocsr()
    return {
        "II": csr[ii][:, ii].tocsc(),
        "IB": csr[ii][:, bi].tocsr(),
        "BB": csr[bi][:, bi].tocsc(),
        "BI": csr[bi][:, ii].tocsr(),
    }


def _matrix_of(lap):
    # Accept a StretchLaplacian or a bare sparse matrix.
    return getattr(lap, "matrix", lap)


def sem_interior_step(mesh, dmap, lap=None):
    """Solve both interior coordinate systems with the boundary fixed.

    Returns the updated DiskMap.  ``lap`` may supply the Laplacian to use
    (the in-loop iteration passes the start-of-round one); by default it is
    assembled at the given map.
    """
    part = dmap.partition
    matrix = _matrix_of(lap) if lap is not None else assemble_stretch_laplacian(mesh, dmap).matrix
    blocks = _split_blocks(matrix, part)
    rhs = -blocks["IB"] @ dmap.boundary_xy()
    interior = linalg.factorize(blocks["II"]).solve(rhs)
    return DiskMap(part, interior_uv=interior, boundary_theta=dmap.boundary_theta.copy())


def sem_boundary_step(mesh, dmap, lap=None):
    """Boundary angles from the inverted-interior update.

    Applies, per component: centralize(solve(L_BB, L_BI (interior / r^2))),
    then joint row normalization back onto the circle and a sign flip; the
    resulting angles keep whatever cyclic order atan2 produces.
    """
    part = dmap.partition
    matrix = _matrix_of(lap) if lap is not None else assemble_stretch_laplacian(mesh, dmap).matrix
    blocks = _split_blocks(matrix, part)

    r2 = (dmap.interior_uv ** 2).sum(axis=1)
    if r2.min() <= 0.0:
        raise DegenerateMapError("interior vertex at the origin; inversion undefined")
    inverted = dmap.interior_uv / r2[:, None]

    sol = linalg.factorize(blocks["BB"]).solve(blocks["BI"] @ inverted)
    sol -= sol.mean(axis=0)
    norms = np.linalg.norm(sol, axis=1)
    if norms.min() <= 0.0:
        raise DegenerateMapError("zero-norm boundary row before normalization")
    fb = -sol / norms[:, None]
    return np.arctan2(fb[:, 1], fb[:, 0])


@dataclass
class IterationRecord:
    iteration: int
    stretch: float
    authalic: float
    image_area: float


def sem_run(mesh, iterations, update_boundary=True):
    """Run the fixed-point iteration from the arc-length boundary.

    Returns (DiskMap, [IterationRecord]).  With ``update_boundary`` false
    the boundary stays at the arc-length angles (the conjugate-gradient
    initializer).  Stops early once the map moves less than STAGNATION_TOL
    in the max norm and pads the trace with the final state.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    part = mesh.partition()
    theta = arclength_boundary(mesh)
    dmap = DiskMap(part, interior_uv=np.zeros((part.n_i, 2)), boundary_theta=theta)
    matrix = cotan_laplacian(mesh)

    trace = []
    prev_coords = None
    for k in range(1, iterations + 1):
        dmap = sem_interior_step(mesh, dmap, matrix)
        if update_boundary:
            dmap = DiskMap(part, interior_uv=dmap.interior_uv,
                           boundary_theta=sem_boundary_step(mesh, dmap, matrix))
        matrix = assemble_stretch_laplacian(mesh, dmap).matrix
        trace.append(IterationRecord(
            iteration=k,
            stretch=stretch_energy(mesh, dmap),
            authalic=normalized_authalic_energy(mesh, dmap),
            image_area=image_area_polar(dmap.boundary_theta),
        ))
        coords = dmap.coords()
        if prev_coords is not None and np.abs(coords - prev_coords).max() < STAGNATION_TOL:
            last = trace[-1]
            trace.extend(
                IterationRecord(j, last.stretch, last.authalic, last.image_area)
                for j in range(k + 1, iterations + 1)
            )
            break
        prev_coords = coords
    return dmap, trace
