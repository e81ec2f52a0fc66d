import numpy as np
import pytest

from authalic import aem, mesh, sem
from authalic.energy import DiskMap, normalized_authalic_energy

CAP_KINDS = ("hemisphere", "paraboloid", "bumpy_disk")


@pytest.fixture(scope="session")
def caps_small():
    """~500-vertex caps, one per kind."""
    return {kind: mesh.generate_cap(kind, 500, 0) for kind in CAP_KINDS}


@pytest.fixture(scope="session")
def caps_2k():
    """~2k-vertex caps for the comparison protocol."""
    return {kind: mesh.generate_cap(kind, 2000, 0) for kind in CAP_KINDS}


@pytest.fixture(scope="session")
def hemisphere_small(caps_small):
    return caps_small["hemisphere"]


@pytest.fixture(scope="session")
def planar_400():
    return mesh.planar_disk(400)


@pytest.fixture(scope="session")
def planar_identity(planar_400):
    """Identity disk map of the flat mesh: analytically area-preserving."""
    return DiskMap.from_coords(planar_400.partition(), planar_400.vertices[:, :2])


@pytest.fixture(scope="session")
def aem100_2k(caps_2k):
    return {kind: aem.aem_run(m, max_iters=100, grad_tol=float("inf"))
            for kind, m in caps_2k.items()}


@pytest.fixture(scope="session")
def sem100_2k(caps_2k):
    return {kind: sem.sem_run(m, 100, update_boundary=True)
            for kind, m in caps_2k.items()}


@pytest.fixture(scope="session")
def wolfe100_hemisphere(caps_2k):
    config = aem.LineSearchConfig(mode="wolfe", c1=1e-4, c2=0.4)
    return aem.aem_run(caps_2k["hemisphere"], config=config, max_iters=100,
                       grad_tol=float("inf"))


def random_disk_map(partition, rng, radius=0.7):
    """Random valid map: sorted angles, interior points inside the disk."""
    theta = np.sort(rng.uniform(0.0, 2.0 * np.pi, partition.n_b))
    r = radius * np.sqrt(rng.uniform(0.02, 1.0, partition.n_i))
    ang = rng.uniform(0.0, 2.0 * np.pi, partition.n_i)
    uv = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    return DiskMap(partition, interior_uv=uv, boundary_theta=theta)


def fd_gradient(func, x, h=1e-6):
    """Central finite differences of a scalar function of a packed vector."""
    g = np.empty_like(x)
    for k in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (func(xp) - func(xm)) / (2.0 * h)
    return g


def near_stationary_map(m, rng, scale=5e-3, iters=60):
    """A converged-ish map plus a small random perturbation."""
    result = aem.aem_run(m, max_iters=iters, grad_tol=float("inf"))
    packed = result.map.pack()
    packed = packed + rng.normal(0.0, scale, packed.shape)
    dmap = DiskMap.unpack(result.map.partition, packed)
    normalized_authalic_energy(m, dmap)  # raises if the perturbation broke it
    return dmap
