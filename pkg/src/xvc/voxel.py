"""Voxel indexing, differentiable point counting and the voxel-density KL loss.

A point (x, y, z) falls in voxel
``floor((x-x_min)/dx) + floor((y-y_min)/dy)*Nx + floor((z-z_min)/dz)*Nx*Ny``.
Counting uses C_i = n - ||sign(|V - i|)||_1, whose forward value is an
exact histogram; gradients reach the indices through straight-through
surrogates for floor (identity) and sign (d/dx clip(2x - 1, -1, 1)).
"""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor, as_tensor

DEFAULT_COUNTS = (40, 40, 24)
SWEEP_COUNTS = ((20, 20, 24), (40, 40, 24), (60, 60, 24))
DEFAULT_KL_EPS = 1e-8


@dataclass(frozen=True)
class VoxelGrid:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for axis in "xyz":
            lo, hi = getattr(self, f"{axis}_min"), getattr(self, f"{axis}_max")
            if not hi > lo:
                raise ContractError(f"degenerate grid: {axis}_max={hi} <= {axis}_min={lo}")
        for name in ("nx", "ny", "nz"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ContractError(f"{name} must be a positive integer, got {val}")

    @classmethod
    def from_bounds(cls, lo, hi, counts=DEFAULT_COUNTS):
        return cls(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], *map(int, counts))

    @classmethod
    def enclosing(cls, *clouds, counts=DEFAULT_COUNTS, margin=0.01):
        """Joint bounding box of ``clouds``, each axis padded by ``margin`` of its extent."""
        pts = np.concatenate([np.asarray(c.data if isinstance(c, Tensor) else c).reshape(-1, 3)
                              for c in clouds])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        ext = hi - lo
        pad = np.where(ext > 0, margin * ext, 0.5)
        return cls.from_bounds(lo - pad, hi + pad, counts)

    @property
    def counts(self):
        return (self.nx, self.ny, self.nz)

    @property
    def size(self):
        return self.nx * self.ny * self.nz

    @property
    def lower(self):
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def upper(self):
        return np.array([self.x_max, self.y_max, self.z_max])

    @property
    def spacing(self):
        """Voxel edge lengths (dx, dy, dz)."""
        return (self.upper - self.lower) / np.array(self.counts, dtype=np.float64)

    def with_counts(self, counts):
        return VoxelGrid.from_bounds(self.lower, self.upper, counts)


def _points(pc):
    pc = as_tensor(pc)
    if pc.ndim != 2 or pc.shape[1] != 3:
        raise ContractError(f"point cloud must be (n, 3), got {pc.shape}")
    return pc


def out_of_bounds(pc, grid):
    """Boolean mask of points outside the closed grid box."""
    p = np.asarray(pc.data if isinstance(pc, Tensor) else pc).reshape(-1, 3)
    return np.any((p < grid.lower) | (p > grid.upper), axis=1)


def voxel_index(pc, grid, with_flags=False):
    """Real-valued (integer-valued) voxel index per point, shape (n,).

    Out-of-bounds points are clamped to the nearest boundary voxel; with
    ``with_flags`` the out-of-bounds mask is returned alongside.
    """
    pc = _points(pc)
    dx, dy, dz = grid.spacing
    ix = T.clip(T.floor_ste((pc[:, 0] - grid.x_min) / dx), 0, grid.nx - 1)
    iy = T.clip(T.floor_ste((pc[:, 1] - grid.y_min) / dy), 0, grid.ny - 1)
    iz = T.clip(T.floor_ste((pc[:, 2] - grid.z_min) / dz), 0, grid.nz - 1)
    V = ix + iy * float(grid.nx) + iz * float(grid.nx * grid.ny)
    if with_flags:
        return V, out_of_bounds(pc, grid)
    return V


def ste_sign(x, inclusive=False):
    """sign(x) forward, Htanh(2x - 1) derivative backward."""
    return T.sign_ste(x, inclusive)


def count_vector(V, N, n=None, inclusive=False):
    """Per-voxel counts C (length N) from an index vector ``V`` of length n."""
    V = as_tensor(V)
    if n is not None and n != V.size:
        raise ContractError(f"index vector has {V.size} entries, expected n={n}")
    if V.size == 0 or n == 0:
        raise ContractError("cannot count an empty index vector")
    return T.count_vector(T.reshape(V, (V.size,)), N, inclusive)


def count_vector_dense(V, N, inclusive=False):
    """The same counting vector built literally from abs and sign_ste over an
    (N, n) difference matrix. O(n*N); for cross-checking small cases."""
    V = as_tensor(V)
    n = V.size
    diff = T.reshape(V, (1, n)) - np.arange(N, dtype=np.float64).reshape(N, 1)
    return n - T.tsum(T.sign_ste(T.tabs(diff), inclusive), axis=1)


def voxel_density(pc, grid, inclusive=False):
    """Density vector rho = C / n over all ``grid.size`` voxels."""
    if np.asarray(pc.data if isinstance(pc, Tensor) else pc).size == 0:
        raise ContractError("cannot compute the density of an empty cloud")
    pc = _points(pc)
    n = pc.shape[0]
    return count_vector(voxel_index(pc, grid), grid.size, n, inclusive) / float(n)


def naive_voxel_density(pc, grid):
    """Iverson-bracket density: each voxel counts the in-range points,
    [a, a + d) per axis. Points outside the grid are not counted."""
    p = np.asarray(pc.data if isinstance(pc, Tensor) else pc, dtype=np.float64).reshape(-1, 3)
    n = p.shape[0]
    dx, dy, dz = grid.spacing
    counts = np.zeros(grid.size)
    for k in range(grid.nz):
        in_z = (p[:, 2] >= grid.z_min + k * dz) & (p[:, 2] < grid.z_min + (k + 1) * dz)
        for j in range(grid.ny):
            in_y = in_z & (p[:, 1] >= grid.y_min + j * dy) & (p[:, 1] < grid.y_min + (j + 1) * dy)
            for i in range(grid.nx):
                hit = in_y & (p[:, 0] >= grid.x_min + i * dx) & (p[:, 0] < grid.x_min + (i + 1) * dx)
                counts[i + j * grid.nx + k * grid.nx * grid.ny] = hit.sum()
    return counts / n


def vda_loss(rho_ref, rho_src, eps=DEFAULT_KL_EPS):
    """KL(rho_ref || rho_src) with ``eps`` added inside the log; zero-mass
    reference voxels contribute nothing. Not symmetric in its arguments."""
    rho_ref, rho_src = as_tensor(rho_ref), as_tensor(rho_src)
    if rho_ref.shape != rho_src.shape:
        raise ContractError(f"density lengths differ: {rho_ref.shape} vs {rho_src.shape}")
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps}")
    support = rho_ref.data > 0
    terms = rho_ref * (T.log(rho_ref + eps) - T.log(rho_src + eps))
    return T.tsum(T.where(support, terms, 0.0))


def point_cloud_loss(P_ref, P_src_transformed):
    """Rigid point-to-point L1: sum_i ||P_ref(i) - P_hat(i)||_1."""
    a, b = _points(P_ref), _points(P_src_transformed)
    if a.shape != b.shape:
        raise ContractError(f"point counts differ: {a.shape[0]} vs {b.shape[0]}")
    return T.tsum(T.tabs(a - b))


def voxel_index_loss(P_ref, P_src_transformed, grid):
    """sum_i |nu(P_ref(i)) - nu(P_hat(i))|; a diagnostic, returned as float."""
    a, b = _points(P_ref), _points(P_src_transformed)
    if a.shape != b.shape:
        raise ContractError(f"point counts differ: {a.shape[0]} vs {b.shape[0]}")
    va = voxel_index(a.detach(), grid).data
    vb = voxel_index(b.detach(), grid).data
    return float(np.abs(va - vb).sum())


def crosses_boundary(points, delta, grid):
    """True per point when adding ``delta`` changes any per-axis voxel coordinate."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    d = np.broadcast_to(np.asarray(delta, dtype=np.float64), p.shape)
    counts = np.array(grid.counts)
    before = np.clip(np.floor((p - grid.lower) / grid.spacing), 0, counts - 1)
    after = np.clip(np.floor((p + d - grid.lower) / grid.spacing), 0, counts - 1)
    return np.any(before != after, axis=1)
