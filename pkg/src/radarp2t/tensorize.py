"""Cartesian ROI grids, dense cubes, and sparse voxel grids.

Converts Doppler-collapsed polar tensors into dense Cartesian cubes
(ground truth for the reconstruction model) and point clouds into the
4-channel sparse voxel grids the model consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .fmcw import PolarTensor3D
from .points import RadarPointCloud, cart_to_polar


@dataclass(frozen=True)
class RoiGrid:
    """Axis-aligned region of interest divided into cubic voxels.

    Defaults give the 76.8 m x 32 m x 12.8 m box at 0.4 m resolution,
    i.e. 192 x 80 x 32 cells.
    """

    x_min: float = 0.0
    x_max: float = 76.8
    y_min: float = -16.0
    y_max: float = 16.0
    z_min: float = -2.0
    z_max: float = 10.8
    voxel_size: float = 0.4

    def __post_init__(self):
        if self.voxel_size <= 0.0:
            raise ValueError("voxel_size must be positive")
        for lo, hi, name in (
            (self.x_min, self.x_max, "x"),
            (self.y_min, self.y_max, "y"),
            (self.z_min, self.z_max, "z"),
        ):
            if not hi > lo:
                raise ValueError(f"{name} range is empty")
            cells = (hi - lo) / self.voxel_size
            if abs(cells - round(cells)) > 1e-9:
                raise ValueError(
                    f"{name} extent {hi - lo:g} is not divisible by voxel_size {self.voxel_size:g}"
                )

    @property
    def nx(self) -> int:
        return round((self.x_max - self.x_min) / self.voxel_size)

    @property
    def ny(self) -> int:
        return round((self.y_max - self.y_min) / self.voxel_size)

    @property
    def nz(self) -> int:
        return round((self.z_max - self.z_min) / self.voxel_size)

    @property
    def shape(self) -> tuple:
        return (self.nx, self.ny, self.nz)

    @property
    def cell_count(self) -> int:
        return self.nx * self.ny * self.nz

    def axis_centers(self, axis: str) -> np.ndarray:
        lo = getattr(self, f"{axis}_min")
        n = getattr(self, f"n{axis}")
        return lo + (np.arange(n) + 0.5) * self.voxel_size

    def centers(self) -> np.ndarray:
        """Voxel-centre coordinates, shape (nx, ny, nz, 3)."""
        xs = self.axis_centers("x")
        ys = self.axis_centers("y")
        zs = self.axis_centers("z")
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside [min, max) on every axis."""
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        return (
            (xyz[:, 0] >= self.x_min)
            & (xyz[:, 0] < self.x_max)
            & (xyz[:, 1] >= self.y_min)
            & (xyz[:, 1] < self.y_max)
            & (xyz[:, 2] >= self.z_min)
            & (xyz[:, 2] < self.z_max)
        )

    def voxel_index(self, xyz: np.ndarray) -> np.ndarray:
        """Integer voxel index of each (in-ROI) point, shape (N, 3)."""
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        lo = np.array([self.x_min, self.y_min, self.z_min])
        idx = np.floor((xyz - lo) / self.voxel_size).astype(np.int64)
        return np.minimum(idx, np.array(self.shape) - 1)


@dataclass
class CubeTensor:
    """Dense Cartesian power grid over an ROI.

    ``normalized`` marks [0, 1] min-max scaled data; ``norm_min`` /
    ``norm_max`` keep the original range for inversion.
    """

    power: np.ndarray
    normalized: bool = False
    norm_min: float | None = None
    norm_max: float | None = None

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.power.ndim != 3:
            raise ValueError("CubeTensor power must be 3-dimensional")
        if self.normalized:
            if self.power.size and (self.power.min() < -1e-12 or self.power.max() > 1.0 + 1e-12):
                raise ValueError("normalized cube values must lie in [0, 1]")

    @property
    def shape(self) -> tuple:
        return self.power.shape


@dataclass
class SparseVoxelGrid:
    """Occupied voxels with 4-channel features (mean x, y, z, power).

    Voxel indices are unique, inside the grid, and sorted by flattened
    index so downstream processing is deterministic.
    """

    indices: np.ndarray
    features: np.ndarray
    grid: RoiGrid

    def __post_init__(self):
        self.indices = np.atleast_2d(np.asarray(self.indices, dtype=np.int64))
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        m = self.indices.shape[0]
        if m == 0:
            self.indices = self.indices.reshape(0, 3)
            self.features = self.features.reshape(0, 4)
            return
        if self.indices.shape != (m, 3) or self.features.shape != (m, 4):
            raise ValueError("indices must be (M, 3) and features (M, 4)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("voxel features must be finite")
        shape = np.array(self.grid.shape)
        if np.any(self.indices < 0) or np.any(self.indices >= shape):
            raise ValueError("voxel indices outside the ROI grid")
        flat = np.ravel_multi_index(self.indices.T, self.grid.shape)
        if np.unique(flat).size != m:
            raise ValueError("voxel indices must be unique")
        if np.any(np.diff(flat) <= 0):
            order = np.argsort(flat)
            self.indices = self.indices[order]
            self.features = self.features[order]

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def densify(self) -> np.ndarray:
        """Dense (4, nx, ny, nz) feature tensor, zeros at inactive voxels."""
        dense = np.zeros((4,) + self.grid.shape)
        if len(self):
            dense[:, self.indices[:, 0], self.indices[:, 1], self.indices[:, 2]] = self.features.T
        return dense


# ---------------------------------------------------------------------------
# operations


def polar_to_cartesian(t: PolarTensor3D, grid: RoiGrid) -> CubeTensor:
    """Sample the polar power field at every voxel centre.

    Each voxel centre is converted to (range, azimuth, elevation) and the
    polar tensor is trilinearly interpolated there; voxels outside the
    polar field of view get 0.
    """
    for ax, name in ((t.range_m, "range"), (t.azimuth_rad, "azimuth"), (t.elevation_rad, "elevation")):
        if len(ax) < 2:
            raise ValueError(f"polar {name} axis needs at least 2 bins to span a field of view")
    interp = RegularGridInterpolator(
        (t.range_m, t.azimuth_rad, t.elevation_rad),
        t.power,
        method="linear",
        bounds_error=False,
        fill_value=0.0,
    )
    centers = grid.centers().reshape(-1, 3)
    r, az, el = cart_to_polar(centers[:, 0], centers[:, 1], centers[:, 2])
    values = interp(np.stack([r, az, el], axis=1)).reshape(grid.shape)
    return CubeTensor(power=values, normalized=False)


def normalize_power(c: CubeTensor) -> CubeTensor:
    """Min-max scale to [0, 1]; a constant cube maps to all zeros."""
    vmin = float(c.power.min())
    vmax = float(c.power.max())
    if vmax == vmin:
        scaled = np.zeros_like(c.power)
    else:
        scaled = (c.power - vmin) / (vmax - vmin)
    return CubeTensor(power=scaled, normalized=True, norm_min=vmin, norm_max=vmax)


def denormalize_power(c: CubeTensor) -> CubeTensor:
    """Invert :func:`normalize_power` using the recorded min/max."""
    if not c.normalized or c.norm_min is None or c.norm_max is None:
        raise ValueError("cube does not carry normalization metadata")
    return CubeTensor(
        power=c.power * (c.norm_max - c.norm_min) + c.norm_min,
        normalized=False,
    )


def voxelize(cloud: RadarPointCloud, grid: RoiGrid) -> SparseVoxelGrid:
    """Bin points into voxels; same-voxel points are averaged.

    Points outside the ROI are dropped.  Feature channels are the mean
    x, y, z coordinate and mean power of the contained points, in that
    order.  Output is independent of point ordering.
    """
    inside = grid.contains(cloud.xyz)
    if not np.any(inside):
        return SparseVoxelGrid(
            indices=np.zeros((0, 3), dtype=np.int64),
            features=np.zeros((0, 4)),
            grid=grid,
        )
    xyz = cloud.xyz[inside]
    power = cloud.power[inside]
    idx = grid.voxel_index(xyz)
    flat = np.ravel_multi_index(idx.T, grid.shape)
    # canonical accumulation order makes the result bitwise independent of
    # the input point ordering
    order = np.lexsort((power, xyz[:, 2], xyz[:, 1], xyz[:, 0], flat))
    xyz, power, flat = xyz[order], power[order], flat[order]
    uniq, inverse = np.unique(flat, return_inverse=True)
    m = uniq.size
    sums = np.zeros((m, 4))
    np.add.at(sums, inverse, np.column_stack([xyz, power]))
    counts = np.bincount(inverse, minlength=m).astype(float)
    features = sums / counts[:, None]
    indices = np.stack(np.unravel_index(uniq, grid.shape), axis=1).astype(np.int64)
    return SparseVoxelGrid(indices=indices, features=features, grid=grid)
