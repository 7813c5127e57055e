"""Radar point clouds and the polar <-> Cartesian coordinate map.

Coordinate convention: x points forward (boresight), y left, z up.
Azimuth is the angle in the x-y plane (positive toward +y), elevation
the angle above the x-y plane, both in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def polar_to_cart(r, azimuth, elevation):
    """Convert polar radar coordinates to Cartesian (x, y, z).

    Accepts scalars or broadcastable arrays; returns arrays of the
    broadcast shape.
    """
    r = np.asarray(r, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    cos_el = np.cos(elevation)
    x = r * cos_el * np.cos(azimuth)
    y = r * cos_el * np.sin(azimuth)
    z = r * np.sin(elevation)
    return x, y, z


def cart_to_polar(x, y, z):
    """Convert Cartesian (x, y, z) to polar (range, azimuth, elevation)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.sqrt(x * x + y * y + z * z)
    azimuth = np.arctan2(y, x)
    safe_r = np.where(r > 0.0, r, 1.0)
    elevation = np.where(r > 0.0, np.arcsin(np.clip(z / safe_r, -1.0, 1.0)), 0.0)
    return r, azimuth, elevation


@dataclass
class RadarPointCloud:
    """Detected points with Cartesian position, power, and source polar bins.

    Attributes
    ----------
    xyz : (N, 3) float64 array, metres.
    power : (N,) float64 array, linear power units (non-negative).
    polar_index : (N, 3) int64 array of (range_bin, azimuth_bin,
        elevation_bin) the point was extracted from; unique per point.
    source_method : short tag describing the extraction method, e.g.
        ``percentile(5)`` or ``cfar(2.5)``.
    """

    xyz: np.ndarray
    power: np.ndarray
    polar_index: np.ndarray
    source_method: str = "unknown"

    def __post_init__(self):
        self.xyz = np.atleast_2d(np.asarray(self.xyz, dtype=np.float64))
        self.power = np.asarray(self.power, dtype=np.float64).reshape(-1)
        self.polar_index = np.atleast_2d(np.asarray(self.polar_index, dtype=np.int64))
        n = self.power.shape[0]
        if self.xyz.shape != (n, 3) and not (n == 0 and self.xyz.size == 0):
            raise ValueError(f"xyz shape {self.xyz.shape} does not match {n} points")
        if self.polar_index.shape != (n, 3) and not (n == 0 and self.polar_index.size == 0):
            raise ValueError("polar_index shape does not match point count")
        if n == 0:
            self.xyz = self.xyz.reshape(0, 3)
            self.polar_index = self.polar_index.reshape(0, 3)
            return
        if not np.all(np.isfinite(self.xyz)) or not np.all(np.isfinite(self.power)):
            raise ValueError("point cloud contains non-finite values")
        if np.any(self.power < 0.0):
            raise ValueError("point power must be non-negative")
        if np.unique(self.polar_index, axis=0).shape[0] != n:
            raise ValueError("polar_index values must be unique per point")

    def __len__(self) -> int:
        return int(self.power.shape[0])


def empty_cloud(source_method: str = "unknown") -> RadarPointCloud:
    """A cloud with zero points."""
    return RadarPointCloud(
        xyz=np.zeros((0, 3)),
        power=np.zeros(0),
        polar_index=np.zeros((0, 3), dtype=np.int64),
        source_method=source_method,
    )
