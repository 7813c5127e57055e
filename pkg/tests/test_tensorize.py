"""Grid, interpolation, normalization, and voxelization tests."""

import numpy as np
import pytest

from radarp2t.fmcw import PolarTensor3D
from radarp2t.points import RadarPointCloud, polar_to_cart
from radarp2t.tensorize import (
    CubeTensor,
    RoiGrid,
    SparseVoxelGrid,
    denormalize_power,
    normalize_power,
    polar_to_cartesian,
    voxelize,
)

from conftest import random_polar3d


def wide_polar3d(power_fn, shape=(20, 15, 11)):
    """Polar tensor whose FOV comfortably covers the default ROI."""
    r = np.linspace(0.5, 90.0, shape[0])
    az = np.linspace(-1.5, 1.5, shape[1])
    el = np.linspace(-1.2, 1.2, shape[2])
    rr, aa, ee = np.meshgrid(r, az, el, indexing="ij")
    return PolarTensor3D(power=power_fn(rr, aa, ee), range_m=r, azimuth_rad=az, elevation_rad=el)


class TestRoiGrid:
    def test_default_cell_counts(self):
        grid = RoiGrid()
        assert grid.shape == (192, 80, 32)

    def test_rejects_non_divisible_extent(self):
        with pytest.raises(ValueError, match="divisible"):
            RoiGrid(x_max=76.9)

    def test_contains_half_open(self):
        grid = RoiGrid(x_min=0, x_max=2, y_min=0, y_max=2, z_min=0, z_max=2, voxel_size=1.0)
        pts = np.array([[0.0, 0.0, 0.0], [2.0, 1.0, 1.0], [1.999, 1.0, 1.0]])
        assert list(grid.contains(pts)) == [True, False, True]


def _fov_mask(t, grid):
    from radarp2t.points import cart_to_polar

    centers = grid.centers().reshape(-1, 3)
    r, az, el = cart_to_polar(centers[:, 0], centers[:, 1], centers[:, 2])
    return (
        (r >= t.range_m[0])
        & (r <= t.range_m[-1])
        & (az >= t.azimuth_rad[0])
        & (az <= t.azimuth_rad[-1])
        & (el >= t.elevation_rad[0])
        & (el <= t.elevation_rad[-1])
    ), r


class TestPolarToCartesian:
    def test_constant_field_in_fov(self):
        t = wide_polar3d(lambda r, a, e: np.full_like(r, 3.5))
        grid = RoiGrid(voxel_size=1.6)
        cube = polar_to_cartesian(t, grid)
        in_fov, _ = _fov_mask(t, grid)
        vals = cube.power.reshape(-1)
        assert np.allclose(vals[in_fov], 3.5, atol=1e-9)
        assert np.all(vals[~in_fov] == 0.0)

    def test_linear_range_field_reproduced(self):
        # trilinear interpolation is exact for fields linear along one axis
        t = wide_polar3d(lambda r, a, e: r)
        grid = RoiGrid(voxel_size=1.6)
        cube = polar_to_cartesian(t, grid)
        in_fov, r = _fov_mask(t, grid)
        assert np.allclose(cube.power.reshape(-1)[in_fov], r[in_fov], atol=1e-6)

    def test_single_hot_cell_argmax_near_physical_location(self):
        # brute-force nearest-voxel oracle
        t = wide_polar3d(lambda r, a, e: np.zeros_like(r))
        hot = (8, 8, 6)
        t.power[hot] = 10.0
        grid = RoiGrid(voxel_size=0.8)
        cube = polar_to_cartesian(t, grid)
        x, y, z = polar_to_cart(t.range_m[hot[0]], t.azimuth_rad[hot[1]], t.elevation_rad[hot[2]])
        centers = grid.centers()
        dist = np.linalg.norm(centers - np.array([x, y, z]), axis=-1)
        nearest = np.unravel_index(np.argmin(dist), grid.shape)
        got = np.unravel_index(np.argmax(cube.power), grid.shape)
        assert max(abs(int(g) - int(n)) for g, n in zip(got, nearest)) <= 1

    def test_scaling_is_elementwise_monotone(self):
        rng = np.random.default_rng(0)
        t = wide_polar3d(lambda r, a, e: np.zeros_like(r))
        t.power = rng.uniform(0.0, 2.0, size=t.power.shape)
        grid = RoiGrid(voxel_size=3.2)
        a = polar_to_cartesian(t, grid).power
        t.power = t.power * 2.0
        b = polar_to_cartesian(t, grid).power
        assert np.allclose(b, 2.0 * a, atol=1e-12)


class TestNormalizePower:
    def test_identity_on_unit_range(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0.0, 1.0, size=(4, 5, 6))
        p.ravel()[0] = 0.0
        p.ravel()[1] = 1.0
        cube = normalize_power(CubeTensor(p))
        assert np.allclose(cube.power, p)

    def test_constant_maps_to_zero(self):
        cube = normalize_power(CubeTensor(np.full((3, 3, 3), 7.0)))
        assert np.all(cube.power == 0.0)
        assert cube.normalized

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        p = rng.uniform(-3.0, 9.0, size=(5, 4, 3))
        cube = normalize_power(CubeTensor(p))
        back = denormalize_power(cube)
        assert np.allclose(back.power, p, atol=1e-6)


def brute_force_voxelize(cloud, grid):
    bins = {}
    for i in range(len(cloud)):
        p = cloud.xyz[i]
        if not (
            grid.x_min <= p[0] < grid.x_max
            and grid.y_min <= p[1] < grid.y_max
            and grid.z_min <= p[2] < grid.z_max
        ):
            continue
        idx = (
            int((p[0] - grid.x_min) // grid.voxel_size),
            int((p[1] - grid.y_min) // grid.voxel_size),
            int((p[2] - grid.z_min) // grid.voxel_size),
        )
        bins.setdefault(idx, []).append((p, cloud.power[i]))
    return {
        idx: (
            np.mean([p for p, _ in items], axis=0),
            np.mean([w for _, w in items]),
        )
        for idx, items in bins.items()
    }


def _random_cloud(rng, n, grid, spread=1.3):
    span = np.array(
        [grid.x_max - grid.x_min, grid.y_max - grid.y_min, grid.z_max - grid.z_min]
    )
    lo = np.array([grid.x_min, grid.y_min, grid.z_min])
    xyz = lo - 0.15 * span + rng.uniform(0.0, 1.0, size=(n, 3)) * span * spread
    return RadarPointCloud(
        xyz=xyz,
        power=rng.uniform(0.1, 5.0, size=n),
        polar_index=np.stack([np.arange(n), np.zeros(n), np.zeros(n)], axis=1),
    )


class TestVoxelize:
    def test_single_point(self, toy_grid):
        cloud = RadarPointCloud(
            xyz=np.array([[5.2, 1.1, 0.3]]),
            power=np.array([2.5]),
            polar_index=np.array([[0, 0, 0]]),
        )
        svg = voxelize(cloud, toy_grid)
        assert len(svg) == 1
        assert np.allclose(svg.features[0], [5.2, 1.1, 0.3, 2.5])

    def test_two_points_same_voxel_averaged(self, toy_grid):
        cloud = RadarPointCloud(
            xyz=np.array([[5.21, 1.1, 0.3], [5.25, 1.14, 0.32]]),
            power=np.array([2.0, 4.0]),
            polar_index=np.array([[0, 0, 0], [1, 0, 0]]),
        )
        svg = voxelize(cloud, toy_grid)
        assert len(svg) == 1
        assert svg.features[0, 3] == pytest.approx(3.0)

    def test_matches_brute_force_binning(self, toy_grid):
        rng = np.random.default_rng(3)
        cloud = _random_cloud(rng, 400, toy_grid)
        svg = voxelize(cloud, toy_grid)
        expected = brute_force_voxelize(cloud, toy_grid)
        assert set(map(tuple, svg.indices)) == set(expected)
        for row, idx in enumerate(map(tuple, svg.indices)):
            coords, power = expected[idx]
            assert np.allclose(svg.features[row, :3], coords, atol=1e-9)
            assert svg.features[row, 3] == pytest.approx(power)

    def test_permutation_invariance(self, toy_grid):
        rng = np.random.default_rng(4)
        cloud = _random_cloud(rng, 200, toy_grid)
        perm = rng.permutation(len(cloud))
        shuffled = RadarPointCloud(
            xyz=cloud.xyz[perm],
            power=cloud.power[perm],
            polar_index=cloud.polar_index[perm],
        )
        a = voxelize(cloud, toy_grid)
        b = voxelize(shuffled, toy_grid)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.features, b.features)

    def test_occupancy_bounds(self, toy_grid):
        rng = np.random.default_rng(5)
        cloud = _random_cloud(rng, 300, toy_grid)
        svg = voxelize(cloud, toy_grid)
        assert len(svg) <= min(len(cloud), toy_grid.cell_count)
        # mean coordinates stay inside their voxel
        lo = np.array([toy_grid.x_min, toy_grid.y_min, toy_grid.z_min])
        v_lo = lo + svg.indices * toy_grid.voxel_size
        assert np.all(svg.features[:, :3] >= v_lo - 1e-12)
        assert np.all(svg.features[:, :3] <= v_lo + toy_grid.voxel_size + 1e-12)

    def test_outside_points_dropped(self, toy_grid):
        cloud = RadarPointCloud(
            xyz=np.array([[-5.0, 0.0, 0.0], [500.0, 0.0, 0.0]]),
            power=np.array([1.0, 1.0]),
            polar_index=np.array([[0, 0, 0], [1, 0, 0]]),
        )
        assert len(voxelize(cloud, toy_grid)) == 0

    def test_densify_round_trip(self, toy_grid):
        rng = np.random.default_rng(6)
        cloud = _random_cloud(rng, 50, toy_grid)
        svg = voxelize(cloud, toy_grid)
        dense = svg.densify()
        assert dense.shape == (4,) + toy_grid.shape
        got = dense[:, svg.indices[:, 0], svg.indices[:, 1], svg.indices[:, 2]].T
        assert np.array_equal(got, svg.features)
        assert np.count_nonzero(dense.any(axis=0)) == len(svg)
