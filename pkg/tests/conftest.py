import numpy as np
import pytest

from radarp2t.fmcw import RadarConfig
from radarp2t.tensorize import RoiGrid


@pytest.fixture
def small_radar() -> RadarConfig:
    return RadarConfig(
        samples_per_chirp=32,
        chirps_per_frame=8,
        azimuth_antennas=16,
        elevation_antennas=8,
    )


@pytest.fixture
def toy_grid() -> RoiGrid:
    # 32 x 16 x 8 cells, divisible by the generator's 8x downsampling
    return RoiGrid(
        x_min=0.0, x_max=19.2, y_min=-4.8, y_max=4.8, z_min=-2.0, z_max=2.8, voxel_size=0.6
    )


def random_polar3d(rng, shape=(12, 10, 8), low=0.0, high=1.0):
    """A PolarTensor3D with uniform random power and simple physical axes."""
    from radarp2t.fmcw import PolarTensor3D

    power = rng.uniform(low, high, size=shape)
    return PolarTensor3D(
        power=power,
        range_m=np.linspace(1.0, 40.0, shape[0]),
        azimuth_rad=np.linspace(-1.0, 1.0, shape[1]),
        elevation_rad=np.linspace(-0.8, 0.8, shape[2]),
    )
