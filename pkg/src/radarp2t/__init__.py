"""Radar point-to-tensor toolkit.

Simulates 4D FMCW radar power tensors from parametric scenes, extracts
point clouds with percentile and CA-CFAR methods, reconstructs dense
Cartesian cubes from the sparse clouds with a conditional adversarial
model, and evaluates reconstructions with PSNR / SSIM / a
density-normalized efficiency score.
"""

from .detect import (
    CfarConfig,
    PercentileConfig,
    ca_cfar,
    calibrate_cfar_scale,
    pcd,
    percentile_extract,
)
from .errors import ConfigError, DataError, NumericError
from .fmcw import (
    AdcCube,
    PolarTensor3D,
    PolarTensor4D,
    RadarConfig,
    Scatterer,
    Scene,
    angle_fft,
    collapse_doppler,
    load_scene,
    range_doppler_fft,
    scene_to_polar4d,
    simulate_adc,
)
from .metrics import (
    MethodEvalSet,
    MethodRecord,
    des,
    evaluate_frame,
    mean_pool_height,
    normalize_metrics,
    psnr,
    score_methods,
    ssim,
)
from .model import (
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    LossWeights,
    TrainConfig,
    Trainer,
)
from .points import RadarPointCloud, cart_to_polar, polar_to_cart
from .tensorize import (
    CubeTensor,
    RoiGrid,
    SparseVoxelGrid,
    denormalize_power,
    normalize_power,
    polar_to_cartesian,
    voxelize,
)

__version__ = "0.1.0"
