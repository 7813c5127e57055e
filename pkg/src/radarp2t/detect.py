"""Point-cloud extraction from polar power tensors.

Two families: percentile thresholding (keep the top-p% highest-power
cells) and 3D cell-averaging CFAR (per-cell adaptive threshold against
the mean of the surrounding training cells).  Both are pure functions
with deterministic output ordering (ascending flattened cell index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError
from .fmcw import PolarTensor3D
from .points import RadarPointCloud, polar_to_cart
from .tensorize import RoiGrid


@dataclass(frozen=True)
class PercentileConfig:
    """Keep the top ``p_percent`` % of tensor cells as points."""

    p_percent: float

    def __post_init__(self):
        if not 0.0 < self.p_percent <= 100.0:
            raise ValueError("p_percent must lie in (0, 100]")


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR window and threshold.

    ``guard_cells`` / ``training_cells`` are per-axis half-extents: around
    each cell under test the full window spans guard+training cells in each
    direction on every axis, the inner guard box (which contains the cell
    itself) is excluded, and what remains is the training region.  Windows
    are clamped at tensor borders.  A cell is detected when its power
    exceeds ``scale_factor`` times the training mean.

    ``k1_percent``, when set, is a target detection fraction (in percent)
    used by :func:`calibrate_cfar_scale` to solve for ``scale_factor``.
    """

    guard_cells: tuple = (1, 1, 1)
    training_cells: tuple = (2, 2, 2)
    scale_factor: float = 2.0
    k1_percent: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "guard_cells", tuple(int(g) for g in self.guard_cells))
        object.__setattr__(self, "training_cells", tuple(int(t) for t in self.training_cells))
        if len(self.guard_cells) != 3 or len(self.training_cells) != 3:
            raise ValueError("guard_cells and training_cells must have 3 entries")
        if any(g < 0 for g in self.guard_cells) or any(t < 0 for t in self.training_cells):
            raise ValueError("cell counts must be non-negative")
        if not self.scale_factor > 0.0:
            raise ValueError("scale_factor must be positive")
        if self.k1_percent is not None and not 0.0 < self.k1_percent <= 100.0:
            raise ValueError("k1_percent must lie in (0, 100]")


def _cloud_from_cells(t: PolarTensor3D, flat_cells: np.ndarray, tag: str) -> RadarPointCloud:
    """Build a point cloud from flattened cell indices (kept in the given
    order, which callers keep ascending)."""
    idx = np.stack(np.unravel_index(flat_cells, t.power.shape), axis=1).astype(np.int64)
    r = t.range_m[idx[:, 0]]
    az = t.azimuth_rad[idx[:, 1]]
    el = t.elevation_rad[idx[:, 2]]
    x, y, z = polar_to_cart(r, az, el)
    return RadarPointCloud(
        xyz=np.column_stack([x, y, z]),
        power=t.power.ravel()[flat_cells],
        polar_index=idx,
        source_method=tag,
    )


def selection_count(p_percent: float, n_cells: int) -> int:
    """ceil(p/100 * N) with a 1e-9 relative snap to integers, clamped to
    [1, N] so any positive percentage yields a nonempty selection."""
    if not 0.0 < p_percent <= 100.0:
        raise ValueError("p_percent must lie in (0, 100]")
    q = p_percent * n_cells / 100.0
    nearest = round(q)
    if abs(q - nearest) <= 1e-9 * max(1.0, abs(q)):
        k = int(nearest)
    else:
        k = int(math.ceil(q))
    return min(max(k, 1), n_cells)


def percentile_extract(t: PolarTensor3D, cfg: PercentileConfig) -> RadarPointCloud:
    """Keep exactly ``selection_count`` highest-power cells.

    Ties are broken by ascending flattened cell index (stable sort on
    descending power), so the selected set is deterministic across runs
    and platforms.
    """
    flat = t.power.ravel()
    if flat.size == 0:
        raise ValueError("cannot extract from an empty tensor")
    k = selection_count(cfg.p_percent, flat.size)
    top = np.argsort(-flat, kind="stable")[:k]
    cells = np.sort(top)
    return _cloud_from_cells(t, cells, f"percentile({cfg.p_percent:g})")


# ---------------------------------------------------------------------------
# CA-CFAR


def _integral_image(p: np.ndarray) -> np.ndarray:
    s = np.zeros(tuple(n + 1 for n in p.shape))
    s[1:, 1:, 1:] = p.cumsum(0).cumsum(1).cumsum(2)
    return s


def _box_sums(s: np.ndarray, lo: list, hi: list) -> np.ndarray:
    """Per-cell clamped-box sums from an integral image.

    ``lo[a]`` / ``hi[a]`` are per-axis inclusive bound vectors; the bounds
    of the box around cell (i, j, k) are (lo[0][i]..hi[0][i]) etc., so the
    8-corner gather is an outer product of per-axis index vectors.
    """
    a = [l for l in lo]
    b = [h + 1 for h in hi]

    def g(i0, i1, i2):
        return s[np.ix_(i0, i1, i2)]

    return (
        g(b[0], b[1], b[2])
        - g(a[0], b[1], b[2])
        - g(b[0], a[1], b[2])
        - g(b[0], b[1], a[2])
        + g(a[0], a[1], b[2])
        + g(a[0], b[1], a[2])
        + g(b[0], a[1], a[2])
        - g(a[0], a[1], a[2])
    )


def _box_counts(lo: list, hi: list) -> np.ndarray:
    c0 = hi[0] - lo[0] + 1
    c1 = hi[1] - lo[1] + 1
    c2 = hi[2] - lo[2] + 1
    return np.einsum("i,j,k->ijk", c0.astype(float), c1.astype(float), c2.astype(float))


def cfar_training_mean(power: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Per-cell mean of the training cells (full window minus guard box),
    with the window clamped at tensor borders."""
    power = np.asarray(power, dtype=np.float64)
    shape = power.shape
    s = _integral_image(power)
    lo_f, hi_f, lo_g, hi_g = [], [], [], []
    for axis in range(3):
        n = shape[axis]
        pos = np.arange(n)
        half_full = cfg.guard_cells[axis] + cfg.training_cells[axis]
        half_guard = cfg.guard_cells[axis]
        lo_f.append(np.maximum(pos - half_full, 0))
        hi_f.append(np.minimum(pos + half_full, n - 1))
        lo_g.append(np.maximum(pos - half_guard, 0))
        hi_g.append(np.minimum(pos + half_guard, n - 1))
    train_sum = _box_sums(s, lo_f, hi_f) - _box_sums(s, lo_g, hi_g)
    train_cnt = _box_counts(lo_f, hi_f) - _box_counts(lo_g, hi_g)
    if np.any(train_cnt <= 0):
        raise ValueError(
            "degenerate CFAR window: some cells have zero training cells after clamping"
        )
    return train_sum / train_cnt


def cfar_detect_mask(power: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Boolean detection mask: power strictly above scale_factor * training mean."""
    return np.asarray(power, dtype=np.float64) > cfg.scale_factor * cfar_training_mean(power, cfg)


def ca_cfar(t: PolarTensor3D, cfg: CfarConfig) -> RadarPointCloud:
    """3D cell-averaging CFAR detection over all three axes jointly."""
    mask = cfar_detect_mask(t.power, cfg)
    cells = np.flatnonzero(mask.ravel())
    k1 = f"{cfg.k1_percent:g}" if cfg.k1_percent is not None else f"a{cfg.scale_factor:g}"
    return _cloud_from_cells(t, cells, f"cfar({k1})")


_SCALE_LO = 1e-3
_SCALE_HI = 1e3


def calibrate_cfar_scale(t: PolarTensor3D, cfg: CfarConfig, iterations: int = 60) -> CfarConfig:
    """Solve for the scale factor whose detection fraction is closest to
    ``cfg.k1_percent``.

    Detection count is monotone non-increasing in the scale factor, so a
    geometric bisection over [1e-3, 1e3] brackets the target; the endpoint
    with the closest achieved fraction wins.  Raises
    :class:`NumericError` when the target lies outside the achievable
    range.
    """
    if cfg.k1_percent is None:
        raise ValueError("calibrate_cfar_scale requires k1_percent to be set")
    target = cfg.k1_percent
    n_cells = t.power.size
    mean = cfar_training_mean(t.power, cfg)

    def fraction(alpha: float) -> float:
        return 100.0 * np.count_nonzero(t.power > alpha * mean) / n_cells

    lo, hi = _SCALE_LO, _SCALE_HI
    f_lo, f_hi = fraction(lo), fraction(hi)
    if target > f_lo or target < f_hi:
        raise NumericError(
            f"detection fraction {target:g}% unreachable: achievable range is "
            f"[{f_hi:g}%, {f_lo:g}%] for scale_factor in [{_SCALE_LO:g}, {_SCALE_HI:g}]"
        )
    if f_lo == target:
        return replace(cfg, scale_factor=lo)
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if fraction(mid) >= target:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda a: abs(fraction(a) - target))
    return replace(cfg, scale_factor=best)


def pcd(cloud: RadarPointCloud, grid: RoiGrid) -> float:
    """Point-cloud density: in-ROI points / total voxel count, in [0, 1]."""
    if len(cloud) == 0:
        return 0.0
    inside = int(np.count_nonzero(grid.contains(cloud.xyz)))
    return inside / grid.cell_count
