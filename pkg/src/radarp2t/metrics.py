"""Image-quality metrics over height-pooled BEV images and the
density-normalized efficiency score used to compare extraction methods.

BEV images are plain 2D float arrays of shape (x bins, y bins) obtained
by mean pooling a normalized cube along its height axis.  PSNR uses peak
1.0 on normalized data; SSIM follows the canonical configuration
(11x11 Gaussian window, sigma 1.5, C1=(0.01L)^2, C2=(0.03L)^2, L=1,
symmetric borders).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import DataError
from .tensorize import CubeTensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def mean_pool_height(c: CubeTensor) -> np.ndarray:
    """Mean over z per (x, y) column -> BEV image of shape (nx, ny)."""
    if not c.normalized:
        raise ValueError("mean_pool_height expects a normalized cube")
    return c.power.mean(axis=2)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); identical images give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window() -> np.ndarray:
    offs = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    g = np.exp(-(offs**2) / (2.0 * SSIM_SIGMA**2))
    k = np.outer(g, g)
    return k / k.sum()


_SSIM_KERNEL = _gaussian_window()


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean local structural similarity.

    Local means/variances/covariance come from an 11x11 Gaussian window
    (sigma 1.5) with symmetric (edge-reflecting) borders; the SSIM map is
    averaged over all pixels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def smooth(img):
        return ndimage.correlate(img, _SSIM_KERNEL, mode="reflect")

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a * mu_a
    var_b = smooth(b * b) - mu_b * mu_b
    cov = smooth(a * b) - mu_a * mu_b
    s_map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(s_map.mean())


def evaluate_frame(gen: CubeTensor, gt: CubeTensor) -> dict:
    """PSNR and SSIM between the BEV projections of two cubes."""
    bev_gen = mean_pool_height(gen)
    bev_gt = mean_pool_height(gt)
    return {"psnr_db": psnr(bev_gen, bev_gt), "ssim": ssim(bev_gen, bev_gt)}


# ---------------------------------------------------------------------------
# method comparison


@dataclass(frozen=True)
class MethodRecord:
    """One extraction method's aggregate results."""

    method: str           # "cfar" | "percentile"
    hyper: float          # K1 (%) or percentile p (%)
    pcd_percent: float
    psnr_db: float
    ssim: float

    def __post_init__(self):
        if self.method not in ("cfar", "percentile"):
            raise ValueError("method must be 'cfar' or 'percentile'")
        if not 0.0 < self.pcd_percent <= 100.0:
            raise ValueError("pcd_percent must lie in (0, 100]")
        if not -1.0 <= self.ssim <= 1.0:
            raise ValueError("ssim must lie in [-1, 1]")

    @property
    def label(self) -> str:
        return f"{self.method} {self.hyper:g}"


@dataclass
class MethodEvalSet:
    """A set of method records plus derived normalized metrics and scores.

    alpha/beta weight the normalized PSNR and SSIM contributions and must
    sum to 1.
    """

    records: list
    alpha: float = 0.5
    beta: float = 0.5
    psnr_norm: np.ndarray | None = None
    ssim_norm: np.ndarray | None = None
    des_scores: np.ndarray | None = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValueError("alpha + beta must equal 1")
        if not self.records:
            raise ValueError("record set must be nonempty")


def _minmax_column(values: np.ndarray, name: str, warnings: list) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        warnings.append(f"{name}: max equals min; normalized values set to 0")
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def normalize_metrics(eval_set: MethodEvalSet) -> MethodEvalSet:
    """Min-max scale the PSNR and SSIM columns across the record set.

    Degenerate columns (max == min) normalize to 0 with a warning.  All
    records must be finite; infinite PSNR cannot be normalized.
    """
    psnr_col = np.array([r.psnr_db for r in eval_set.records], dtype=np.float64)
    ssim_col = np.array([r.ssim for r in eval_set.records], dtype=np.float64)
    if not np.all(np.isfinite(psnr_col)) or not np.all(np.isfinite(ssim_col)):
        raise ValueError("normalize_metrics requires finite PSNR/SSIM records")
    warnings = list(eval_set.warnings)
    return replace(
        eval_set,
        psnr_norm=_minmax_column(psnr_col, "psnr", warnings),
        ssim_norm=_minmax_column(ssim_col, "ssim", warnings),
        warnings=warnings,
    )


def des(eval_set: MethodEvalSet) -> MethodEvalSet:
    """Per-record efficiency score: the PCD-weighted sum of normalized
    metrics, alpha * psnr_norm / D + beta * ssim_norm / D with D the
    point-cloud density in percent."""
    if eval_set.psnr_norm is None or eval_set.ssim_norm is None:
        raise ValueError("normalize_metrics must run before des")
    d = np.array([r.pcd_percent for r in eval_set.records], dtype=np.float64)
    if np.any(d <= 0.0):
        raise ValueError("des undefined for zero point-cloud density")
    scores = eval_set.alpha * eval_set.psnr_norm / d + eval_set.beta * eval_set.ssim_norm / d
    return replace(eval_set, des_scores=scores)


def score_methods(eval_set: MethodEvalSet) -> MethodEvalSet:
    """normalize_metrics followed by des."""
    return des(normalize_metrics(eval_set))


_CSV_COLUMNS = ("method", "hyper", "pcd_percent", "psnr_db", "ssim", "psnr_norm", "ssim_norm", "des")


def write_records_csv(eval_set: MethodEvalSet, path) -> None:
    """Emit the scored record set as CSV with 4-decimal fixed formatting,
    rows sorted by (method, hyper)."""
    if eval_set.des_scores is None:
        raise ValueError("score the eval set before writing CSV")
    order = sorted(
        range(len(eval_set.records)),
        key=lambda i: (eval_set.records[i].method, eval_set.records[i].hyper),
    )
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(_CSV_COLUMNS)
        for i in order:
            r = eval_set.records[i]
            w.writerow(
                [
                    r.method,
                    f"{r.hyper:g}",
                    f"{r.pcd_percent:.4f}",
                    f"{r.psnr_db:.4f}",
                    f"{r.ssim:.4f}",
                    f"{eval_set.psnr_norm[i]:.4f}",
                    f"{eval_set.ssim_norm[i]:.4f}",
                    f"{eval_set.des_scores[i]:.4f}",
                ]
            )


def read_records_csv(path, alpha: float = 0.5, beta: float = 0.5) -> MethodEvalSet:
    """Read method records from CSV (columns method, hyper, pcd_percent,
    psnr_db, ssim; extra columns ignored)."""
    records = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        required = {"method", "hyper", "pcd_percent", "psnr_db", "ssim"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: records CSV must have columns {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(
                    MethodRecord(
                        method=row["method"].strip(),
                        hyper=float(row["hyper"]),
                        pcd_percent=float(row["pcd_percent"]),
                        psnr_db=float(row["psnr_db"]),
                        ssim=float(row["ssim"]),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise DataError(f"{path}: no records found")
    return MethodEvalSet(records=records, alpha=alpha, beta=beta)
