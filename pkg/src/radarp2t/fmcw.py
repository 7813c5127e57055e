"""FMCW radar frame synthesis and the FFT processing chain.

The simulator uses the complex-baseband dechirped model: after mixing and
low-pass filtering, each point scatterer contributes a complex exponential
whose fast-time frequency encodes range (beat frequency 2*S*R/c), whose
slow-time phase advances by 4*pi*f_c*v*T_chirp/c per chirp (Doppler), and
whose per-antenna phase advances by 2*pi*d*sin(angle) along each axis of
the virtual array (d in carrier wavelengths).

FFTs over the four sample axes turn a frame of ADC samples into a power
tensor over (range, azimuth, elevation, Doppler) bins.  All FFTs are
unitary (orthonormal), so total energy is conserved exactly at every
stage.  Doppler and angle axes are centre-shifted: zero velocity and
boresight map to bin N // 2.

All operations here are pure functions of their inputs and are safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

SPEED_OF_LIGHT = 299792458.0

_WINDOWS = ("rect", "hann")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RadarConfig:
    """FMCW front-end and virtual-array geometry.

    Parameters
    ----------
    carrier_frequency : carrier f_c in Hz.
    chirp_slope : frequency ramp rate S in Hz/s.
    sample_rate : ADC rate f_s in Hz.
    samples_per_chirp : fast-time samples per chirp (range FFT size).
    chirps_per_frame : chirps per frame (Doppler FFT size).
    azimuth_antennas, elevation_antennas : virtual uniform array sizes
        (azimuth / elevation FFT sizes).
    antenna_spacing : element spacing in carrier wavelengths.  Restricted
        to [0.5, 1] so that every angle FFT bin maps through arcsin to a
        unique physical angle and the bin axes stay strictly monotone.
    noise_stddev : std of the complex ADC noise sample (sqrt of the
        expected noise power); 0 disables noise.
    window : "rect" (default) or "hann" taper applied before the FFTs.

    All FFT sizes must be powers of two.
    """

    carrier_frequency: float = 77e9
    chirp_slope: float = 1e13
    sample_rate: float = 10e6
    samples_per_chirp: int = 64
    chirps_per_frame: int = 16
    azimuth_antennas: int = 32
    elevation_antennas: int = 16
    antenna_spacing: float = 0.5
    noise_stddev: float = 0.0
    window: str = "rect"

    def __post_init__(self):
        for name in ("samples_per_chirp", "chirps_per_frame", "azimuth_antennas", "elevation_antennas"):
            n = getattr(self, name)
            if not isinstance(n, int) or not _is_pow2(n):
                raise ValueError(f"{name} must be a power-of-two integer >= 1, got {n!r}")
        if self.sample_rate <= 0.0:
            raise ValueError("sample_rate must be positive")
        if self.chirp_slope <= 0.0:
            raise ValueError("chirp_slope must be positive")
        if self.carrier_frequency <= 0.0:
            raise ValueError("carrier_frequency must be positive")
        if not 0.5 <= self.antenna_spacing <= 1.0:
            raise ValueError("antenna_spacing must lie in [0.5, 1] wavelengths")
        if self.noise_stddev < 0.0:
            raise ValueError("noise_stddev must be non-negative")
        if self.window not in _WINDOWS:
            raise ValueError(f"window must be one of {_WINDOWS}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def chirp_duration(self) -> float:
        """Chirp repetition interval (one fast-time sampling window)."""
        return self.samples_per_chirp / self.sample_rate

    @property
    def unambiguous_range(self) -> float:
        """Largest range whose beat frequency stays below f_s."""
        return SPEED_OF_LIGHT * self.sample_rate / (2.0 * self.chirp_slope)

    @property
    def range_resolution(self) -> float:
        return self.unambiguous_range / self.samples_per_chirp

    @property
    def unambiguous_speed(self) -> float:
        """Largest |radial velocity| before Doppler aliasing."""
        return SPEED_OF_LIGHT / (4.0 * self.carrier_frequency * self.chirp_duration)

    # -- physical coordinates of FFT bin centres ------------------------

    def range_axis(self) -> np.ndarray:
        n = self.samples_per_chirp
        return np.arange(n) * (self.unambiguous_range / n)

    def doppler_axis(self) -> np.ndarray:
        n = self.chirps_per_frame
        step = SPEED_OF_LIGHT / (2.0 * self.carrier_frequency * self.chirp_duration * n)
        return (np.arange(n) - n // 2) * step

    def azimuth_axis(self) -> np.ndarray:
        n = self.azimuth_antennas
        return np.arcsin((np.arange(n) - n // 2) / (n * self.antenna_spacing))

    def elevation_axis(self) -> np.ndarray:
        n = self.elevation_antennas
        return np.arcsin((np.arange(n) - n // 2) / (n * self.antenna_spacing))


@dataclass(frozen=True)
class Scatterer:
    """A point reflector in the scene."""

    range_m: float
    azimuth: float
    elevation: float
    radial_velocity: float = 0.0
    reflectivity: float = 1.0


@dataclass
class Scene:
    """A parametric scene: a list of point scatterers."""

    scatterers: list = field(default_factory=list)

    def validate(self, cfg: RadarConfig) -> None:
        r_max = cfg.unambiguous_range
        for i, sc in enumerate(self.scatterers):
            if not 0.0 <= sc.range_m < r_max:
                raise ValueError(
                    f"scatterer {i}: range {sc.range_m:g} m outside [0, {r_max:g}) "
                    "(unambiguous range); aliased returns would corrupt the ground truth"
                )
            if not abs(sc.azimuth) < math.pi / 2:
                raise ValueError(f"scatterer {i}: |azimuth| must be < pi/2")
            if not abs(sc.elevation) < math.pi / 2:
                raise ValueError(f"scatterer {i}: |elevation| must be < pi/2")
            if not sc.reflectivity > 0.0:
                raise ValueError(f"scatterer {i}: reflectivity must be positive")


def load_scene(path) -> Scene:
    """Parse a scene file: one scatterer per line,
    ``range azimuth elevation velocity reflectivity``, '#' comments."""
    scatterers = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise DataError(
                    f"{path}:{lineno}: expected 5 fields "
                    f"(range azimuth elevation velocity reflectivity), got {len(parts)}"
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            scatterers.append(Scatterer(*vals))
    return Scene(scatterers)


@dataclass
class AdcCube:
    """Complex baseband samples indexed (fast_time, slow_time, az, el)."""

    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 4:
            raise ValueError("AdcCube samples must be 4-dimensional")


def _check_monotone(axis: np.ndarray, name: str) -> None:
    if axis.size > 1 and not np.all(np.diff(axis) > 0):
        raise ValueError(f"{name} bin axis must be strictly increasing")


@dataclass
class PolarTensor4D:
    """Power over (range, azimuth, elevation, Doppler) bins plus the
    physical coordinate of every bin centre."""

    power: np.ndarray
    range_m: np.ndarray
    azimuth_rad: np.ndarray
    elevation_rad: np.ndarray
    doppler_mps: np.ndarray

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.power.ndim != 4:
            raise ValueError("PolarTensor4D power must be 4-dimensional")
        if np.any(self.power < 0.0):
            raise ValueError("power must be non-negative")
        axes = (self.range_m, self.azimuth_rad, self.elevation_rad, self.doppler_mps)
        names = ("range", "azimuth", "elevation", "doppler")
        for dim, (ax, name) in enumerate(zip(axes, names)):
            ax = np.asarray(ax, dtype=np.float64)
            if ax.shape != (self.power.shape[dim],):
                raise ValueError(f"{name} axis length does not match power dim {dim}")
            _check_monotone(ax, name)


@dataclass
class PolarTensor3D:
    """Doppler-collapsed power over (range, azimuth, elevation) bins."""

    power: np.ndarray
    range_m: np.ndarray
    azimuth_rad: np.ndarray
    elevation_rad: np.ndarray

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.power.ndim != 3:
            raise ValueError("PolarTensor3D power must be 3-dimensional")
        axes = (self.range_m, self.azimuth_rad, self.elevation_rad)
        for dim, (ax, name) in enumerate(zip(axes, ("range", "azimuth", "elevation"))):
            ax = np.asarray(ax, dtype=np.float64)
            if ax.shape != (self.power.shape[dim],):
                raise ValueError(f"{name} axis length does not match power dim {dim}")
            _check_monotone(ax, name)


# ---------------------------------------------------------------------------
# signal synthesis


def simulate_adc(scene: Scene, cfg: RadarConfig, seed: int = 0) -> AdcCube:
    """Synthesize one frame of dechirped ADC samples from a scene.

    Each scatterer contributes the separable complex exponential described
    in the module docstring, scaled by its reflectivity; contributions sum
    coherently.  With ``cfg.noise_stddev > 0`` circular complex Gaussian
    noise is added, drawn from a generator seeded with ``seed`` so that
    identical (scene, cfg, seed) produce bit-identical cubes.
    """
    scene.validate(cfg)
    shape = (
        cfg.samples_per_chirp,
        cfg.chirps_per_frame,
        cfg.azimuth_antennas,
        cfg.elevation_antennas,
    )
    samples = np.zeros(shape, dtype=np.complex128)
    fast = np.arange(cfg.samples_per_chirp)
    slow = np.arange(cfg.chirps_per_frame)
    az_el = np.arange(cfg.azimuth_antennas)
    el_el = np.arange(cfg.elevation_antennas)
    for sc in scene.scatterers:
        beat_cps = 2.0 * cfg.chirp_slope * sc.range_m / (SPEED_OF_LIGHT * cfg.sample_rate)
        dopp_cpc = (
            2.0 * cfg.carrier_frequency * sc.radial_velocity * cfg.chirp_duration / SPEED_OF_LIGHT
        )
        az_cpe = cfg.antenna_spacing * math.sin(sc.azimuth)
        el_cpe = cfg.antenna_spacing * math.sin(sc.elevation)
        pf = np.exp(2j * np.pi * beat_cps * fast)
        ps = np.exp(2j * np.pi * dopp_cpc * slow)
        pa = np.exp(2j * np.pi * az_cpe * az_el)
        pe = np.exp(2j * np.pi * el_cpe * el_el)
        samples += sc.reflectivity * np.einsum("i,j,p,q->ijpq", pf, ps, pa, pe)
    if cfg.noise_stddev > 0.0:
        rng = np.random.default_rng(seed)
        scale = cfg.noise_stddev / math.sqrt(2.0)
        samples = samples + scale * (
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        )
    return AdcCube(samples)


def _taper(n: int, kind: str) -> np.ndarray:
    if kind == "hann":
        return np.hanning(n)
    return np.ones(n)


def range_doppler_fft(adc: AdcCube, window: str = "rect") -> np.ndarray:
    """Unitary FFT over fast time (range) then slow time (Doppler).

    The Doppler axis is centre-shifted so zero velocity lands on bin
    N_slow // 2.  Returns the complex cube, still indexed
    (range, doppler, az_antenna, el_antenna).
    """
    x = adc.samples
    for dim in range(2):
        if not _is_pow2(x.shape[dim]):
            raise ValueError("fast/slow time dimensions must be powers of two")
    if window != "rect":
        x = x * _taper(x.shape[0], window)[:, None, None, None]
        x = x * _taper(x.shape[1], window)[None, :, None, None]
    x = np.fft.fft(x, axis=0, norm="ortho")
    x = np.fft.fft(x, axis=1, norm="ortho")
    return np.fft.fftshift(x, axes=1)


def angle_fft(rd_cube: np.ndarray, cfg: RadarConfig, window: str = "rect") -> PolarTensor4D:
    """Unitary FFT over both antenna axes; squared magnitude -> power.

    Output axes are reordered to (range, azimuth, elevation, doppler) and
    annotated with physical bin-centre coordinates.
    """
    x = np.asarray(rd_cube, dtype=np.complex128)
    if x.ndim != 4:
        raise ValueError("range/Doppler cube must be 4-dimensional")
    if window != "rect":
        x = x * _taper(x.shape[2], window)[None, None, :, None]
        x = x * _taper(x.shape[3], window)[None, None, None, :]
    x = np.fft.fft(x, axis=2, norm="ortho")
    x = np.fft.fftshift(x, axes=2)
    x = np.fft.fft(x, axis=3, norm="ortho")
    x = np.fft.fftshift(x, axes=3)
    power = np.abs(x) ** 2
    # (range, doppler, az, el) -> (range, az, el, doppler)
    power = np.transpose(power, (0, 2, 3, 1))
    return PolarTensor4D(
        power=power,
        range_m=cfg.range_axis(),
        azimuth_rad=cfg.azimuth_axis(),
        elevation_rad=cfg.elevation_axis(),
        doppler_mps=cfg.doppler_axis(),
    )


def collapse_doppler(t: PolarTensor4D, mode: str = "mean") -> PolarTensor3D:
    """Reduce the Doppler axis by its mean (default) or max."""
    if mode == "mean":
        power = t.power.mean(axis=3)
    elif mode == "max":
        power = t.power.max(axis=3)
    else:
        raise ValueError("collapse mode must be 'mean' or 'max'")
    return PolarTensor3D(
        power=power,
        range_m=t.range_m,
        azimuth_rad=t.azimuth_rad,
        elevation_rad=t.elevation_rad,
    )


def scene_to_polar4d(scene: Scene, cfg: RadarConfig, seed: int = 0) -> PolarTensor4D:
    """Full chain: synthesize ADC samples and run all four FFT stages."""
    adc = simulate_adc(scene, cfg, seed=seed)
    rd = range_doppler_fft(adc, window=cfg.window)
    return angle_fft(rd, cfg, window=cfg.window)


# ---------------------------------------------------------------------------
# closed-form bin predictions (used by tests and calibration scenes)


def predicted_bins(sc: Scatterer, cfg: RadarConfig):
    """Closed-form (range, azimuth, elevation, doppler) bin of a scatterer."""
    n_fast, n_slow = cfg.samples_per_chirp, cfg.chirps_per_frame
    n_az, n_el = cfg.azimuth_antennas, cfg.elevation_antennas
    r_bin = round(2.0 * cfg.chirp_slope * sc.range_m * n_fast / (SPEED_OF_LIGHT * cfg.sample_rate))
    az_bin = n_az // 2 + round(n_az * cfg.antenna_spacing * math.sin(sc.azimuth))
    el_bin = n_el // 2 + round(n_el * cfg.antenna_spacing * math.sin(sc.elevation))
    d_bin = n_slow // 2 + round(
        2.0
        * cfg.carrier_frequency
        * sc.radial_velocity
        * cfg.chirp_duration
        * n_slow
        / SPEED_OF_LIGHT
    )
    return r_bin, az_bin, el_bin, d_bin


def scatterer_at_bins(
    cfg: RadarConfig,
    range_bin: int,
    azimuth_bin: int,
    elevation_bin: int,
    doppler_bin: int | None = None,
    reflectivity: float = 1.0,
) -> Scatterer:
    """A scatterer placed exactly at the given bin centres (zero leakage
    under the rectangular window)."""
    if doppler_bin is None:
        doppler_bin = cfg.chirps_per_frame // 2
    r = cfg.range_axis()[range_bin]
    az = cfg.azimuth_axis()[azimuth_bin]
    el = cfg.elevation_axis()[elevation_bin]
    v = cfg.doppler_axis()[doppler_bin]
    if abs(az) >= math.pi / 2 or abs(el) >= math.pi / 2:
        raise ValueError("requested angle bin maps to +-pi/2; pick an interior bin")
    return Scatterer(range_m=r, azimuth=az, elevation=el, radial_velocity=v, reflectivity=reflectivity)
