"""Binary container formats.

All integers and floats are little-endian; every file ends with a CRC32
(of every preceding byte, magic included) so corruption is always
detected.

RPT1 (tensor):      magic ``RPT1`` | u32 rank | u32 dims[rank] |
                    f32 payload, row-major | u32 CRC32
RPC1 (point cloud): magic ``RPC1`` | u32 count | count x 7 f32
                    (x, y, z, power, range_bin, az_bin, el_bin) | u32 CRC32
P2T1 (checkpoint):  magic ``P2T1`` | u32 version | u32 json_len |
                    json metadata (model specs, train config, loss
                    weights) | u32 n_arrays | per array: u32 name_len,
                    name, u32 rank, u32 dims[rank], f64 payload |
                    u32 CRC32

Tensor payloads are f32 (compact, plenty for power data); checkpoint
parameter payloads are f64 so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .errors import DataError
from .model.losses import LossWeights
from .model.network import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec
from .model.train import TrainConfig
from .points import RadarPointCloud

MAGIC_TENSOR = b"RPT1"
MAGIC_CLOUD = b"RPC1"
MAGIC_CHECKPOINT = b"P2T1"
CHECKPOINT_VERSION = 1

_MAX_RANK = 16


def _crc(buf: bytes) -> int:
    return zlib.crc32(buf) & 0xFFFFFFFF


def _read_checked(path, magic: bytes) -> memoryview:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    if len(data) < len(magic) + 4:
        raise DataError(f"{path}: truncated file")
    (stored,) = struct.unpack("<I", data[-4:])
    if _crc(data[:-4]) != stored:
        raise DataError(f"{path}: CRC mismatch (corrupted file)")
    if data[: len(magic)] != magic:
        raise DataError(f"{path}: bad magic, expected {magic.decode()}")
    return memoryview(data[:-4])


class _Reader:
    def __init__(self, buf: memoryview, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n: int) -> memoryview:
        if self.off + n > len(self.buf):
            raise DataError(f"{self.path}: truncated payload")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def done(self) -> None:
        if self.off != len(self.buf):
            raise DataError(f"{self.path}: {len(self.buf) - self.off} trailing bytes")


# ---------------------------------------------------------------------------
# RPT1


def write_tensor(path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(np.asarray(array), dtype="<f4")
    if a.ndim > _MAX_RANK:
        raise ValueError(f"tensor rank {a.ndim} exceeds {_MAX_RANK}")
    body = MAGIC_TENSOR + struct.pack("<I", a.ndim)
    body += struct.pack(f"<{a.ndim}I", *a.shape)
    body += a.tobytes()
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", _crc(body)))


def read_tensor(path) -> np.ndarray:
    """Read an RPT1 tensor; returns float64 (exact image of the f32 data)."""
    r = _Reader(_read_checked(path, MAGIC_TENSOR), path)
    r.take(4)  # magic
    rank = r.u32()
    if rank > _MAX_RANK:
        raise DataError(f"{path}: implausible rank {rank}")
    dims = tuple(r.u32() for _ in range(rank))
    count = 1
    for d in dims:
        count *= d
    payload = r.take(4 * count)
    r.done()
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)


# ---------------------------------------------------------------------------
# RPC1


def write_cloud(path, cloud: RadarPointCloud) -> None:
    n = len(cloud)
    rec = np.empty((n, 7), dtype="<f4")
    if n:
        rec[:, 0:3] = cloud.xyz
        rec[:, 3] = cloud.power
        rec[:, 4:7] = cloud.polar_index
    body = MAGIC_CLOUD + struct.pack("<I", n) + rec.tobytes()
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", _crc(body)))


def read_cloud(path, source_method: str = "file") -> RadarPointCloud:
    r = _Reader(_read_checked(path, MAGIC_CLOUD), path)
    r.take(4)
    n = r.u32()
    payload = r.take(4 * 7 * n)
    r.done()
    rec = np.frombuffer(payload, dtype="<f4").reshape(n, 7).astype(np.float64)
    return RadarPointCloud(
        xyz=rec[:, 0:3],
        power=rec[:, 3],
        polar_index=np.rint(rec[:, 4:7]).astype(np.int64),
        source_method=source_method,
    )


# ---------------------------------------------------------------------------
# P2T1 checkpoints


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f8")
    nb = name.encode("utf-8")
    out = struct.pack("<I", len(nb)) + nb + struct.pack("<I", a.ndim)
    out += struct.pack(f"<{a.ndim}I", *a.shape)
    return out + a.tobytes()


def write_checkpoint(
    path,
    gen: Generator,
    disc: Discriminator,
    train_cfg: TrainConfig,
    weights: LossWeights,
) -> None:
    meta = {
        "gen_spec": {
            "in_channels": gen.spec.in_channels,
            "encoder_channels": list(gen.spec.encoder_channels),
            "leaky_slope": gen.spec.leaky_slope,
            "head_kernel": gen.spec.head_kernel,
        },
        "disc_spec": {
            "in_channels": disc.spec.in_channels,
            "channels": list(disc.spec.channels),
            "scales": disc.spec.scales,
            "leaky_slope": disc.spec.leaky_slope,
        },
        "train": {
            "learning_rate": train_cfg.learning_rate,
            "batch_size": train_cfg.batch_size,
            "epochs": train_cfg.epochs,
            "beta1": train_cfg.beta1,
            "beta2": train_cfg.beta2,
            "epsilon": train_cfg.epsilon,
            "seed": train_cfg.seed,
            "gan_mode": train_cfg.gan_mode,
        },
        "loss": {"lambda_l1": weights.lambda_l1, "lambda_perc": weights.lambda_perc},
    }
    mj = json.dumps(meta, sort_keys=True).encode("utf-8")
    body = MAGIC_CHECKPOINT + struct.pack("<II", CHECKPOINT_VERSION, len(mj)) + mj
    names = [("g." + k, v) for k, v in gen.params.items()]
    names += [("d." + k, v) for k, v in disc.params.items()]
    body += struct.pack("<I", len(names))
    for name, arr in names:
        body += _pack_array(name, arr)
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", _crc(body)))


def read_checkpoint(path):
    """Load a checkpoint; returns (generator, discriminator, train config,
    loss weights) with parameters restored bit-exactly."""
    r = _Reader(_read_checked(path, MAGIC_CHECKPOINT), path)
    r.take(4)
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    meta_len = r.u32()
    try:
        meta = json.loads(bytes(r.take(meta_len)).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: bad checkpoint metadata: {exc}") from None
    n_arrays = r.u32()
    arrays = {}
    for _ in range(n_arrays):
        name_len = r.u32()
        name = bytes(r.take(name_len)).decode("utf-8")
        rank = r.u32()
        if rank > _MAX_RANK:
            raise DataError(f"{path}: implausible array rank {rank}")
        dims = tuple(r.u32() for _ in range(rank))
        count = 1
        for d in dims:
            count *= d
        arrays[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims).copy()
    r.done()
    try:
        gen_spec = GeneratorSpec(
            in_channels=meta["gen_spec"]["in_channels"],
            encoder_channels=tuple(meta["gen_spec"]["encoder_channels"]),
            leaky_slope=meta["gen_spec"]["leaky_slope"],
            head_kernel=meta["gen_spec"]["head_kernel"],
        )
        disc_spec = DiscriminatorSpec(
            in_channels=meta["disc_spec"]["in_channels"],
            channels=tuple(meta["disc_spec"]["channels"]),
            scales=meta["disc_spec"]["scales"],
            leaky_slope=meta["disc_spec"]["leaky_slope"],
        )
        train_cfg = TrainConfig(**meta["train"])
        weights = LossWeights(**meta["loss"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad checkpoint metadata: {exc}") from None
    gen = Generator(gen_spec, seed=0)
    disc = Discriminator(disc_spec, seed=0)
    for holder, prefix in ((gen, "g."), (disc, "d.")):
        for key in holder.params:
            name = prefix + key
            if name not in arrays:
                raise DataError(f"{path}: checkpoint missing parameter {name}")
            if arrays[name].shape != holder.params[key].shape:
                raise DataError(f"{path}: parameter {name} has wrong shape")
            holder.params[key] = arrays[name]
    return gen, disc, train_cfg, weights


# ---------------------------------------------------------------------------
# PGM


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM of a [0, 1] image; row i is x bin i, column j is
    y bin j, pixel = round(255 * value)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-dimensional")
    px = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header + px.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM back into a uint8 array (rows = x bins)."""
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM file")
    try:
        width, height = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if maxval != 255 or len(parts[3]) != width * height:
        raise DataError(f"{path}: malformed PGM payload")
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)
