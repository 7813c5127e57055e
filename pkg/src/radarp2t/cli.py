"""Command-line surface: simulate | extract | train | eval | report.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
The environment variable ``P2T_THREADS`` caps internal (BLAS) parallelism
and is applied before numpy loads.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path


def _cap_threads() -> None:
    n = os.environ.get("P2T_THREADS")
    if not n:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, n)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarp2t",
        description="Simulate radar tensors, extract point clouds, and train/"
        "evaluate the point-to-tensor reconstruction model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument(
            "--grid-voxel", type=float, default=None, metavar="M", help="override grid.voxel_size"
        )

    p = sub.add_parser("simulate", help="synthesize polar tensors and the ground-truth cube")
    common(p)
    p.add_argument("--scene", type=Path, required=True, help="scene file (one scatterer per line)")

    p = sub.add_parser("extract", help="extract a point cloud from a 3D polar tensor")
    common(p)
    p.add_argument("--tensor", type=Path, required=True, help="RPT1 file with the 3D polar tensor")
    p.add_argument(
        "--method", type=str, required=True, metavar="percentile:P|cfar:K1", help="extraction method"
    )
    p.add_argument("--cloud-out", type=Path, default=None, help="output RPC1 path (default: derived)")

    p = sub.add_parser("train", help="train the reconstruction model on paired data")
    common(p)
    p.add_argument("--data", type=Path, required=True, help="directory of NAME.rpc1 + NAME.rpt1 pairs")

    p = sub.add_parser("eval", help="evaluate a checkpoint on paired data")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="P2T1 checkpoint file")
    p.add_argument("--data", type=Path, required=True, help="directory of NAME.rpc1 + NAME.rpt1 pairs")

    p = sub.add_parser("report", help="score method records and emit the comparison table")
    common(p)
    p.add_argument("--records", type=Path, required=True, help="CSV of per-method records")
    return parser


def _load_config(args):
    from .config import load_config

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "grid_voxel", None) is not None:
        overrides["grid.voxel_size"] = repr(args.grid_voxel)
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    return load_config(args.config, overrides)


def _out_dir(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, scene_path: Path) -> int:
    from .fmcw import collapse_doppler, load_scene, scene_to_polar4d
    from .formats import write_tensor
    from .tensorize import normalize_power, polar_to_cartesian

    out = _out_dir(cfg)
    scene = load_scene(scene_path)
    t4 = scene_to_polar4d(scene, cfg.radar, seed=cfg.seed)
    t3 = collapse_doppler(t4, cfg.collapse_mode)
    cube = normalize_power(polar_to_cartesian(t3, cfg.grid))
    stem = scene_path.stem
    write_tensor(out / f"{stem}.t4d.rpt1", t4.power)
    write_tensor(out / f"{stem}.t3d.rpt1", t3.power)
    write_tensor(out / f"{stem}.rpt1", cube.power)
    print(f"simulate: {len(scene.scatterers)} scatterers -> {out / stem}.{{t4d,t3d}}.rpt1 + cube")
    return 0


def _polar3d_from_file(path: Path, cfg):
    from .errors import DataError
    from .fmcw import PolarTensor3D
    from .formats import read_tensor

    power = read_tensor(path)
    if power.ndim != 3:
        raise DataError(f"{path}: expected a 3D polar tensor, got rank {power.ndim}")
    radar = cfg.radar
    expected = (radar.samples_per_chirp, radar.azimuth_antennas, radar.elevation_antennas)
    if power.shape != expected:
        raise DataError(
            f"{path}: tensor dims {power.shape} do not match the configured radar bins {expected}"
        )
    return PolarTensor3D(
        power=power,
        range_m=radar.range_axis(),
        azimuth_rad=radar.azimuth_axis(),
        elevation_rad=radar.elevation_axis(),
    )


def cmd_extract(cfg, tensor_path: Path, method_text: str, cloud_out: Path | None) -> int:
    from dataclasses import replace

    from .config import parse_method
    from .detect import PercentileConfig, ca_cfar, calibrate_cfar_scale, pcd, percentile_extract
    from .formats import write_cloud

    out = _out_dir(cfg)
    method = parse_method(method_text)
    t3 = _polar3d_from_file(tensor_path, cfg)
    if method.kind == "percentile":
        cloud = percentile_extract(t3, PercentileConfig(method.hyper))
    else:
        calibrated = calibrate_cfar_scale(t3, replace(cfg.cfar, k1_percent=method.hyper))
        cloud = ca_cfar(t3, calibrated)
    if cloud_out is None:
        cloud_out = out / f"{tensor_path.stem}.{method.tag}.rpc1"
    cloud_out.parent.mkdir(parents=True, exist_ok=True)
    write_cloud(cloud_out, cloud)
    density = pcd(cloud, cfg.grid)
    report_path = Path(str(cloud_out) + ".pcd.csv")
    with open(report_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["method", "hyper", "points", "pcd_fraction", "pcd_percent"])
        w.writerow(
            [method.kind, f"{method.hyper:g}", len(cloud), f"{density:.6e}", f"{100.0 * density:.4f}"]
        )
    print(
        f"extract: {method.kind}:{method.hyper:g} -> {len(cloud)} points, "
        f"PCD {100.0 * density:.4f}% -> {cloud_out}"
    )
    return 0


def _load_pairs(data_dir: Path, grid):
    import numpy as np

    from .errors import DataError
    from .formats import read_cloud, read_tensor
    from .tensorize import CubeTensor, voxelize

    clouds = sorted(data_dir.glob("*.rpc1"))
    if not clouds:
        raise DataError(f"{data_dir}: no .rpc1 files found")
    pairs = []
    for cloud_path in clouds:
        cube_path = cloud_path.with_suffix(".rpt1")
        if not cube_path.exists():
            raise DataError(f"{cube_path}: missing ground-truth cube for {cloud_path.name}")
        cube_power = read_tensor(cube_path)
        if cube_power.shape != grid.shape:
            raise DataError(
                f"{cube_path}: cube dims {cube_power.shape} do not match grid {grid.shape}"
            )
        cloud = read_cloud(cloud_path)
        svg = voxelize(cloud, grid)
        cube = CubeTensor(power=np.clip(cube_power, 0.0, 1.0), normalized=True)
        pairs.append((cloud_path.stem, cloud, svg, cube))
    return pairs


def cmd_train(cfg, data_dir: Path) -> int:
    from dataclasses import replace

    from .formats import write_checkpoint
    from .model import Discriminator, Generator, Trainer

    out = _out_dir(cfg)
    pairs = _load_pairs(data_dir, cfg.grid)
    dataset = [(svg, cube) for _, _, svg, cube in pairs]
    train_cfg = replace(cfg.train, seed=cfg.seed)
    gen = Generator(cfg.gen, seed=cfg.seed)
    disc = Discriminator(cfg.disc, seed=cfg.seed + 1)
    trainer = Trainer(gen, disc, cfg.weights, train_cfg)
    log = trainer.run(dataset)
    write_checkpoint(out / "checkpoint.p2t1", gen, disc, train_cfg, cfg.weights)
    with open(out / "loss_log.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "disc", "cgan_gen", "l1", "perceptual", "gen_total"])
        for row in log:
            w.writerow(
                [row["step"]]
                + [f"{row[k]:.12g}" for k in ("disc", "cgan_gen", "l1", "perceptual", "gen_total")]
            )
    final = log[-1] if log else {"l1": float("nan"), "gen_total": float("nan")}
    print(
        f"train: {len(dataset)} frames, {len(log)} steps -> {out / 'checkpoint.p2t1'} "
        f"(final L1 {final['l1']:.6g})"
    )
    return 0


def emit_bev_figure(cube_path, out_path) -> None:
    """Mean-pool a stored cube along height and write the grayscale PGM."""
    import numpy as np

    from .errors import DataError
    from .formats import read_tensor, write_pgm
    from .metrics import mean_pool_height
    from .tensorize import CubeTensor

    power = read_tensor(cube_path)
    if power.ndim != 3:
        raise DataError(f"{cube_path}: expected a 3D cube, got rank {power.ndim}")
    bev = mean_pool_height(CubeTensor(power=np.clip(power, 0.0, 1.0), normalized=True))
    write_pgm(out_path, bev)


def cmd_eval(cfg, checkpoint: Path, data_dir: Path) -> int:
    from .detect import pcd
    from .figures import save_bev_panel
    from .formats import read_checkpoint, write_pgm
    from .metrics import mean_pool_height, psnr, ssim
    from .model.network import sparse_input

    out = _out_dir(cfg)
    gen, _disc, _train_cfg, _weights = read_checkpoint(checkpoint)
    pairs = _load_pairs(data_dir, cfg.grid)
    rows = []
    for stem, cloud, svg, cube in pairs:
        fake = gen.generate(sparse_input(svg))
        bev_gt = mean_pool_height(cube)
        bev_gen = mean_pool_height(fake)
        row = {
            "frame": stem,
            "pcd_percent": 100.0 * pcd(cloud, cfg.grid),
            "psnr_db": psnr(bev_gen, bev_gt),
            "ssim": ssim(bev_gen, bev_gt),
        }
        rows.append(row)
        write_pgm(out / f"{stem}.gt.pgm", bev_gt)
        write_pgm(out / f"{stem}.gen.pgm", bev_gen)
        save_bev_panel(bev_gt, bev_gen, out / f"{stem}.bev.png", title=stem)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["frame", "pcd_percent", "psnr_db", "ssim"])
        for row in rows:
            w.writerow(
                [row["frame"], f"{row['pcd_percent']:.4f}", f"{row['psnr_db']:.4f}", f"{row['ssim']:.4f}"]
            )
    n = len(rows)
    means = {k: sum(r[k] for r in rows) / n for k in ("pcd_percent", "psnr_db", "ssim")}
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["frames", "pcd_percent", "psnr_db", "ssim"])
        w.writerow([n, f"{means['pcd_percent']:.4f}", f"{means['psnr_db']:.4f}", f"{means['ssim']:.4f}"])
    print(
        f"eval: {n} frames, mean PSNR {means['psnr_db']:.2f} dB, mean SSIM {means['ssim']:.4f} "
        f"-> {out / 'metrics.csv'}"
    )
    return 0


def cmd_report(cfg, records_path: Path) -> int:
    from .figures import save_des_chart
    from .metrics import read_records_csv, score_methods, write_records_csv

    out = _out_dir(cfg)
    scored = score_methods(read_records_csv(records_path))
    for warning in scored.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    order = sorted(
        range(len(scored.records)), key=lambda i: (scored.records[i].method, scored.records[i].hyper)
    )
    header = f"{'method':<12}{'hyper':>8}{'PCD %':>9}{'PSNR dB':>9}{'SSIM':>7}{'score':>7}"
    lines = [header, "-" * len(header)]
    for i in order:
        r = scored.records[i]
        lines.append(
            f"{r.method:<12}{r.hyper:>8g}{r.pcd_percent:>9.2f}{r.psnr_db:>9.2f}"
            f"{r.ssim:>7.2f}{scored.des_scores[i]:>7.2f}"
        )
    table = "\n".join(lines)
    print(table)
    (out / "des_table.txt").write_text(table + "\n", encoding="utf-8")
    write_records_csv(scored, out / "des_table.csv")
    save_des_chart(
        [scored.records[i].label for i in order],
        [scored.des_scores[i] for i in order],
        out / "des_scores.png",
    )
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    _cap_threads()  # before any command lazily imports numpy
    from .errors import ConfigError, DataError, NumericError

    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.scene)
        if args.command == "extract":
            return cmd_extract(cfg, args.tensor, args.method, args.cloud_out)
        if args.command == "train":
            return cmd_train(cfg, args.data)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.data)
        if args.command == "report":
            return cmd_report(cfg, args.records)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
