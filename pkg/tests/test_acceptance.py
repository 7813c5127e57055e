"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with ``pytest -s tests/test_acceptance.py -v``).

Criteria (tolerances pinned here, nothing deferred):
 1. Efficiency-score reproduction from the bundled method records.
 2. PSNR/SSIM correctness against closed forms and scalar-loop oracles.
 3. Signal-chain bin placement and per-stage energy conservation.
 4. Percentile and CA-CFAR extraction correctness (incl. Monte Carlo).
 5. Sparse encoder / dense convolution equivalence.
 6. Finite-difference check of every parameter gradient (< 5 min).
 7. Seeded 200-step overfit: L1 down 10x, per-frame PSNR > 25 dB (< 15 min).
 8. Byte-identical artifacts for a full seeded pipeline rerun.
 9. Container round trips and guaranteed corruption detection.
"""

import functools
import math
import time
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]


def criterion(num, desc):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\n[FAIL] criterion {num}: {desc}")
                raise
            print(f"\n[PASS] criterion {num}: {desc}")

        return wrapper

    return deco


# ---------------------------------------------------------------------------


@criterion(1, "efficiency scores reproduce the reference table within 0.005")
def test_criterion_1_des_reproduction():
    from radarp2t.metrics import read_records_csv, score_methods

    start = time.monotonic()
    eval_set = score_methods(read_records_csv(REPO / "data" / "method_records.csv"))
    by_key = {
        (r.method, r.hyper): s for r, s in zip(eval_set.records, eval_set.des_scores)
    }
    expected = {
        ("cfar", 2.5): 0.33,
        ("cfar", 10.0): 0.11,
        ("percentile", 0.1): 0.00,
        ("percentile", 1.0): 0.48,
        ("percentile", 5.0): 0.22,
        ("percentile", 10.0): 0.05,
    }
    for key, want in expected.items():
        assert abs(by_key[key] - want) <= 0.005, (key, by_key[key], want)
    assert time.monotonic() - start < 1.0


@criterion(2, "PSNR/SSIM match closed forms and scalar-loop oracles within 1e-6")
def test_criterion_2_metric_correctness():
    from radarp2t.metrics import psnr, ssim
    from test_metrics import ssim_loops

    rng = np.random.default_rng(202)
    a = rng.uniform(0.2, 0.8, (24, 20))
    assert abs(psnr(a, a + 0.1) - 20.0) <= 1e-6

    for _ in range(50):
        x = rng.uniform(0.0, 1.0, (int(rng.integers(11, 24)), int(rng.integers(11, 24))))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    c1 = 1e-4
    closed_form = c1 / (1.0 + c1)
    assert abs(ssim(np.ones((16, 16)), np.zeros((16, 16))) - closed_form) <= 1e-6

    for _ in range(20):
        a = rng.uniform(0.0, 1.0, (16, 13))
        b = np.clip(a + rng.normal(0.0, 0.25, a.shape), 0.0, 1.0)
        mse = 0.0
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                mse += (a[i, j] - b[i, j]) ** 2
        mse /= a.size
        assert abs(psnr(a, b) - 10.0 * math.log10(1.0 / mse)) <= 1e-6
        assert abs(ssim(a, b) - ssim_loops(a, b)) <= 1e-6


@criterion(3, "polar argmax at the closed-form bins (50/50) and Parseval per stage")
def test_criterion_3_signal_chain():
    from radarp2t.fmcw import (
        RadarConfig,
        Scene,
        angle_fft,
        collapse_doppler,
        predicted_bins,
        range_doppler_fft,
        scatterer_at_bins,
        simulate_adc,
    )

    cfg = RadarConfig(
        samples_per_chirp=32, chirps_per_frame=8, azimuth_antennas=16, elevation_antennas=8
    )
    rng = np.random.default_rng(303)
    hits = 0
    for _ in range(50):
        r_bin = int(rng.integers(2, cfg.samples_per_chirp - 1))
        az_bin = int(rng.integers(1, cfg.azimuth_antennas))
        el_bin = int(rng.integers(1, cfg.elevation_antennas))
        sc = scatterer_at_bins(cfg, r_bin, az_bin, el_bin, reflectivity=float(rng.uniform(0.5, 2.0)))
        adc = simulate_adc(Scene([sc]), cfg)

        e0 = float((np.abs(adc.samples) ** 2).sum())
        s1 = np.fft.fft(adc.samples, axis=0, norm="ortho")
        assert abs(float((np.abs(s1) ** 2).sum()) - e0) <= 1e-6 * e0
        rd = range_doppler_fft(adc)
        assert abs(float((np.abs(rd) ** 2).sum()) - e0) <= 1e-6 * e0
        s3 = np.fft.fftshift(np.fft.fft(rd, axis=2, norm="ortho"), axes=2)
        assert abs(float((np.abs(s3) ** 2).sum()) - e0) <= 1e-6 * e0
        t4 = angle_fft(rd, cfg)
        assert abs(float(t4.power.sum()) - e0) <= 1e-6 * e0

        t3 = collapse_doppler(t4)
        got = tuple(int(v) for v in np.unravel_index(np.argmax(t3.power), t3.power.shape))
        pr, pa, pe, _ = predicted_bins(sc, cfg)
        if got == (pr, pa, pe) == (r_bin, az_bin, el_bin):
            hits += 1
    assert hits == 50, f"only {hits}/50 scenes peaked at the predicted bins"


@criterion(4, "percentile = full-sort top-k; CFAR targets + Monte Carlo; K1 within 0.5pp")
def test_criterion_4_extraction():
    from radarp2t.detect import (
        CfarConfig,
        PercentileConfig,
        calibrate_cfar_scale,
        cfar_detect_mask,
        percentile_extract,
        selection_count,
    )
    from conftest import random_polar3d

    rng = np.random.default_rng(404)
    # percentile vs full sort, 100 random tensors
    for _ in range(100):
        shape = tuple(int(rng.integers(3, 9)) for _ in range(3))
        t = random_polar3d(rng, shape=shape)
        p = float(rng.uniform(0.5, 100.0))
        cloud = percentile_extract(t, PercentileConfig(p))
        flat = t.power.ravel()
        k = selection_count(p, flat.size)
        expected = set(np.argsort(-flat, kind="stable")[:k])
        got = set(np.ravel_multi_index(cloud.polar_index.T, shape))
        assert got == expected and len(cloud) == k

    # CA-CFAR: 5 injected 20 dB targets, Monte-Carlo false-alarm band
    shape = (24, 16, 12)
    cfg = CfarConfig(guard_cells=(1, 1, 1), training_cells=(2, 2, 2), scale_factor=4.6)
    target_cells = [(4, 4, 4), (4, 11, 8), (12, 4, 8), (18, 11, 3), (18, 4, 9)]
    reach = 3
    clear = np.ones(shape, dtype=bool)
    for ci, cj, ck in target_cells:
        clear[
            max(0, ci - reach) : ci + reach + 1,
            max(0, cj - reach) : cj + reach + 1,
            max(0, ck - reach) : ck + reach + 1,
        ] = False

    def noise_tensor(seed):
        g = np.random.default_rng(seed)
        z = g.standard_normal(shape) + 1j * g.standard_normal(shape)
        return (np.abs(z) ** 2) / 2.0

    fractions = [cfar_detect_mask(noise_tensor(seed), cfg)[clear].mean() for seed in range(100, 200)]
    mu, sigma = float(np.mean(fractions)), float(np.std(fractions))
    power = noise_tensor(150)
    for cell in target_cells:
        power[cell] = 100.0
    mask = cfar_detect_mask(power, cfg)
    assert all(mask[cell] for cell in target_cells), "injected target missed"
    assert abs(mask[clear].mean() - mu) <= 2.0 * sigma

    # calibration hits K1 within 0.5 percentage points
    t = random_polar3d(rng, shape=(24, 16, 12))
    for k1 in (2.5, 10.0):
        calibrated = calibrate_cfar_scale(t, CfarConfig(k1_percent=k1))
        achieved = 100.0 * cfar_detect_mask(t.power, calibrated).mean()
        assert abs(achieved - k1) <= 0.5, (k1, achieved)


@criterion(5, "sparse forward equals zero-padded dense conv at active sites (1e-5)")
def test_criterion_5_sparse_dense_equivalence():
    from radarp2t.model import layers as L

    rng = np.random.default_rng(505)
    for kind in ("submanifold", "downsample"):
        for _ in range(50):
            shape = tuple(int(rng.integers(2, 5)) * 2 for _ in range(3))
            m = int(rng.integers(1, min(14, int(np.prod(shape)))))
            ci, co = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            flat = rng.choice(int(np.prod(shape)), size=m, replace=False)
            idx = np.stack(np.unravel_index(np.sort(flat), shape), axis=1)
            st = L.SparseTensor(idx, rng.standard_normal((m, ci)), shape)
            w = rng.standard_normal((27, ci, co))
            b = rng.standard_normal(co)
            if kind == "submanifold":
                out, _ = L.subm_conv_forward(st, w, b)
                dense, _ = L.conv3d_forward(st.densify(), L.sparse_weight_to_dense(w), b, 1, 1)
            else:
                out, _ = L.down_conv_forward(st, w, b)
                dense, _ = L.conv3d_forward(st.densify(), L.sparse_weight_to_dense(w), b, 2, 1)
            ref = dense[:, out.indices[:, 0], out.indices[:, 1], out.indices[:, 2]].T
            assert np.abs(out.features - ref).max() <= 1e-5


@criterion(6, "every parameter gradient matches central differences (rel 1e-3, < 5 min)")
def test_criterion_6_gradient_checks():
    from radarp2t.model.losses import LossWeights
    from radarp2t.model import layers as L
    from radarp2t.model.network import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec
    from radarp2t.model.train import discriminator_objective, generator_objective
    from radarp2t.tensorize import CubeTensor

    start = time.monotonic()
    rng = np.random.default_rng(606)
    shape = (8, 8, 8)
    flat = rng.choice(int(np.prod(shape)), size=12, replace=False)
    idx = np.stack(np.unravel_index(np.sort(flat), shape), axis=1)
    st = L.SparseTensor(idx, rng.standard_normal((12, 4)), shape)
    y = CubeTensor(rng.uniform(0.0, 1.0, shape), normalized=True)
    gen = Generator(GeneratorSpec(in_channels=4, encoder_channels=(3, 4)), seed=607)
    disc = Discriminator(DiscriminatorSpec(channels=(4,), scales=2), seed=608)
    weights = LossWeights()
    h = 1e-4

    def check(params, grads, value):
        for name, arr in params.items():
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                mi = it.multi_index
                orig = arr[mi]
                arr[mi] = orig + h
                fp = value()
                arr[mi] = orig - h
                fm = value()
                arr[mi] = orig
                fd = (fp - fm) / (2.0 * h)
                an = grads[name][mi]
                assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-4), (name, mi, fd, an)

    _, g_grads, d_grads, _ = generator_objective(gen, disc, st, y, weights)

    def gen_total():
        parts, _, _, _ = generator_objective(gen, disc, st, y, weights)
        return parts["total"]

    check(gen.params, g_grads, gen_total)
    check(disc.params, d_grads, gen_total)

    fake = rng.uniform(0.0, 1.0, shape)
    cond = st.densify()
    _, dg = discriminator_objective(disc, cond, y.power, fake)
    check(disc.params, dg, lambda: discriminator_objective(disc, cond, y.power, fake)[0])

    elapsed = time.monotonic() - start
    assert elapsed < 300.0, f"gradient check took {elapsed:.0f}s"


def _overfit_dataset():
    import radarp2t as rp

    grid = rp.RoiGrid(
        x_min=0.0, x_max=14.4, y_min=-4.8, y_max=4.8, z_min=-2.4, z_max=2.4, voxel_size=0.6
    )
    cfg = rp.RadarConfig(
        chirp_slope=4e13,
        samples_per_chirp=32,
        chirps_per_frame=8,
        azimuth_antennas=16,
        elevation_antennas=16,
    )
    rng = np.random.default_rng(42)
    dataset = []
    for i in range(8):
        x = rng.uniform(grid.x_min + 2.0, grid.x_max - 1.0)
        yy = rng.uniform(grid.y_min + 1.0, grid.y_max - 1.0)
        z = rng.uniform(grid.z_min + 0.5, grid.z_max - 0.5)
        r, az, el = rp.cart_to_polar(x, yy, z)
        sc = rp.Scatterer(float(r), float(az), float(el), 0.0, float(rng.uniform(0.8, 2.0)))
        t3 = rp.collapse_doppler(rp.scene_to_polar4d(rp.Scene([sc]), cfg, seed=i))
        cube = rp.normalize_power(rp.polar_to_cartesian(t3, grid))
        cloud = rp.percentile_extract(t3, rp.PercentileConfig(5.0))
        dataset.append((rp.voxelize(cloud, grid), cube))
    return dataset


@criterion(7, "200-step seeded overfit: L1 down >= 10x and per-frame PSNR > 25 dB (< 15 min)")
def test_criterion_7_overfit():
    from radarp2t.metrics import mean_pool_height, psnr
    from radarp2t.model import (
        Discriminator,
        DiscriminatorSpec,
        Generator,
        GeneratorSpec,
        LossWeights,
        TrainConfig,
        Trainer,
    )
    from radarp2t.model.network import sparse_input

    start = time.monotonic()
    dataset = _overfit_dataset()
    gen = Generator(GeneratorSpec(encoder_channels=(8, 16, 24, 32)), seed=0)
    disc = Discriminator(DiscriminatorSpec(channels=(8, 12), scales=2), seed=1)
    trainer = Trainer(gen, disc, LossWeights(), TrainConfig(batch_size=8))
    log = trainer.run(dataset, epochs=200)
    assert len(log) == 200
    ratio = log[0]["l1"] / log[-1]["l1"]
    assert ratio >= 10.0, f"L1 only fell {ratio:.1f}x"
    for i, (svg, cube) in enumerate(dataset):
        fake = gen.generate(sparse_input(svg))
        value = psnr(mean_pool_height(fake), mean_pool_height(cube))
        assert value > 25.0, f"frame {i}: {value:.2f} dB"
    elapsed = time.monotonic() - start
    assert elapsed < 900.0, f"overfit run took {elapsed:.0f}s"


@criterion(8, "simulate -> extract -> train(5) -> eval twice: byte-identical artifacts")
def test_criterion_8_determinism(tmp_path):
    from radarp2t.cli import main
    from test_cli import SCENE, TOY_CONFIG

    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(TOY_CONFIG + "train.epochs = 5\n")
    (tmp_path / "scene01.txt").write_text(SCENE)
    (tmp_path / "scene02.txt").write_text("8.0 -0.1 0.12 0.0 2.0\n")

    def pipeline(root: Path):
        out = root / "sim"
        data = root / "data"
        data.mkdir(parents=True)
        for stem in ("scene01", "scene02"):
            assert main([
                "simulate", "--config", str(cfg_path),
                "--scene", str(tmp_path / f"{stem}.txt"), "--out", str(out),
            ]) == 0
            (data / f"{stem}.rpt1").write_bytes((out / f"{stem}.rpt1").read_bytes())
            assert main([
                "extract", "--config", str(cfg_path),
                "--tensor", str(out / f"{stem}.t3d.rpt1"), "--method", "percentile:5",
                "--out", str(out), "--cloud-out", str(data / f"{stem}.rpc1"),
            ]) == 0
        run = root / "train"
        assert main(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(run)]) == 0
        ev = root / "eval"
        assert main([
            "eval", "--config", str(cfg_path), "--checkpoint", str(run / "checkpoint.p2t1"),
            "--data", str(data), "--out", str(ev),
        ]) == 0
        return root

    a = pipeline(tmp_path / "a")
    b = pipeline(tmp_path / "b")
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b and files_a
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), f"{rel} differs between runs"


@criterion(9, "container round trips on 100 random objects; corruption always detected")
def test_criterion_9_format_robustness(tmp_path):
    from radarp2t.formats import read_cloud, read_tensor, write_cloud, write_tensor
    from radarp2t.errors import DataError
    from test_formats import random_f32_cloud, random_f32_tensor

    rng = np.random.default_rng(909)
    t_path = tmp_path / "t.rpt1"
    c_path = tmp_path / "c.rpc1"
    for _ in range(100):
        t = random_f32_tensor(rng)
        write_tensor(t_path, t)
        assert np.array_equal(read_tensor(t_path), t)
        cloud = random_f32_cloud(rng)
        write_cloud(c_path, cloud)
        back = read_cloud(c_path)
        assert np.array_equal(back.xyz, cloud.xyz)
        assert np.array_equal(back.power, cloud.power)
        assert np.array_equal(back.polar_index, cloud.polar_index)

    write_tensor(t_path, rng.standard_normal((5, 4, 3)))
    write_cloud(c_path, random_f32_cloud(rng))
    for path, reader in ((t_path, read_tensor), (c_path, read_cloud)):
        blob = path.read_bytes()
        for _ in range(50):
            pos = int(rng.integers(0, len(blob)))
            corrupted = bytearray(blob)
            corrupted[pos] ^= 1 + int(rng.integers(0, 255))
            path.write_bytes(bytes(corrupted))
            with pytest.raises(DataError):
                reader(path)
        path.write_bytes(blob)
