"""Objective terms for the adversarial point-to-tensor model.

The composite generator objective is

    total = adversarial + lambda_l1 * L1 + lambda_perc * perceptual

where the adversarial terms are computed from discriminator logits in
log space (softplus) so nothing overflows, the generator adversarial
term uses the non-saturating form, and the perceptual term is
discriminator feature matching (mean absolute difference of the
intermediate activations on real vs. generated data, averaged over
scales and layers).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossWeights:
    """Weights of the L1 and perceptual terms in the generator objective."""

    lambda_l1: float = 100.0
    lambda_perc: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.lambda_l1) and np.isfinite(self.lambda_perc)):
            raise ValueError("loss weights must be finite")
        if self.lambda_l1 < 0.0 or self.lambda_perc < 0.0:
            raise ValueError("loss weights must be non-negative")


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


GAN_MODES = ("log", "lsgan")


def loss_cgan(d_real, d_fake, mode: str = "log"):
    """Adversarial terms from per-scale discriminator outputs.

    Returns ``(generator_term, discriminator_term)`` averaged over scales
    and realness-map cells.  In ``log`` mode the discriminator term is
    -mean(log D(x, y)) - mean(log(1 - D(x, G(x)))) and the generator term
    is the non-saturating -mean(log D(x, G(x))), both evaluated from the
    logits via softplus.  ``lsgan`` swaps in least-squares terms on the
    raw logits.
    """
    gen_term, _ = _cgan_gen_grads(d_fake, mode, with_grads=False)
    disc_term, _, _ = _cgan_disc_grads(d_real, d_fake, mode, with_grads=False)
    return gen_term, disc_term


def _cgan_gen_grads(d_fake, mode: str, with_grads: bool = True):
    n_scales = len(d_fake)
    total = 0.0
    grads = []
    for out in d_fake:
        z = out.logits
        denom = n_scales * z.size
        if mode == "log":
            total += float(_softplus(-z).sum()) / denom
            if with_grads:
                grads.append((_sigmoid(z) - 1.0) / denom)
        elif mode == "lsgan":
            total += float(((z - 1.0) ** 2).sum()) / denom
            if with_grads:
                grads.append(2.0 * (z - 1.0) / denom)
        else:
            raise ValueError(f"unknown GAN mode {mode!r}")
    return total, grads


def _cgan_disc_grads(d_real, d_fake, mode: str, with_grads: bool = True):
    n_scales = len(d_real)
    total = 0.0
    g_real, g_fake = [], []
    for real, fake in zip(d_real, d_fake):
        zr, zf = real.logits, fake.logits
        dr, df = n_scales * zr.size, n_scales * zf.size
        if mode == "log":
            total += float(_softplus(-zr).sum()) / dr + float(_softplus(zf).sum()) / df
            if with_grads:
                g_real.append((_sigmoid(zr) - 1.0) / dr)
                g_fake.append(_sigmoid(zf) / df)
        elif mode == "lsgan":
            total += 0.5 * (float(((zr - 1.0) ** 2).sum()) / dr + float((zf**2).sum()) / df)
            if with_grads:
                g_real.append((zr - 1.0) / dr)
                g_fake.append(zf / df)
        else:
            raise ValueError(f"unknown GAN mode {mode!r}")
    return total, g_real, g_fake


def loss_l1(gen, gt) -> float:
    """Mean absolute elementwise difference."""
    a = np.asarray(gen, dtype=np.float64)
    b = np.asarray(gt, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"tensor shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def _l1_grad(gen, gt) -> np.ndarray:
    a = np.asarray(gen, dtype=np.float64)
    b = np.asarray(gt, dtype=np.float64)
    return np.sign(a - b) / a.size


def loss_perceptual(d_features_real, d_features_fake) -> float:
    """Feature matching: mean over scales and layers of the mean absolute
    difference between real and generated discriminator activations."""
    value, _, _ = _perc_grads(d_features_real, d_features_fake, with_grads=False)
    return value


def _perc_grads(d_features_real, d_features_fake, with_grads: bool = True):
    n_scales = len(d_features_real)
    n_layers = len(d_features_real[0]) if n_scales else 0
    total = 0.0
    g_fake = [[None] * n_layers for _ in range(n_scales)]
    g_real = [[None] * n_layers for _ in range(n_scales)]
    for s in range(n_scales):
        for li in range(n_layers):
            fr = d_features_real[s][li]
            ff = d_features_fake[s][li]
            if fr.shape != ff.shape:
                raise ValueError("feature shapes differ between real and fake passes")
            denom = n_scales * n_layers * fr.size
            total += float(np.abs(fr - ff).sum()) / denom
            if with_grads:
                sgn = np.sign(ff - fr)
                g_fake[s][li] = sgn / denom
                g_real[s][li] = -sgn / denom
    return total, g_fake, g_real


def loss_total(parts: dict, w: LossWeights) -> float:
    """Generator objective: cGAN term + lambda_l1 * L1 + lambda_perc * perceptual."""
    for name, value in parts.items():
        if not np.isfinite(value):
            raise ValueError(f"non-finite loss part {name!r}")
    return parts["cgan_gen"] + w.lambda_l1 * parts["l1"] + w.lambda_perc * parts["perceptual"]
