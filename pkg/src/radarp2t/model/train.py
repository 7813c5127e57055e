"""Deterministic alternating training loop with exact gradients.

Each step updates the discriminator on its own term first (generated
cubes held constant), then updates the generator on the composite
objective against the refreshed discriminator.  Gradients are exact
reverse-mode derivatives; batches are processed in dataset order and
accumulated sequentially, so runs with equal seeds are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from ..tensorize import CubeTensor, SparseVoxelGrid
from . import losses as LS
from .network import Discriminator, Generator, sparse_input


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 8
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    gan_mode: str = "log"

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.gan_mode not in LS.GAN_MODES:
            raise ValueError(f"gan_mode must be one of {LS.GAN_MODES}")


class Adam:
    """Standard Adam with bias correction, one moment pair per parameter."""

    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for k in params:
            g = grads[k]
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g
            update = cfg.learning_rate * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + cfg.epsilon)
            params[k] = params[k] - update


def _zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _accumulate(acc: dict, grads: dict, weight: float) -> None:
    for k, g in grads.items():
        acc[k] += weight * g


def _check_finite(value: float, name: str) -> None:
    if not math.isfinite(value):
        raise NumericError(f"non-finite {name} loss; aborting step")


def discriminator_objective(disc: Discriminator, cond, y_power, fake_power, mode="log"):
    """Discriminator term and its exact parameter gradients (the generated
    cube is treated as a constant input)."""
    real_out, rc = disc.forward(cond, y_power[None])
    fake_out, fc = disc.forward(cond, fake_power[None])
    term, g_real, g_fake = LS._cgan_disc_grads(real_out, fake_out, mode)
    _check_finite(term, "discriminator")
    zero_feats = [[np.zeros_like(f) for f in out.features] for out in real_out]
    gr, _, _ = disc.backward(list(zip(g_real, zero_feats)), rc)
    gf, _, _ = disc.backward(list(zip(g_fake, zero_feats)), fc)
    grads = {k: gr[k] + gf[k] for k in gr}
    return term, grads


def generator_objective(
    gen: Generator,
    disc: Discriminator,
    x,
    y: CubeTensor,
    weights: LS.LossWeights,
    mode: str = "log",
    forward_cache=None,
):
    """Composite generator objective with exact gradients.

    Returns ``(parts, gen_grads, disc_grads, fake_cube)``.  ``parts`` has
    the scalar terms (cgan_gen, l1, perceptual, total).  Gradients are the
    true derivatives of ``total``: the discriminator gradients include
    both the generated and the real branch of the feature-matching term,
    so they match finite differences exactly (the generator step simply
    never applies them).
    """
    st = sparse_input(x) if isinstance(x, SparseVoxelGrid) else x
    if forward_cache is None:
        fake, gcache = gen.forward(st)
    else:
        fake, gcache = forward_cache
    cond = st.densify()
    real_out, rc = disc.forward(cond, y.power[None])
    fake_out, fc = disc.forward(cond, fake.power[None])

    adv, g_logits_fake = LS._cgan_gen_grads(fake_out, mode)
    l1 = LS.loss_l1(fake.power, y.power)
    g_l1 = LS._l1_grad(fake.power, y.power)
    real_feats = [out.features for out in real_out]
    fake_feats = [out.features for out in fake_out]
    perc, g_ff, g_fr = LS._perc_grads(real_feats, fake_feats)
    parts = {"cgan_gen": adv, "l1": l1, "perceptual": perc}
    for name, value in parts.items():
        _check_finite(value, name)
    total = LS.loss_total(parts, weights)
    parts["total"] = total

    lam = weights.lambda_perc
    fake_pairs = [
        (g_logits_fake[s], [lam * g for g in g_ff[s]]) for s in range(len(fake_out))
    ]
    d_grads_f, g_cand, _ = disc.backward(fake_pairs, fc)
    real_pairs = [
        (np.zeros_like(real_out[s].logits), [lam * g for g in g_fr[s]])
        for s in range(len(real_out))
    ]
    d_grads_r, _, _ = disc.backward(real_pairs, rc)
    d_grads = {k: d_grads_f[k] + d_grads_r[k] for k in d_grads_f}

    g_cube = g_cand[0] + weights.lambda_l1 * g_l1
    g_grads = gen.backward(g_cube, gcache)
    return parts, g_grads, d_grads, fake


def backward_and_step(
    batch,
    gen: Generator,
    disc: Discriminator,
    weights: LS.LossWeights,
    cfg: TrainConfig,
    adam_g: Adam,
    adam_d: Adam,
) -> dict:
    """One alternating update over a batch of (SparseVoxelGrid, CubeTensor)
    pairs; returns the averaged loss report."""
    n = len(batch)
    forwards = []
    d_acc = _zeros_like_params(disc.params)
    disc_loss = 0.0
    for x, y in batch:
        st = sparse_input(x) if isinstance(x, SparseVoxelGrid) else x
        fake, gcache = gen.forward(st)
        forwards.append((st, fake, gcache))
        term, dgr = discriminator_objective(disc, st.densify(), y.power, fake.power, cfg.gan_mode)
        disc_loss += term / n
        _accumulate(d_acc, dgr, 1.0 / n)
    _check_finite(disc_loss, "discriminator")
    adam_d.step(disc.params, d_acc)

    g_acc = _zeros_like_params(gen.params)
    report = {"disc": disc_loss, "cgan_gen": 0.0, "l1": 0.0, "perceptual": 0.0, "gen_total": 0.0}
    for (x, y), (st, fake, gcache) in zip(batch, forwards):
        parts, ggr, _, _ = generator_objective(
            gen, disc, st, y, weights, cfg.gan_mode, forward_cache=(fake, gcache)
        )
        for key in ("cgan_gen", "l1", "perceptual"):
            report[key] += parts[key] / n
        report["gen_total"] += parts["total"] / n
        _accumulate(g_acc, ggr, 1.0 / n)
    _check_finite(report["gen_total"], "generator")
    adam_g.step(gen.params, g_acc)
    return report


class Trainer:
    """Owns the parameter state and optimizer moments during training."""

    def __init__(self, gen: Generator, disc: Discriminator, weights: LS.LossWeights, cfg: TrainConfig):
        self.gen = gen
        self.disc = disc
        self.weights = weights
        self.cfg = cfg
        self.adam_g = Adam(gen.params, cfg)
        self.adam_d = Adam(disc.params, cfg)

    def step(self, batch) -> dict:
        return backward_and_step(
            batch, self.gen, self.disc, self.weights, self.cfg, self.adam_g, self.adam_d
        )

    def run(self, dataset, epochs: int | None = None) -> list:
        """Train for ``epochs`` over the dataset in order, batching by
        ``cfg.batch_size``; returns the per-step loss log."""
        epochs = self.cfg.epochs if epochs is None else epochs
        log = []
        step = 0
        for _ in range(epochs):
            for start in range(0, len(dataset), self.cfg.batch_size):
                batch = dataset[start : start + self.cfg.batch_size]
                report = self.step(batch)
                report["step"] = step
                log.append(report)
                step += 1
        return log
