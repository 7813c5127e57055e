"""Sparse-encoder / dense-decoder generator and the multi-scale dense
discriminator, with explicit reverse-mode backward passes.

The encoder runs one submanifold convolution per resolution with
stride-2 sparse downsampling between resolutions (leaky ReLU after every
convolution).  The decoder densifies the deepest features, upsamples
with kernel-2/stride-2 transposed convolutions (ReLU), concatenates the
densified skip features of the matching resolution, and maps to a single
sigmoid output channel.  The discriminator scores (condition, candidate)
pairs at ``scales`` resolutions obtained by repeated 2x average pooling,
keeping intermediate activations for the feature-matching loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..tensorize import CubeTensor, SparseVoxelGrid
from . import layers as L


@dataclass(frozen=True)
class GeneratorSpec:
    in_channels: int = 4
    encoder_channels: tuple = (16, 32, 64, 128)
    leaky_slope: float = 0.2
    head_kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        if len(self.encoder_channels) < 2:
            raise ValueError("need at least two encoder stages")
        if self.head_kernel not in (1, 3):
            raise ValueError("head_kernel must be 1 or 3")

    @property
    def levels(self) -> int:
        return len(self.encoder_channels)

    @property
    def downsample_factor(self) -> int:
        return 2 ** (self.levels - 1)


@dataclass(frozen=True)
class DiscriminatorSpec:
    in_channels: int = 5
    channels: tuple = (16, 32)
    scales: int = 2
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.scales < 1:
            raise ValueError("need at least one discriminator scale")
        if len(self.channels) < 1:
            raise ValueError("need at least one discriminator conv layer")


@dataclass
class ScaleOutput:
    """One discriminator scale: patch logits, post-sigmoid realness map,
    and the intermediate feature maps kept for feature matching."""

    logits: np.ndarray
    prob: np.ndarray
    features: list


def _init(rng, shape, fan_in):
    lim = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=shape)


class Generator:
    """Point-cloud-to-cube generator.  Parameters live in ``self.params``
    (name -> float64 array); construction order is fixed so a given seed
    always produces the same initialization."""

    def __init__(self, spec: GeneratorSpec = GeneratorSpec(), seed: int = 0):
        self.spec = spec
        self.params = {}
        rng = np.random.default_rng(seed)
        ch = spec.encoder_channels
        c_in = spec.in_channels
        self.params["enc0.sub.w"] = _init(rng, (27, c_in, ch[0]), c_in * 27)
        self.params["enc0.sub.b"] = _init(rng, (ch[0],), c_in * 27)
        for i in range(1, spec.levels):
            self.params[f"enc{i}.down.w"] = _init(rng, (27, ch[i - 1], ch[i]), ch[i - 1] * 27)
            self.params[f"enc{i}.down.b"] = _init(rng, (ch[i],), ch[i - 1] * 27)
            self.params[f"enc{i}.sub.w"] = _init(rng, (27, ch[i], ch[i]), ch[i] * 27)
            self.params[f"enc{i}.sub.b"] = _init(rng, (ch[i],), ch[i] * 27)
        up_in = ch[-1]
        for j, level in enumerate(range(spec.levels - 2, -1, -1)):
            out = ch[level]
            self.params[f"dec{j}.up.w"] = _init(rng, (up_in, out, 2, 2, 2), up_in)
            self.params[f"dec{j}.up.b"] = _init(rng, (out,), up_in)
            up_in = 2 * out  # concatenated skip
        k = spec.head_kernel
        self.params["head.w"] = _init(rng, (1, up_in, k, k, k), up_in * k**3)
        self.params["head.b"] = _init(rng, (1,), up_in * k**3)

    # -- forward --------------------------------------------------------

    def encoder_forward(self, x: L.SparseTensor):
        """Run the sparse encoder; returns (stage outputs, cache).

        Stage outputs are the post-activation sparse tensors at each
        resolution (stage 0 = full resolution), used as decoder skips.
        """
        if x.channels != self.spec.in_channels:
            raise ValueError(
                f"enc0.sub: input has {x.channels} channels, expected {self.spec.in_channels}"
            )
        slope = self.spec.leaky_slope
        stages, cache = [], []
        st, c_sub = L.subm_conv_forward(x, self.params["enc0.sub.w"], self.params["enc0.sub.b"])
        act, c_act = L.leaky_relu_forward(st.features, slope)
        st = L.SparseTensor(st.indices, act, st.shape)
        stages.append(st)
        cache.append({"sub": c_sub, "sub_act": c_act})
        for i in range(1, self.spec.levels):
            dn, c_dn = L.down_conv_forward(
                st, self.params[f"enc{i}.down.w"], self.params[f"enc{i}.down.b"]
            )
            act, c_dact = L.leaky_relu_forward(dn.features, slope)
            dn = L.SparseTensor(dn.indices, act, dn.shape)
            sb, c_sb = L.subm_conv_forward(
                dn, self.params[f"enc{i}.sub.w"], self.params[f"enc{i}.sub.b"]
            )
            act, c_sact = L.leaky_relu_forward(sb.features, slope)
            st = L.SparseTensor(sb.indices, act, sb.shape)
            stages.append(st)
            cache.append({"down": c_dn, "down_act": c_dact, "sub": c_sb, "sub_act": c_sact})
        return stages, cache

    def decoder_forward(self, stages):
        """Densify the deepest stage, upsample with skip concatenation,
        and produce a sigmoid cube matching the full-resolution grid."""
        levels = self.spec.levels
        if len(stages) != levels:
            raise ValueError(f"decoder expects {levels} encoder stages, got {len(stages)}")
        deep = stages[-1]
        d = deep.densify()
        cache = {"deep": deep, "ups": []}
        for j, level in enumerate(range(levels - 2, -1, -1)):
            w = self.params[f"dec{j}.up.w"]
            if d.shape[0] != w.shape[0]:
                raise ValueError(
                    f"dec{j}.up: input has {d.shape[0]} channels, expected {w.shape[0]}"
                )
            up, c_up = L.tconv3d_forward(d, w, self.params[f"dec{j}.up.b"])
            act, c_act = L.leaky_relu_forward(up, 0.0)  # plain ReLU
            skip = stages[level]
            if act.shape[1:] != skip.shape:
                raise ValueError(
                    f"dec{j}.up: output dims {act.shape[1:]} do not match "
                    f"stage {level} dims {skip.shape}"
                )
            sk = skip.densify()
            d = np.concatenate([act, sk], axis=0)
            cache["ups"].append({"up": c_up, "act": c_act, "skip": skip, "split": act.shape[0]})
        k = self.spec.head_kernel
        logits, c_head = L.conv3d_forward(d, self.params["head.w"], self.params["head.b"], 1, k // 2)
        out, c_sig = L.sigmoid_forward(logits)
        cache["head"] = c_head
        cache["sig"] = c_sig
        return CubeTensor(power=out[0], normalized=True), cache

    def forward(self, x: L.SparseTensor):
        stages, enc_cache = self.encoder_forward(x)
        cube, dec_cache = self.decoder_forward(stages)
        return cube, {"stages": stages, "enc": enc_cache, "dec": dec_cache}

    def generate(self, grid_or_st) -> CubeTensor:
        """Inference-only forward pass from a sparse voxel grid."""
        st = sparse_input(grid_or_st) if isinstance(grid_or_st, SparseVoxelGrid) else grid_or_st
        cube, _ = self.forward(st)
        return cube

    # -- backward -------------------------------------------------------

    def backward(self, g_power: np.ndarray, cache) -> dict:
        """Gradients of every generator parameter for d(loss)/d(output
        cube) = ``g_power``."""
        spec = self.spec
        grads = {}
        dec = cache["dec"]
        stages = cache["stages"]
        g = L.sigmoid_backward(g_power[None], dec["sig"])
        g, grads["head.w"], grads["head.b"] = L.conv3d_backward(g, dec["head"])
        stage_grads = [np.zeros_like(s.features) for s in stages]
        for j in range(len(dec["ups"]) - 1, -1, -1):
            rec = dec["ups"][j]
            split = rec["split"]
            g_act, g_sk = g[:split], g[split:]
            level = spec.levels - 2 - j
            stage_grads[level] += L.densify_backward(g_sk, rec["skip"])
            g_up = L.leaky_relu_backward(g_act, rec["act"])
            g, grads[f"dec{j}.up.w"], grads[f"dec{j}.up.b"] = L.tconv3d_backward(g_up, rec["up"])
        stage_grads[-1] += L.densify_backward(g, dec["deep"])
        enc = cache["enc"]
        for i in range(spec.levels - 1, 0, -1):
            rec = enc[i]
            gf = L.leaky_relu_backward(stage_grads[i], rec["sub_act"])
            gf, grads[f"enc{i}.sub.w"], grads[f"enc{i}.sub.b"] = L.subm_conv_backward(gf, rec["sub"])
            gf = L.leaky_relu_backward(gf, rec["down_act"])
            gf, grads[f"enc{i}.down.w"], grads[f"enc{i}.down.b"] = L.down_conv_backward(
                gf, rec["down"]
            )
            stage_grads[i - 1] += gf
        gf = L.leaky_relu_backward(stage_grads[0], enc[0]["sub_act"])
        _, grads["enc0.sub.w"], grads["enc0.sub.b"] = L.subm_conv_backward(gf, enc[0]["sub"])
        return grads


def sparse_input(svg: SparseVoxelGrid) -> L.SparseTensor:
    """Model input: the 4-channel sparse tensor of a voxelized cloud."""
    return L.SparseTensor(indices=svg.indices, features=svg.features, shape=svg.grid.shape)


class Discriminator:
    """Multi-scale 3D patch discriminator over (condition, candidate)."""

    def __init__(self, spec: DiscriminatorSpec = DiscriminatorSpec(), seed: int = 0):
        self.spec = spec
        self.params = {}
        rng = np.random.default_rng(seed)
        for s in range(spec.scales):
            c_prev = spec.in_channels
            for li, c in enumerate(spec.channels):
                self.params[f"s{s}.conv{li}.w"] = _init(rng, (c, c_prev, 3, 3, 3), c_prev * 27)
                self.params[f"s{s}.conv{li}.b"] = _init(rng, (c,), c_prev * 27)
                c_prev = c
            self.params[f"s{s}.out.w"] = _init(rng, (1, c_prev, 3, 3, 3), c_prev * 27)
            self.params[f"s{s}.out.b"] = _init(rng, (1,), c_prev * 27)

    def forward(self, condition: np.ndarray, candidate: np.ndarray):
        """condition: (Cc, X, Y, Z); candidate: (1, X, Y, Z).  Returns a
        list of :class:`ScaleOutput` (one per scale) and the cache."""
        if condition.shape[1:] != candidate.shape[1:]:
            raise ValueError(
                f"condition dims {condition.shape[1:]} != candidate dims {candidate.shape[1:]}"
            )
        spec = self.spec
        x0 = np.concatenate([condition, candidate], axis=0)
        if x0.shape[0] != spec.in_channels:
            raise ValueError(
                f"discriminator expects {spec.in_channels} input channels, got {x0.shape[0]}"
            )
        outputs, cache = [], {"pools": [], "scales": [], "cond_channels": condition.shape[0]}
        xs = x0
        for s in range(spec.scales):
            if s > 0:
                xs, c_pool = L.avg_pool2_forward(xs)
                cache["pools"].append(c_pool)
            h = xs
            sc = {"convs": []}
            feats = []
            for li in range(len(spec.channels)):
                h, c_conv = L.conv3d_forward(
                    h, self.params[f"s{s}.conv{li}.w"], self.params[f"s{s}.conv{li}.b"], 2, 1
                )
                h, c_act = L.leaky_relu_forward(h, spec.leaky_slope)
                sc["convs"].append((c_conv, c_act))
                feats.append(h)
            logits, c_out = L.conv3d_forward(h, self.params[f"s{s}.out.w"], self.params[f"s{s}.out.b"], 1, 1)
            prob, _ = L.sigmoid_forward(logits)
            sc["out"] = c_out
            cache["scales"].append(sc)
            outputs.append(ScaleOutput(logits=logits, prob=prob, features=feats))
        return outputs, cache

    def backward(self, g_scales, cache):
        """Backward pass from per-scale (g_logits, [g_feature, ...]) pairs.

        Returns (param grads, grad wrt candidate, grad wrt condition).
        """
        spec = self.spec
        grads = {}
        g_x0 = None
        g_pool_chain = None
        for s in range(spec.scales - 1, -1, -1):
            g_logits, g_feats = g_scales[s]
            sc = cache["scales"][s]
            g_h, grads[f"s{s}.out.w"], grads[f"s{s}.out.b"] = L.conv3d_backward(g_logits, sc["out"])
            for li in range(len(spec.channels) - 1, -1, -1):
                c_conv, c_act = sc["convs"][li]
                g_h = g_h + g_feats[li]
                g_h = L.leaky_relu_backward(g_h, c_act)
                g_h, grads[f"s{s}.conv{li}.w"], grads[f"s{s}.conv{li}.b"] = L.conv3d_backward(
                    g_h, c_conv
                )
            if s > 0:
                if g_pool_chain is None:
                    g_pool_chain = g_h
                else:
                    g_pool_chain = g_pool_chain + g_h
                g_pool_chain = L.avg_pool2_backward(g_pool_chain, cache["pools"][s - 1])
            else:
                g_x0 = g_h if g_pool_chain is None else g_h + g_pool_chain
        cc = cache["cond_channels"]
        return grads, g_x0[cc:], g_x0[:cc]
