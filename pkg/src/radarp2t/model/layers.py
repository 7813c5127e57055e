"""Dense and sparse 3D layer primitives with explicit reverse-mode
gradients.

Everything runs in float64 so finite-difference checks are clean and
training is bit-for-bit reproducible.  Dense activations are
channels-first arrays (C, X, Y, Z).  Sparse tensors keep their active
sites sorted by flattened index; each convolution builds a rulebook of
(output row, input row) pairs per kernel offset, so forward and backward
are plain gathers plus small matmuls.

Sparse convolutions follow true sparse semantics: bias is added only at
active output sites, so a densified sparse result matches a zero-padded
dense convolution at the active sites (and only there).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# 3x3x3 kernel offsets in a fixed order; row 13 is the centre (0, 0, 0).
KERNEL_OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)


# ---------------------------------------------------------------------------
# dense ops


def conv3d_forward(x, w, b, stride: int = 1, pad: int = 1):
    """Dense 3D correlation: out[o, p] = sum_c,t w[o, c, t] * x[c, s*p + t - pad].

    x: (Ci, X, Y, Z); w: (Co, Ci, k, k, k); b: (Co,).
    """
    co, ci, k, _, _ = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k, k), axis=(1, 2, 3))
    win = win[:, ::stride, ::stride, ::stride]
    y = np.einsum("cxyzijk,ocijk->oxyz", win, w, optimize=True)
    y += b[:, None, None, None]
    cache = (x.shape, xp, w, stride, pad)
    return y, cache


def conv3d_backward(g_y, cache):
    x_shape, xp, w, stride, pad = cache
    co, ci, k, _, _ = w.shape
    ox, oy, oz = g_y.shape[1:]
    win = sliding_window_view(xp, (k, k, k), axis=(1, 2, 3))[:, ::stride, ::stride, ::stride]
    g_w = np.einsum("cxyzijk,oxyz->ocijk", win, g_y, optimize=True)
    g_b = g_y.sum(axis=(1, 2, 3))
    g_xp = np.zeros_like(xp)
    for a in range(k):
        for bb in range(k):
            for c in range(k):
                contrib = np.einsum("oxyz,oc->cxyz", g_y, w[:, :, a, bb, c], optimize=True)
                g_xp[
                    :,
                    a : a + stride * ox : stride,
                    bb : bb + stride * oy : stride,
                    c : c + stride * oz : stride,
                ] += contrib
    g_x = g_xp[:, pad : pad + x_shape[1], pad : pad + x_shape[2], pad : pad + x_shape[3]]
    return g_x, g_w, g_b


def tconv3d_forward(x, w, b):
    """Transposed conv with kernel == stride == 2 (exact x2 upsampling).

    x: (Ci, X, Y, Z); w: (Ci, Co, 2, 2, 2); b: (Co,).
    """
    ci, co = w.shape[:2]
    _, X, Y, Z = x.shape
    blocks = np.einsum("cxyz,coijk->oxiyjzk", x, w, optimize=True)
    y = blocks.reshape(co, 2 * X, 2 * Y, 2 * Z).copy()
    y += b[:, None, None, None]
    cache = (x, w)
    return y, cache


def tconv3d_backward(g_y, cache):
    x, w = cache
    ci, co = w.shape[:2]
    _, X, Y, Z = x.shape
    g_blocks = g_y.reshape(co, X, 2, Y, 2, Z, 2)
    g_x = np.einsum("oxiyjzk,coijk->cxyz", g_blocks, w, optimize=True)
    g_w = np.einsum("cxyz,oxiyjzk->coijk", x, g_blocks, optimize=True)
    g_b = g_y.sum(axis=(1, 2, 3))
    return g_x, g_w, g_b


def avg_pool2_forward(x):
    """2x2x2 average pooling; dims must be even."""
    c, X, Y, Z = x.shape
    if X % 2 or Y % 2 or Z % 2:
        raise ValueError(f"avg_pool2 needs even dims, got {(X, Y, Z)}")
    y = x.reshape(c, X // 2, 2, Y // 2, 2, Z // 2, 2).mean(axis=(2, 4, 6))
    return y, (c, X, Y, Z)


def avg_pool2_backward(g_y, cache):
    c, X, Y, Z = cache
    g = np.broadcast_to(
        g_y[:, :, None, :, None, :, None] / 8.0,
        (c, X // 2, 2, Y // 2, 2, Z // 2, 2),
    )
    return g.reshape(c, X, Y, Z)


def leaky_relu_forward(x, slope: float):
    y = np.where(x > 0.0, x, slope * x)
    return y, (x > 0.0, slope)


def leaky_relu_backward(g_y, cache):
    positive, slope = cache
    return np.where(positive, g_y, slope * g_y)


def sigmoid_forward(x):
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(g_y, cache):
    y = cache
    return g_y * y * (1.0 - y)


# ---------------------------------------------------------------------------
# sparse tensors and rulebooks


@dataclass
class SparseTensor:
    """Active sites of a 3D grid with per-site feature rows.

    indices: (M, 3) int64, unique, sorted by flattened index.
    features: (M, C) float64.
    shape: the dense grid extent.
    """

    indices: np.ndarray
    features: np.ndarray
    shape: tuple

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, 3)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.indices.shape[0]:
            raise ValueError("features must be (M, C) matching indices")
        self.shape = tuple(int(s) for s in self.shape)
        if len(self):
            flat = self.flat_indices()
            if np.any(np.diff(flat) <= 0):
                order = np.argsort(flat)
                self.indices = self.indices[order]
                self.features = self.features[order]

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    @property
    def channels(self) -> int:
        return int(self.features.shape[1])

    def flat_indices(self) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(self.indices.T, self.shape)

    def densify(self) -> np.ndarray:
        dense = np.zeros((self.channels,) + self.shape)
        if len(self):
            dense[:, self.indices[:, 0], self.indices[:, 1], self.indices[:, 2]] = self.features.T
        return dense


def densify_backward(g_dense, st: SparseTensor) -> np.ndarray:
    """Gradient of densify: gather the dense grad at the active sites."""
    if len(st) == 0:
        return np.zeros((0, g_dense.shape[0]))
    return g_dense[:, st.indices[:, 0], st.indices[:, 1], st.indices[:, 2]].T


def _lookup_rows(sorted_flat: np.ndarray, keys: np.ndarray):
    """Rows of ``sorted_flat`` matching ``keys``; returns (hit_mask, rows)."""
    pos = np.searchsorted(sorted_flat, keys)
    pos = np.minimum(pos, max(sorted_flat.size - 1, 0))
    hit = sorted_flat.size > 0
    mask = (sorted_flat[pos] == keys) if hit else np.zeros(keys.shape, dtype=bool)
    return mask, pos


def build_submanifold_rules(st: SparseTensor) -> list:
    """Per-offset (out_rows, in_rows) pairs for a stride-1 3^3 convolution
    whose output active set equals the input active set."""
    rules = []
    if len(st) == 0:
        return [(np.zeros(0, np.int64), np.zeros(0, np.int64))] * len(KERNEL_OFFSETS)
    flat = st.flat_indices()
    shape = np.array(st.shape)
    for off in KERNEL_OFFSETS:
        nb = st.indices + off
        inb = np.all((nb >= 0) & (nb < shape), axis=1)
        keys = np.ravel_multi_index(nb[inb].T, st.shape) if inb.any() else np.zeros(0, np.int64)
        mask, pos = _lookup_rows(flat, keys)
        out_rows = np.flatnonzero(inb)[mask]
        in_rows = pos[mask]
        rules.append((out_rows, in_rows))
    return rules


def downsample_active_sites(st: SparseTensor):
    """Stride-quotient images of the input active sites, plus the halved
    grid shape (each dim must be even)."""
    if any(s % 2 for s in st.shape):
        raise ValueError(f"sparse downsample needs even dims, got {st.shape}")
    out_shape = tuple(s // 2 for s in st.shape)
    if len(st) == 0:
        return np.zeros((0, 3), np.int64), out_shape
    q = st.indices // 2
    flat = np.ravel_multi_index(q.T, out_shape)
    uniq = np.unique(flat)
    out_indices = np.stack(np.unravel_index(uniq, out_shape), axis=1).astype(np.int64)
    return out_indices, out_shape


def build_downsample_rules(st: SparseTensor, out_indices: np.ndarray) -> list:
    """Per-offset pairs for a 3^3 / stride-2 / pad-1 convolution evaluated
    at the given output sites: input position 2*q + t - 1 per axis for
    kernel tap t in {0, 1, 2}^3 (encoded as offsets t - 1)."""
    rules = []
    if len(st) == 0 or out_indices.shape[0] == 0:
        return [(np.zeros(0, np.int64), np.zeros(0, np.int64))] * len(KERNEL_OFFSETS)
    flat = st.flat_indices()
    shape = np.array(st.shape)
    for off in KERNEL_OFFSETS:
        src = 2 * out_indices + off
        inb = np.all((src >= 0) & (src < shape), axis=1)
        keys = np.ravel_multi_index(src[inb].T, st.shape) if inb.any() else np.zeros(0, np.int64)
        mask, pos = _lookup_rows(flat, keys)
        out_rows = np.flatnonzero(inb)[mask]
        in_rows = pos[mask]
        rules.append((out_rows, in_rows))
    return rules


def sparse_conv_apply(rules, in_features, w, b, n_out: int):
    """Shared gather/matmul/scatter forward.  w: (27, Ci, Co)."""
    out = np.tile(b, (n_out, 1)) if n_out else np.zeros((0, w.shape[2]))
    for k, (orows, irows) in enumerate(rules):
        if orows.size:
            out[orows] += in_features[irows] @ w[k]
    return out


def sparse_conv_backward(g_out, rules, in_features, w, n_in: int):
    """Gradients of :func:`sparse_conv_apply`.

    Within one offset every output row pairs with at most one input row,
    so the fancy-indexed accumulations never alias.
    """
    g_in = np.zeros((n_in, w.shape[1]))
    g_w = np.zeros_like(w)
    g_b = g_out.sum(axis=0) if g_out.size else np.zeros(w.shape[2])
    for k, (orows, irows) in enumerate(rules):
        if orows.size:
            g_in[irows] += g_out[orows] @ w[k].T
            g_w[k] = in_features[irows].T @ g_out[orows]
    return g_in, g_w, g_b


def subm_conv_forward(st: SparseTensor, w, b):
    """Submanifold 3^3 convolution: output active set == input active set."""
    rules = build_submanifold_rules(st)
    out_feat = sparse_conv_apply(rules, st.features, w, b, len(st))
    out = SparseTensor(indices=st.indices, features=out_feat, shape=st.shape)
    cache = (rules, st.features, w, len(st))
    return out, cache


def subm_conv_backward(g_features, cache):
    rules, in_features, w, n = cache
    return sparse_conv_backward(g_features, rules, in_features, w, n)


def down_conv_forward(st: SparseTensor, w, b):
    """Sparse 3^3 / stride-2 downsampling convolution; output active sites
    are the stride-quotient images of the input active sites."""
    out_indices, out_shape = downsample_active_sites(st)
    rules = build_downsample_rules(st, out_indices)
    out_feat = sparse_conv_apply(rules, st.features, w, b, out_indices.shape[0])
    out = SparseTensor(indices=out_indices, features=out_feat, shape=out_shape)
    cache = (rules, st.features, w, len(st))
    return out, cache


def down_conv_backward(g_features, cache):
    rules, in_features, w, n = cache
    return sparse_conv_backward(g_features, rules, in_features, w, n)


def sparse_weight_to_dense(w_sparse: np.ndarray) -> np.ndarray:
    """Map rulebook weights (27, Ci, Co) onto a dense kernel (Co, Ci, 3, 3, 3)
    computing the identical correlation (offset == tap - 1)."""
    n_off, ci, co = w_sparse.shape
    w = np.zeros((co, ci, 3, 3, 3))
    for k, off in enumerate(KERNEL_OFFSETS):
        w[:, :, off[0] + 1, off[1] + 1, off[2] + 1] = w_sparse[k].T
    return w
