"""Small float64 numpy building blocks shared by the frozen networks."""

from __future__ import annotations

import numpy as np


def conv3x3(x: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """Bias-free 3x3 convolution on (batch, c_in, h, w), zero padded.

    ``w`` has shape (c_out, c_in, 3, 3). Implemented as an im2col windowed
    view plus one einsum, so the op order (and hence the bit pattern of the
    result) is fixed.
    """
    pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(pad, (3, 3), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    return np.einsum("kchwij,ocij->kohw", win, w, optimize=True)


def silu(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    pos = x >= 0
    out = np.empty_like(x)
    out[pos] = x[pos] / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = x[~pos] * ex / (1.0 + ex)
    return out


def layer_norm(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Parameter-free layer norm over the last axis."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling of (batch, c, h, w)."""
    return x.repeat(2, axis=-2).repeat(2, axis=-1)


def time_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of an integer timestep, shape (dim,)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = float(t) * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])
