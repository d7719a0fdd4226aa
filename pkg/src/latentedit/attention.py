"""Scaled dot-product attention and the cross-frame key/value routing modes.

The self-attention slot of every backbone block runs in one of three modes:

- ``SA``  — conventional per-frame self-attention (keys/values from the
  frame itself),
- ``FAA`` — frame-align attention: keys/values come from the first frame,
  pinning every frame to a shared reference,
- ``SCA`` — sparse-causal attention: keys/values from the first frame
  concatenated with the immediately preceding frame.

Projection matrices are frozen for the lifetime of a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .seeding import freeze


class AttentionMode(Enum):
    """Key/value routing for the self-attention slot; uniform across layers."""

    SA = "sa"
    FAA = "faa"
    SCA = "sca"

    @classmethod
    def parse(cls, value) -> "AttentionMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(
                f"unknown attention mode {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class AttentionWeights:
    """Frozen query/key/value projections for one attention site.

    ``w_q`` is (model_dim, attn_dim); ``w_k``/``w_v`` are (kv_dim, attn_dim)
    where kv_dim equals model_dim for self-attention and the text feature
    width for cross-attention.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if arr.ndim != 2:
                raise ShapeError(f"{name} must be a matrix, got shape {arr.shape}")
            object.__setattr__(self, name, freeze(arr))
        if self.w_q.shape[1] != self.w_k.shape[1]:
            raise ShapeError("query and key projections must share the output width")
        if self.w_k.shape != self.w_v.shape:
            raise ShapeError("key and value projections must have matching shapes")


def scaled_dot_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """softmax(q kᵀ / sqrt(d)) v with a max-shifted, row-stochastic softmax."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError("attention inputs must be 2-D token matrices")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(
            f"query width {q.shape[1]} does not match key width {k.shape[1]}"
        )
    if k.shape[0] != v.shape[0]:
        raise ShapeError(
            f"key count {k.shape[0]} does not match value count {v.shape[0]}"
        )
    if k.shape[0] == 0:
        raise ShapeError("attention requires at least one key")
    logits = q @ k.T / np.sqrt(q.shape[1])
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


def _kv_source(
    mode: AttentionMode, frame_index: int, frames: Sequence[np.ndarray]
) -> np.ndarray:
    if mode is AttentionMode.SA:
        return frames[frame_index]
    if mode is AttentionMode.FAA:
        return frames[0]
    # SCA: first frame plus the previous one; the first frame has no
    # predecessor, so it degenerates to the first frame duplicated.
    prev = frames[frame_index - 1] if frame_index > 0 else frames[0]
    return np.concatenate([frames[0], prev], axis=0)


def self_attention_frame(
    mode: AttentionMode,
    frame_index: int,
    frames: Sequence[np.ndarray],
    weights: AttentionWeights,
) -> np.ndarray:
    """Self-attention output for one frame under the given routing mode.

    ``frames`` holds the per-frame token matrices (tokens x model_dim) at the
    current layer; ``frame_index`` is 0-based.
    """
    if not 0 <= frame_index < len(frames):
        raise ConfigError(
            f"frame index {frame_index} out of range for {len(frames)} frames"
        )
    tokens = frames[frame_index]
    source = _kv_source(mode, frame_index, frames)
    return scaled_dot_attention(tokens @ weights.w_q, source @ weights.w_k, source @ weights.w_v)


def cross_attention(
    tokens: np.ndarray, prompt: np.ndarray, weights: AttentionWeights
) -> np.ndarray:
    """Text cross-attention: queries from the frame, keys/values from the prompt."""
    prompt = np.asarray(prompt, dtype=np.float64)
    if prompt.ndim != 2 or prompt.shape[0] == 0:
        raise ConfigError("prompt embedding must be a non-empty token matrix")
    return scaled_dot_attention(tokens @ weights.w_q, prompt @ weights.w_k, prompt @ weights.w_v)
