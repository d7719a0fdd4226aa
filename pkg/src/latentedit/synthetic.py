"""Deterministic synthetic clips for demos and tests.

Tiny procedurally generated videos with real motion, so the pipeline and the
metrics have something meaningful to chew on without bundling binary media.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError

CLIP_KINDS = ("slide", "waves", "orbit")


def synthetic_clip(kind: str = "slide", frames: int = 8, size: int = 64) -> np.ndarray:
    """A (frames, size, size, 3) float clip in [0, 1]."""
    if kind not in CLIP_KINDS:
        raise ConfigError(f"unknown clip kind {kind!r}; expected one of {CLIP_KINDS}")
    if frames < 1 or size < 8:
        raise ConfigError("need frames >= 1 and size >= 8")
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    clip = np.empty((frames, size, size, 3))
    for i in range(frames):
        phase = i / max(frames - 1, 1)
        if kind == "slide":
            # bright square sliding left to right over a diagonal gradient
            img = np.stack([0.3 * xx + 0.2 * yy, 0.25 + 0.3 * yy, 0.4 * xx], axis=-1)
            cx = 0.2 + 0.6 * phase
            half = 0.12
            box = (np.abs(xx - cx) < half) & (np.abs(yy - 0.5) < half)
            img[box] = [0.9, 0.8, 0.2]
        elif kind == "waves":
            band = 0.5 + 0.5 * np.sin(2 * np.pi * (3 * yy + phase))
            img = np.stack([band, 0.5 + 0.4 * np.cos(2 * np.pi * (2 * xx - phase)), xx], axis=-1)
        else:  # orbit
            ang = 2 * np.pi * phase
            cx, cy = 0.5 + 0.3 * np.cos(ang), 0.5 + 0.3 * np.sin(ang)
            r2 = (xx - cx) ** 2 + (yy - cy) ** 2
            blob = np.exp(-r2 / 0.02)
            img = np.stack([0.2 + 0.7 * blob, 0.3 + 0.2 * yy, 0.6 * (1 - blob) * xx], axis=-1)
        clip[i] = np.clip(img, 0.0, 1.0)
    return clip


def write_clip_frames(clip: np.ndarray, out_dir) -> list[Path]:
    """Save a clip as numbered PNGs (000.png, 001.png, ...)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(np.asarray(clip)):
        arr = np.clip(np.asarray(frame, dtype=np.float64) * 255.0, 0, 255).astype(np.uint8)
        p = out / f"{i:03d}.png"
        Image.fromarray(arr).save(p)
        paths.append(p)
    return paths
