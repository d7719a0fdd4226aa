"""Per-frame depth maps and their multi-resolution feature pyramids.

Depth maps act as spatial-layout priors: they are estimated once per frame,
normalized to [0, 1], pooled down to latent resolution, and pushed through a
frozen bias-free residual conv stack whose stride-2 stages mirror the
backbone's down-sampling pass. Bias-free means an all-zero map encodes to
all-zero features, so "guidance disabled" and "zero depth" coincide exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import BackendError, ConfigError, ShapeError
from .nn_ops import conv3x3, silu
from .seeding import derive_rng, freeze


@dataclass(frozen=True)
class DepthFeatures:
    """Stage-major feature pyramid for all frames.

    ``stages[s]`` has shape (frames, channels_s, h_s, w_s); resolutions
    strictly halve from one stage to the next.
    """

    stages: tuple

    def __post_init__(self):
        stages = tuple(np.asarray(s, dtype=np.float64) for s in self.stages)
        if not stages:
            raise ShapeError("depth features need at least one stage")
        k = stages[0].shape[0]
        for idx, s in enumerate(stages):
            if s.ndim != 4:
                raise ShapeError(f"stage {idx} must be (frames, c, h, w), got {s.shape}")
            if s.shape[0] != k:
                raise ShapeError("all stages must cover the same frame count")
            if not np.all(np.isfinite(s)):
                raise ShapeError(f"stage {idx} contains non-finite entries")
            if idx > 0:
                prev = stages[idx - 1]
                if prev.shape[2] != 2 * s.shape[2] or prev.shape[3] != 2 * s.shape[3]:
                    raise ShapeError(
                        f"stage {idx} resolution {s.shape[2:]} must halve "
                        f"stage {idx - 1} resolution {prev.shape[2:]}"
                    )
        object.__setattr__(self, "stages", stages)

    @property
    def num_frames(self) -> int:
        return self.stages[0].shape[0]

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def frame_pyramid(self, i: int) -> list[np.ndarray]:
        """The per-stage feature list of one frame."""
        if not 0 <= i < self.num_frames:
            raise ConfigError(f"frame index {i} out of range")
        return [s[i] for s in self.stages]

    def stage_specs(self) -> list[tuple[int, int, int]]:
        return [(s.shape[1], s.shape[2], s.shape[3]) for s in self.stages]

    def is_zero(self) -> bool:
        return all(not s.any() for s in self.stages)

    @classmethod
    def zeros(cls, specs, num_frames: int) -> "DepthFeatures":
        return cls(tuple(np.zeros((num_frames, c, h, w)) for c, h, w in specs))


def minmax_normalize(arr: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; flat inputs map to all zeros."""
    arr = np.asarray(arr, dtype=np.float64)
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def pool_maps(maps: np.ndarray, factor: int) -> np.ndarray:
    """Blockwise-average a (frames, h, w) stack down by an integer factor."""
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3:
        raise ShapeError(f"depth maps must be (frames, h, w), got {maps.shape}")
    k, h, w = maps.shape
    if h % factor or w % factor:
        raise ShapeError(f"map resolution {h}x{w} not divisible by pool factor {factor}")
    return maps.reshape(k, h // factor, factor, w // factor, factor).mean(axis=(2, 4))


class SyntheticGradientDepth:
    """Deterministic in-repo depth stub: a horizontal ramp scaled by luma.

    Per frame, the raw response is ``ramp(x) * minmax(luma)``; flat inputs
    (constant-color frames) therefore produce constant all-zero maps, and
    every output is min-max normalized into [0, 1]. Content-independent of
    any external model; purely a stand-in so the pipeline runs offline.
    """

    name = "stub"

    def estimate(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ShapeError(f"frames must be (k, h, w, 3), got {frames.shape}")
        k, h, w, _ = frames.shape
        ramp = np.linspace(0.0, 1.0, w)[None, :]
        out = np.empty((k, h, w))
        for i in range(k):
            luma = frames[i] @ np.array([0.299, 0.587, 0.114])
            out[i] = minmax_normalize(ramp * minmax_normalize(luma))
        return out


class HttpDepthClient:
    """Depth estimation over HTTP: POST one PNG per frame, get a float grid.

    Expects a JSON response ``{"depth": [[...], ...]}``; values are min-max
    normalized here, so the remote scale convention does not matter.
    """

    name = "http"

    def __init__(self, url: str, token: str | None = None, timeout: float = 30.0):
        if not url:
            raise ConfigError("depth HTTP backend requires a url")
        self.url = url
        self.token = token
        self.timeout = timeout

    def _headers(self) -> dict:
        headers = {"Content-Type": "image/png"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def estimate(self, frames: np.ndarray) -> np.ndarray:
        import requests  # deferred: only the HTTP path needs it

        from PIL import Image

        frames = np.asarray(frames, dtype=np.float64)
        maps = []
        for frame in frames:
            buf = io.BytesIO()
            Image.fromarray(
                np.clip(frame * 255.0, 0, 255).astype(np.uint8)
            ).save(buf, format="PNG")
            try:
                resp = requests.post(
                    self.url, data=buf.getvalue(), headers=self._headers(),
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                grid = np.asarray(resp.json()["depth"], dtype=np.float64)
            except Exception as exc:
                raise BackendError(f"depth backend request failed: {exc}") from exc
            if grid.shape != frame.shape[:2]:
                raise BackendError(
                    f"depth backend returned {grid.shape}, expected {frame.shape[:2]}"
                )
            maps.append(minmax_normalize(grid))
        return np.stack(maps)


def get_depth_backend(name: str = "stub", **options):
    if name == "stub":
        return SyntheticGradientDepth()
    if name == "http":
        return HttpDepthClient(**options)
    raise ConfigError(f"unknown depth backend {name!r}; expected 'stub' or 'http'")


class DepthEncoder:
    """Frozen bias-free residual conv stack with stride-2 stages.

    Each stage halves the resolution and emits features at the matching
    backbone stage width. Zero maps encode to exactly zero features (no
    biases anywhere, and the activation fixes zero).
    """

    def __init__(self, stage_channels=(16, 16), seed_tag: str = "depth-encoder"):
        self.stage_channels = tuple(stage_channels)
        rng = derive_rng(seed_tag, *self.stage_channels)
        self._down: list[np.ndarray] = []
        self._res: list[np.ndarray] = []
        c_in = 1
        for c_out in self.stage_channels:
            scale = np.sqrt(2.0 / (c_in * 9))
            self._down.append(freeze(rng.standard_normal((c_out, c_in, 3, 3)) * scale))
            res_scale = np.sqrt(2.0 / (c_out * 9))
            self._res.append(freeze(rng.standard_normal((c_out, c_out, 3, 3)) * res_scale))
            c_in = c_out

    def stage_specs(self, h: int, w: int) -> list[tuple[int, int, int]]:
        """Pyramid (channels, h, w) per stage for maps of resolution h x w."""
        specs = []
        for c in self.stage_channels:
            h, w = h // 2, w // 2
            specs.append((c, h, w))
        return specs

    def encode(self, maps: np.ndarray) -> DepthFeatures:
        maps = np.asarray(maps, dtype=np.float64)
        if maps.ndim != 3:
            raise ShapeError(f"depth maps must be (frames, h, w), got {maps.shape}")
        total_stride = 2 ** len(self.stage_channels)
        if maps.shape[1] % total_stride or maps.shape[2] % total_stride:
            raise ShapeError(
                f"map resolution {maps.shape[1]}x{maps.shape[2]} not divisible "
                f"by total stride {total_stride}"
            )
        x = maps[:, None, :, :]
        stages = []
        for w_down, w_res in zip(self._down, self._res):
            x = conv3x3(x, w_down, stride=2)
            x = x + conv3x3(silu(x), w_res)
            stages.append(x)
        return DepthFeatures(tuple(stages))
