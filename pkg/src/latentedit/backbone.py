"""Frozen conv-attention backbone and the model-backend adapter contract.

A backend bundles everything the editing pipeline needs from a model suite:
an image encoder/decoder pair mapping frames to per-frame latents, a text
encoder feeding cross-attention, a depth-feature encoder, and the noise
predictor itself. The in-repo :class:`ToyBackend` implements the full
contract with small frozen seeded weights so every pipeline property can be
exercised deterministically without external checkpoints; pretrained weight
suites attach through the same interface via :func:`register_backend`.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .attention import AttentionMode, AttentionWeights, cross_attention, self_attention_frame
from .depth import DepthEncoder, DepthFeatures
from .errors import BackendUnavailableError, ConfigError, ShapeError
from .nn_ops import conv3x3, layer_norm, silu, time_embedding, upsample_nearest2
from .schedule import LatentState
from .seeding import derive_rng, freeze


class Backend(Protocol):
    """Adapter contract every model backend implements.

    Besides the five codec/predictor methods, a backend declares its geometry
    and sampling conventions as attributes: ``latent_channels``,
    ``latent_scale`` (image-to-latent down-scaling per side), ``unet_stride``
    (total down-sampling inside the predictor, constraining valid latent
    resolutions), ``latent_scale_factor`` (multiplier applied to latents
    before decoding; 1.0 for the toy backend, pretrained weight suites use
    their trained convention), ``train_steps`` plus the beta-schedule fields
    (``schedule_kind``, ``beta_start``, ``beta_end``), and
    ``default_guidance``.
    """

    name: str
    latent_channels: int
    latent_scale: int
    unet_stride: int
    latent_scale_factor: float
    train_steps: int
    schedule_kind: str
    beta_start: float
    beta_end: float
    default_guidance: float

    def encode_image(self, frames: np.ndarray) -> LatentState: ...

    def decode_latent(self, latents: LatentState) -> np.ndarray: ...

    def encode_text(self, prompt: str) -> np.ndarray: ...

    def encode_depth(self, maps: np.ndarray) -> DepthFeatures: ...

    def depth_stage_specs(self, latent_hw: tuple[int, int]) -> list[tuple[int, int, int]]: ...

    def predict_noise(
        self,
        latents: LatentState,
        t: int,
        prompt_emb: np.ndarray | None = None,
        depth: DepthFeatures | None = None,
        mode: AttentionMode = AttentionMode.SA,
    ) -> np.ndarray: ...


class ConvAttnBlock:
    """Conv -> self-attention slot -> text cross-attention -> FFN, all residual.

    The self-attention slot is the only mode-dependent site; cross-attention
    always reads the prompt tokens. Token sublayers use a parameter-free
    pre-norm so activations stay bounded through the stack.
    """

    def __init__(self, rng: np.random.Generator, channels: int, text_dim: int, time_dim: int):
        c = channels
        self.channels = c
        self.conv_w = freeze(rng.standard_normal((c, c, 3, 3)) * np.sqrt(2.0 / (c * 9)))
        self.time_w = freeze(rng.standard_normal((time_dim, c)) * (0.5 / np.sqrt(time_dim)))
        self.self_attn = AttentionWeights(
            w_q=rng.standard_normal((c, c)) / np.sqrt(c),
            w_k=rng.standard_normal((c, c)) / np.sqrt(c),
            w_v=rng.standard_normal((c, c)) / np.sqrt(c),
        )
        self.cross_attn = AttentionWeights(
            w_q=rng.standard_normal((c, c)) / np.sqrt(c),
            w_k=rng.standard_normal((text_dim, c)) / np.sqrt(text_dim),
            w_v=rng.standard_normal((text_dim, c)) / np.sqrt(text_dim),
        )
        self.ffn_w1 = freeze(rng.standard_normal((c, 2 * c)) / np.sqrt(c))
        self.ffn_w2 = freeze(rng.standard_normal((2 * c, c)) / np.sqrt(2 * c))

    def __call__(
        self,
        feats: np.ndarray,
        temb: np.ndarray,
        prompt_tokens: np.ndarray,
        mode: AttentionMode,
    ) -> np.ndarray:
        k, c, h, w = feats.shape
        bias = (temb @ self.time_w)[None, :, None, None]
        feats = feats + conv3x3(silu(feats + bias), self.conv_w)

        tokens = feats.reshape(k, c, h * w).transpose(0, 2, 1)
        normed = list(layer_norm(tokens))
        sa = np.stack(
            [self_attention_frame(mode, i, normed, self.self_attn) for i in range(k)]
        )
        tokens = tokens + sa
        normed = layer_norm(tokens)
        ca = np.stack(
            [cross_attention(normed[i], prompt_tokens, self.cross_attn) for i in range(k)]
        )
        tokens = tokens + ca
        normed = layer_norm(tokens)
        tokens = tokens + silu(normed @ self.ffn_w1) @ self.ffn_w2
        return tokens.transpose(0, 2, 1).reshape(k, c, h, w)


class ToyBackend:
    """Deterministic small-scale backend implementing the full adapter contract.

    Two-level UNet (channel widths 8 -> 16) of conv-attention blocks; all
    weights are drawn once from a fixed seed and frozen, so every method is a
    pure function of its inputs and results are byte-stable across calls,
    runs, and platforms. Depth features are injected additively at the two
    down-sampling stage outputs; an all-zero pyramid is therefore exactly a
    no-op. Attention is single-head.
    """

    name = "toy"
    latent_channels = 4
    latent_scale = 8
    unet_stride = 4  # two stride-2 down-samplings
    latent_scale_factor = 1.0
    text_dim = 16
    time_dim = 32
    train_steps = 1000
    schedule_kind = "linear"
    beta_start = 1e-4
    beta_end = 0.02
    default_guidance = 1.0

    def __init__(self, weight_seed: int = 0):
        self.weight_seed = weight_seed
        rng = derive_rng("toy-backend", weight_seed)
        c1, c2 = 8, 16

        # Pixel <-> latent maps: the decoder is the exact pseudo-inverse of
        # the encoder's channel mix, so decode(encode(x)) is the blockwise
        # average of x up to float rounding.
        mix = np.vstack([np.eye(3), rng.standard_normal(3) / np.sqrt(3.0)])
        self._enc_mix = freeze(mix)
        self._dec_mix = freeze(np.linalg.pinv(mix))

        self.conv_in = freeze(rng.standard_normal((c1, self.latent_channels, 3, 3))
                              * np.sqrt(2.0 / (self.latent_channels * 9)))
        self.block_d1 = ConvAttnBlock(rng, c1, self.text_dim, self.time_dim)
        self.down1 = freeze(rng.standard_normal((c2, c1, 3, 3)) * np.sqrt(2.0 / (c1 * 9)))
        self.block_d2 = ConvAttnBlock(rng, c2, self.text_dim, self.time_dim)
        self.down2 = freeze(rng.standard_normal((c2, c2, 3, 3)) * np.sqrt(2.0 / (c2 * 9)))
        self.block_mid = ConvAttnBlock(rng, c2, self.text_dim, self.time_dim)
        self.up2 = freeze(rng.standard_normal((c2, c2, 3, 3)) * np.sqrt(2.0 / (c2 * 9)))
        self.block_u2 = ConvAttnBlock(rng, c2, self.text_dim, self.time_dim)
        self.up1 = freeze(rng.standard_normal((c1, c2, 3, 3)) * np.sqrt(2.0 / (c2 * 9)))
        self.block_u1 = ConvAttnBlock(rng, c1, self.text_dim, self.time_dim)
        # Small output scale keeps noise predictions a few percent of the
        # latent magnitude, inside the regime where first-order inversion
        # error shrinks as the trajectory is refined.
        self.conv_out = freeze(rng.standard_normal((self.latent_channels, c1, 3, 3))
                               * np.sqrt(2.0 / (c1 * 9)) * 0.002)

        self._null_text = freeze(rng.standard_normal((1, self.text_dim)))
        self._depth_encoder = DepthEncoder(stage_channels=(c2, c2))

    # ---- image / text / depth codecs ----

    def encode_image(self, frames: np.ndarray) -> LatentState:
        """Frames (k, h, w, 3) in [0, 1] -> latents at 1/8 resolution."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ShapeError(f"frames must be (k, h, w, 3), got {frames.shape}")
        k, h, w, _ = frames.shape
        f = self.latent_scale
        if h % f or w % f:
            raise ShapeError(f"frame resolution {h}x{w} not divisible by {f}")
        pooled = frames.reshape(k, h // f, f, w // f, f, 3).mean(axis=(2, 4))
        centered = 2.0 * pooled - 1.0
        lat = np.einsum("khwc,lc->klhw", centered, self._enc_mix, optimize=True)
        return LatentState(lat, step_index=0)

    def decode_latent(self, latents: LatentState) -> np.ndarray:
        """Latents -> frames (k, h, w, 3); values are not clipped."""
        px = np.einsum("klhw,cl->khwc", latents.data, self._dec_mix, optimize=True)
        px = (px + 1.0) / 2.0
        f = self.latent_scale
        return px.repeat(f, axis=1).repeat(f, axis=2)

    def encode_text(self, prompt: str) -> np.ndarray:
        """Whitespace tokens -> stable per-token vectors, (tokens, text_dim)."""
        words = str(prompt).lower().split()
        if not words:
            raise ConfigError("cannot encode an empty prompt")
        return np.stack(
            [derive_rng("text-token", wd).standard_normal(self.text_dim) for wd in words[:77]]
        )

    @property
    def null_text_embedding(self) -> np.ndarray:
        return self._null_text

    def encode_depth(self, maps: np.ndarray) -> DepthFeatures:
        """Depth maps at latent resolution -> injection pyramid."""
        return self._depth_encoder.encode(maps)

    def depth_stage_specs(self, latent_hw: tuple[int, int]) -> list[tuple[int, int, int]]:
        return self._depth_encoder.stage_specs(*latent_hw)

    # ---- noise prediction ----

    def predict_noise(
        self,
        latents: LatentState,
        t: int,
        prompt_emb: np.ndarray | None = None,
        depth: DepthFeatures | None = None,
        mode: AttentionMode = AttentionMode.SA,
    ) -> np.ndarray:
        """Predicted noise for all frames, shaped like the input latents."""
        if not 1 <= t <= self.train_steps:
            raise ConfigError(f"timestep {t} out of [1, {self.train_steps}]")
        k, c, h, w = latents.data.shape
        if c != self.latent_channels:
            raise ShapeError(f"expected {self.latent_channels} latent channels, got {c}")
        if h % self.unet_stride or w % self.unet_stride:
            raise ShapeError(
                f"latent resolution {h}x{w} not divisible by stride {self.unet_stride}"
            )
        if depth is not None:
            expected = self.depth_stage_specs((h, w))
            if depth.num_frames != k:
                raise ShapeError(
                    f"depth pyramid covers {depth.num_frames} frames, latents have {k}"
                )
            if depth.stage_specs() != expected:
                raise ShapeError(
                    f"depth pyramid stages {depth.stage_specs()} do not match "
                    f"UNet stages {expected}"
                )
        prompt_tokens = self._null_text if prompt_emb is None else np.asarray(
            prompt_emb, dtype=np.float64
        )
        if prompt_tokens.ndim != 2 or prompt_tokens.shape[0] == 0:
            raise ConfigError("prompt embedding must be a non-empty token matrix")
        temb = time_embedding(t, self.time_dim)

        x = conv3x3(latents.data, self.conv_in)
        x = self.block_d1(x, temb, prompt_tokens, mode)
        skip1 = x
        x = conv3x3(x, self.down1, stride=2)
        if depth is not None:
            x = x + depth.stages[0]
        x = self.block_d2(x, temb, prompt_tokens, mode)
        skip2 = x
        x = conv3x3(x, self.down2, stride=2)
        if depth is not None:
            x = x + depth.stages[1]
        x = self.block_mid(x, temb, prompt_tokens, mode)

        x = conv3x3(upsample_nearest2(x), self.up2) + skip2
        x = self.block_u2(x, temb, prompt_tokens, mode)
        x = conv3x3(upsample_nearest2(x), self.up1) + skip1
        x = self.block_u1(x, temb, prompt_tokens, mode)
        return conv3x3(x, self.conv_out)


class CountingBackend:
    """Instrumentation wrapper counting noise-prediction calls.

    Delegates the full backend contract to ``inner`` and increments
    ``eval_count`` on every :meth:`predict_noise`.
    """

    def __init__(self, inner):
        self.inner = inner
        self.eval_count = 0

    def predict_noise(self, *args, **kwargs):
        self.eval_count += 1
        return self.inner.predict_noise(*args, **kwargs)

    def __getattr__(self, name):
        return getattr(self.inner, name)


def _pretrained_factory(**options):
    raise BackendUnavailableError(
        "the 'pretrained' backend needs externally downloaded latent-diffusion "
        "weights (image encoder/decoder, UNet, text encoder) plus a tensor "
        "runtime; none are bundled. Implement the adapter contract "
        "(encode_image, decode_latent, encode_text, encode_depth, "
        "depth_stage_specs, predict_noise, plus the declared latent_scale / "
        "unet_stride / schedule fields) and register it with "
        "register_backend('pretrained', factory). Options received: "
        f"{sorted(options) or 'none'}"
    )


_BACKENDS = {
    "toy": ToyBackend,
    "pretrained": _pretrained_factory,
}


def register_backend(name: str, factory) -> None:
    """Register (or replace) a backend factory under ``name``."""
    _BACKENDS[name] = factory


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str, **options):
    """Instantiate a registered backend by name."""
    try:
        factory = _BACKENDS[name]
    except KeyError:
        raise ConfigError(
            f"unknown backend {name!r}; available: {available_backends()}"
        ) from None
    return factory(**options)
