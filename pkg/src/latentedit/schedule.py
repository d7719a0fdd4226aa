"""Noise-schedule construction and the deterministic latent step algebra.

Implements the beta / cumulative-alpha tables of the diffusion forward chain,
uniform sub-sampling of training timesteps for few-step deterministic
sampling, and the three step operations the editing pipeline is built from:

- :func:`ddim_denoise_step` — one deterministic reverse step (noisy -> cleaner)
- :func:`ddim_invert_step`  — one deterministic forward step (clean -> noisier)
- :func:`forward_diffuse`   — the closed-form noising map (test utility)

All arithmetic is float64 and every function here is pure; schedules are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

DEFAULT_TRAIN_STEPS = 1000
DEFAULT_DDIM_STEPS = 50

# Endpoints for the toy backend's plain linear schedule.
TOY_BETA_START = 1e-4
TOY_BETA_END = 0.02
# Square-root-spaced endpoints used by pretrained latent-diffusion weights.
PRETRAINED_BETA_START = 0.00085
PRETRAINED_BETA_END = 0.012

SCHEDULE_KINDS = ("linear", "scaled_linear", "explicit")


@dataclass(frozen=True)
class LatentState:
    """Per-frame latent tensors at one position of a sampling trajectory.

    ``data`` has shape (frames, channels, height, width), float64, all
    entries finite. ``step_index`` is the position on the sub-sampled
    trajectory: 0 is the clean end, ``ddim_steps`` the noisy end. The frame
    count is fixed along a trajectory.
    """

    data: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 4 or arr.shape[0] < 1:
            raise ShapeError(
                f"latents must have shape (frames, channels, h, w), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ShapeError("latents contain non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "step_index", int(self.step_index))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def with_data(self, data: np.ndarray, step_index: int | None = None) -> "LatentState":
        return LatentState(data, self.step_index if step_index is None else step_index)


@dataclass(frozen=True)
class NoiseSchedule:
    """Beta / cumulative-alpha tables plus the sub-sampled timestep map.

    ``betas[k]`` is the variance at training timestep ``k + 1``;
    ``alpha_bars[k]`` the cumulative product of ``1 - beta`` up to that
    timestep, with the boundary value at timestep 0 pinned to exactly 1.
    ``timestep_map[i]`` gives the (1-based) training timestep backing
    sub-sampled step ``i + 1``; it is strictly increasing.
    """

    train_steps: int
    betas: np.ndarray
    alpha_bars: np.ndarray
    ddim_steps: int
    timestep_map: np.ndarray

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64, copy=True)
        abars = np.array(self.alpha_bars, dtype=np.float64, copy=True)
        tmap = np.array(self.timestep_map, dtype=np.int64, copy=True)
        if self.train_steps < 1:
            raise ConfigError("train_steps must be >= 1")
        if betas.shape != (self.train_steps,):
            raise ConfigError(f"betas must have length {self.train_steps}")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ConfigError("every beta must lie in (0, 1)")
        if abars.shape != (self.train_steps,):
            raise ConfigError(f"alpha_bars must have length {self.train_steps}")
        if not np.all((abars > 0.0) & (abars <= 1.0)):
            raise ConfigError("alpha_bars must lie in (0, 1]")
        if self.train_steps > 1 and not np.all(np.diff(abars) < 0.0):
            raise ConfigError("alpha_bars must be strictly decreasing")
        if not 1 <= self.ddim_steps <= self.train_steps:
            raise ConfigError("ddim_steps must lie in [1, train_steps]")
        if tmap.shape != (self.ddim_steps,):
            raise ConfigError(f"timestep_map must have length {self.ddim_steps}")
        if tmap[0] < 1 or tmap[-1] > self.train_steps:
            raise ConfigError("timestep_map entries must lie in [1, train_steps]")
        if self.ddim_steps > 1 and not np.all(np.diff(tmap) > 0):
            raise ConfigError("timestep_map must be strictly increasing")
        for name, arr in (("betas", betas), ("alpha_bars", abars), ("timestep_map", tmap)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def alpha_bar(self, t: int) -> float:
        """Cumulative alpha at training timestep ``t`` in [0, train_steps]."""
        if not 0 <= t <= self.train_steps:
            raise ConfigError(f"training timestep {t} out of [0, {self.train_steps}]")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def step_timestep(self, i: int) -> int:
        """Training timestep backing sub-sampled step ``i`` in [0, ddim_steps]."""
        if not 0 <= i <= self.ddim_steps:
            raise ConfigError(f"step index {i} out of [0, {self.ddim_steps}]")
        return 0 if i == 0 else int(self.timestep_map[i - 1])

    def step_alpha_bar(self, i: int) -> float:
        """Cumulative alpha at sub-sampled step ``i`` (exactly 1 at i = 0)."""
        return self.alpha_bar(self.step_timestep(i))


def build_schedule(
    train_steps: int = DEFAULT_TRAIN_STEPS,
    ddim_steps: int = DEFAULT_DDIM_STEPS,
    kind: str = "linear",
    beta_start: float = TOY_BETA_START,
    beta_end: float = TOY_BETA_END,
    betas=None,
) -> NoiseSchedule:
    """Construct a :class:`NoiseSchedule`.

    ``kind`` selects how the beta table is produced: "linear" spaces the
    endpoints directly, "scaled_linear" spaces their square roots (the
    convention pretrained latent-diffusion weights were trained with), and
    "explicit" takes the full table from ``betas``. The timestep map uses a
    uniform stride anchored at the earliest timestep, rounding ties toward
    earlier timesteps.
    """
    if train_steps < 1:
        raise ConfigError("train_steps must be >= 1")
    if not 1 <= ddim_steps <= train_steps:
        raise ConfigError(
            f"ddim_steps must lie in [1, train_steps]; got {ddim_steps} > {train_steps}"
            if ddim_steps > train_steps
            else f"ddim_steps must be >= 1, got {ddim_steps}"
        )
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")

    if kind == "explicit":
        if betas is None:
            raise ConfigError("kind='explicit' requires a betas array")
        beta_arr = np.asarray(betas, dtype=np.float64)
        if beta_arr.shape != (train_steps,):
            raise ConfigError(f"explicit betas must have length {train_steps}")
    else:
        if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
            raise ConfigError("beta endpoints must lie in (0, 1)")
        if beta_start > beta_end:
            raise ConfigError("beta endpoints must be non-decreasing")
        if kind == "linear":
            beta_arr = np.linspace(beta_start, beta_end, train_steps, dtype=np.float64)
        else:  # scaled_linear
            beta_arr = (
                np.linspace(beta_start**0.5, beta_end**0.5, train_steps, dtype=np.float64)
                ** 2
            )
    if not np.all((beta_arr > 0.0) & (beta_arr < 1.0)):
        raise ConfigError("every beta must lie in (0, 1)")

    alpha_bars = np.cumprod(1.0 - beta_arr)
    # Exact integer arithmetic: map[i] = 1 + floor(i * train / ddim).
    tmap = (np.arange(ddim_steps, dtype=np.int64) * train_steps) // ddim_steps + 1
    return NoiseSchedule(
        train_steps=train_steps,
        betas=beta_arr,
        alpha_bars=alpha_bars,
        ddim_steps=ddim_steps,
        timestep_map=tmap,
    )


def _check_step_inputs(state: LatentState, t: int, eps: np.ndarray, sched: NoiseSchedule):
    if not 1 <= t <= sched.ddim_steps:
        raise ConfigError(f"step index {t} out of [1, {sched.ddim_steps}]")
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != state.data.shape:
        raise ShapeError(
            f"noise prediction shape {eps.shape} does not match latents {state.data.shape}"
        )
    return eps


def ddim_denoise_step(
    z_t: LatentState, t: int, eps: np.ndarray, sched: NoiseSchedule
) -> LatentState:
    """One deterministic reverse step from sub-sampled step ``t`` to ``t - 1``.

    Applies, per frame, the canonical deterministic update

        sqrt(abar_prev / abar_t) * z
            + (sqrt(1 - abar_prev) - sqrt(abar_prev) * sqrt(1/abar_t - 1)) * eps

    with abar taken at the mapped training timesteps and the step-0 boundary
    pinned to exactly 1. No stochastic term. Composing with
    :func:`ddim_invert_step` at the same step and the same eps is an exact
    identity.
    """
    eps = _check_step_inputs(z_t, t, eps, sched)
    a_t = sched.step_alpha_bar(t)
    a_prev = sched.step_alpha_bar(t - 1)
    scale = np.sqrt(a_prev / a_t)
    noise_coef = np.sqrt(1.0 - a_prev) - np.sqrt(a_prev) * np.sqrt(1.0 / a_t - 1.0)
    return LatentState(scale * z_t.data + noise_coef * eps, step_index=t - 1)


def ddim_invert_step(
    z_prev: LatentState, t: int, eps: np.ndarray, sched: NoiseSchedule
) -> LatentState:
    """One deterministic forward step from sub-sampled step ``t - 1`` to ``t``.

    Exact mirror of :func:`ddim_denoise_step`:

        sqrt(abar_t / abar_prev) * z
            + (sqrt(1 - abar_t) - sqrt(abar_t) * sqrt(1/abar_prev - 1)) * eps
    """
    eps = _check_step_inputs(z_prev, t, eps, sched)
    a_t = sched.step_alpha_bar(t)
    a_prev = sched.step_alpha_bar(t - 1)
    scale = np.sqrt(a_t / a_prev)
    noise_coef = np.sqrt(1.0 - a_t) - np.sqrt(a_t) * np.sqrt(1.0 / a_prev - 1.0)
    return LatentState(scale * z_prev.data + noise_coef * eps, step_index=t)


def forward_diffuse(
    z_0: LatentState, t: int, noise: np.ndarray, sched: NoiseSchedule
) -> LatentState:
    """Closed-form noising to training timestep ``t`` in [0, train_steps].

    Returns sqrt(abar_t) * z_0 + sqrt(1 - abar_t) * noise. Unlike the step
    operations this is indexed by raw training timestep; it exists to cross
    check schedules in tests and keeps the caller's step_index.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != z_0.data.shape:
        raise ShapeError(
            f"noise shape {noise.shape} does not match latents {z_0.data.shape}"
        )
    a_t = sched.alpha_bar(t)
    return LatentState(
        np.sqrt(a_t) * z_0.data + np.sqrt(1.0 - a_t) * noise,
        step_index=z_0.step_index,
    )


def dump_schedule(sched: NoiseSchedule, path) -> None:
    """Write the per-training-step table as plain text: ``t beta alpha_bar``."""
    lines = [
        f"# train_steps={sched.train_steps} ddim_steps={sched.ddim_steps}",
        "# t beta alpha_bar",
    ]
    for k in range(sched.train_steps):
        lines.append(f"{k + 1} {sched.betas[k]:.17g} {sched.alpha_bars[k]:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_schedule(path, ddim_steps: int | None = None) -> NoiseSchedule:
    """Rebuild a schedule from a :func:`dump_schedule` table.

    The beta column is authoritative; the stored alpha_bar column is
    cross-checked against its recomputed cumulative product. ``ddim_steps``
    overrides the value recorded in the header.
    """
    header_ddim: int | None = None
    rows: list[tuple[int, float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if token.startswith("ddim_steps="):
                        header_ddim = int(token.split("=", 1)[1])
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ConfigError(f"{path}: malformed schedule row at line {lineno}")
            rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
    if not rows:
        raise ConfigError(f"{path}: empty schedule table")
    if [r[0] for r in rows] != list(range(1, len(rows) + 1)):
        raise ConfigError(f"{path}: timesteps must run 1..N without gaps")

    betas = np.array([r[1] for r in rows], dtype=np.float64)
    stored = np.array([r[2] for r in rows], dtype=np.float64)
    steps = ddim_steps if ddim_steps is not None else (header_ddim or len(rows))
    sched = build_schedule(len(rows), steps, kind="explicit", betas=betas)
    if not np.allclose(sched.alpha_bars, stored, rtol=1e-12, atol=0.0):
        raise ConfigError(f"{path}: alpha_bar column inconsistent with betas")
    return sched
