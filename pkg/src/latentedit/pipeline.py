"""End-to-end editing: sample frames, encode, invert, refine, decode.

A run is fully deterministic on the toy backend: frames are uniformly
sampled and encoded to per-frame latents, depth features are extracted (when
guidance is enabled), the latents are pushed to the noisy end of the
trajectory by unconditional inversion, then walked back with the dual-branch
optimized denoising, and finally decoded. Any stage failure aborts the run
with a stage-tagged error; on-disk outputs are written to a temp directory
and renamed into place only on success.
"""

from __future__ import annotations

import csv
import json
import os
import shutil
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .attention import AttentionMode
from .backbone import CountingBackend, get_backend
from .depth import DepthFeatures, get_depth_backend, minmax_normalize, pool_maps
from .errors import ConfigError, LatentEditError, PipelineStageError
from .metrics import ToyEmbedder, build_report
from .optimizer import OptimizerConfig, StepTrace, optimize_step
from .schedule import LatentState, NoiseSchedule, build_schedule, ddim_invert_step

SCHEMA_VERSION = 1
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

# Ablation rows: (label, depth guidance, attention mode). a2 is the headline
# configuration; b1..b5 toggle the two consistency constraints.
TABLE1_ROWS = (
    ("a2", True, AttentionMode.FAA),
    ("b1", False, AttentionMode.SA),
    ("b2", False, AttentionMode.FAA),
    ("b3", True, AttentionMode.SA),
    ("b4", True, AttentionMode.SCA),
    ("b5", True, AttentionMode.FAA),
)
ABLATION_GRIDS = {"table1": TABLE1_ROWS}


@dataclass
class EditConfig:
    """One editing run: source, prompt, trajectory and guidance knobs."""

    video: str = ""
    prompt: str = ""
    frames: int = 8
    resolution: int = 512
    steps: int = 50
    learning_rate: float = 0.8
    attention_mode: AttentionMode = AttentionMode.FAA
    depth_guidance: bool = True
    backend: str = "toy"
    backend_options: dict = field(default_factory=dict)
    depth_backend: str = "stub"
    depth_backend_options: dict = field(default_factory=dict)
    seed: int = 0
    guidance_scale: float | None = None
    label: str = ""

    def __post_init__(self):
        self.attention_mode = AttentionMode.parse(self.attention_mode)
        if isinstance(self.depth_guidance, str):
            flag = self.depth_guidance.lower()
            if flag not in ("on", "off", "true", "false"):
                raise ConfigError(f"depth_guidance must be on/off, got {self.depth_guidance!r}")
            self.depth_guidance = flag in ("on", "true")

    def validate(self) -> None:
        if not self.video:
            raise ConfigError("a video source (file or frame directory) is required")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.resolution < 8:
            raise ConfigError("resolution must be >= 8")
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0.0:
            raise ConfigError("learning rate must be a finite value >= 0")
        if self.guidance_scale is not None and not np.isfinite(self.guidance_scale):
            raise ConfigError("guidance scale must be finite")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["attention_mode"] = self.attention_mode.value
        d["video"] = str(self.video)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EditConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class EditResult:
    """Edited frames plus the run's bookkeeping."""

    frames: np.ndarray
    config: EditConfig
    eval_counts: dict
    timing: dict
    invert_norms: list = field(default_factory=list)
    denoise_norms: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    output_dir: Path | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "eval_counts": dict(self.eval_counts),
            "timing": {k: round(v, 6) for k, v in self.timing.items()},
            "trajectory": {
                "invert_norms": [round(v, 9) for v in self.invert_norms],
                "denoise_norms": [round(v, 9) for v in self.denoise_norms],
            },
            "frames": int(self.frames.shape[0]),
            "resolution": int(self.frames.shape[1]),
        }


@contextmanager
def _stage(name: str):
    # validation failures keep their type; runtime failures get the stage tag
    try:
        yield
    except (PipelineStageError, ConfigError):
        raise
    except (LatentEditError, OSError) as exc:
        raise PipelineStageError(name, str(exc)) from exc


# ---- frame ingestion ----


def uniform_frame_indices(total: int, count: int) -> list[int]:
    """Uniform temporal stride over ``total`` frames, first frame included."""
    if count < 1:
        raise ConfigError("frame count must be >= 1")
    if total < count:
        raise ConfigError(f"video has {total} frames, fewer than the requested {count}")
    return [(i * total) // count for i in range(count)]


def _frame_files(directory: Path) -> list[Path]:
    files = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise ConfigError(f"{directory} contains no image frames")
    return files


def _read_video_frames(path: Path, indices: list[int]) -> list[np.ndarray]:
    try:
        import cv2
    except ImportError:
        raise ConfigError(
            "decoding container video files requires opencv-python-headless "
            "(extra 'video'); alternatively pass a directory of numbered frames"
        ) from None
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise OSError(f"cannot open video file {path}")
    wanted = set(indices)
    frames: dict[int, np.ndarray] = {}
    idx = 0
    while idx <= max(indices):
        ok, frame = cap.read()
        if not ok:
            break
        if idx in wanted:
            frames[idx] = frame[:, :, ::-1].copy()  # BGR -> RGB
        idx += 1
    cap.release()
    if len(frames) != len(wanted):
        raise ConfigError(f"video {path} decoded only {idx} frames, need {max(indices) + 1}")
    return [frames[i] for i in indices]


def _video_frame_count(path: Path) -> int:
    try:
        import cv2
    except ImportError:
        raise ConfigError(
            "decoding container video files requires opencv-python-headless "
            "(extra 'video'); alternatively pass a directory of numbered frames"
        ) from None
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise OSError(f"cannot open video file {path}")
    total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    cap.release()
    return total


def _to_working_resolution(frame: np.ndarray, resolution: int) -> np.ndarray:
    """Center-crop to square, resize, return float RGB in [0, 1]."""
    img = Image.fromarray(np.asarray(frame)).convert("RGB")
    w, h = img.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    img = img.crop((left, top, left + side, top + side))
    img = img.resize((resolution, resolution), Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def sample_frames(source, count: int, resolution: int) -> np.ndarray:
    """Uniformly sample ``count`` frames at the working resolution.

    ``source`` is either a directory of numbered image frames or a container
    video file. Returns (count, resolution, resolution, 3) floats in [0, 1].
    """
    src = Path(source)
    if not src.exists():
        raise FileNotFoundError(f"video source {src} does not exist")
    if src.is_dir():
        files = _frame_files(src)
        indices = uniform_frame_indices(len(files), count)
        raw = [np.asarray(Image.open(files[i]).convert("RGB")) for i in indices]
    else:
        total = _video_frame_count(src)
        indices = uniform_frame_indices(total, count)
        raw = _read_video_frames(src, indices)
    return np.stack([_to_working_resolution(f, resolution) for f in raw])


# ---- trajectory stages ----


def invert(
    latents: LatentState,
    depth: DepthFeatures | None,
    sched: NoiseSchedule,
    backend,
    norms: list | None = None,
) -> LatentState:
    """Walk clean latents to the noisy end of the trajectory.

    Runs the forward step once per sub-sampled timestep, evaluating the noise
    predictor on the current latents at the step's mapped training timestep.
    Text conditioning is never applied during inversion (the predictor falls
    back to its null embedding) and the self-attention slot runs in
    conventional per-frame mode; depth features are injected when given.
    """
    z = latents
    for i in range(1, sched.ddim_steps + 1):
        eps = backend.predict_noise(
            z, sched.step_timestep(i), None, depth, mode=AttentionMode.SA
        )
        z = ddim_invert_step(z, i, eps, sched)
        if norms is not None:
            norms.append(float(np.linalg.norm(z.data)))
    return z


def compute_depth_features(frames: np.ndarray, backend, depth_backend) -> DepthFeatures:
    """Estimate, pool to latent resolution, per-frame normalize, and encode."""
    maps = depth_backend.estimate(frames)
    pooled = pool_maps(maps, backend.latent_scale)
    normed = np.stack([minmax_normalize(m) for m in pooled])
    return backend.encode_depth(normed)


def edit(cfg: EditConfig, out_dir=None, overwrite: bool = False) -> EditResult:
    """Run the full editing pipeline described by ``cfg``.

    With depth guidance enabled the run makes exactly ``steps`` inversion and
    ``2 * steps`` denoising noise evaluations (one per branch per step, at
    guidance scale 1); with it disabled the denoising pass collapses to the
    single plain branch. Counts and per-phase timings are reported in the
    result. When ``out_dir`` is given the frames, run summary, and optimizer
    trace are written there atomically.
    """
    cfg.validate()
    timing: dict[str, float] = {}
    t_start = time.perf_counter()

    with _stage("backend"):
        backend = get_backend(cfg.backend)
        grain = backend.latent_scale * backend.unet_stride
        if cfg.resolution % grain:
            raise ConfigError(
                f"resolution {cfg.resolution} must be divisible by {grain} "
                f"(latent scale {backend.latent_scale} x UNet stride {backend.unet_stride})"
            )
        counting = CountingBackend(backend)
        sched = build_schedule(
            backend.train_steps, cfg.steps, kind=backend.schedule_kind,
            beta_start=backend.beta_start, beta_end=backend.beta_end,
        )
        guidance = (
            cfg.guidance_scale if cfg.guidance_scale is not None else backend.default_guidance
        )

    with _stage("load"):
        t0 = time.perf_counter()
        frames = sample_frames(cfg.video, cfg.frames, cfg.resolution)
        timing["load"] = time.perf_counter() - t0

    with _stage("encode"):
        t0 = time.perf_counter()
        z0 = backend.encode_image(frames)
        timing["encode"] = time.perf_counter() - t0

    depth = None
    with _stage("depth"):
        t0 = time.perf_counter()
        if cfg.depth_guidance:
            depth = compute_depth_features(
                frames, backend, get_depth_backend(cfg.depth_backend)
            )
        timing["depth"] = time.perf_counter() - t0

    with _stage("prompt"):
        prompt_emb = backend.encode_text(cfg.prompt) if cfg.prompt.strip() else None

    invert_norms: list[float] = []
    with _stage("invert"):
        t0 = time.perf_counter()
        z_noisy = invert(z0, depth, sched, counting, norms=invert_norms)
        timing["invert"] = time.perf_counter() - t0
    inversion_evals = counting.eval_count

    denoise_norms: list[float] = []
    trace: list[StepTrace] = []
    opt_cfg = OptimizerConfig(learning_rate=cfg.learning_rate)
    with _stage("denoise"):
        t0 = time.perf_counter()
        z = z_noisy  # the edit trajectory starts from the inverted noise as-is
        for i in range(sched.ddim_steps, 0, -1):
            z = optimize_step(
                z, i, prompt_emb, depth, sched, counting, opt_cfg,
                mode=cfg.attention_mode, guidance_scale=guidance, hook=trace.append,
            )
            denoise_norms.append(float(np.linalg.norm(z.data)))
        timing["denoise"] = time.perf_counter() - t0

    with _stage("decode"):
        t0 = time.perf_counter()
        edited = backend.decode_latent(z)
        timing["decode"] = time.perf_counter() - t0

    timing["total"] = time.perf_counter() - t_start
    result = EditResult(
        frames=edited,
        config=cfg,
        eval_counts={
            "inversion": inversion_evals,
            "denoising": counting.eval_count - inversion_evals,
        },
        timing=timing,
        invert_norms=invert_norms,
        denoise_norms=denoise_norms,
        trace=trace,
    )
    if out_dir is not None:
        with _stage("write"):
            result.output_dir = write_edit_outputs(result, out_dir, overwrite=overwrite)
    return result


def invert_only(cfg: EditConfig, out_dir=None, overwrite: bool = False):
    """Run only the encode/depth/invert stages; optionally persist latents.

    Returns (clean latents, inverted latents, summary dict).
    """
    cfg.validate()
    with _stage("backend"):
        backend = get_backend(cfg.backend)
        grain = backend.latent_scale * backend.unet_stride
        if cfg.resolution % grain:
            raise ConfigError(f"resolution {cfg.resolution} must be divisible by {grain}")
        counting = CountingBackend(backend)
        sched = build_schedule(
            backend.train_steps, cfg.steps, kind=backend.schedule_kind,
            beta_start=backend.beta_start, beta_end=backend.beta_end,
        )
    with _stage("load"):
        frames = sample_frames(cfg.video, cfg.frames, cfg.resolution)
    with _stage("encode"):
        z0 = backend.encode_image(frames)
    depth = None
    with _stage("depth"):
        if cfg.depth_guidance:
            depth = compute_depth_features(
                frames, backend, get_depth_backend(cfg.depth_backend)
            )
    norms: list[float] = []
    with _stage("invert"):
        z_noisy = invert(z0, depth, sched, counting, norms=norms)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "eval_counts": {"inversion": counting.eval_count},
        "trajectory": {"invert_norms": [round(v, 9) for v in norms]},
    }
    if out_dir is not None:
        with _stage("write"):
            out = Path(out_dir)
            tmp = _fresh_tmp_dir(out)
            np.savez(tmp / "latents.npz", clean=z0.data, inverted=z_noisy.data)
            _write_json(tmp / "invert.json", summary)
            _promote_tmp(tmp, out, overwrite)
    return z0, z_noisy, summary


# ---- output writing ----


def _fresh_tmp_dir(target: Path) -> Path:
    tmp = target.parent / f".{target.name}.tmp-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    return tmp


def _promote_tmp(tmp: Path, target: Path, overwrite: bool) -> None:
    if target.exists():
        if not overwrite:
            shutil.rmtree(tmp)
            raise FileExistsError(f"output directory {target} already exists")
        shutil.rmtree(target)
    os.replace(tmp, target)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_frames_png(frames: np.ndarray, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        arr = np.clip(frame * 255.0, 0.0, 255.0).astype(np.uint8)
        Image.fromarray(arr).save(directory / f"{i:03d}.png")


def write_edit_outputs(result: EditResult, out_dir, overwrite: bool = False) -> Path:
    """Persist frames/, result.json, and trace.csv atomically."""
    out = Path(out_dir)
    tmp = _fresh_tmp_dir(out)
    write_frames_png(result.frames, tmp / "frames")
    _write_json(tmp / "result.json", result.to_dict())
    with open(tmp / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "loss_before", "loss_after", "grad_norm"])
        for row in result.trace:
            writer.writerow(
                [row.t, f"{row.loss_before:.12g}", f"{row.loss_after:.12g}",
                 f"{row.grad_norm:.12g}"]
            )
    _promote_tmp(tmp, out, overwrite)
    return out


# ---- ablation grid ----


def _ablation_row(base: EditConfig, row, out_root: Path, overwrite: bool) -> dict:
    label, dmg, mode = row
    cfg = replace(
        base, depth_guidance=dmg, attention_mode=mode, label=label,
    )
    result = edit(cfg, out_dir=out_root / label, overwrite=overwrite)
    summary = {
        "label": label,
        "depth_guidance": dmg,
        "attention_mode": mode.value,
        "output_dir": str(out_root / label),
        "eval_counts": result.eval_counts,
    }
    embedder = ToyEmbedder()
    if cfg.frames >= 2:
        report = build_report(
            result.frames, prompt=cfg.prompt or None, embedder=embedder,
            with_tc=True, with_pc=bool(cfg.prompt.strip()),
        )
        summary["temporal_consistency"] = report.temporal_consistency
        summary["prompt_consistency"] = report.prompt_consistency
    return summary


def run_ablation_grid(
    base: EditConfig,
    grid: str,
    out_root,
    overwrite: bool = False,
    workers: int = 1,
) -> list[dict]:
    """Run every configuration of a named ablation grid.

    Each row gets its own result directory under ``out_root`` plus an entry
    in ``out_root/ablation.json``. Scores from the deterministic toy embedder
    are attached for relative comparison only.
    """
    if grid not in ABLATION_GRIDS:
        raise ConfigError(f"unknown ablation grid {grid!r}; available: {sorted(ABLATION_GRIDS)}")
    rows = ABLATION_GRIDS[grid]
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_ablation_row, base, row, out_root, overwrite) for row in rows
            ]
            summaries = [f.result() for f in futures]
    else:
        summaries = [_ablation_row(base, row, out_root, overwrite) for row in rows]
    _write_json(
        out_root / "ablation.json",
        {"schema_version": SCHEMA_VERSION, "grid": grid, "rows": summaries},
    )
    return summaries
