"""Command-line surface.

Subcommands: ``edit``, ``invert``, ``eval``, ``dataset-build``,
``dataset-review``, ``ablate``. Every editing flag has a config-file
counterpart (a flat JSON object of EditConfig fields, loaded with
``--config``); explicit flags win over file values. Logs go to stderr,
artifacts only to the output directory, and machine-readable outputs carry a
schema version.

Exit codes: 0 success, 2 configuration/validation error, 3 backend or
external-service error, 4 I/O error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import (
    DEFAULT_CAPTION_CANDIDATES,
    HttpCaptionClient,
    HttpPromptClient,
    StubCaptionClient,
    StubPromptClient,
    build_manifest,
    read_manifest,
    review_record,
)
from .errors import (
    BackendError,
    ClientError,
    ConfigError,
    LatentEditError,
    ManifestError,
    ShapeError,
)
from .metrics import ToyEmbedder, build_report
from .pipeline import (
    ABLATION_GRIDS,
    EditConfig,
    IMAGE_EXTENSIONS,
    edit,
    invert_only,
    run_ablation_grid,
)

ENV_CAPTION_URL = "LATENTEDIT_CAPTION_URL"
ENV_LLM_URL = "LATENTEDIT_LLM_URL"
ENV_API_TOKEN = "LATENTEDIT_API_TOKEN"


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _exit_code(exc: BaseException) -> int:
    """Map an exception (walking its cause chain) onto the exit-code contract."""
    seen = set()
    node: BaseException | None = exc
    while node is not None and id(node) not in seen:
        seen.add(id(node))
        if isinstance(node, (ConfigError, ShapeError)):
            return 2
        if isinstance(node, (BackendError, ClientError)):
            return 3
        if isinstance(node, (ManifestError, OSError)):
            return 4
        node = node.__cause__
    return 1


def _add_edit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON file of config fields")
    parser.add_argument("--video", help="video file or directory of numbered frames")
    parser.add_argument("--prompt", help="driving text (empty = unconditional)")
    parser.add_argument("--frames", type=int, help="frames to sample (default 8)")
    parser.add_argument("--resolution", type=int, help="working resolution (default 512)")
    parser.add_argument("--steps", type=int, help="trajectory steps (default 50)")
    parser.add_argument("--lr", type=float, dest="learning_rate",
                        help="latent refinement step size (default 0.8)")
    parser.add_argument("--attn", dest="attention_mode", choices=["sa", "faa", "sca"],
                        help="self-attention routing mode (default faa)")
    parser.add_argument("--dmg", dest="depth_guidance", choices=["on", "off"],
                        help="depth-map guidance (default on)")
    parser.add_argument("--backend", choices=["toy", "pretrained"],
                        help="model backend (default toy)")
    parser.add_argument("--depth-backend", dest="depth_backend",
                        help="depth estimator backend key (default stub)")
    parser.add_argument("--seed", type=int, help="run seed, echoed in outputs")
    parser.add_argument("--guidance", type=float, dest="guidance_scale",
                        help="classifier-free guidance scale (default per backend)")
    parser.add_argument("--label", help="free-form run label echoed in outputs")


_EDIT_FIELDS = (
    "video", "prompt", "frames", "resolution", "steps", "learning_rate",
    "attention_mode", "depth_guidance", "backend", "depth_backend", "seed",
    "guidance_scale", "label",
)


def _build_config(args: argparse.Namespace) -> EditConfig:
    merged: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config}: invalid JSON ({exc.msg})") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {args.config} must hold a flat JSON object")
        merged.update(file_values)
    for name in _EDIT_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return EditConfig.from_dict(merged)


def _cmd_edit(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    _log(f"editing {cfg.video} -> {out_dir}")
    result = edit(cfg, out_dir=out_dir, overwrite=args.force)
    counts = result.eval_counts
    _log(
        f"done in {result.timing['total']:.2f}s "
        f"({counts['inversion']} inversion / {counts['denoising']} denoising evals)"
    )
    print(str(result.output_dir))
    return 0


def _cmd_invert(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    _log(f"inverting {cfg.video} -> {out_dir}")
    invert_only(cfg, out_dir=out_dir, overwrite=args.force)
    print(str(out_dir))
    return 0


def _load_frames_dir(directory: Path) -> np.ndarray:
    if not directory.is_dir():
        raise ConfigError(f"{directory} is not a directory of frames")
    files = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise ConfigError(f"{directory} contains no image frames")
    frames = [np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0
              for p in files]
    return np.stack(frames)


def _cmd_eval(args: argparse.Namespace) -> int:
    with_tc = args.tc or not args.pc
    with_pc = args.pc or not args.tc
    if with_pc and not args.prompt:
        if args.pc:
            raise ConfigError("--pc requires --prompt")
        with_pc = False
    if not with_tc and not with_pc:
        raise ConfigError("nothing to evaluate: enable --tc and/or --pc")
    frames = _load_frames_dir(Path(args.frames_dir))
    report = build_report(
        frames, prompt=args.prompt, embedder=ToyEmbedder(),
        with_tc=with_tc, with_pc=with_pc,
    )
    out = Path(args.out) if args.out else Path(args.frames_dir) / "metrics.json"
    report.write_json(out)
    if args.pairs_csv:
        report.write_pairs_csv(args.pairs_csv)
    if report.temporal_consistency is not None:
        print(f"TC {report.temporal_consistency:.2f}")
    if report.prompt_consistency is not None:
        print(f"PC {report.prompt_consistency:.2f}")
    _log(f"report written to {out}")
    return 0


def _iter_video_sources(root: Path):
    entries = sorted(root.iterdir())
    for entry in entries:
        if entry.is_dir():
            has_frames = any(
                p.suffix.lower() in IMAGE_EXTENSIONS for p in entry.iterdir() if p.is_file()
            )
            if has_frames:
                yield entry.name, entry
        elif entry.suffix.lower() in (".mp4", ".avi", ".mov", ".mkv", ".webm"):
            yield entry.stem, entry


def _cmd_dataset_build(args: argparse.Namespace) -> int:
    root = Path(args.videos)
    if not root.is_dir():
        raise ConfigError(f"--videos must be a directory, got {root}")
    sources = [(vid, args.source, path) for vid, path in _iter_video_sources(root)]
    if not sources:
        raise ConfigError(f"no videos or frame directories found under {root}")
    if args.mode == "stub":
        caption_client, prompt_client = StubCaptionClient(), StubPromptClient()
    else:
        caption_url = args.captioner_url or os.environ.get(ENV_CAPTION_URL)
        llm_url = args.llm_url or os.environ.get(ENV_LLM_URL)
        token = args.token or os.environ.get(ENV_API_TOKEN)
        if not caption_url or not llm_url:
            raise ConfigError(
                "http mode needs --captioner-url and --llm-url "
                f"(or {ENV_CAPTION_URL} / {ENV_LLM_URL})"
            )
        caption_client = HttpCaptionClient(caption_url, token=token)
        prompt_client = HttpPromptClient(llm_url, token=token)
    _log(f"building manifest for {len(sources)} videos ({args.mode} clients)")
    records = build_manifest(
        sources, caption_client, prompt_client, path=args.out,
        candidates=args.candidates, concurrency=args.concurrency,
    )
    _log(f"wrote {len(records)} records to {args.out}")
    print(str(args.out))
    return 0


def _cmd_dataset_review(args: argparse.Namespace) -> int:
    records = read_manifest(args.manifest)
    target = next((r for r in records if r.video_id == args.id), None)
    if target is None:
        raise ConfigError(f"video_id {args.id!r} not found in {args.manifest}")
    frame_hint = ""
    if args.frames_root:
        frame_hint = str(Path(args.frames_root) / target.video_id / "000.png")
    _log(f"video_id: {target.video_id} (source {target.source})")
    _log(f"caption:  {target.caption}")
    for cat, text in sorted(target.prompts.items()):
        _log(f"  {cat}: {text}")
    if frame_hint:
        _log(f"first frame: {frame_hint}")
    record = review_record(args.manifest, args.id, args.decision)
    print(f"{record.video_id} verified={record.verified}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    base = _build_config(args)
    out_root = Path(args.out)
    _log(f"running ablation grid {args.grid!r} -> {out_root}")
    summaries = run_ablation_grid(
        base, args.grid, out_root, overwrite=args.force, workers=args.workers
    )
    for row in summaries:
        tc = row.get("temporal_consistency")
        tc_text = f" TC {tc:.2f}" if tc is not None else ""
        _log(f"  {row['label']}: dmg={row['depth_guidance']} "
             f"attn={row['attention_mode']}{tc_text}")
    print(str(out_root))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentedit",
        description="Zero-shot text-driven video editing in diffusion latent space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_edit = sub.add_parser("edit", help="run the full editing pipeline")
    _add_edit_flags(p_edit)
    p_edit.add_argument("--out", required=True, help="output directory")
    p_edit.add_argument("--force", action="store_true", help="overwrite the output directory")
    p_edit.set_defaults(func=_cmd_edit)

    p_inv = sub.add_parser("invert", help="encode and invert only; save latents")
    _add_edit_flags(p_inv)
    p_inv.add_argument("--out", required=True, help="output directory")
    p_inv.add_argument("--force", action="store_true", help="overwrite the output directory")
    p_inv.set_defaults(func=_cmd_invert)

    p_eval = sub.add_parser("eval", help="score a directory of edited frames")
    p_eval.add_argument("--frames-dir", required=True, help="directory of frames to score")
    p_eval.add_argument("--prompt", help="driving text for prompt consistency")
    p_eval.add_argument("--tc", action="store_true", help="temporal consistency only")
    p_eval.add_argument("--pc", action="store_true", help="prompt consistency only")
    p_eval.add_argument("--out", help="report path (default <frames-dir>/metrics.json)")
    p_eval.add_argument("--pairs-csv", help="optional CSV of per-pair similarities")
    p_eval.set_defaults(func=_cmd_eval)

    p_build = sub.add_parser("dataset-build", help="caption videos and generate edit prompts")
    p_build.add_argument("--videos", required=True, help="directory of videos / frame dirs")
    p_build.add_argument("--out", required=True, help="manifest path (JSON lines)")
    p_build.add_argument("--source", default="local", choices=["davis", "footage", "local"])
    p_build.add_argument("--mode", default="stub", choices=["stub", "http"],
                         help="client mode (default stub)")
    p_build.add_argument("--captioner-url", help="caption service base URL (http mode)")
    p_build.add_argument("--llm-url", help="prompt service base URL (http mode)")
    p_build.add_argument("--token", help="bearer token for both services")
    p_build.add_argument("--candidates", type=int, default=DEFAULT_CAPTION_CANDIDATES,
                         help="caption candidates per video")
    p_build.add_argument("--concurrency", type=int, default=4,
                         help="max in-flight client calls")
    p_build.set_defaults(func=_cmd_dataset_build)

    p_rev = sub.add_parser("dataset-review", help="record an operator verdict for a record")
    p_rev.add_argument("--manifest", required=True)
    p_rev.add_argument("--id", required=True, help="video_id to review")
    p_rev.add_argument("--decision", required=True, choices=["approve", "reject"])
    p_rev.add_argument("--frames-root", help="root used to print the first-frame path")
    p_rev.set_defaults(func=_cmd_dataset_review)

    p_abl = sub.add_parser("ablate", help="run a named grid of configurations")
    _add_edit_flags(p_abl)
    p_abl.add_argument("--grid", required=True, choices=sorted(ABLATION_GRIDS),
                       help="grid name")
    p_abl.add_argument("--out", required=True, help="root output directory")
    p_abl.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_abl.add_argument("--force", action="store_true", help="overwrite row directories")
    p_abl.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LatentEditError as exc:
        _log(f"error: {exc}")
        return _exit_code(exc)
    except OSError as exc:
        _log(f"io error: {exc}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
