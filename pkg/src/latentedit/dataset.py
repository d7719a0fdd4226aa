"""Benchmark-manifest construction: captions, edit prompts, and persistence.

Each collected video gets one caption (the longest of several candidates
from a captioning service) and four category-specific edit prompts from an
instruction-following language model, one per editing mission: object
replacement (OR), object adding (OA), style transfer (ST), and background
changing (BC). Both services are external HTTP adapters with deterministic
stub implementations, so the whole flow runs offline. Records persist as
JSON lines; a record may only be marked verified once all four prompts are
present and non-empty.
"""

from __future__ import annotations

import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ClientError, ConfigError, ManifestError

PROMPT_CATEGORIES = ("OR", "OA", "ST", "BC")
SOURCE_TAGS = ("davis", "footage", "local")
DEFAULT_CAPTION_CANDIDATES = 5

PROMPT_TEMPLATES = {
    "OR": (
        "Here is a video caption. Rewrite it so the main object is replaced "
        'by a different object with a similar shape: "{caption}"'
    ),
    "OA": (
        "Here is a video caption. Rewrite it so one new object that fits the "
        'scene is added: "{caption}"'
    ),
    "ST": (
        "Here is a video caption. Rewrite it so the scene is rendered in a "
        'distinctive artistic style: "{caption}"'
    ),
    "BC": (
        "Here is a video caption. Rewrite it so the background is changed to "
        'a different setting: "{caption}"'
    ),
}


@dataclass
class DatasetRecord:
    """One manifest entry: a video, its caption, and the four edit prompts."""

    video_id: str
    source: str
    caption: str
    prompts: dict = field(default_factory=dict)
    verified: bool = False

    def validate(self) -> None:
        if not self.video_id:
            raise ConfigError("record needs a non-empty video_id")
        if self.source not in SOURCE_TAGS:
            raise ConfigError(
                f"source {self.source!r} not in {SOURCE_TAGS} (record {self.video_id})"
            )
        keys = set(self.prompts)
        if keys != set(PROMPT_CATEGORIES):
            raise ConfigError(
                f"record {self.video_id} must carry exactly the categories "
                f"{PROMPT_CATEGORIES}, got {sorted(keys)}"
            )
        if self.verified:
            if not str(self.caption).strip():
                raise ConfigError(f"record {self.video_id}: verified without a caption")
            for cat in PROMPT_CATEGORIES:
                if not str(self.prompts[cat]).strip():
                    raise ConfigError(
                        f"record {self.video_id}: verified with empty {cat} prompt"
                    )

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "source": self.source,
            "caption": self.caption,
            "prompts": dict(self.prompts),
            "verified": bool(self.verified),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetRecord":
        if not isinstance(data, dict):
            raise ConfigError("record must be a JSON object")
        unknown = set(data) - {"video_id", "source", "caption", "prompts", "verified"}
        if unknown:
            raise ConfigError(f"unknown record keys: {sorted(unknown)}")
        rec = cls(
            video_id=data.get("video_id", ""),
            source=data.get("source", ""),
            caption=data.get("caption", ""),
            prompts=dict(data.get("prompts", {})),
            verified=bool(data.get("verified", False)),
        )
        rec.validate()
        return rec


# ---- external clients ----


class StubCaptionClient:
    """Deterministic offline captioner: candidates derived from image bytes."""

    def candidates(self, image: np.ndarray, count: int) -> list[str]:
        if count < 1:
            raise ConfigError("candidate count must be >= 1")
        digest = hashlib.sha256(np.ascontiguousarray(image).tobytes()).hexdigest()[:6]
        subjects = ["a scene", "an outdoor scene", "a moving subject", "a quiet scene"]
        details = ["with soft light", "with strong texture", "near the horizon",
                   "under an open sky", "in steady motion"]
        out = []
        for i in range(count):
            subject = subjects[i % len(subjects)]
            extra = " ".join(details[: i % (len(details) + 1)])
            caption = f"{subject} {extra} [{digest}]".replace("  ", " ").strip()
            out.append(caption)
        return out


class HttpCaptionClient:
    """Captioning over HTTP: POST a PNG frame, receive candidate captions."""

    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        if not base_url:
            raise ConfigError("caption client requires a base url")
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def candidates(self, image: np.ndarray, count: int) -> list[str]:
        import requests  # deferred: only the HTTP path needs it

        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(
            np.clip(np.asarray(image, dtype=np.float64) * 255.0, 0, 255).astype(np.uint8)
        ).save(buf, format="PNG")
        headers = {"Content-Type": "image/png"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                f"{self.base_url}/caption", params={"count": count},
                data=buf.getvalue(), headers=headers, timeout=self.timeout,
            )
            resp.raise_for_status()
            captions = resp.json()["captions"]
        except Exception as exc:
            raise ClientError(f"caption request failed: {exc}") from exc
        if not isinstance(captions, list):
            raise ClientError("caption service returned a non-list payload")
        return [str(c) for c in captions]


class StubPromptClient:
    """Deterministic offline prompt generator: category-tagged echoes."""

    def generate(self, category: str, template: str, caption: str) -> str:
        return f"{category}:{caption}"


class HttpPromptClient:
    """Prompt generation over HTTP: POST {template, caption}, receive text."""

    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        if not base_url:
            raise ConfigError("prompt client requires a base url")
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def generate(self, category: str, template: str, caption: str) -> str:
        import requests  # deferred: only the HTTP path needs it

        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                f"{self.base_url}/prompt",
                json={"template": template, "caption": caption},
                headers=headers, timeout=self.timeout,
            )
            resp.raise_for_status()
            return str(resp.json()["prompt"])
        except Exception as exc:
            raise ClientError(f"prompt request failed for {category}: {exc}") from exc


# ---- generation steps ----


def generate_caption(
    image: np.ndarray, client, count: int = DEFAULT_CAPTION_CANDIDATES
) -> str:
    """Request ``count`` candidate captions and keep the longest.

    Length ties break toward the lexicographically smaller candidate, so the
    selection is a pure function of the candidate list.
    """
    candidates = client.candidates(image, count)
    candidates = [str(c) for c in candidates if str(c).strip()]
    if not candidates:
        raise ClientError("captioner returned no usable candidates")
    longest = max(len(c) for c in candidates)
    return min(c for c in candidates if len(c) == longest)


def generate_prompts(caption: str, client) -> dict:
    """One templated instruction per category; every response must be non-empty."""
    if not str(caption).strip():
        raise ConfigError("cannot generate prompts from an empty caption")
    prompts = {}
    for cat in PROMPT_CATEGORIES:
        template = PROMPT_TEMPLATES[cat].format(caption=caption)
        text = str(client.generate(cat, template, caption))
        if not text.strip():
            raise ClientError(f"prompt service returned an empty {cat} prompt")
        prompts[cat] = text
    return prompts


# ---- manifest persistence ----


def write_manifest(records, path) -> None:
    """Write records as UTF-8 JSON lines; invalid records are refused."""
    records = list(records)
    for rec in records:
        rec.validate()
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_manifest(path) -> list:
    """Read a JSON-lines manifest; malformed lines report their line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON ({exc.msg})", line=lineno) from exc
            try:
                records.append(DatasetRecord.from_dict(data))
            except ConfigError as exc:
                raise ManifestError(str(exc), line=lineno) from exc
    return records


def build_manifest(
    videos,
    caption_client,
    prompt_client,
    path=None,
    candidates: int = DEFAULT_CAPTION_CANDIDATES,
    concurrency: int = 4,
    frame_loader=None,
) -> list:
    """Caption and prompt every video, optionally persisting the manifest.

    ``videos`` is an iterable of (video_id, source_tag, video_path); client
    calls fan out over a bounded thread pool. ``frame_loader`` maps a video
    path to the representative frame handed to the captioner (defaults to
    the first frame at 256x256).
    """
    videos = list(videos)
    if frame_loader is None:
        from .pipeline import sample_frames

        def frame_loader(p):
            return sample_frames(p, 1, 256)[0]

    def make_record(entry) -> DatasetRecord:
        video_id, source, video_path = entry
        frame = frame_loader(video_path)
        caption = generate_caption(frame, caption_client, count=candidates)
        prompts = generate_prompts(caption, prompt_client)
        rec = DatasetRecord(
            video_id=video_id, source=source, caption=caption, prompts=prompts
        )
        rec.validate()
        return rec

    if concurrency > 1 and len(videos) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            records = list(pool.map(make_record, videos))
    else:
        records = [make_record(v) for v in videos]
    if path is not None:
        write_manifest(records, path)
    return records


def review_record(manifest_path, video_id: str, decision: str) -> DatasetRecord:
    """Record an operator verdict for one manifest entry and rewrite the file.

    ``approve`` marks the record verified (validating its prompts first);
    ``reject`` clears the flag.
    """
    if decision not in ("approve", "reject"):
        raise ConfigError(f"decision must be 'approve' or 'reject', got {decision!r}")
    records = read_manifest(manifest_path)
    target = next((r for r in records if r.video_id == video_id), None)
    if target is None:
        raise ConfigError(f"video_id {video_id!r} not found in {manifest_path}")
    target.verified = decision == "approve"
    target.validate()
    write_manifest(records, manifest_path)
    return target
