"""Benchmark-manifest construction with offline stub services.

Each collected video gets a caption (the longest of several candidates from
a captioning service) and four edit prompts, one per editing mission:
object replacement (OR), object adding (OA), style transfer (ST), and
background changing (BC). Records persist as JSON lines and carry a
``verified`` flag that an operator sets through the review step. The stub
clients are deterministic, so this whole flow runs offline; HTTP clients
implement the same interfaces for real services.
"""

import tempfile
from pathlib import Path

from latentedit import (
    PROMPT_TEMPLATES,
    StubCaptionClient,
    StubPromptClient,
    build_manifest,
    generate_caption,
    read_manifest,
    review_record,
    synthetic_clip,
    write_clip_frames,
)

tmp = Path(tempfile.mkdtemp(prefix="latentedit-dataset-"))

# three tiny synthetic source videos
entries = []
for i, kind in enumerate(("slide", "waves", "orbit")):
    d = tmp / f"vid{i}"
    write_clip_frames(synthetic_clip(kind, frames=4, size=32), d)
    entries.append((f"vid{i}", "local", d))

# the captioner returns several candidates; the longest one wins
stub = StubCaptionClient()
frame = synthetic_clip("slide", frames=1, size=32)[0]
candidates = stub.candidates(frame, 5)
print("caption candidates:")
for c in candidates:
    print("  -", c)
print("selected (longest):", generate_caption(frame, stub, count=5))

print("\nprompt templates, one per editing mission:")
for cat, template in PROMPT_TEMPLATES.items():
    print(f"  {cat}: {template[:70]}...")

manifest = tmp / "manifest.jsonl"
records = build_manifest(entries, StubCaptionClient(), StubPromptClient(),
                         path=manifest, concurrency=4)
print(f"\nbuilt {len(records)} records -> {manifest}")
rec = records[0]
print("sample record:", rec.video_id, "| caption:", rec.caption)
for cat, text in sorted(rec.prompts.items()):
    print(f"  {cat}: {text[:60]}")

# the manual-check step: approve one record, reject another
review_record(manifest, "vid0", "approve")
review_record(manifest, "vid1", "reject")
flags = {r.video_id: r.verified for r in read_manifest(manifest)}
print("\nverified flags after review:", flags)
