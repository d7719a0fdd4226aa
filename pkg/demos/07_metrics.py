"""Scoring edited videos: temporal consistency and prompt consistency.

Temporal consistency embeds every frame and averages the cosine similarity
of consecutive pairs; prompt consistency averages a per-frame image-text
score. Both take the embedder as a dependency, so the deterministic toy
embedder used here can be swapped for a pretrained one without touching the
reductions. Reported values are x100.
"""

import numpy as np

from latentedit import (
    StubScorer,
    ToyEmbedder,
    build_report,
    prompt_consistency,
    synthetic_clip,
    temporal_consistency,
)

emb = ToyEmbedder()

# identical frames are perfectly consistent
frame = synthetic_clip("waves", frames=1, size=32)[0]
identical = np.stack([frame] * 5)
print("TC on identical frames:", 100.0 * temporal_consistency(identical, emb))

# a real moving clip scores below 100, and more motion scores lower
slow = synthetic_clip("waves", frames=8, size=32)
fast = synthetic_clip("slide", frames=8, size=32)
print("TC slow-moving clip:", round(100.0 * temporal_consistency(slow, emb), 2))
print("TC fast-moving clip:", round(100.0 * temporal_consistency(fast, emb), 2))

# prompt consistency is a plain per-frame mean; order never matters
scores = [30.0, 32.0, 28.0, 34.0]
frames = np.stack([np.full((8, 8, 3), v) for v in (0.1, 0.2, 0.3, 0.4)])
print("\nPC from per-frame scores", scores, "->",
      prompt_consistency(frames, "anything", StubScorer(scores)))

clip = synthetic_clip("orbit", frames=6, size=32)
base = prompt_consistency(clip, "a drifting light", emb)
shuffled = prompt_consistency(clip[::-1].copy(), "a drifting light", emb)
print("PC permutation-invariant:", abs(base - shuffled) < 1e-12)

# the assembled report carries per-pair and per-frame breakdowns
report = build_report(clip, prompt="a drifting light", embedder=emb)
print("\nreport: TC", round(report.temporal_consistency, 2),
      "PC", round(report.prompt_consistency, 2))
print("pair similarities:", [round(s, 4) for s in report.pair_similarities])
print("per-frame scores:", [round(s, 2) for s in report.frame_scores])
