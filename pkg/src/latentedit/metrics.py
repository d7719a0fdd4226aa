"""Edited-video quality scoring: temporal and prompt consistency.

Temporal consistency is the mean cosine similarity between embeddings of
consecutive frames; prompt consistency is the mean per-frame image-text
similarity. Both are pure reductions over an injected embedder/scorer, so
tests can pin fixtures and pretrained embedding suites can slot in through
the same interface. Scores are reported x100.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .seeding import derive_rng, freeze

SCHEMA_VERSION = 1


class ImageEmbedder(Protocol):
    def embed(self, frame: np.ndarray) -> np.ndarray: ...


class PromptScorer(Protocol):
    def score(self, frame: np.ndarray, prompt: str) -> float: ...


class ToyEmbedder:
    """Fixed random projection of grid-sampled pixels, L2-normalized.

    Deterministic and resolution-independent: frames are grey-averaged,
    sampled on a fixed ``grid`` x ``grid`` lattice, and projected with a
    frozen seeded matrix. Also scores prompts CLIP-style by hashing prompt
    words into the same space (score = 100 * cosine).
    """

    def __init__(self, dim: int = 64, grid: int = 16):
        self.dim = dim
        self.grid = grid
        rng = derive_rng("toy-embedder", dim, grid)
        self._proj = freeze(rng.standard_normal((grid * grid, dim)) / np.sqrt(grid * grid))
        self._text_proj = freeze(rng.standard_normal((dim, dim)) / np.sqrt(dim))

    def embed(self, frame: np.ndarray) -> np.ndarray:
        frame = np.asarray(frame, dtype=np.float64)
        if frame.ndim != 3 or frame.shape[-1] != 3:
            raise ShapeError(f"frame must be (h, w, 3), got {frame.shape}")
        h, w, _ = frame.shape
        grey = frame.mean(axis=-1)
        rows = (np.arange(self.grid) * h) // self.grid
        cols = (np.arange(self.grid) * w) // self.grid
        patch = grey[np.ix_(rows, cols)].ravel()
        vec = patch @ self._proj
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # blank frames embed to a fixed unit direction
            vec = np.zeros(self.dim)
            vec[0] = 1.0
            return vec
        return vec / norm

    def embed_text(self, prompt: str) -> np.ndarray:
        words = str(prompt).lower().split()
        if not words:
            raise ConfigError("cannot embed an empty prompt")
        vec = np.mean(
            [derive_rng("embed-token", wd).standard_normal(self.dim) for wd in words], axis=0
        )
        vec = vec @ self._text_proj
        norm = np.linalg.norm(vec)
        return vec / norm if norm else vec

    def score(self, frame: np.ndarray, prompt: str) -> float:
        return 100.0 * float(self.embed(frame) @ self.embed_text(prompt))


class StubScorer:
    """Fixture scorer returning preset per-frame scores in call order."""

    def __init__(self, scores: Sequence[float]):
        self._scores = list(scores)
        self._idx = 0

    def score(self, frame: np.ndarray, prompt: str) -> float:
        if self._idx >= len(self._scores):
            raise ConfigError("stub scorer exhausted its preset scores")
        value = self._scores[self._idx]
        self._idx += 1
        return float(value)


def pair_similarities(frames: np.ndarray, embedder: ImageEmbedder) -> np.ndarray:
    """Cosine similarity for each consecutive frame pair; length K - 1."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4 or frames.shape[0] < 2:
        raise ConfigError("temporal consistency needs at least 2 frames")
    embs = [np.asarray(embedder.embed(f), dtype=np.float64) for f in frames]
    sims = []
    for a, b in zip(embs[:-1], embs[1:]):
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            raise ConfigError("embedder produced a zero vector")
        sims.append(float(a @ b / (na * nb)))
    return np.array(sims)


def temporal_consistency(frames: np.ndarray, embedder: ImageEmbedder) -> float:
    """Mean cosine similarity over the K - 1 consecutive pairs, in [-1, 1]."""
    return float(pair_similarities(frames, embedder).mean())


def frame_prompt_scores(
    frames: np.ndarray, prompt: str, scorer: PromptScorer
) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4 or frames.shape[0] < 1:
        raise ConfigError("prompt consistency needs at least 1 frame")
    if not str(prompt).strip():
        raise ConfigError("prompt consistency needs a non-empty prompt")
    return np.array([float(scorer.score(f, prompt)) for f in frames])


def prompt_consistency(frames: np.ndarray, prompt: str, scorer: PromptScorer) -> float:
    """Unordered mean of the per-frame image-text scores."""
    return float(frame_prompt_scores(frames, prompt, scorer).mean())


@dataclass
class MetricsReport:
    """Scored edit: consistency values (x100) plus per-pair / per-frame detail."""

    temporal_consistency: float | None
    prompt_consistency: float | None
    pair_similarities: list[float] = field(default_factory=list)
    frame_scores: list[float] = field(default_factory=list)
    frames: int = 0
    prompt: str | None = None
    embed_grid: int | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "temporal_consistency": self.temporal_consistency,
            "prompt_consistency": self.prompt_consistency,
            "pair_similarities": self.pair_similarities,
            "frame_scores": self.frame_scores,
            "frames": self.frames,
            "prompt": self.prompt,
            "embed_grid": self.embed_grid,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_pairs_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair", "cosine_similarity"])
            for i, sim in enumerate(self.pair_similarities):
                writer.writerow([i, f"{sim:.12g}"])


def build_report(
    frames: np.ndarray,
    prompt: str | None = None,
    embedder: ImageEmbedder | None = None,
    scorer: PromptScorer | None = None,
    with_tc: bool = True,
    with_pc: bool = True,
) -> MetricsReport:
    """Score a frame stack and assemble the report (values x100)."""
    frames = np.asarray(frames, dtype=np.float64)
    embedder = embedder if embedder is not None else ToyEmbedder()
    scorer = scorer if scorer is not None else (
        embedder if hasattr(embedder, "score") else ToyEmbedder()
    )
    tc = pc = None
    pairs: list[float] = []
    scores: list[float] = []
    if with_tc:
        sims = pair_similarities(frames, embedder)
        pairs = [float(s) for s in sims]
        tc = 100.0 * float(sims.mean())
    if with_pc:
        if not prompt or not str(prompt).strip():
            raise ConfigError("prompt consistency requested without a prompt")
        per = frame_prompt_scores(frames, prompt, scorer)
        scores = [float(s) for s in per]
        pc = float(per.mean())
    return MetricsReport(
        temporal_consistency=tc,
        prompt_consistency=pc,
        pair_similarities=pairs,
        frame_scores=scores,
        frames=int(frames.shape[0]),
        prompt=prompt if prompt else None,
        embed_grid=getattr(embedder, "grid", None),
    )
