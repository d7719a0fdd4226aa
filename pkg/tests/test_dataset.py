import json

import numpy as np
import pytest

from latentedit import (
    ClientError,
    ConfigError,
    DatasetRecord,
    ManifestError,
    PROMPT_CATEGORIES,
    PROMPT_TEMPLATES,
    StubCaptionClient,
    StubPromptClient,
    build_manifest,
    generate_caption,
    generate_prompts,
    read_manifest,
    review_record,
    synthetic_clip,
    write_clip_frames,
    write_manifest,
)


class FixtureCaptionClient:
    def __init__(self, candidates):
        self._candidates = list(candidates)

    def candidates(self, image, count):
        return self._candidates[:count]


class FlakyPromptClient:
    """Returns empty text for one category to exercise the failure path."""

    def __init__(self, empty_category):
        self.empty_category = empty_category

    def generate(self, category, template, caption):
        return "" if category == self.empty_category else f"{category}:{caption}"


def make_record(i, verified=False):
    caption = f"a scene number {i}"
    return DatasetRecord(
        video_id=f"vid{i:03d}",
        source=("davis", "footage", "local")[i % 3],
        caption=caption,
        prompts={cat: f"{cat}:{caption}" for cat in PROMPT_CATEGORIES},
        verified=verified,
    )


FRAME = np.zeros((8, 8, 3))


# ---- caption selection ----

def test_longest_caption_wins():
    client = FixtureCaptionClient(["a dog", "a dog running on grass"])
    assert generate_caption(FRAME, client, count=2) == "a dog running on grass"


def test_single_candidate():
    client = FixtureCaptionClient(["just one"])
    assert generate_caption(FRAME, client, count=1) == "just one"


def test_length_tie_breaks_lexicographically():
    client = FixtureCaptionClient(["bbb", "aaa", "cc"])
    assert generate_caption(FRAME, client, count=3) == "aaa"


def test_no_usable_candidates():
    with pytest.raises(ClientError):
        generate_caption(FRAME, FixtureCaptionClient(["", "  "]), count=2)


def test_stub_caption_client_deterministic():
    stub = StubCaptionClient()
    a = stub.candidates(FRAME, 5)
    b = stub.candidates(FRAME, 5)
    assert a == b
    assert len(a) == 5
    assert all(c.strip() for c in a)
    other = stub.candidates(np.ones((8, 8, 3)), 5)
    assert other != a  # content-dependent
    with pytest.raises(ConfigError):
        stub.candidates(FRAME, 0)


# ---- prompt generation ----

def test_stub_prompt_echoes():
    caption = "a pink lotus flower in the water with green leaves"
    prompts = generate_prompts(caption, StubPromptClient())
    assert prompts == {cat: f"{cat}:{caption}" for cat in PROMPT_CATEGORIES}


def test_templates_cover_all_categories():
    assert set(PROMPT_TEMPLATES) == set(PROMPT_CATEGORIES)
    for cat in PROMPT_CATEGORIES:
        assert "{caption}" in PROMPT_TEMPLATES[cat]


def test_empty_category_response_fails():
    with pytest.raises(ClientError):
        generate_prompts("a caption", FlakyPromptClient("ST"))


def test_empty_caption_rejected():
    with pytest.raises(ConfigError):
        generate_prompts("   ", StubPromptClient())


# ---- record validation ----

def test_record_requires_all_categories():
    rec = make_record(1)
    del rec.prompts["ST"]
    with pytest.raises(ConfigError):
        rec.validate()
    rec = make_record(2)
    rec.prompts["XX"] = "extra"
    with pytest.raises(ConfigError):
        rec.validate()


def test_record_verified_needs_nonempty_prompts():
    rec = make_record(3, verified=True)
    rec.validate()
    rec.prompts["BC"] = "   "
    with pytest.raises(ConfigError):
        rec.validate()


def test_record_source_enum():
    rec = make_record(4)
    rec.source = "youtube"
    with pytest.raises(ConfigError):
        rec.validate()


# ---- manifest persistence ----

def test_empty_manifest_roundtrip(tmp_path):
    path = tmp_path / "empty.jsonl"
    write_manifest([], path)
    assert path.read_text() == ""
    assert read_manifest(path) == []


def test_manifest_roundtrip_50_records(tmp_path):
    records = [make_record(i, verified=(i % 2 == 0)) for i in range(50)]
    path = tmp_path / "manifest.jsonl"
    write_manifest(records, path)
    assert len(path.read_text().strip().splitlines()) == 50
    loaded = read_manifest(path)
    assert loaded == records


def test_write_refuses_invalid_record(tmp_path):
    rec = make_record(1, verified=True)
    del rec.prompts["ST"]
    path = tmp_path / "m.jsonl"
    with pytest.raises(ConfigError):
        write_manifest([rec], path)
    assert not path.exists()


def test_read_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps(make_record(0).to_dict())
    path.write_text(good + "\nnot json\n")
    with pytest.raises(ManifestError) as err:
        read_manifest(path)
    assert err.value.line == 2
    path.write_text(good + "\n" + json.dumps({"video_id": "x"}) + "\n")
    with pytest.raises(ManifestError) as err:
        read_manifest(path)
    assert err.value.line == 2


# ---- end-to-end build and review ----

def _video_entries(tmp_path, count=3):
    entries = []
    for i in range(count):
        d = tmp_path / f"vid{i}"
        write_clip_frames(synthetic_clip("slide", frames=2, size=32), d)
        entries.append((f"vid{i}", "local", d))
    return entries


def test_build_manifest_stub_end_to_end(tmp_path):
    entries = _video_entries(tmp_path)
    path = tmp_path / "manifest.jsonl"
    records = build_manifest(entries, StubCaptionClient(), StubPromptClient(), path=path)
    assert len(records) == 3
    loaded = read_manifest(path)
    assert loaded == records
    for rec in loaded:
        assert set(rec.prompts) == set(PROMPT_CATEGORIES)
        assert rec.verified is False
        assert rec.caption


def test_build_manifest_sequential_matches_concurrent(tmp_path):
    entries = _video_entries(tmp_path)
    seq = build_manifest(entries, StubCaptionClient(), StubPromptClient(), concurrency=1)
    par = build_manifest(entries, StubCaptionClient(), StubPromptClient(), concurrency=4)
    assert seq == par


def test_build_manifest_propagates_client_failures(tmp_path):
    entries = _video_entries(tmp_path, count=1)
    with pytest.raises(ClientError):
        build_manifest(entries, StubCaptionClient(), FlakyPromptClient("OA"))


def test_review_record(tmp_path):
    path = tmp_path / "manifest.jsonl"
    write_manifest([make_record(i) for i in range(3)], path)
    rec = review_record(path, "vid001", "approve")
    assert rec.verified is True
    assert next(r for r in read_manifest(path) if r.video_id == "vid001").verified
    rec = review_record(path, "vid001", "reject")
    assert rec.verified is False
    with pytest.raises(ConfigError):
        review_record(path, "missing", "approve")
    with pytest.raises(ConfigError):
        review_record(path, "vid000", "maybe")


def test_review_approve_requires_complete_prompts(tmp_path):
    rec = make_record(0)
    rec.prompts["OR"] = ""
    path = tmp_path / "manifest.jsonl"
    write_manifest([rec], path)  # unverified records may carry empty prompts
    with pytest.raises(ConfigError):
        review_record(path, "vid000", "approve")
