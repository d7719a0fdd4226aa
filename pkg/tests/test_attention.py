import math

import numpy as np
import pytest

from latentedit import (
    AttentionMode,
    AttentionWeights,
    ConfigError,
    ShapeError,
    cross_attention,
    scaled_dot_attention,
    self_attention_frame,
)


def brute_force_attention(q, k, v):
    """Independent dense-math oracle: explicit loops, no shared code path."""
    n_q, d = q.shape
    out = np.zeros((n_q, v.shape[1]))
    for i in range(n_q):
        logits = [sum(q[i][a] * k[j][a] for a in range(d)) / math.sqrt(d)
                  for j in range(k.shape[0])]
        m = max(logits)
        weights = [math.exp(l - m) for l in logits]
        total = sum(weights)
        for j, wgt in enumerate(weights):
            out[i] += (wgt / total) * v[j]
    return out


def identity_weights(dim: int, kv_dim: int | None = None) -> AttentionWeights:
    kv = np.eye(kv_dim or dim, dim) if kv_dim else np.eye(dim)
    return AttentionWeights(w_q=np.eye(dim), w_k=kv, w_v=kv)


def random_weights(rng, dim: int, kv_dim: int | None = None) -> AttentionWeights:
    kv_dim = kv_dim or dim
    return AttentionWeights(
        w_q=rng.standard_normal((dim, dim)),
        w_k=rng.standard_normal((kv_dim, dim)),
        w_v=rng.standard_normal((kv_dim, dim)),
    )


# ---- kernel ----

def test_single_key_returns_value_row(rng):
    q = rng.standard_normal((5, 3))
    k = rng.standard_normal((1, 3))
    v = rng.standard_normal((1, 3))
    out = scaled_dot_attention(q, k, v)
    assert np.allclose(out, np.repeat(v, 5, axis=0), rtol=0, atol=1e-12)


def test_duplicated_keys_invariance(rng):
    for _ in range(25):
        q = rng.standard_normal((3, 4))
        k = rng.standard_normal((6, 4))
        v = rng.standard_normal((6, 4))
        doubled = scaled_dot_attention(q, np.vstack([k, k]), np.vstack([v, v]))
        single = scaled_dot_attention(q, k, v)
        assert np.max(np.abs(doubled - single)) <= 1e-6


def test_identity_rows_example():
    ident = np.eye(2)
    out = scaled_dot_attention(ident, ident, ident)
    # oracle: softmax([1/sqrt(2), 0]) over the two value rows
    w0 = math.exp(1 / math.sqrt(2)) / (math.exp(1 / math.sqrt(2)) + 1.0)
    assert np.allclose(out[0], [w0, 1 - w0], atol=1e-12)
    assert abs(w0 - 0.6698) < 5e-5
    assert np.allclose(out, brute_force_attention(ident, ident, ident), atol=1e-12)


def test_kernel_matches_brute_force(rng):
    for _ in range(10):
        q = rng.standard_normal((4, 5))
        k = rng.standard_normal((7, 5))
        v = rng.standard_normal((7, 5))
        assert np.allclose(
            scaled_dot_attention(q, k, v), brute_force_attention(q, k, v), atol=1e-12
        )


def test_softmax_rows_sum_to_one(rng):
    # recover the weights by attending over identity values
    k = rng.standard_normal((6, 4))
    q = rng.standard_normal((3, 4)) * 30.0  # large logits still stable
    weights = scaled_dot_attention(q, k, np.eye(6))
    assert np.allclose(weights.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(weights >= 0)


def test_kernel_rejections(rng):
    with pytest.raises(ShapeError):
        scaled_dot_attention(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        scaled_dot_attention(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        scaled_dot_attention(np.zeros((2, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        scaled_dot_attention(np.zeros(3), np.zeros((2, 3)), np.zeros((2, 3)))


# ---- self-attention slot routing ----

def test_faa_equals_sa_on_single_frame(rng):
    w = random_weights(rng, 4)
    frames = [rng.standard_normal((6, 4))]
    sa = self_attention_frame(AttentionMode.SA, 0, frames, w)
    faa = self_attention_frame(AttentionMode.FAA, 0, frames, w)
    assert np.max(np.abs(sa - faa)) <= 1e-6


def test_sca_first_frame_equals_faa(rng):
    w = random_weights(rng, 4)
    frames = [rng.standard_normal((4, 4)) for _ in range(3)]
    sca = self_attention_frame(AttentionMode.SCA, 0, frames, w)
    faa = self_attention_frame(AttentionMode.FAA, 0, frames, w)
    assert np.max(np.abs(sca - faa)) <= 1e-6


def test_faa_with_equal_first_frame_matches_sa(rng):
    w = random_weights(rng, 4)
    shared = rng.standard_normal((5, 4))
    frames = [shared, shared.copy(), rng.standard_normal((5, 4))]
    sa = self_attention_frame(AttentionMode.SA, 1, frames, w)
    faa = self_attention_frame(AttentionMode.FAA, 1, frames, w)
    assert np.max(np.abs(sa - faa)) <= 1e-6


def test_sca_uses_first_and_previous(rng):
    w = identity_weights(3)
    frames = [rng.standard_normal((2, 3)) for _ in range(4)]
    got = self_attention_frame(AttentionMode.SCA, 3, frames, w)
    manual = scaled_dot_attention(
        frames[3], np.vstack([frames[0], frames[2]]), np.vstack([frames[0], frames[2]])
    )
    assert np.allclose(got, manual, atol=1e-12)


def test_frame_index_out_of_range(rng):
    w = random_weights(rng, 3)
    frames = [rng.standard_normal((2, 3))]
    with pytest.raises(ConfigError):
        self_attention_frame(AttentionMode.SA, 1, frames, w)
    with pytest.raises(ConfigError):
        self_attention_frame(AttentionMode.SA, -1, frames, w)


def test_mode_parsing():
    assert AttentionMode.parse("faa") is AttentionMode.FAA
    assert AttentionMode.parse("SA") is AttentionMode.SA
    assert AttentionMode.parse(AttentionMode.SCA) is AttentionMode.SCA
    with pytest.raises(ConfigError):
        AttentionMode.parse("stsa")


# ---- cross-attention ----

def test_single_prompt_token(rng):
    w = random_weights(rng, 4, kv_dim=6)
    tokens = rng.standard_normal((5, 4))
    prompt = rng.standard_normal((1, 6))
    out = cross_attention(tokens, prompt, w)
    expected = np.repeat(prompt @ w.w_v, 5, axis=0)
    assert np.allclose(out, expected, atol=1e-12)


def test_duplicated_prompt_tokens(rng):
    w = random_weights(rng, 4, kv_dim=6)
    tokens = rng.standard_normal((3, 4))
    prompt = rng.standard_normal((1, 6))
    one = cross_attention(tokens, prompt, w)
    two = cross_attention(tokens, np.vstack([prompt, prompt]), w)
    assert np.max(np.abs(one - two)) <= 1e-6


def test_cross_attention_matches_brute_force(rng):
    w = random_weights(rng, 2, kv_dim=2)
    tokens = rng.standard_normal((2, 2))
    prompt = rng.standard_normal((3, 2))
    got = cross_attention(tokens, prompt, w)
    expected = brute_force_attention(tokens @ w.w_q, prompt @ w.w_k, prompt @ w.w_v)
    assert np.max(np.abs(got - expected)) <= 1e-8


def test_empty_prompt_rejected(rng):
    w = random_weights(rng, 3)
    with pytest.raises(ConfigError):
        cross_attention(rng.standard_normal((2, 3)), np.zeros((0, 3)), w)


def test_weights_validation(rng):
    with pytest.raises(ShapeError):
        AttentionWeights(w_q=np.zeros(3), w_k=np.zeros((3, 3)), w_v=np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        AttentionWeights(w_q=np.zeros((3, 3)), w_k=np.zeros((3, 2)), w_v=np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        AttentionWeights(w_q=np.zeros((3, 3)), w_k=np.zeros((3, 3)), w_v=np.zeros((2, 3)))
    w = random_weights(rng, 3)
    with pytest.raises(ValueError):
        w.w_q[0, 0] = 1.0  # frozen
