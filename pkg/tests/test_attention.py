import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mac_factcheck import tensor_core as tc
from mac_factcheck.attention import (MultiHeadAttentionParams, document_attention,
                                     extend_claim, extend_document, multi_head_attend,
                                     word_attention)
from mac_factcheck.errors import DegenerateInputError, ShapeError
from mac_factcheck.tensor_core import Tensor


def attn(rng, items_w, ctx_w, size=5, heads=2):
    return MultiHeadAttentionParams.init(items_w + ctx_w, size, heads, rng, "attn")


def test_zero_heads_give_uniform_weights(rng):
    p = attn(rng, 3, 2, heads=3)
    p.heads.value[...] = 0.0
    items = Tensor(rng.normal(size=(4, 3)))
    mask = np.array([True, False, True, True])
    out, w = multi_head_attend(items, Tensor(rng.normal(size=(1, 2))), p, mask)
    np.testing.assert_allclose(w.value[mask], 1 / 3, atol=1e-15)
    assert np.all(w.value[~mask] == 0)
    mean = items.value[mask].mean(axis=0)
    np.testing.assert_allclose(out.value[0], np.tile(mean, 3), atol=1e-15)


def test_single_item(rng):
    p = attn(rng, 3, 2, heads=2)
    items = Tensor(rng.normal(size=(1, 3)))
    out, w = multi_head_attend(items, Tensor(rng.normal(size=(1, 2))), p)
    assert np.all(w.value == 1.0)
    np.testing.assert_array_equal(out.value[0], np.tile(items.value[0], 2))


def test_hand_composed_weighted_sum(rng):
    p = attn(rng, 3, 2, heads=2)
    items = rng.normal(size=(4, 3))
    ctx = rng.normal(size=(1, 2))
    out, w = multi_head_attend(Tensor(items), Tensor(ctx), p)
    for h in range(2):
        scores = np.array([np.tanh(np.concatenate([items[j], ctx[0]]) @ p.proj.value)
                           @ p.heads.value[:, h] for j in range(4)])
        a = np.exp(scores) / np.exp(scores).sum()
        np.testing.assert_allclose(w.value[:, h], a, atol=1e-14)
        np.testing.assert_allclose(out.value[0, 3 * h:3 * (h + 1)], a @ items, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_weights_column_stochastic_and_blocks(rows, heads, seed):
    rng = np.random.default_rng(seed)
    p = attn(rng, 3, 2, heads=heads)
    items = rng.normal(size=(rows, 3))
    mask = rng.random(rows) < 0.6
    mask[0] = True
    out, w = multi_head_attend(Tensor(items), Tensor(rng.normal(size=(1, 2))), p, mask)
    np.testing.assert_allclose(w.value[mask].sum(axis=0), 1.0, atol=1e-12)
    assert np.all(w.value[~mask] == 0)
    for h in range(heads):
        np.testing.assert_allclose(out.value[0, 3 * h:3 * h + 3], w.value[:, h] @ items, atol=1e-12)


def test_duplicated_head_appends_identical_block(rng):
    p = attn(rng, 3, 2, heads=2)
    items, ctx = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(1, 2)))
    out, _ = multi_head_attend(items, ctx, p)
    wider = MultiHeadAttentionParams(p.proj, Tensor(np.hstack([p.heads.value, p.heads.value[:, 1:]])))
    out3, _ = multi_head_attend(items, ctx, wider)
    np.testing.assert_array_equal(out3.value[0, :6], out.value[0])
    np.testing.assert_array_equal(out3.value[0, 6:], out.value[0, 3:])


def test_attention_gradients(rng):
    p = attn(rng, 3, 2, heads=2)
    items = Tensor(rng.normal(size=(4, 3)), True)
    ctx = Tensor(rng.normal(size=(1, 2)), True)
    w = Tensor(rng.normal(size=(1, 6)))
    mask = [True, True, False, True]
    f = lambda: tc.sum_all(tc.mul(multi_head_attend(items, ctx, p, mask)[0], w))  # noqa: E731
    assert tc.grad_check(f, [items, ctx, p.proj, p.heads]) < 1e-4


def test_errors(rng):
    p = attn(rng, 3, 2)
    with pytest.raises(DegenerateInputError):
        multi_head_attend(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 2))), p, [False, False])
    with pytest.raises(ShapeError):
        multi_head_attend(Tensor(np.ones((2, 4))), Tensor(np.ones((1, 2))), p)
    with pytest.raises(ShapeError):
        multi_head_attend(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))), p)


def test_word_attention_single_head_is_plain_additive(rng):
    H = 2
    p = MultiHeadAttentionParams.init(8, 4, 1, rng, "w")
    states = rng.normal(size=(3, 2 * H))
    claim = rng.normal(size=(1, 2 * H))
    d, a = word_attention(Tensor(states), Tensor(claim), p)
    scores = np.tanh(np.hstack([states, np.repeat(claim, 3, axis=0)]) @ p.proj.value) @ p.heads.value
    alpha = np.exp(scores[:, 0]) / np.exp(scores[:, 0]).sum()
    np.testing.assert_allclose(d.value[0], alpha @ states, atol=1e-14)
    assert d.shape == (1, 2 * H)


def test_word_attention_fully_padded_rejected(rng):
    p = MultiHeadAttentionParams.init(8, 4, 2, rng, "w")
    with pytest.raises(DegenerateInputError):
        word_attention(Tensor(np.zeros((3, 4))), Tensor(np.ones((1, 4))), p, [False] * 3)


def test_word_attention_width(rng):
    H, h1 = 3, 2
    p = MultiHeadAttentionParams.init(4 * H, 2 * H, h1, rng, "w")
    d, a = word_attention(Tensor(rng.normal(size=(5, 2 * H))), Tensor(rng.normal(size=(1, 2 * H))), p)
    assert d.shape == (1, 2 * h1 * H) and a.shape == (5, h1)


def test_extensions():
    c = Tensor([[1.0, 2.0, 3.0, 4.0]])
    assert extend_claim(c) is c
    ext = extend_claim(c, Tensor([[9.0, 8.0]]))
    assert ext.shape == (1, 6) and ext.value[0, :4].tolist() == [1, 2, 3, 4]
    d = Tensor(np.ones((1, 12)))  # h1=2, H=3
    assert extend_document(d) is d
    assert extend_document(d, Tensor([[0.5, 0.5]])).shape == (1, 14)


def test_document_attention_single_doc(rng):
    p = MultiHeadAttentionParams.init(7, 4, 3, rng, "d")
    docs = Tensor(rng.normal(size=(1, 5)))
    rich, a2 = document_attention(docs, Tensor(rng.normal(size=(1, 2))), p)
    assert np.all(a2.value == 1.0)
    np.testing.assert_array_equal(rich.value[0], np.tile(docs.value[0], 3))


def test_document_attention_zero_heads_mean(rng):
    p = MultiHeadAttentionParams.init(7, 4, 2, rng, "d")
    p.heads.value[...] = 0
    docs = rng.normal(size=(3, 5))
    mask = np.array([True, True, False])
    rich, _ = document_attention(Tensor(docs), Tensor(rng.normal(size=(1, 2))), p, mask)
    np.testing.assert_allclose(rich.value[0], np.tile(docs[:2].mean(axis=0), 2), atol=1e-15)


def test_document_attention_no_docs(rng):
    p = MultiHeadAttentionParams.init(7, 4, 2, rng, "d")
    with pytest.raises(DegenerateInputError):
        document_attention(Tensor(np.zeros((2, 5))), Tensor(np.ones((1, 2))), p, [False, False])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_document_permutation_invariance(k, seed):
    rng = np.random.default_rng(seed)
    p = MultiHeadAttentionParams.init(7, 4, 2, rng, "d")
    docs = rng.normal(size=(k, 5))
    mask = rng.random(k) < 0.7
    mask[0] = True
    ctx = Tensor(rng.normal(size=(1, 2)))
    rich, _ = document_attention(Tensor(docs), ctx, p, mask)
    perm = rng.permutation(k)
    rich_p, _ = document_attention(Tensor(docs[perm]), ctx, p, mask[perm])
    np.testing.assert_allclose(rich_p.value, rich.value, atol=1e-12)


def test_init_bounds(rng):
    p = MultiHeadAttentionParams.init(16, 9, 2, rng, "x")
    assert np.all(np.abs(p.proj.value) <= 0.25) and np.all(np.abs(p.heads.value) <= 1 / 3)
    assert p.n_heads == 2 and len(p.tensors()) == 2
