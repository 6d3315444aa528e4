import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from mac_factcheck import tensor_core as tc
from mac_factcheck.errors import ConfigError, ContractError
from mac_factcheck.model import (MacConfig, batch_loss, forward, init_params, loss, param_count,
                                 param_shapes, predict_batch)
from mac_factcheck.synthetic import tiny_config
from mac_oracle import mac_forward

FLAG_COMBOS = list(itertools.product([False, True], [False, True]))
MODES = list(itertools.product(["multi_head", "mean_pool"], ["multi_head", "mean_pool"],
                               ["tanh", "identity"]))


def arrays(params):
    return {t.name: t.value for t in params.tensors()}


def test_defaults_follow_published_settings():
    cfg = MacConfig()
    assert (cfg.claim_len, cfg.doc_len, cfg.max_docs) == (30, 100, 30)
    assert cfg.word_attn_size == cfg.doc_attn_size == cfg.mlp_hidden == 600
    assert param_shapes(cfg)[-2][1] == (600, 1)


@pytest.mark.parametrize("bad", [dict(word_heads=0), dict(word_attention="max"),
                                 dict(mlp_activation="relu"), dict(vocab_size=1)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        MacConfig(**bad)


def test_config_dict_roundtrip():
    cfg = tiny_config(word_attention="mean_pool")
    assert MacConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        MacConfig.from_dict({"nope": 1})


@pytest.mark.parametrize("spk,pub", FLAG_COMBOS)
def test_widths_for_feature_flags(spk, pub):
    cfg = tiny_config(use_speakers=spk, use_publishers=pub)
    H = cfg.hidden_size
    assert cfg.claim_width == 2 * H + (cfg.speaker_dim if spk else 0)
    assert cfg.doc_width == 2 * cfg.word_heads * H + (cfg.publisher_dim if pub else 0)
    params = init_params(cfg, 0)
    params.check_against(cfg)
    inst = random_instance(cfg, np.random.default_rng(1))
    assert 0 < forward(params, cfg, inst).y_hat < 1


def test_param_count_is_pure_function_of_config():
    cfg = tiny_config()
    assert param_count(cfg) == sum(t.value.size for t in init_params(cfg, 3).tensors())
    assert param_count(cfg) == param_count(MacConfig.from_dict(cfg.to_dict()))


def test_mean_pool_ablation_drops_attention_parameters():
    cfg = tiny_config(word_attention="mean_pool", doc_attention="mean_pool")
    names = [n for n, _ in param_shapes(cfg)]
    assert not any(n.startswith(("word_attn", "doc_attn")) for n in names)
    assert cfg.doc_width == 2 * cfg.hidden_size + cfg.publisher_dim


@pytest.mark.parametrize("word_mode,doc_mode,act", MODES)
def test_forward_matches_oracle_in_every_mode(word_mode, doc_mode, act):
    cfg = tiny_config(word_attention=word_mode, doc_attention=doc_mode, mlp_activation=act)
    rng = np.random.default_rng(4)
    for seed in range(3):
        params = init_params(cfg, seed)
        inst = random_instance(cfg, rng)
        pred = forward(params, cfg, inst, want_trace=True)
        y, _, a2 = mac_forward(arrays(params), cfg, inst)
        assert abs(pred.y_hat - y) <= 1e-10
        np.testing.assert_allclose(pred.trace.doc_weights[inst.doc_mask], a2, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.booleans(), st.booleans())
def test_forward_matches_oracle_random(seed, spk, pub):
    cfg = tiny_config(use_speakers=spk, use_publishers=pub, max_docs=3, doc_len=5)
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed)
    inst = random_instance(cfg, rng)
    y, _, _ = mac_forward(arrays(params), cfg, inst)
    assert abs(forward(params, cfg, inst).y_hat - y) <= 1e-10


def test_zero_mlp_gives_half(tiny, tiny_params, rng):
    for t in (tiny_params.mlp_out_w, tiny_params.mlp_out_b):
        t.value[...] = 0
    for _ in range(5):
        assert forward(tiny_params, tiny, random_instance(tiny, rng)).y_hat == 0.5


def test_document_permutation_invariance(rng):
    cfg = tiny_config(max_docs=4)
    params = init_params(cfg, 2)
    for _ in range(20):
        inst = random_instance(cfg, rng)
        perm = rng.permutation(cfg.max_docs)
        shuffled = inst.__class__(**{**inst.__dict__, "doc_ids": inst.doc_ids[perm],
                                     "token_mask": inst.token_mask[perm],
                                     "publisher_ids": inst.publisher_ids[perm],
                                     "doc_mask": inst.doc_mask[perm]})
        assert abs(forward(params, cfg, shuffled).y_hat - forward(params, cfg, inst).y_hat) <= 1e-12


def test_trace_shapes(tiny, tiny_params, rng):
    inst = random_instance(tiny, rng, n_docs=1)
    tr = forward(tiny_params, tiny, inst, want_trace=True).trace
    assert tr.word_weights[0].shape == (tiny.doc_len, tiny.word_heads)
    assert tr.word_weights[1] is None
    assert tr.doc_weights.shape == (tiny.max_docs, tiny.doc_heads)
    np.testing.assert_array_equal(tr.doc_weights[0], 1.0)


def test_loss_examples():
    assert loss(0.5, 1).item() == pytest.approx(np.log(2), abs=1e-12)
    assert loss(1.0, 1).item() == pytest.approx(0.0, abs=1e-11)
    with pytest.raises(ContractError):
        loss(0.5, 3)


def test_fused_loss_gradient_is_prob_minus_label():
    z = tc.Tensor([[1.0]], True)  # sigmoid(1) = 0.731...
    with tc.Tape() as tape:
        out = tc.bce_with_logits(z, 0)
    tc.backward(out, tape)
    assert z.grad.item() == pytest.approx(0.7310585786300049, abs=1e-12)


def test_predict_batch(tiny, tiny_params, rng):
    assert predict_batch(tiny_params, tiny, []) == []
    inst = random_instance(tiny, rng)
    a, b = predict_batch(tiny_params, tiny, [inst, inst])
    assert a.y_hat == b.y_hat
    many = [random_instance(tiny, rng) for _ in range(5)]
    assert [p.y_hat for p in predict_batch(tiny_params, tiny, many)] == \
        [forward(tiny_params, tiny, i).y_hat for i in many]


def test_batch_loss_is_mean(tiny, tiny_params, rng):
    batch = [random_instance(tiny, rng) for _ in range(4)]
    singles = [batch_loss(tiny_params, tiny, [i]).item() for i in batch]
    assert batch_loss(tiny_params, tiny, batch).item() == pytest.approx(np.mean(singles), abs=1e-14)
    assert all(s >= 0 for s in singles)


def test_init_determinism_and_bounds(tiny):
    a, b = init_params(tiny, 5), init_params(tiny, 5)
    assert all(np.array_equal(x.value, y.value) for x, y in zip(a.tensors(), b.tensors()))
    assert np.all(np.abs(a.speaker_table.table.value) <= 0.2)
    assert np.all(np.abs(a.publisher_table.table.value) <= 0.2)
    assert np.all(np.abs(a.word_table.table.value) <= 0.1)
    for table in a.tables():
        assert np.all(table.table.value[0] == 0)


def test_glove_initialisation(tiny):
    tokens = ["<pad>", "<unk>"] + [f"w{i}" for i in range(tiny.vocab_size - 2)]
    vec = np.arange(tiny.embed_dim, dtype=float)
    params = init_params(tiny, 0, {"w3": vec, "<pad>": vec}, tokens)
    np.testing.assert_array_equal(params.word_table.table.value[tokens.index("w3")], vec)
    assert np.all(params.word_table.table.value[0] == 0)
    with pytest.raises(ConfigError):
        init_params(tiny, 0, {"w3": np.ones(tiny.embed_dim + 1)}, tokens)


def test_frozen_word_table(tiny):
    params = init_params(tiny, 0, train_words=False)
    assert params.word_table.table not in params.trainable()


def test_config_mismatch_rejected(tiny, rng):
    params = init_params(tiny, 0)
    other = tiny.replace(hidden_size=5)
    with pytest.raises(ContractError):
        forward(params, other, random_instance(other, rng))


def test_instance_length_mismatch_rejected(tiny, tiny_params, rng):
    inst = random_instance(tiny.replace(doc_len=6), rng)
    with pytest.raises(ContractError):
        forward(tiny_params, tiny, inst)


def test_unknown_speaker_uses_unk_row(tiny, tiny_params, rng):
    inst = random_instance(tiny, rng)
    none = inst.__class__(**{**inst.__dict__, "speaker_id": None})
    unk = inst.__class__(**{**inst.__dict__, "speaker_id": 1})
    assert forward(tiny_params, tiny, none).y_hat == forward(tiny_params, tiny, unk).y_hat
