import json

import numpy as np
import pytest

from mac_factcheck.checkpoint import Checkpoint, load_checkpoint, params_to_bytes, save_checkpoint
from mac_factcheck.data import Vocabularies
from mac_factcheck.errors import CheckpointError
from mac_factcheck.model import init_params
from mac_factcheck.synthetic import planted_corpus, tiny_config


@pytest.fixture
def saved(tmp_path):
    records = planted_corpus(20, n_speakers=2)
    vocabs = Vocabularies.build(records, 1)
    cfg = tiny_config(vocab_size=len(vocabs.words), n_speakers=len(vocabs.speakers),
                      n_publishers=len(vocabs.publishers))
    params = init_params(cfg, 3)
    ckpt = Checkpoint(params, cfg, vocabs, "politifact", 3, {"lr": 0.001}, [{"epoch": 1}])
    return save_checkpoint(ckpt, tmp_path / "ck"), ckpt


def test_roundtrip_is_bitwise(saved):
    path, ckpt = saved
    loaded = load_checkpoint(path)
    assert params_to_bytes(loaded.params) == params_to_bytes(ckpt.params)
    assert loaded.cfg == ckpt.cfg and loaded.schema == "politifact" and loaded.seed == 3
    assert loaded.vocabs.words.tokens == ckpt.vocabs.words.tokens
    assert loaded.history == [{"epoch": 1}]


def test_save_is_deterministic(saved, tmp_path):
    path, ckpt = saved
    again = save_checkpoint(ckpt, tmp_path / "again")
    for name in ("manifest.json", "vocab.json", "params.bin"):
        assert (path / name).read_bytes() == (again / name).read_bytes()


def test_truncated_blob(saved):
    path, _ = saved
    blob = (path / "params.bin").read_bytes()
    (path / "params.bin").write_bytes(blob[:-8])
    with pytest.raises(CheckpointError, match="bytes"):
        load_checkpoint(path)


def test_corrupted_blob(saved):
    path, _ = saved
    blob = bytearray((path / "params.bin").read_bytes())
    blob[10] ^= 0xFF
    (path / "params.bin").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_vocab_mismatch(saved):
    path, _ = saved
    vocab = json.loads((path / "vocab.json").read_text())
    vocab["words"][-1] = "tampered"
    (path / "vocab.json").write_text(json.dumps(vocab))
    with pytest.raises(CheckpointError, match="vocabulary"):
        load_checkpoint(path)


def test_missing_file(saved):
    path, _ = saved
    (path / "vocab.json").unlink()
    with pytest.raises(CheckpointError, match="missing"):
        load_checkpoint(path)


def test_layout_mismatch(saved):
    path, _ = saved
    manifest = json.loads((path / "manifest.json").read_text())
    manifest["config"]["word_heads"] = 3
    (path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_blob_is_little_endian_float64(saved):
    path, ckpt = saved
    values = np.frombuffer((path / "params.bin").read_bytes(), dtype="<f8")
    first = ckpt.params.tensors()[0].value.reshape(-1)
    np.testing.assert_array_equal(values[:first.size], first)
