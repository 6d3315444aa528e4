"""On-disk checkpoints.

A checkpoint is a directory holding three files:

``manifest.json``
    format version, model and training config, schema, seed, vocabulary
    digests, metric history, the parameter layout ``[[name, rows, cols], ...]``
    and the SHA-256 and byte length of the parameter blob.
``vocab.json``
    the word, speaker and publisher token lists (index = id).
``params.bin``
    every parameter in layout order, row-major, little-endian float64.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Vocabularies
from .errors import CheckpointError, ConfigError
from .model import MacConfig, MacParams, init_params, param_shapes

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
VOCAB = "vocab.json"
BLOB = "params.bin"


@dataclass
class Checkpoint:
    params: MacParams
    cfg: MacConfig
    vocabs: Vocabularies
    schema: str
    seed: int
    train_config: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def params_to_bytes(params: MacParams) -> bytes:
    return b"".join(np.ascontiguousarray(t.value, dtype="<f8").tobytes() for t in params.tensors())


def save_checkpoint(ckpt: Checkpoint, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ckpt.params.check_against(ckpt.cfg)
    blob = params_to_bytes(ckpt.params)
    vocab = ckpt.vocabs.to_json()
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.cfg.to_dict(),
        "train_config": ckpt.train_config,
        "schema": ckpt.schema,
        "seed": ckpt.seed,
        "vocab_hash": {
            "words": ckpt.vocabs.words.digest(),
            "speakers": ckpt.vocabs.speakers.digest(),
            "publishers": ckpt.vocabs.publishers.digest(),
        },
        "history": ckpt.history,
        "param_layout": [[name, r, c] for name, (r, c) in param_shapes(ckpt.cfg)],
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "blob_bytes": len(blob),
        **({"extra": ckpt.extra} if ckpt.extra else {}),
    }
    (directory / BLOB).write_bytes(blob)
    _dump_json(vocab, directory / VOCAB)
    _dump_json(manifest, directory / MANIFEST)
    return directory


def load_checkpoint(directory) -> Checkpoint:
    """Load and verify a checkpoint; any inconsistency raises :class:`CheckpointError`."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
        vocab = json.loads((directory / VOCAB).read_text(encoding="utf-8"))
        blob = (directory / BLOB).read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"incomplete checkpoint: {exc.filename} missing") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    if len(blob) != manifest["blob_bytes"]:
        raise CheckpointError(
            f"parameter blob is {len(blob)} bytes, manifest says {manifest['blob_bytes']}")
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise CheckpointError("parameter blob checksum mismatch")

    vocabs = Vocabularies.from_json(vocab)
    digests = {"words": vocabs.words.digest(), "speakers": vocabs.speakers.digest(),
               "publishers": vocabs.publishers.digest()}
    if digests != manifest["vocab_hash"]:
        raise CheckpointError("vocabulary does not match the hash recorded in the manifest")

    try:
        cfg = MacConfig.from_dict(manifest["config"])
    except (ConfigError, TypeError) as exc:
        raise CheckpointError(f"bad config in manifest: {exc}") from None
    layout = [[name, r, c] for name, (r, c) in param_shapes(cfg)]
    if layout != manifest["param_layout"]:
        raise CheckpointError("parameter layout does not match the stored config")
    if (cfg.vocab_size, cfg.n_speakers, cfg.n_publishers) != (
            len(vocabs.words), len(vocabs.speakers), len(vocabs.publishers)):
        raise CheckpointError("table sizes in config do not match the stored vocabularies")

    params = init_params(cfg, 0)
    values = np.frombuffer(blob, dtype="<f8")
    offset = 0
    for t in params.tensors():
        size = t.value.size
        t.value[...] = values[offset:offset + size].reshape(t.value.shape)
        offset += size
    if offset != values.size:
        raise CheckpointError("parameter blob size does not match the layout")
    return Checkpoint(params, cfg, vocabs, manifest["schema"], manifest["seed"],
                      manifest.get("train_config", {}), manifest.get("history", []),
                      manifest.get("extra", {}))
