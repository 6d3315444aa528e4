"""Synthetic corpora with a planted signal, for smoke tests and demos.

True claims get a designated keyword inserted into one of their evidence
documents; false claims never see it. Everything else is filler drawn
uniformly, so the keyword is the only thing that separates the classes.
"""
from __future__ import annotations

import numpy as np

from .data import ClaimRecord, Evidence
from .model import MacConfig

KEYWORD = "genuine"


def tiny_config(**overrides) -> MacConfig:
    """The small architecture used throughout the test suite."""
    base = dict(hidden_size=4, embed_dim=6, speaker_dim=2, publisher_dim=2, word_heads=2,
                doc_heads=2, claim_len=3, doc_len=4, max_docs=2, use_speakers=True,
                use_publishers=True, vocab_size=20, n_speakers=5, n_publishers=6)
    base.update(overrides)
    return MacConfig(**base)


def planted_corpus(n_claims: int = 64, seed: int = 0, *, n_filler: int = 12, claim_len: int = 3,
                   doc_len: int = 4, docs_per_claim: int = 2, n_publishers: int = 3,
                   n_speakers: int = 0, keyword: str = KEYWORD,
                   id_prefix: str = "syn") -> list[ClaimRecord]:
    """Balanced corpus of ``n_claims`` records (first half true, second half false)."""
    rng = np.random.default_rng(seed)
    filler = [f"w{i}" for i in range(n_filler)]
    records = []
    for i in range(n_claims):
        label = 1 if i < n_claims // 2 else 0
        claim = " ".join(rng.choice(filler, size=claim_len))
        docs = [list(rng.choice(filler, size=doc_len)) for _ in range(docs_per_claim)]
        if label == 1:
            j = rng.integers(docs_per_claim)
            docs[j][rng.integers(doc_len)] = keyword
        evidence = tuple(Evidence(" ".join(d), f"site{rng.integers(n_publishers)}.com")
                         for d in docs)
        speaker = f"speaker{rng.integers(n_speakers)}" if n_speakers else None
        records.append(ClaimRecord(f"{id_prefix}{i:04d}", claim, speaker, label,
                                   "true" if label else "false", evidence))
    return records
