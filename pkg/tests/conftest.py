import numpy as np
import pytest

from mac_factcheck.data import ClaimInstance
from mac_factcheck.model import init_params
from mac_factcheck.synthetic import tiny_config


def random_instance(cfg, rng, label=None, n_docs=None, key="r"):
    """A ClaimInstance with random lengths and ids, built without the text pipeline."""
    n, m, k = cfg.claim_len, cfg.doc_len, cfg.max_docs
    claim_len = int(rng.integers(1, n + 1))
    claim_ids = np.zeros(n, dtype=np.int64)
    claim_ids[:claim_len] = rng.integers(1, cfg.vocab_size, size=claim_len)
    claim_mask = np.arange(n) < claim_len
    n_docs = int(rng.integers(1, k + 1)) if n_docs is None else n_docs
    doc_ids = np.zeros((k, m), dtype=np.int64)
    token_mask = np.zeros((k, m), dtype=bool)
    for j in range(n_docs):
        length = int(rng.integers(1, m + 1))
        doc_ids[j, :length] = rng.integers(1, cfg.vocab_size, size=length)
        token_mask[j, :length] = True
    publisher_ids = np.zeros(k, dtype=np.int64)
    publisher_ids[:n_docs] = rng.integers(1, cfg.n_publishers, size=n_docs)
    doc_mask = np.arange(k) < n_docs
    return ClaimInstance(
        claim_key=key, claim_ids=claim_ids, claim_mask=claim_mask,
        speaker_id=int(rng.integers(1, cfg.n_speakers)), doc_ids=doc_ids,
        token_mask=token_mask, publisher_ids=publisher_ids, doc_mask=doc_mask,
        label=int(rng.integers(0, 2)) if label is None else label,
        claim_tokens=tuple(f"t{i}" for i in claim_ids[:claim_len]),
        doc_tokens=tuple(tuple(f"t{i}" for i in doc_ids[j][token_mask[j]]) for j in range(n_docs)),
        publishers=tuple(f"p{i}" for i in publisher_ids[:n_docs]),
    )


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture
def tiny_params(tiny):
    return init_params(tiny, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(LINES):
            terminalreporter.write_line(LINES[number])
