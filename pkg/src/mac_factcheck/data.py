"""Corpus ingestion, vocabularies, instance encoding and the split protocol.

The canonical corpus is UTF-8 JSON lines, one claim per line::

    {"claim_id": "...", "claim_text": "...", "speaker": null, "label": "mostly true",
     "evidence": [{"text": "...", "publisher": "nytimes.com"}, ...]}
"""
from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DegenerateInputError, GloveFormatError, LabelError, ParseError, SplitError
from .nn_layers import PAD_ID, UNK_ID

log = logging.getLogger(__name__)

SCHEMAS = ("snopes", "politifact")
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_TRUE_LABELS = {
    "snopes": {"true"},
    "politifact": {"true", "mostly true", "half true"},
}
_FALSE_LABELS = {
    "snopes": {"false"},
    "politifact": {"false", "mostly false", "pants on fire"},
}
_LABEL_ALIASES = {"pants fire": "pants on fire"}


def _check_schema(schema: str) -> None:
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")


def merge_labels(raw_label: str, schema: str) -> int:
    """Map a raw verdict to 1 (true news) or 0 (fake news).

    Case, hyphens and underscores are ignored, so ``"Half-True"`` and
    ``"half_true"`` both read as ``"half true"``.
    """
    _check_schema(schema)
    norm = " ".join(str(raw_label).lower().replace("-", " ").replace("_", " ").split())
    norm = _LABEL_ALIASES.get(norm, norm)
    if norm in _TRUE_LABELS[schema]:
        return 1
    if norm in _FALSE_LABELS[schema]:
        return 0
    raise LabelError(f"unrecognised {schema} label {raw_label!r}")


def normalize_text(text: str) -> str:
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class Evidence:
    text: str
    publisher: str


@dataclass(frozen=True)
class ClaimRecord:
    """One parsed corpus line; ``label`` is already merged to 0/1."""

    claim_id: str
    claim_text: str
    speaker: str | None
    label: int
    raw_label: str
    evidence: tuple[Evidence, ...]

    def to_json(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "claim_text": self.claim_text,
            "speaker": self.speaker,
            "label": self.raw_label,
            "evidence": [{"text": e.text, "publisher": e.publisher} for e in self.evidence],
        }


@dataclass
class CorpusStats:
    true_claims: int = 0
    false_claims: int = 0
    speakers: int | None = None
    documents: int = 0
    publishers: int = 0
    dropped_no_evidence: int = 0
    dropped_empty_claim: int = 0
    dropped_empty_documents: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def corpus_stats(records: Sequence[ClaimRecord], schema: str) -> CorpusStats:
    stats = CorpusStats()
    speakers: set[str] = set()
    publishers: set[str] = set()
    for r in records:
        if r.label == 1:
            stats.true_claims += 1
        else:
            stats.false_claims += 1
        if r.speaker is not None:
            speakers.add(r.speaker)
        stats.documents += len(r.evidence)
        publishers.update(e.publisher for e in r.evidence)
    stats.speakers = None if schema == "snopes" else len(speakers)
    stats.publishers = len(publishers)
    return stats


def parse_record(obj: dict, schema: str, line: int | None = None) -> ClaimRecord:
    """Build a record from one decoded JSON object (no dropping, no stats)."""
    try:
        claim_id = str(obj["claim_id"])
        text = obj["claim_text"]
        raw_label = obj["label"]
        evidence = obj["evidence"]
        speaker = obj.get("speaker")
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing field {exc}", line) from None
    if not isinstance(text, str) or not isinstance(evidence, list):
        raise ParseError("claim_text must be a string and evidence a list", line)
    try:
        label = merge_labels(raw_label, schema)
    except LabelError as exc:
        raise LabelError(f"line {line}: {exc}" if line is not None else str(exc)) from None
    docs = []
    for ev in evidence:
        if not isinstance(ev, dict) or not isinstance(ev.get("text"), str):
            raise ParseError("evidence entries need a text field", line)
        publisher = ev.get("publisher")
        docs.append(Evidence(normalize_text(ev["text"]),
                             "unknown" if publisher is None else str(publisher)))
    if schema == "snopes":
        speaker = None
    elif speaker is not None:
        speaker = normalize_text(str(speaker)) or None
    return ClaimRecord(claim_id, normalize_text(text), speaker, label, str(raw_label), tuple(docs))


def load_corpus(path, schema: str) -> tuple[list[ClaimRecord], CorpusStats]:
    """Read a JSONL corpus. Claims left with no evidence are dropped and counted."""
    _check_schema(schema)
    records: list[ClaimRecord] = []
    no_evidence = empty_claim = empty_docs = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            rec = parse_record(obj, schema, lineno)
            kept = tuple(e for e in rec.evidence if e.text)
            empty_docs += len(rec.evidence) - len(kept)
            if not rec.claim_text:
                empty_claim += 1
                continue
            if not kept:
                no_evidence += 1
                continue
            if len(kept) != len(rec.evidence):
                rec = ClaimRecord(rec.claim_id, rec.claim_text, rec.speaker, rec.label,
                                  rec.raw_label, kept)
            records.append(rec)
    if no_evidence or empty_claim:
        log.info("dropped %d claims without evidence and %d with empty text",
                 no_evidence, empty_claim)
    stats = corpus_stats(records, schema)
    stats.dropped_no_evidence = no_evidence
    stats.dropped_empty_claim = empty_claim
    stats.dropped_empty_documents = empty_docs
    return records, stats


def dumps_record(record: ClaimRecord) -> str:
    return json.dumps(record.to_json(), ensure_ascii=False, sort_keys=False)


def write_corpus(records: Iterable[ClaimRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")


# ------------------------------------------------------------- vocabularies

class Vocabulary:
    """Token to id map with ``0 = <pad>`` and ``1 = <unk>``."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            tokens = [PAD_TOKEN, UNK_TOKEN] + [t for t in tokens if t not in (PAD_TOKEN, UNK_TOKEN)]
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")

    @classmethod
    def build(cls, sequences: Iterable[Iterable[str]], min_freq: int = 1) -> "Vocabulary":
        """Tokens seen at least ``min_freq`` times, most frequent first, ties by string order."""
        counts = Counter()
        for seq in sequences:
            counts.update(seq)
        counts.pop(PAD_TOKEN, None)
        counts.pop(UNK_TOKEN, None)
        kept = sorted((t for t, c in counts.items() if c >= min_freq),
                      key=lambda t: (-counts[t], t))
        return cls(kept)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids if i != PAD_ID]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()


@dataclass
class Vocabularies:
    words: Vocabulary
    speakers: Vocabulary
    publishers: Vocabulary

    @classmethod
    def build(cls, records: Sequence[ClaimRecord], min_freq: int = 2) -> "Vocabularies":
        def texts():
            for r in records:
                yield tokenize(r.claim_text)
                for e in r.evidence:
                    yield tokenize(e.text)

        return cls(
            Vocabulary.build(texts(), min_freq),
            Vocabulary.build(([r.speaker] for r in records if r.speaker is not None), 1),
            Vocabulary.build(([e.publisher for e in r.evidence] for r in records), 1),
        )

    def to_json(self) -> dict:
        return {"words": self.words.tokens, "speakers": self.speakers.tokens,
                "publishers": self.publishers.tokens}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabularies":
        return cls(Vocabulary(obj["words"]), Vocabulary(obj["speakers"]),
                   Vocabulary(obj["publishers"]))


# ---------------------------------------------------------------- encoding

@dataclass(frozen=True, eq=False)
class ClaimInstance:
    """A claim encoded to fixed-size id arrays plus validity masks.

    ``doc_ids`` and ``token_mask`` are ``max_docs x doc_len``; rows of unused
    document slots are all PAD and flagged off in ``doc_mask``.
    """

    claim_key: str
    claim_ids: np.ndarray
    claim_mask: np.ndarray
    speaker_id: int | None
    doc_ids: np.ndarray
    token_mask: np.ndarray
    publisher_ids: np.ndarray
    doc_mask: np.ndarray
    label: int
    claim_tokens: tuple[str, ...] = ()
    doc_tokens: tuple[tuple[str, ...], ...] = ()
    publishers: tuple[str, ...] = field(default=())


def _pad(ids: list[int], length: int) -> tuple[np.ndarray, np.ndarray]:
    out = np.zeros(length, dtype=np.int64)
    out[:len(ids)] = ids
    mask = np.zeros(length, dtype=bool)
    mask[:len(ids)] = True
    return out, mask


def encode_instance(record: ClaimRecord, vocabs: Vocabularies, cfg) -> ClaimInstance:
    """Truncate, pad and id-encode one record with lengths taken from ``cfg``."""
    n, m, k = cfg.claim_len, cfg.doc_len, cfg.max_docs
    claim_tokens = tokenize(record.claim_text)[:n]
    if not claim_tokens:
        raise DegenerateInputError(f"claim {record.claim_id!r} has empty text")
    if not record.evidence:
        raise DegenerateInputError(f"claim {record.claim_id!r} has no evidence")
    claim_ids, claim_mask = _pad(vocabs.words.encode(claim_tokens), n)

    docs = record.evidence[:k]
    doc_ids = np.zeros((k, m), dtype=np.int64)
    token_mask = np.zeros((k, m), dtype=bool)
    publisher_ids = np.zeros(k, dtype=np.int64)
    doc_mask = np.zeros(k, dtype=bool)
    doc_tokens = []
    for j, ev in enumerate(docs):
        toks = tokenize(ev.text)[:m]
        if not toks:
            raise DegenerateInputError(f"claim {record.claim_id!r}: document {j} is empty")
        doc_ids[j], token_mask[j] = _pad(vocabs.words.encode(toks), m)
        publisher_ids[j] = vocabs.publishers.id(ev.publisher)
        doc_mask[j] = True
        doc_tokens.append(tuple(toks))

    speaker_id = None if record.speaker is None else vocabs.speakers.id(record.speaker)
    return ClaimInstance(
        claim_key=record.claim_id, claim_ids=claim_ids, claim_mask=claim_mask,
        speaker_id=speaker_id, doc_ids=doc_ids, token_mask=token_mask,
        publisher_ids=publisher_ids, doc_mask=doc_mask, label=record.label,
        claim_tokens=tuple(claim_tokens), doc_tokens=tuple(doc_tokens),
        publishers=tuple(ev.publisher for ev in docs),
    )


def encode_all(records: Sequence[ClaimRecord], vocabs: Vocabularies, cfg) -> list[ClaimInstance]:
    return [encode_instance(r, vocabs, cfg) for r in records]


# ------------------------------------------------------------------- GloVe

@dataclass
class GloveReport:
    loaded: int = 0
    malformed: int = 0
    duplicates: int = 0


def load_glove(path, dim: int) -> tuple[dict[str, np.ndarray], GloveReport]:
    """Parse a GloVe text file (``token v1 ... vD`` per line).

    Malformed lines are skipped and counted; the first occurrence of a token
    wins. More than 1% of lines with the wrong dimension is a format error.
    """
    vectors: dict[str, np.ndarray] = {}
    report = GloveReport()
    lines = wrong_dim = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for raw in fh:
            parts = raw.split()
            if not parts:
                continue
            lines += 1
            if len(parts) - 1 != dim:
                wrong_dim += 1
                report.malformed += 1
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                report.malformed += 1
                continue
            if parts[0] in vectors:
                report.duplicates += 1
                continue
            vectors[parts[0]] = vec
    if lines and wrong_dim > 0.01 * lines:
        raise GloveFormatError(
            f"{wrong_dim} of {lines} lines in {path} do not have {dim} values")
    report.loaded = len(vectors)
    return vectors, report


# ------------------------------------------------------------------ splits

def _labels(items) -> np.ndarray:
    return np.array([x if isinstance(x, (int, np.integer)) else x.label for x in items],
                    dtype=np.int64)


def split_validation(items: Sequence, fraction: float = 0.10, seed: int = 0):
    """Hold out ``round(fraction * class size)`` items of each class.

    Returns ``(rest, validation)``, both in input order.
    """
    labels = _labels(items)
    rng = np.random.default_rng(seed)
    chosen = np.zeros(len(items), dtype=bool)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 10:
            raise SplitError(f"class {cls} has {idx.size} items; validation split needs >= 10")
        take = int(np.floor(fraction * idx.size + 0.5))
        chosen[rng.permutation(idx)[:take]] = True
    rest = [x for x, c in zip(items, chosen) if not c]
    val = [x for x, c in zip(items, chosen) if c]
    return rest, val


def stratified_folds(items: Sequence, folds: int = 5, seed: int = 0
                     ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-class shuffled partition into ``folds`` near-equal parts.

    Returns ``(train_idx, test_idx)`` pairs of sorted index arrays.
    """
    labels = _labels(items)
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in range(folds)]
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size == 0:
            continue
        if idx.size < folds:
            raise SplitError(f"class {cls} has {idx.size} items, fewer than {folds} folds")
        for i, chunk in enumerate(np.array_split(rng.permutation(idx), folds)):
            parts[i].append(chunk)
    everything = np.arange(len(items))
    out = []
    for i in range(folds):
        test = np.sort(np.concatenate(parts[i])) if parts[i] else np.array([], dtype=np.intp)
        out.append((np.setdiff1d(everything, test), test))
    return out


def batches(items: Sequence, size: int = 32, seed: int = 0, epoch: int = 0) -> Iterator[list]:
    """Shuffled mini-batches; the order depends only on ``(seed, epoch)``."""
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    for start in range(0, len(items), size):
        yield [items[i] for i in order[start:start + size]]
