"""The full claim-verification network: configuration, parameters, forward pass and loss."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from . import tensor_core as tc
from .attention import (AttentionTrace, MultiHeadAttentionParams, document_attention,
                        extend_claim, extend_document, word_attention)
from .errors import ConfigError, ContractError, DegenerateInputError
from .nn_layers import (UNK_ID, BiLstm, EmbeddingTable, bilstm_encode, bilstm_encode_many,
                        embed_sequence, linear)
from .tensor_core import Tensor

if TYPE_CHECKING:
    from .data import ClaimInstance

ATTENTION_MODES = ("multi_head", "mean_pool")
MLP_ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class MacConfig:
    """Architecture hyperparameters. ``None`` sizes resolve to ``2 * hidden_size``."""

    hidden_size: int = 300
    embed_dim: int = 300
    speaker_dim: int = 128
    publisher_dim: int = 128
    word_heads: int = 5
    doc_heads: int = 2
    word_attn_size: int | None = None
    doc_attn_size: int | None = None
    claim_len: int = 30
    doc_len: int = 100
    max_docs: int = 30
    use_speakers: bool = False
    use_publishers: bool = True
    word_attention: str = "multi_head"
    doc_attention: str = "multi_head"
    mlp_hidden: int | None = None
    mlp_activation: str = "tanh"
    vocab_size: int = 2
    n_speakers: int = 2
    n_publishers: int = 2

    def __post_init__(self):
        for key in ("word_attn_size", "doc_attn_size", "mlp_hidden"):
            if getattr(self, key) is None:
                object.__setattr__(self, key, 2 * self.hidden_size)
        for key in ("hidden_size", "embed_dim", "speaker_dim", "publisher_dim", "word_heads",
                    "doc_heads", "word_attn_size", "doc_attn_size", "claim_len", "doc_len",
                    "max_docs", "mlp_hidden"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{key} must be a positive count")
        if self.vocab_size < 2 or self.n_speakers < 2 or self.n_publishers < 2:
            raise ConfigError("tables need at least the PAD and UNK rows")
        if self.word_attention not in ATTENTION_MODES or self.doc_attention not in ATTENTION_MODES:
            raise ConfigError(f"attention modes must be one of {ATTENTION_MODES}")
        if self.mlp_activation not in MLP_ACTIVATIONS:
            raise ConfigError(f"mlp_activation must be one of {MLP_ACTIVATIONS}")

    def replace(self, **changes) -> "MacConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping) -> "MacConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**values)

    @property
    def claim_width(self) -> int:
        """Width of the claim vector after the optional speaker extension."""
        return 2 * self.hidden_size + (self.speaker_dim if self.use_speakers else 0)

    @property
    def doc_width(self) -> int:
        """Width of one document vector after the optional publisher extension."""
        base = 2 * self.hidden_size
        if self.word_attention == "multi_head":
            base *= self.word_heads
        return base + (self.publisher_dim if self.use_publishers else 0)

    @property
    def evidence_width(self) -> int:
        heads = self.doc_heads if self.doc_attention == "multi_head" else 1
        return heads * self.doc_width

    @property
    def mlp_input(self) -> int:
        return self.claim_width + self.evidence_width


def param_shapes(cfg: MacConfig) -> list[tuple[str, tuple[int, int]]]:
    """Ordered ``(name, shape)`` of every learnable tensor; the checkpoint blob layout."""
    H, D = cfg.hidden_size, cfg.embed_dim
    shapes = [("word_table", (cfg.vocab_size, D))]
    if cfg.use_speakers:
        shapes.append(("speaker_table", (cfg.n_speakers, cfg.speaker_dim)))
    if cfg.use_publishers:
        shapes.append(("publisher_table", (cfg.n_publishers, cfg.publisher_dim)))
    for enc in ("claim_encoder", "doc_encoder"):
        for direction in ("fwd", "bwd"):
            shapes += [(f"{enc}.{direction}.w", (D, 4 * H)),
                       (f"{enc}.{direction}.u", (H, 4 * H)),
                       (f"{enc}.{direction}.b", (1, 4 * H))]
    if cfg.word_attention == "multi_head":
        shapes += [("word_attn.proj", (4 * H, cfg.word_attn_size)),
                   ("word_attn.heads", (cfg.word_attn_size, cfg.word_heads))]
    if cfg.doc_attention == "multi_head":
        shapes += [("doc_attn.proj", (cfg.doc_width + cfg.claim_width, cfg.doc_attn_size)),
                   ("doc_attn.heads", (cfg.doc_attn_size, cfg.doc_heads))]
    shapes += [("mlp.hidden_w", (cfg.mlp_input, cfg.mlp_hidden)),
               ("mlp.hidden_b", (1, cfg.mlp_hidden)),
               ("mlp.out_w", (cfg.mlp_hidden, 1)),
               ("mlp.out_b", (1, 1))]
    return shapes


def param_count(cfg: MacConfig) -> int:
    return sum(r * c for _, (r, c) in param_shapes(cfg))


@dataclass
class MacParams:
    word_table: EmbeddingTable
    speaker_table: EmbeddingTable | None
    publisher_table: EmbeddingTable | None
    claim_encoder: BiLstm
    doc_encoder: BiLstm
    word_attn: MultiHeadAttentionParams | None
    doc_attn: MultiHeadAttentionParams | None
    mlp_hidden_w: Tensor
    mlp_hidden_b: Tensor
    mlp_out_w: Tensor
    mlp_out_b: Tensor

    def tensors(self) -> list[Tensor]:
        out = [self.word_table.table]
        for table in (self.speaker_table, self.publisher_table):
            if table is not None:
                out.append(table.table)
        out += self.claim_encoder.tensors() + self.doc_encoder.tensors()
        for attn in (self.word_attn, self.doc_attn):
            if attn is not None:
                out += attn.tensors()
        out += [self.mlp_hidden_w, self.mlp_hidden_b, self.mlp_out_w, self.mlp_out_b]
        return out

    def trainable(self) -> list[Tensor]:
        return [t for t in self.tensors() if t.requires_grad]

    def tables(self) -> list[EmbeddingTable]:
        return [t for t in (self.word_table, self.speaker_table, self.publisher_table)
                if t is not None]

    def reset_pad_rows(self) -> None:
        for table in self.tables():
            table.reset_pad()

    def snapshot(self) -> list[np.ndarray]:
        return [t.value.copy() for t in self.tensors()]

    def restore(self, values: Sequence[np.ndarray]) -> None:
        tensors = self.tensors()
        if len(values) != len(tensors):
            raise ContractError("snapshot does not match parameter layout")
        for t, v in zip(tensors, values):
            if t.value.shape != v.shape:
                raise ContractError(f"snapshot shape {v.shape} for {t.name} {t.shape}")
            t.value[...] = v

    def check_against(self, cfg: MacConfig) -> None:
        expected = param_shapes(cfg)
        actual = [(t.name, t.shape) for t in self.tensors()]
        if expected != actual:
            raise ContractError("parameters were built for a different configuration")


def init_params(cfg: MacConfig, seed: int, glove: Mapping[str, np.ndarray] | None = None,
                vocab_tokens: Sequence[str] | None = None, *, train_words: bool = True) -> MacParams:
    """Fresh parameters, deterministic in ``seed``.

    Word rows start uniform in [-0.1, 0.1] and are overwritten by the GloVe vector
    of the token when ``glove`` has one; speaker and publisher rows start uniform
    in [-0.2, 0.2]. Row 0 of every table is the zero PAD vector.
    """
    rng = np.random.default_rng(seed)
    H, D = cfg.hidden_size, cfg.embed_dim

    word = EmbeddingTable.uniform(cfg.vocab_size, D, 0.1, rng, "word_table", train_words)
    if glove:
        if vocab_tokens is None or len(vocab_tokens) != cfg.vocab_size:
            raise ConfigError("GloVe initialisation needs the vocabulary token list")
        for i, token in enumerate(vocab_tokens):
            if i == 0:
                continue
            vec = glove.get(token)
            if vec is None:
                continue
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (D,):
                raise ConfigError(f"GloVe vector of dimension {vec.size} but embed_dim={D}")
            word.table.value[i] = vec

    speaker = (EmbeddingTable.uniform(cfg.n_speakers, cfg.speaker_dim, 0.2, rng, "speaker_table")
               if cfg.use_speakers else None)
    publisher = (EmbeddingTable.uniform(cfg.n_publishers, cfg.publisher_dim, 0.2, rng,
                                        "publisher_table")
                 if cfg.use_publishers else None)
    claim_enc = BiLstm.init(D, H, rng, "claim_encoder")
    doc_enc = BiLstm.init(D, H, rng, "doc_encoder")
    word_attn = (MultiHeadAttentionParams.init(4 * H, cfg.word_attn_size, cfg.word_heads, rng,
                                               "word_attn")
                 if cfg.word_attention == "multi_head" else None)
    doc_attn = (MultiHeadAttentionParams.init(cfg.doc_width + cfg.claim_width, cfg.doc_attn_size,
                                              cfg.doc_heads, rng, "doc_attn")
                if cfg.doc_attention == "multi_head" else None)

    def dense(rows, cols, name):
        bound = 1.0 / np.sqrt(rows)
        return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), True, name)

    return MacParams(
        word_table=word, speaker_table=speaker, publisher_table=publisher,
        claim_encoder=claim_enc, doc_encoder=doc_enc, word_attn=word_attn, doc_attn=doc_attn,
        mlp_hidden_w=dense(cfg.mlp_input, cfg.mlp_hidden, "mlp.hidden_w"),
        mlp_hidden_b=Tensor(np.zeros((1, cfg.mlp_hidden)), True, "mlp.hidden_b"),
        mlp_out_w=dense(cfg.mlp_hidden, 1, "mlp.out_w"),
        mlp_out_b=Tensor(np.zeros((1, 1)), True, "mlp.out_b"),
    )


@dataclass
class Prediction:
    y_hat: float
    trace: AttentionTrace | None = None
    logit: Tensor | None = None


def _check_instance(cfg: MacConfig, inst: "ClaimInstance") -> None:
    if inst.claim_ids.shape != (cfg.claim_len,) or inst.doc_ids.shape != (cfg.max_docs, cfg.doc_len):
        raise ContractError(
            f"instance {inst.claim_key!r} was encoded for different lengths: claim "
            f"{inst.claim_ids.shape}, docs {inst.doc_ids.shape}")


def forward_logit(params: MacParams, cfg: MacConfig, inst: "ClaimInstance",
                  want_trace: bool = False) -> tuple[Tensor, AttentionTrace | None]:
    """Pre-sigmoid score of one claim and, optionally, its attention weights."""
    _check_instance(cfg, inst)
    k, m = inst.doc_ids.shape

    claim_x = embed_sequence(params.word_table, inst.claim_ids)
    claim_states = bilstm_encode(params.claim_encoder, claim_x, inst.claim_mask)
    claim_vec = tc.mean_rows(claim_states, inst.claim_mask)

    real = np.flatnonzero(inst.doc_mask)
    if real.size == 0:
        raise DegenerateInputError(f"claim {inst.claim_key!r} has no evidence documents")
    token_mask = inst.token_mask[real]
    doc_x = embed_sequence(params.word_table, inst.doc_ids[real].reshape(-1))
    states = bilstm_encode_many(params.doc_encoder, doc_x, real.size, token_mask)
    pubs = None
    if cfg.use_publishers:
        pubs = embed_sequence(params.publisher_table, inst.publisher_ids[real])

    word_weights: list[np.ndarray | None] = [None] * k
    doc_rows: list[Tensor | None] = [None] * k
    for j, slot in enumerate(real):
        doc_states = states if real.size == 1 else tc.slice_rows(states, j * m, (j + 1) * m)
        if cfg.word_attention == "multi_head":
            doc_vec, a1 = word_attention(doc_states, claim_vec, params.word_attn, token_mask[j])
            weights = a1.value
        else:
            doc_vec = tc.mean_rows(doc_states, token_mask[j])
            weights = (token_mask[j] / token_mask[j].sum()).reshape(-1, 1)
        if pubs is not None:
            pub = pubs if real.size == 1 else tc.slice_rows(pubs, j, j + 1)
            doc_vec = extend_document(doc_vec, pub)
        doc_rows[slot] = doc_vec
        word_weights[slot] = weights

    empty = Tensor(np.zeros((1, cfg.doc_width)))
    doc_matrix = tc.stack_rows([row if row is not None else empty for row in doc_rows])

    speaker = None
    if cfg.use_speakers:
        sid = UNK_ID if inst.speaker_id is None else inst.speaker_id
        speaker = embed_sequence(params.speaker_table, [sid])
    claim_ext = extend_claim(claim_vec, speaker)

    if cfg.doc_attention == "multi_head":
        evidence, a2 = document_attention(doc_matrix, claim_ext, params.doc_attn, inst.doc_mask)
        doc_weights = a2.value
    else:
        evidence = tc.mean_rows(doc_matrix, inst.doc_mask)
        doc_weights = (inst.doc_mask / inst.doc_mask.sum()).reshape(-1, 1)

    hidden = linear(params.mlp_hidden_w, params.mlp_hidden_b, tc.concat_last(claim_ext, evidence))
    if cfg.mlp_activation == "tanh":
        hidden = tc.tanh(hidden)
    logit = linear(params.mlp_out_w, params.mlp_out_b, hidden)

    trace = None
    if want_trace:
        trace = AttentionTrace(word_weights=word_weights, doc_weights=doc_weights,
                               claim_tokens=inst.claim_tokens, doc_tokens=inst.doc_tokens,
                               doc_ids=inst.publishers)
    return logit, trace


def _probability(logit: Tensor) -> float:
    p = float(tc._sigmoid(logit.value)[0, 0])
    return min(max(p, tc.PROB_CLAMP), 1.0 - tc.PROB_CLAMP)


def forward(params: MacParams, cfg: MacConfig, inst: "ClaimInstance",
            want_trace: bool = False) -> Prediction:
    params.check_against(cfg)
    logit, trace = forward_logit(params, cfg, inst, want_trace)
    return Prediction(_probability(logit), trace, logit)


def loss(y_hat, y) -> Tensor:
    """Cross-entropy of one predicted probability (float or 1x1 tensor) against a 0/1 label."""
    if not isinstance(y_hat, Tensor):
        y_hat = Tensor([[float(y_hat)]])
    return tc.binary_cross_entropy(y_hat, y)


def batch_loss(params: MacParams, cfg: MacConfig, instances: Sequence["ClaimInstance"]) -> Tensor:
    """Mean cross-entropy over a mini-batch, computed from logits."""
    if not instances:
        raise DegenerateInputError("empty batch")
    params.check_against(cfg)
    losses = [tc.bce_with_logits(forward_logit(params, cfg, inst)[0], inst.label)
              for inst in instances]
    if len(losses) == 1:
        return losses[0]
    return tc.mean_rows(tc.stack_rows(losses))


def predict_batch(params: MacParams, cfg: MacConfig, instances: Sequence["ClaimInstance"],
                  want_trace: bool = False) -> list[Prediction]:
    if not instances:
        return []
    params.check_against(cfg)
    return [Prediction(_probability(logit), trace, logit)
            for logit, trace in (forward_logit(params, cfg, inst, want_trace)
                                 for inst in instances)]
