"""Multi-head additive attention over words and over evidence documents.

Both levels share one mechanism: the query vector is replicated once per item,
concatenated to the items, squashed through ``tanh(. @ proj)`` and scored by
one column of ``heads`` per attention head. Each head's scores are normalised
down the item axis, and the head-weighted sums of the items are laid end to
end (head 0 first).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .errors import ShapeError
from .tensor_core import Tensor


@dataclass
class MultiHeadAttentionParams:
    proj: Tensor   # (item_width + query_width) x attn_size, no bias
    heads: Tensor  # attn_size x n_heads

    @property
    def n_heads(self) -> int:
        return self.heads.cols

    def tensors(self) -> list[Tensor]:
        return [self.proj, self.heads]

    @classmethod
    def init(cls, in_dim: int, attn_size: int, n_heads: int, rng: np.random.Generator,
             name: str) -> "MultiHeadAttentionParams":
        b1 = 1.0 / np.sqrt(in_dim)
        b2 = 1.0 / np.sqrt(attn_size)
        return cls(
            Tensor(rng.uniform(-b1, b1, size=(in_dim, attn_size)), True, f"{name}.proj"),
            Tensor(rng.uniform(-b2, b2, size=(attn_size, n_heads)), True, f"{name}.heads"),
        )


@dataclass
class AttentionTrace:
    """Attention weights of one forward pass, kept for explanation export.

    ``word_weights[j]`` is the ``m x h1`` matrix of document slot ``j`` (None for
    empty slots); ``doc_weights`` is ``k x h2``.
    """

    word_weights: list[np.ndarray | None] = field(default_factory=list)
    doc_weights: np.ndarray | None = None
    claim_tokens: tuple[str, ...] = ()
    doc_tokens: tuple[tuple[str, ...], ...] = ()
    doc_ids: tuple[str, ...] = ()


def multi_head_attend(items: Tensor, context: Tensor, params: MultiHeadAttentionParams,
                      mask=None) -> tuple[Tensor, Tensor]:
    """Attend over the rows of ``items`` given a one-row ``context``.

    Returns ``(attended, weights)`` with ``attended`` of shape ``1 x (h*w)`` and
    ``weights`` of shape ``r x h``.
    """
    if context.rows != 1:
        raise ShapeError(f"context must be a single row, got {context.shape}")
    if params.proj.rows != items.cols + context.cols:
        raise ShapeError(
            f"projection expects {params.proj.rows} input columns, got items {items.shape} "
            f"+ context {context.shape}")
    joined = tc.concat_last(items, tc.repeat_rows(context, items.rows))
    scores = tc.matmul(tc.tanh(tc.matmul(joined, params.proj)), params.heads)
    weights = tc.softmax_columns(scores, mask)
    attended = tc.flatten_row_major(tc.matmul(tc.transpose(weights), items))
    return attended, weights


def word_attention(doc_states: Tensor, claim_vec: Tensor, params: MultiHeadAttentionParams,
                   word_mask=None) -> tuple[Tensor, Tensor]:
    """Document vector of width ``h1*2H`` from its BiLSTM states and the text-only claim vector."""
    if doc_states.cols != claim_vec.cols:
        raise ShapeError(f"document states {doc_states.shape} vs claim vector {claim_vec.shape}")
    return multi_head_attend(doc_states, claim_vec, params, word_mask)


def extend_claim(claim_vec: Tensor, speaker_emb: Tensor | None = None) -> Tensor:
    if speaker_emb is None:
        return claim_vec
    return tc.concat_last(claim_vec, speaker_emb)


def extend_document(doc_vec: Tensor, publisher_emb: Tensor | None = None) -> Tensor:
    if publisher_emb is None:
        return doc_vec
    return tc.concat_last(doc_vec, publisher_emb)


def document_attention(doc_matrix: Tensor, claim_ext: Tensor, params: MultiHeadAttentionParams,
                       doc_mask=None) -> tuple[Tensor, Tensor]:
    """Evidence summary of width ``h2*y`` over the stacked extended documents."""
    return multi_head_attend(doc_matrix, claim_ext, params, doc_mask)
