"""Hierarchical multi-head attentive network for evidence-aware claim verification.

A scratch-built float64 autodiff core (:mod:`.tensor_core`) carries BiLSTM
encoders, multi-head word- and document-level attention, and an MLP head; the
:mod:`.training` module runs the stratified cross-validation protocol.
"""
from .attention import AttentionTrace, MultiHeadAttentionParams, multi_head_attend
from .data import (ClaimInstance, ClaimRecord, CorpusStats, Vocabularies, Vocabulary,
                   encode_instance, load_corpus, load_glove, merge_labels)
from .metrics import EvalReport, classification_metrics, evaluate, roc_auc, wilcoxon_one_sided
from .model import MacConfig, MacParams, Prediction, forward, init_params, predict_batch
from .tensor_core import Tape, Tensor, backward, grad_check
from .training import AdamState, TrainConfig, adam_step, run_cv, train_epoch

__version__ = "0.1.0"

__all__ = [
    "AttentionTrace", "MultiHeadAttentionParams", "multi_head_attend",
    "ClaimInstance", "ClaimRecord", "CorpusStats", "Vocabularies", "Vocabulary",
    "encode_instance", "load_corpus", "load_glove", "merge_labels",
    "EvalReport", "classification_metrics", "evaluate", "roc_auc", "wilcoxon_one_sided",
    "MacConfig", "MacParams", "Prediction", "forward", "init_params", "predict_batch",
    "Tape", "Tensor", "backward", "grad_check",
    "AdamState", "TrainConfig", "adam_step", "run_cv", "train_epoch",
]
