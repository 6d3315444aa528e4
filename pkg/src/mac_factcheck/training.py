"""Optimisation and the evaluation protocol: Adam with L2, early stopping, cross-validation."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor_core as tc
from .data import ClaimRecord, Vocabularies, batches, encode_all, split_validation, stratified_folds
from .errors import ConfigError, NonFiniteGradientError
from .metrics import AggregateReport, EvalReport, evaluate
from .model import MacConfig, MacParams, batch_loss, init_params, predict_batch
from .tensor_core import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    weight_decay: float = 0.001
    decoupled_weight_decay: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 10
    threshold: float = 0.5
    val_fraction: float = 0.10
    folds: int = 5
    vocab_min_freq: int = 2
    workers: int = 1

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1 or self.folds < 2:
            raise ConfigError("batch_size, max_epochs, patience must be >= 1 and folds >= 2")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**values)


# ------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.001
    decoupled: bool = False
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "AdamState":
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay,
                   cfg.decoupled_weight_decay)


def adam_step(params: MacParams | Sequence[Tensor], state: AdamState) -> None:
    """One Adam update from the gradients stored on the tensors.

    By default the L2 term ``weight_decay * theta`` is added to the gradient
    before the moment updates; with ``state.decoupled`` it is applied to the
    parameter directly instead. PAD rows of embedding tables are re-zeroed.
    """
    model = params if isinstance(params, MacParams) else None
    tensors = model.trainable() if model is not None else [t for t in params if t.requires_grad]
    for t in tensors:
        if not np.all(np.isfinite(t.grad)):
            raise NonFiniteGradientError(t.name or "<unnamed>")
    if not state.m:
        state.m = [np.zeros_like(t.value) for t in tensors]
        state.v = [np.zeros_like(t.value) for t in tensors]
    state.t += 1
    b1, b2, lam = state.beta1, state.beta2, state.weight_decay
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for t, m, v in zip(tensors, state.m, state.v):
        g = t.grad
        if lam and not state.decoupled:
            g = g + lam * t.value
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        if lam and state.decoupled:
            t.value -= state.lr * lam * t.value
        t.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if model is not None:
        model.reset_pad_rows()


def train_epoch(params: MacParams, state: AdamState, instances: Sequence, cfg: MacConfig,
                seed: int, epoch: int, batch_size: int = 32) -> float:
    """One pass over ``instances`` in mini-batches; returns the instance-weighted mean loss."""
    tensors = params.trainable()
    total = 0.0
    for batch in batches(instances, batch_size, seed, epoch):
        tc.zero_grad(tensors)
        with tc.Tape() as tape:
            loss = batch_loss(params, cfg, batch)
        tc.backward(loss, tape)
        adam_step(params, state)
        total += loss.item() * len(batch)
    return total / max(len(instances), 1)


# ---------------------------------------------------------- early stopping

@dataclass
class EarlyStopState:
    patience: int = 10
    best_f1_macro: float = -np.inf
    best_auc: float = -np.inf
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    best_checkpoint: object = None


def early_stop_update(state: EarlyStopState, epoch: int, val_f1_macro: float, val_auc: float,
                      checkpoint=None) -> bool:
    """Record one validation result; returns True when training should stop.

    An epoch improves on the best when its F1-macro is higher, or equal
    (within 1e-12) with a higher AUC.
    """
    same_f1 = abs(val_f1_macro - state.best_f1_macro) <= 1e-12
    improved = (val_f1_macro > state.best_f1_macro and not same_f1) or (
        same_f1 and val_auc > state.best_auc)
    if improved:
        state.best_f1_macro = val_f1_macro
        state.best_auc = val_auc
        state.best_epoch = epoch
        state.best_checkpoint = checkpoint
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
    return state.epochs_since_improvement >= state.patience


# ------------------------------------------------------------- evaluation

def evaluate_instances(params: MacParams, cfg: MacConfig, instances: Sequence,
                       threshold: float = 0.5) -> EvalReport:
    preds = predict_batch(params, cfg, instances)
    return evaluate([p.y_hat for p in preds], [inst.label for inst in instances], threshold)


@dataclass
class FoldResult:
    fold: int
    report: EvalReport
    params: MacParams
    cfg: MacConfig
    vocabs: Vocabularies
    history: list[dict]
    best_epoch: int
    seed: int


@dataclass
class CVResult:
    folds: list[FoldResult]
    validation_keys: list[str]

    @property
    def aggregate(self) -> AggregateReport:
        return AggregateReport([f.report for f in self.folds])

    def to_dict(self) -> dict:
        out = self.aggregate.to_dict()
        out["best_epochs"] = [f.best_epoch for f in self.folds]
        return out


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def train_with_early_stopping(params: MacParams, cfg: MacConfig, train_cfg: TrainConfig,
                              train: Sequence, validation: Sequence, seed: int,
                              on_epoch: Callable[[dict], None] | None = None
                              ) -> tuple[list[dict], int]:
    """Train until validation F1-macro stalls for ``patience`` epochs, then restore the best epoch."""
    state = AdamState.from_config(train_cfg)
    stopper = EarlyStopState(patience=train_cfg.patience)
    history = []
    for epoch in range(1, train_cfg.max_epochs + 1):
        train_loss = train_epoch(params, state, train, cfg, seed, epoch, train_cfg.batch_size)
        val = evaluate_instances(params, cfg, validation, train_cfg.threshold)
        stop = early_stop_update(stopper, epoch, val.f1_macro, val.auc,
                                 params.snapshot())
        row = {"epoch": epoch, "train_loss": train_loss, "val_f1_macro": val.f1_macro,
               "val_auc": val.auc, "stopped": stop or epoch == train_cfg.max_epochs}
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if stop:
            break
    if stopper.best_checkpoint is not None:
        params.restore(stopper.best_checkpoint)
    return history, stopper.best_epoch


def _run_fold(args) -> FoldResult:
    (fold, train_records, test_records, val_records, cfg, train_cfg, seed, glove) = args
    vocabs = Vocabularies.build(train_records, train_cfg.vocab_min_freq)
    fold_cfg = cfg.replace(vocab_size=len(vocabs.words), n_speakers=len(vocabs.speakers),
                           n_publishers=len(vocabs.publishers))
    train = encode_all(train_records, vocabs, fold_cfg)
    test = encode_all(test_records, vocabs, fold_cfg)
    val = encode_all(val_records, vocabs, fold_cfg)
    s = fold_seed(seed, fold)
    params = init_params(fold_cfg, s, glove, vocabs.words.tokens)
    rows = []

    def record(row):
        row = {"fold": fold, **row}
        rows.append(row)
        log.debug(json.dumps(row))

    history, best = train_with_early_stopping(params, fold_cfg, train_cfg, train, val, s, record)
    report = evaluate_instances(params, fold_cfg, test, train_cfg.threshold)
    return FoldResult(fold, report, params, fold_cfg, vocabs, rows, best, s)


def run_cv(records: Sequence[ClaimRecord], cfg: MacConfig, train_cfg: TrainConfig, seed: int,
           glove: Mapping[str, np.ndarray] | None = None,
           on_epoch: Callable[[dict], None] | None = None) -> CVResult:
    """Stratified validation holdout, then stratified k-fold CV on the remainder.

    Folds run in parallel processes when ``train_cfg.workers > 1``; results and
    epoch-log rows are always reported in fold order.
    """
    records = list(records)
    if cfg.use_speakers and all(r.speaker is None for r in records):
        log.info("corpus has no speakers; disabling the speaker channel")
        cfg = cfg.replace(use_speakers=False)
    rest, val = split_validation(records, train_cfg.val_fraction, seed)
    splits = stratified_folds(rest, train_cfg.folds, seed)
    jobs = [(i, [rest[j] for j in tr], [rest[j] for j in te], val, cfg, train_cfg, seed, glove)
            for i, (tr, te) in enumerate(splits)]
    workers = max(1, int(train_cfg.workers))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(job) for job in jobs]
    if on_epoch is not None:
        for res in results:
            for row in res.history:
                on_epoch(row)
    return CVResult(results, [r.claim_id for r in val])


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("MAC_WORKERS", "1")))
    except ValueError:
        raise ConfigError("MAC_WORKERS must be an integer") from None
