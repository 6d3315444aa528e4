"""Binary classification metrics and the one-sided paired Wilcoxon signed-rank test.

Label 1 is true news throughout; AUC is computed with true news as the
positive class.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import MetricUndefinedError, TestUndefinedError

EXACT_WILCOXON_MAX_N = 20


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC; tied (positive, negative) pairs count one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs both classes present")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ClassMetrics:
    f1: float
    precision: float
    recall: float


@dataclass
class EvalReport:
    """Metrics for one evaluated set; confusion counts take true news as positive."""

    auc: float | None
    f1_macro: float
    f1_micro: float
    true_news: ClassMetrics
    fake_news: ClassMetrics
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "f1_macro": self.f1_macro,
            "f1_micro": self.f1_micro,
            "true_news_as_positive": asdict(self.true_news),
            "fake_news_as_positive": asdict(self.fake_news),
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        c = d["confusion"]
        return cls(d["auc"], d["f1_macro"], d["f1_micro"],
                   ClassMetrics(**d["true_news_as_positive"]),
                   ClassMetrics(**d["fake_news_as_positive"]),
                   c["tp"], c["fp"], c["tn"], c["fn"])


def _prf(tp: int, fp: int, fn: int) -> ClassMetrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(f1, precision, recall)


def classification_metrics(scores: Sequence[float], labels: Sequence[int],
                           threshold: float = 0.5) -> EvalReport:
    """Threshold-based metrics; the returned report has ``auc=None``."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pred = s >= threshold
    pos = y == 1
    tp = int((pred & pos).sum())
    fp = int((pred & ~pos).sum())
    fn = int((~pred & pos).sum())
    tn = int((~pred & ~pos).sum())
    true_news = _prf(tp, fp, fn)
    fake_news = _prf(tn, fn, fp)
    # pooled counts over both classes: every error is one FP and one FN
    total = tp + fp + tn + fn
    f1_micro = (tp + tn) / total if total else 0.0
    return EvalReport(None, (true_news.f1 + fake_news.f1) / 2.0, f1_micro,
                      true_news, fake_news, tp, fp, tn, fn)


def evaluate(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> EvalReport:
    report = classification_metrics(scores, labels, threshold)
    report.auc = roc_auc(scores, labels)
    return report


@dataclass
class AggregateReport:
    """Per-fold reports plus their metric means and standard deviations."""

    folds: list[EvalReport] = field(default_factory=list)

    def metric(self, name: str) -> np.ndarray:
        return np.array([_lookup(r.to_dict(), name) for r in self.folds], dtype=np.float64)

    def mean(self) -> dict:
        return _map_numeric([r.to_dict() for r in self.folds], np.mean)

    def std(self) -> dict:
        return _map_numeric([r.to_dict() for r in self.folds], np.std)

    def to_dict(self) -> dict:
        return {"folds": [r.to_dict() for r in self.folds], "mean": self.mean(), "std": self.std()}


def _lookup(d: dict, dotted: str):
    for part in dotted.split("."):
        d = d[part]
    return d


def _map_numeric(dicts: list[dict], fn):
    first = dicts[0]
    out = {}
    for key, val in first.items():
        if isinstance(val, dict):
            out[key] = _map_numeric([d[key] for d in dicts], fn)
        elif val is None:
            out[key] = None
        else:
            out[key] = float(fn([d[key] for d in dicts]))
    return out


# ----------------------------------------------------------------- Wilcoxon

@dataclass
class WilcoxonResult:
    statistic: float  # W+, sum of ranks of positive differences
    p_value: float
    n: int
    exact: bool


def _exact_upper_tail(doubled_ranks: np.ndarray, doubled_stat: int) -> float:
    """P(W+ >= stat) under random signs, by counting subsets of (doubled, integer) ranks."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        counts[r:] = counts[r:] + counts[:total + 1 - r].copy()
    hits = sum(counts[doubled_stat:])
    return float(hits / (2 ** len(doubled_ranks)))


def wilcoxon_one_sided(a: Sequence[float], b: Sequence[float]) -> WilcoxonResult:
    """Paired signed-rank test of the alternative ``a > b``.

    Zero differences are dropped and tied magnitudes share their average rank.
    The p-value is exact (subset enumeration) for up to 20 non-zero pairs and
    uses the tie-corrected normal approximation with continuity correction
    beyond that.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("paired samples differ in length")
    if x.size < 5:
        raise ValueError("the signed-rank test needs at least 5 pairs")
    d = x - y
    d = d[d != 0]
    if d.size == 0:
        raise TestUndefinedError("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    n = d.size
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = _exact_upper_tail(doubled, int(round(2 * w_plus)))
        return WilcoxonResult(w_plus, p, n, True)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return WilcoxonResult(w_plus, p, n, False)
