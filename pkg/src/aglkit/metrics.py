"""Per-model performance and pairwise agreement metrics.

Agreement applies the same per-example metric with the second model's
prediction in the gold slot; all three metrics are symmetric, so the
orientation does not matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import (
    METRIC_ACCURACY,
    METRIC_EXACT_MATCH,
    METRIC_F1,
    METRICS_BY_TASK,
    ClassificationLog,
    SpanLog,
)
from .errors import EmptyLog, InsufficientModels, MetricTaskMismatch, ShapeMismatch


@dataclass
class AgreementMatrix:
    """Symmetric pairwise agreement for one split under one metric."""
    model_ids: list[str]
    values: np.ndarray
    metric: str
    split_id: str

    @property
    def n(self):
        return len(self.model_ids)

    def pair(self, i: int, j: int) -> float:
        return float(self.values[i, j])


def _check_nonempty(log):
    if len(log) == 0:
        raise EmptyLog(f"log {log.model_id!r} has no examples")


def accuracy(log: ClassificationLog) -> float:
    _check_nonempty(log)
    return float(np.mean(log.predicted == log.gold))


def exact_match(log: SpanLog) -> float:
    _check_nonempty(log)
    hits = [1.0 if (ex.pred_start == ex.gold_start and ex.pred_end == ex.gold_end) else 0.0
            for ex in log.examples]
    return float(np.mean(hits))


def _interval_f1(a_start, a_end, b_start, b_end) -> float:
    """Token-interval F1 between two spans; an inverted span is empty."""
    a_len = max(0, a_end - a_start + 1)
    b_len = max(0, b_end - b_start + 1)
    if a_len == 0 and b_len == 0:
        return 1.0
    if a_len == 0 or b_len == 0:
        return 0.0
    overlap = max(0, min(a_end, b_end) - max(a_start, b_start) + 1)
    if overlap == 0:
        return 0.0
    return 2.0 * overlap / (a_len + b_len)


def span_f1(log: SpanLog) -> float:
    """Macro-averaged token-interval F1 of predicted vs gold spans."""
    _check_nonempty(log)
    scores = [_interval_f1(ex.pred_start, ex.pred_end, ex.gold_start, ex.gold_end)
              for ex in log.examples]
    return float(np.mean(scores))


def _check_compatible(a, b, metric):
    if a.task != b.task:
        raise ShapeMismatch(b.model_id, f"task {b.task!r} != {a.task!r}")
    if len(a) != len(b):
        raise ShapeMismatch(b.model_id, f"length {len(b)} != {len(a)}")
    if metric not in METRICS_BY_TASK[a.task]:
        raise MetricTaskMismatch(metric, a.task)


def agreement(a, b, metric: str) -> float:
    """Mean per-example metric between two models' predictions."""
    _check_compatible(a, b, metric)
    if len(a) == 0:
        raise EmptyLog("cannot compute agreement on empty logs")
    if metric == METRIC_ACCURACY:
        return float(np.mean(a.predicted == b.predicted))
    if metric == METRIC_EXACT_MATCH:
        hits = [1.0 if (ea.pred_start == eb.pred_start and ea.pred_end == eb.pred_end) else 0.0
                for ea, eb in zip(a.examples, b.examples)]
        return float(np.mean(hits))
    if metric == METRIC_F1:
        scores = [_interval_f1(ea.pred_start, ea.pred_end, eb.pred_start, eb.pred_end)
                  for ea, eb in zip(a.examples, b.examples)]
        return float(np.mean(scores))
    raise MetricTaskMismatch(metric, a.task)


def performance(log, metric: str) -> float:
    """Metric of a log against its own gold labels."""
    if metric == METRIC_ACCURACY:
        return accuracy(log)
    if metric == METRIC_EXACT_MATCH:
        return exact_match(log)
    if metric == METRIC_F1:
        return span_f1(log)
    raise MetricTaskMismatch(metric, log.task)


def agreement_matrix(logs, metric: str) -> AgreementMatrix:
    """All pairwise agreements of an aligned ensemble of n >= 2 logs."""
    logs = list(logs)
    n = len(logs)
    if n < 2:
        raise InsufficientModels(f"need at least 2 models, got {n}")
    values = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            v = agreement(logs[i], logs[j], metric)
            values[i, j] = v
            values[j, i] = v
    return AgreementMatrix(model_ids=[log.model_id for log in logs],
                           values=values, metric=metric,
                           split_id=logs[0].split_id)
