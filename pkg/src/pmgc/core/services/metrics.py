"""
Detection metrics: point-wise F1 and composite F1 (time-wise precision, event-wise recall), each at a given
decision vector or at the best threshold over all achievable decisions.

Degenerate cases follow one convention everywhere: 0 / 0 is 0 for precision, recall and F1.
"""

from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict

from pmgc.core.errors import DataError, ShapeError
from pmgc.core.types import F1Metric, Labels, Matrix

type BinaryLike = npt.NDArray[np.bool_] | Labels | Sequence[int] | Sequence[bool]


class MetricResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    threshold: float | None = None
    precision: float
    recall: float
    f1: float


class EvaluationReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    ticks: int
    events: int
    best_pointwise: MetricResult
    best_composite: MetricResult
    pointwise: MetricResult | None = None  # at the supplied threshold
    composite: MetricResult | None = None


def segments_from_labels(labels: BinaryLike) -> list[tuple[int, int]]:
    """Maximal runs of 1s as inclusive (start, end) index pairs."""
    y = _binary(labels, "labels")
    edges = np.diff(np.concatenate(([0], y, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [(int(s), int(e)) for s, e in zip(starts, ends, strict=True)]


def f1_pointwise(predictions: BinaryLike, labels: BinaryLike) -> tuple[float, float, float]:
    """(precision, recall, f1) over individual ticks."""
    pred, y = _pair(predictions, labels)
    tp = np.array([np.count_nonzero(pred & y)])
    precision, recall, f1 = _scores(tp, np.array([pred.sum()]), tp, int(y.sum()))
    return float(precision[0]), float(recall[0]), float(f1[0])


def f1_composite(predictions: BinaryLike, labels: BinaryLike) -> float:
    """Harmonic mean of point-wise precision and event recall (share of label runs hit by at least one prediction)."""
    return composite_detail(predictions, labels)[2]


def composite_detail(predictions: BinaryLike, labels: BinaryLike) -> tuple[float, float, float]:
    """(time-wise precision, event-wise recall, composite f1)."""
    pred, y = _pair(predictions, labels)
    events = segments_from_labels(y)
    hit = np.array([sum(bool(pred[s : e + 1].any()) for s, e in events)])
    precision, recall, f1 = _scores(np.array([np.count_nonzero(pred & y)]), np.array([pred.sum()]), hit, len(events))
    return float(precision[0]), float(recall[0]), float(f1[0])


def threshold_sweep(scores: Matrix, labels: BinaryLike, metric: F1Metric) -> MetricResult:
    """
    Best F1 over every decision vector reachable by `score > threshold`.

    Candidates, ascending: -inf, midpoints between consecutive distinct scores, +inf. Counts come from ranks of
    the distinct scores, so each candidate is evaluated exactly. Ties go to the lowest threshold.

    Raises:
        DataError: Empty input or non-binary labels.
        ShapeError: Length mismatch.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels, "labels")
    if s.ndim != 1 or s.size != y.size:
        raise ShapeError(f"scores of shape {s.shape} do not match {y.size} labels")
    if s.size == 0:
        raise DataError("no scores to evaluate")
    if not np.isfinite(s).all():
        raise DataError("scores must be finite")

    distinct = np.unique(s)
    n = distinct.size
    rank = np.searchsorted(distinct, s)
    # candidate j (0..n) flags every score with rank >= j; candidate n flags nothing
    tp = _suffix_sums(np.bincount(rank, weights=y, minlength=n))
    flagged = _suffix_sums(np.bincount(rank, minlength=n))
    match metric:
        case F1Metric.POINTWISE:
            precision, recall, f1 = _scores(tp, flagged, tp, int(y.sum()))
        case F1Metric.COMPOSITE:
            events = segments_from_labels(y)
            top_rank = np.array([rank[a : b + 1].max() for a, b in events], dtype=np.int64)
            hits = _suffix_sums(np.bincount(top_rank, minlength=n))
            precision, recall, f1 = _scores(tp, flagged, hits, len(events))

    best = int(np.argmax(f1))
    return MetricResult(
        threshold=_candidate(distinct, best),
        precision=float(precision[best]),
        recall=float(recall[best]),
        f1=float(f1[best]),
    )


def best_f1(scores: Matrix, labels: BinaryLike, metric: F1Metric = F1Metric.POINTWISE) -> tuple[float, float]:
    """(best threshold, best F1) under the strict `score > threshold` rule."""
    result = threshold_sweep(scores, labels, metric)
    return float(result.threshold if result.threshold is not None else -np.inf), result.f1


def evaluate(scores: Matrix, labels: BinaryLike, threshold: float | None = None) -> EvaluationReport:
    y = _binary(labels, "labels")
    report = EvaluationReport(
        ticks=y.size,
        events=len(segments_from_labels(y)),
        best_pointwise=threshold_sweep(scores, y, F1Metric.POINTWISE),
        best_composite=threshold_sweep(scores, y, F1Metric.COMPOSITE),
    )
    if threshold is not None:
        decisions = np.asarray(scores) > threshold
        p, r, f = f1_pointwise(decisions, y)
        report.pointwise = MetricResult(threshold=threshold, precision=p, recall=r, f1=f)
        p, r, f = composite_detail(decisions, y)
        report.composite = MetricResult(threshold=threshold, precision=p, recall=r, f1=f)
    return report


def _scores(
    tp: npt.NDArray[np.float64] | Labels, flagged: npt.NDArray[np.float64] | Labels, hits: Matrix | Labels, total: int
) -> tuple[Matrix, Matrix, Matrix]:
    """Precision tp / flagged, recall hits / total and their harmonic mean, 0 / 0 -> 0 throughout."""
    tp, flagged, hits = (np.asarray(a, dtype=np.float64) for a in (tp, flagged, hits))
    precision = np.divide(tp, flagged, out=np.zeros_like(tp), where=flagged > 0)
    recall = hits / total if total > 0 else np.zeros_like(hits)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom, out=np.zeros_like(denom), where=denom > 0)
    return precision, recall, f1


def _suffix_sums(counts: Matrix | Labels) -> Matrix:
    """result[j] = sum(counts[j:]) with a trailing 0 for the flag-nothing candidate."""
    return np.concatenate((np.cumsum(np.asarray(counts, dtype=np.float64)[::-1])[::-1], [0.0]))


def _candidate(distinct: Matrix, j: int) -> float:
    if j == 0:
        return float("-inf")
    if j == distinct.size:
        return float("inf")
    low, high = distinct[j - 1], distinct[j]
    mid = low + (high - low) / 2.0
    # adjacent doubles can round the midpoint onto an endpoint; low flags the same ticks under strict >
    return float(mid) if low < mid < high else float(low)


def _binary(values: BinaryLike, name: str) -> npt.NDArray[np.bool_]:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.dtype != np.bool_ and not np.isin(arr, (0, 1)).all():
        raise DataError(f"{name} must be binary (0/1)")
    return arr.astype(np.bool_)


def _pair(predictions: BinaryLike, labels: BinaryLike) -> tuple[npt.NDArray[np.bool_], npt.NDArray[np.bool_]]:
    pred, y = _binary(predictions, "predictions"), _binary(labels, "labels")
    if pred.size != y.size:
        raise ShapeError(f"{pred.size} predictions for {y.size} labels")
    return pred, y
