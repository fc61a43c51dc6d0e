"""Anomaly detection over metric deltas.

Each observation turns a candidate-vs-baseline delta into a weighted
score, compares it against a rolling threshold mean + lambda * stddev
computed from past scores only, and appends the score to the window. The
persisted history is sufficient to replay every threshold and flag
decision bit-exactly.
"""

import json
import logging
from dataclasses import dataclass, field
from statistics import fmean, stdev

from kgmon.metrics import MetricDelta, MetricVector, metric_delta

log = logging.getLogger(__name__)

# Reserved model name for per-batch baseline rows in the history store.
BASELINE_MODEL = "GT"

DEFAULT_WINDOW = 30
DEFAULT_WARMUP = 5
DEFAULT_LAMBDA = 2.0

_HISTORY_FIELDS = (
    "timestamp",
    "model",
    "batch_id",
    "icr",
    "ipr",
    "ci",
    "hal",
    "d_icr",
    "d_ipr",
    "d_ci",
    "score",
    "threshold",
    "flagged",
    "hall_total",
    "hall_failed",
)


class MonitorError(ValueError):
    pass


@dataclass(frozen=True)
class AnomalyWeights:
    w_icr: float
    w_ipr: float
    w_ci: float
    w_hal: float | None = None


def normalize_weights(
    w_icr: float, w_ipr: float, w_ci: float, w_hal: float | None = None
) -> AnomalyWeights:
    """Scale nonnegative weights to sum to 1. At least one must be positive."""
    parts = [w_icr, w_ipr, w_ci] + ([] if w_hal is None else [w_hal])
    if any(w < 0 for w in parts):
        raise MonitorError("weights must be nonnegative")
    total = sum(parts)
    if total <= 0:
        raise MonitorError("at least one weight must be positive")
    return AnomalyWeights(
        w_icr=w_icr / total,
        w_ipr=w_ipr / total,
        w_ci=w_ci / total,
        w_hal=None if w_hal is None else w_hal / total,
    )


DEFAULT_WEIGHTS = normalize_weights(1.0, 1.0, 1.0)


@dataclass
class ThresholdState:
    """Rolling window of past anomaly scores for one monitored model."""

    scores: list[float] = field(default_factory=list)
    capacity: int = DEFAULT_WINDOW
    lam: float = DEFAULT_LAMBDA
    warmup_min: int = DEFAULT_WARMUP
    last_timestamp: int | None = None

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise MonitorError("window capacity must be positive")
        if self.lam <= 0:
            raise MonitorError("lambda must be positive")
        if self.warmup_min < 1:
            raise MonitorError("warmup_min must be positive")


@dataclass(frozen=True)
class AnomalyRecord:
    timestamp: int
    model: str
    batch_id: str
    metrics: MetricVector
    baseline_metrics: MetricVector
    delta: MetricDelta
    score: float
    threshold: float | None
    flagged: bool
    hall_total: int = 0
    hall_failed: int = 0


@dataclass(frozen=True)
class Alert:
    timestamp: int
    model: str
    score: float
    threshold: float
    top_metric: str


@dataclass(frozen=True)
class HistoryRow:
    """One persisted history line; field names match the wire format."""

    timestamp: int
    model: str
    batch_id: str
    icr: float
    ipr: float
    ci: float
    hal: float | None
    d_icr: float
    d_ipr: float
    d_ci: float
    score: float
    threshold: float | None
    flagged: bool
    hall_total: int
    hall_failed: int

    def to_line(self) -> str:
        payload = {name: getattr(self, name) for name in _HISTORY_FIELDS}
        return json.dumps(payload)


def anomaly_score(delta: MetricDelta, weights: AnomalyWeights) -> float:
    """Weighted sum of delta components over the metrics with present
    weights. A hal weight without a hal delta is a configuration error."""
    score = (
        weights.w_icr * delta.d_icr
        + weights.w_ipr * delta.d_ipr
        + weights.w_ci * delta.d_ci
    )
    if weights.w_hal is not None:
        if delta.d_hal is None:
            raise MonitorError("w_hal configured but delta carries no d_hal")
        score += weights.w_hal * delta.d_hal
    return score


def update_threshold(state: ThresholdState) -> float | None:
    """mean + lambda * sample stddev of the window; None during warmup."""
    n = len(state.scores)
    if n < state.warmup_min:
        return None
    sigma = stdev(state.scores) if n > 1 else 0.0
    return fmean(state.scores) + state.lam * sigma


def _top_metric(delta: MetricDelta, weights: AnomalyWeights) -> str:
    terms = [
        ("icr", weights.w_icr * delta.d_icr),
        ("ipr", weights.w_ipr * delta.d_ipr),
        ("ci", weights.w_ci * delta.d_ci),
    ]
    if weights.w_hal is not None and delta.d_hal is not None:
        terms.append(("hal", weights.w_hal * delta.d_hal))
    best_name, best_value = terms[0]
    for name, value in terms[1:]:
        if value > best_value:
            best_name, best_value = name, value
    return best_name


def observe(
    state: ThresholdState,
    *,
    timestamp: int,
    model: str,
    metrics: MetricVector,
    baseline_metrics: MetricVector,
    weights: AnomalyWeights,
    batch_id: str = "",
    delta: MetricDelta | None = None,
    hall_total: int = 0,
    hall_failed: int = 0,
) -> tuple[AnomalyRecord, Alert | None]:
    """Score one observation and advance the threshold state.

    The threshold is computed from the window before the current score
    joins it; flagging is strict (score > threshold). Pass `delta` to
    override the computed one (the simulator uses this for noise
    injection); the record keeps whatever delta was scored.
    """
    if state.last_timestamp is not None and timestamp <= state.last_timestamp:
        raise MonitorError(
            f"non-monotone timestamp {timestamp} for model {model!r} "
            f"(last was {state.last_timestamp})"
        )
    if delta is None:
        delta = metric_delta(metrics, baseline_metrics)
    score = anomaly_score(delta, weights)
    threshold = update_threshold(state)
    flagged = threshold is not None and score > threshold

    state.scores.append(score)
    while len(state.scores) > state.capacity:
        del state.scores[0]
    state.last_timestamp = timestamp

    record = AnomalyRecord(
        timestamp=timestamp,
        model=model,
        batch_id=batch_id,
        metrics=metrics,
        baseline_metrics=baseline_metrics,
        delta=delta,
        score=score,
        threshold=threshold,
        flagged=flagged,
        hall_total=hall_total,
        hall_failed=hall_failed,
    )
    alert = None
    if flagged:
        assert threshold is not None
        alert = Alert(
            timestamp=timestamp,
            model=model,
            score=score,
            threshold=threshold,
            top_metric=_top_metric(delta, weights),
        )
    return record, alert


def record_to_row(record: AnomalyRecord) -> HistoryRow:
    return HistoryRow(
        timestamp=record.timestamp,
        model=record.model,
        batch_id=record.batch_id,
        icr=record.metrics.icr,
        ipr=record.metrics.ipr,
        ci=record.metrics.ci,
        hal=record.metrics.hal,
        d_icr=record.delta.d_icr,
        d_ipr=record.delta.d_ipr,
        d_ci=record.delta.d_ci,
        score=record.score,
        threshold=record.threshold,
        flagged=record.flagged,
        hall_total=record.hall_total,
        hall_failed=record.hall_failed,
    )


def baseline_row(
    timestamp: int, batch_id: str, metrics: MetricVector
) -> HistoryRow:
    """History row for the per-batch baseline graph itself."""
    return HistoryRow(
        timestamp=timestamp,
        model=BASELINE_MODEL,
        batch_id=batch_id,
        icr=metrics.icr,
        ipr=metrics.ipr,
        ci=metrics.ci,
        hal=metrics.hal,
        d_icr=0.0,
        d_ipr=0.0,
        d_ci=0.0,
        score=0.0,
        threshold=None,
        flagged=False,
        hall_total=0,
        hall_failed=0,
    )


def append_history(path: str, row: HistoryRow) -> None:
    """Append one history line; a single write keeps lines atomic."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(row.to_line() + "\n")


def parse_history_line(line: str) -> HistoryRow:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MonitorError(f"bad history line: {exc}") from exc
    if not isinstance(payload, dict):
        raise MonitorError("bad history line: not a key-value record")
    missing = [name for name in _HISTORY_FIELDS if name not in payload]
    if missing:
        raise MonitorError(f"history line missing fields: {', '.join(missing)}")
    return HistoryRow(**{name: payload[name] for name in _HISTORY_FIELDS})


def read_history(path: str) -> list[HistoryRow]:
    with open(path, encoding="utf-8") as fh:
        return [parse_history_line(line) for line in fh if line.strip()]


def replay_history(
    rows: list[HistoryRow],
    *,
    capacity: int = DEFAULT_WINDOW,
    lam: float = DEFAULT_LAMBDA,
    warmup_min: int = DEFAULT_WARMUP,
) -> list[tuple[HistoryRow, float | None, bool]]:
    """Recompute (threshold, flagged) for every non-baseline row from the
    stored score sequence, using the same arithmetic as observe. With the
    parameters the store was written under, the recomputation matches the
    stored values bit for bit."""
    states: dict[str, ThresholdState] = {}
    out: list[tuple[HistoryRow, float | None, bool]] = []
    for row in rows:
        if row.model == BASELINE_MODEL:
            continue
        state = states.get(row.model)
        if state is None:
            state = ThresholdState(
                capacity=capacity, lam=lam, warmup_min=warmup_min
            )
            states[row.model] = state
        threshold = update_threshold(state)
        flagged = threshold is not None and row.score > threshold
        state.scores.append(row.score)
        while len(state.scores) > state.capacity:
            del state.scores[0]
        out.append((row, threshold, flagged))
    return out


def drift_series(
    rows: list[HistoryRow], metric: str, window: int
) -> tuple[list[tuple[int, float]], float | None]:
    """Per-timestamp deltas for one metric plus the least-squares slope of
    the trailing `window` points (delta units per observation). Slope is
    None with fewer than 2 points."""
    if metric not in ("icr", "ipr", "ci"):
        raise MonitorError(f"unknown drift metric {metric!r}")
    if window < 1:
        raise MonitorError("drift window must be positive")
    attr = f"d_{metric}"
    series = [(row.timestamp, getattr(row, attr)) for row in rows]
    tail = series[-window:]
    if len(tail) < 2:
        return series, None
    ys = [y for _, y in tail]
    n = len(ys)
    x_bar = (n - 1) / 2
    y_bar = fmean(ys)
    sxy = sum((i - x_bar) * (y - y_bar) for i, y in enumerate(ys))
    sxx = sum((i - x_bar) ** 2 for i in range(n))
    return series, sxy / sxx
