"""Regional predictions, error metrics, histograms and the linear-regression baseline.

Metrics are computed on fractions; histograms are binned in percent.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError, SimulationError
from .dynamics import OpinionMatrix
from .population import AgentAllocation, RegionTable

logger = logging.getLogger(__name__)

_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class DegenerateFit(SimulationError):
    def __init__(self):
        super().__init__('Cannot fit a line: all predictor values are identical')


class NoComparablePairs(SimulationError):
    def __init__(self):
        super().__init__('No prediction has a matching measurement')


@dataclass(frozen=True)
class RegionPrediction:
    """Predicted outcome of one region; `predicted_rate` is None for regions without agents."""
    region_id: str
    n_agents: int
    predicted_rate: Optional[float]
    measured_rate: Optional[float] = None

    @property
    def is_empty(self) -> bool:
        return self.n_agents == 0


@dataclass(frozen=True, eq=False)
class Histogram:
    """Equal-width bins, left-closed and right-open except the last, which is closed."""
    bin_edges: np.ndarray
    counts: np.ndarray
    out_of_range: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class RegressionModel:
    slope: float
    intercept: float
    n_train: int


@dataclass(frozen=True)
class ErrorSummary:
    mse: float
    rmse: float
    n_pairs: int
    n_skipped: int


@dataclass(frozen=True)
class DispersionSummary:
    """Summary statistics of regional predicted rates; `stddev` is the population deviation."""
    n_regions: int
    mean: float
    stddev: float
    quantiles: Dict[float, float] = field(default_factory=dict)


def region_means(state: OpinionMatrix, alloc: AgentAllocation, table: RegionTable, *,
                 threshold: Optional[float] = None) -> List[RegionPrediction]:
    """Predict each region's outcome from the first opinion entry of its agents.

    By default the prediction is the region's mean first entry. With `threshold`, it is the
    fraction of the region's agents whose first entry exceeds `threshold` instead.

    :raises ParameterError: The allocation does not match the state or the table.
    """
    if alloc.n_total != state.n_agents:
        raise ParameterError("Allocation covers %d agents, state has %d." % (
            alloc.n_total, state.n_agents))
    if len(alloc.starts) != len(table):
        raise ParameterError("Allocation has %d regions, table has %d." % (
            len(alloc.starts), len(table)))
    if threshold is not None and not 0.5 < threshold < 1.0:
        raise ParameterError("Outcome threshold must lie in (0.5, 1), got %r." % threshold)

    first = state.values[:, 0]
    predictions = []
    empty = 0
    for (start, end), record in zip(alloc.ranges(), table.records):
        n = end - start
        if n == 0:
            empty += 1
            rate = None
        elif threshold is None:
            rate = math.fsum(first[start:end]) / n
        else:
            rate = int(np.count_nonzero(first[start:end] > threshold)) / n
        predictions.append(RegionPrediction(record.region_id, n, rate, record.outcome_rate))
    if empty:
        logger.warning("%d regions received no agents and have no prediction", empty)
    return predictions


def _pairs(predictions: Sequence[Optional[float]],
           measurements: Sequence[Optional[float]]) -> Tuple[np.ndarray, int]:
    if len(predictions) != len(measurements):
        raise ParameterError("Got %d predictions but %d measurements." % (
            len(predictions), len(measurements)))
    diffs = [p - m for p, m in zip(predictions, measurements) if p is not None and m is not None]
    skipped = len(predictions) - len(diffs)
    if not diffs:
        raise NoComparablePairs()
    return np.array(diffs), skipped


def compare(predictions: Sequence[Optional[float]],
            measurements: Sequence[Optional[float]]) -> ErrorSummary:
    """Mean squared error and its root over the pairs where both values are present.

    :raises NoComparablePairs: No pair has both values.
    """
    diffs, skipped = _pairs(predictions, measurements)
    if skipped:
        logger.warning("Skipped %d of %d pairs lacking a prediction or measurement",
                       skipped, len(predictions))
    value = math.fsum(diffs * diffs) / len(diffs)
    return ErrorSummary(value, math.sqrt(value), len(diffs), skipped)


def mse(predictions: Sequence[Optional[float]], measurements: Sequence[Optional[float]]) -> float:
    return compare(predictions, measurements).mse


def rmse(predictions: Sequence[Optional[float]], measurements: Sequence[Optional[float]]) -> float:
    return compare(predictions, measurements).rmse


def histogram(values: Sequence[float], n_bins: int = 80, lo: float = 0.0,
              hi: float = 100.0) -> Histogram:
    """Count `values` into `n_bins` equal-width bins over [lo, hi].

    Values outside the range, and non-finite values, are reported in `out_of_range`.
    """
    if n_bins < 1:
        raise ParameterError("n_bins must be positive.")
    if not lo < hi:
        raise ParameterError("Histogram range must satisfy lo < hi.")
    values = np.asarray(values, dtype=np.float64)
    inside = np.isfinite(values) & (values >= lo) & (values <= hi)
    counts, edges = np.histogram(values[inside], bins=n_bins, range=(lo, hi))
    return Histogram(edges, counts.astype(np.int64), int(len(values) - np.count_nonzero(inside)))


def fit_linear(train: Sequence[Tuple[float, float]]) -> RegressionModel:
    """Ordinary least squares fit of y = slope * x + intercept.

    :raises ParameterError: Fewer than two points.
    :raises DegenerateFit: All x are identical.
    """
    if len(train) < 2:
        raise ParameterError("Need at least two training points, got %d." % len(train))
    xy = np.asarray(train, dtype=np.float64)
    x, y = xy[:, 0], xy[:, 1]
    x_mean, y_mean = x.mean(), y.mean()
    dx = x - x_mean
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DegenerateFit()
    slope = float(np.dot(dx, y - y_mean)) / sxx
    intercept = float(y_mean - slope * x_mean)
    return RegressionModel(slope, intercept, len(train))


def predict_linear(model: RegressionModel, x: float) -> Tuple[float, bool]:
    """Returns the prediction clamped to [0, 1] and whether clamping occurred."""
    y = model.slope * x + model.intercept
    clamped = min(max(y, 0.0), 1.0)
    return clamped, clamped != y


def predict_many(model: RegressionModel, xs: Sequence[float]) -> Tuple[List[float], int]:
    """Predict every value of `xs`; also returns the number of clamped predictions."""
    results = [predict_linear(model, float(x)) for x in xs]
    clamp_count = sum(1 for _, clamped in results if clamped)
    if clamp_count:
        logger.warning("Clamped %d of %d regression predictions to [0, 1]", clamp_count, len(xs))
    return [y for y, _ in results], clamp_count


def dispersion_report(predictions: Sequence[RegionPrediction]) -> DispersionSummary:
    """Mean, standard deviation and quantiles of the regional predicted rates.

    Regions without a prediction are ignored.
    """
    rates = np.array([p.predicted_rate for p in predictions if p.predicted_rate is not None])
    if len(rates) == 0:
        raise ParameterError("No regional predictions to summarize.")
    mean = math.fsum(rates) / len(rates)
    stddev = math.sqrt(math.fsum((rates - mean) ** 2) / len(rates))
    quantiles = {q: float(v) for q, v in zip(_QUANTILES, np.quantile(rates, _QUANTILES))}
    return DispersionSummary(len(rates), mean, stddev, quantiles)
