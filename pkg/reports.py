"""Report writers. Floats are written with `repr` so that outputs are byte-reproducible."""
import csv
from typing import Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np

from .analysis import Histogram, RegionPrediction
from .population import AgentAllocation, BiasAssignment, RegionTable


def _pct(rate: Optional[float]) -> str:
    return '' if rate is None else repr(100.0 * rate)


def _writer(stream: TextIO):
    return csv.writer(stream, lineterminator='\n')


def write_predictions(predictions: Sequence[RegionPrediction], stream: TextIO):
    writer = _writer(stream)
    writer.writerow(['region_id', 'n_agents', 'predicted_pct', 'measured_pct'])
    for p in predictions:
        writer.writerow([p.region_id, p.n_agents, _pct(p.predicted_rate), _pct(p.measured_rate)])


def write_regression(region_ids: Sequence[str], predictors: Sequence[float],
                     predicted: Sequence[float], measured: Sequence[Optional[float]],
                     stream: TextIO):
    """Predicted-vs-measured table of the regression baseline."""
    writer = _writer(stream)
    writer.writerow(['region_id', 'predictor_pct', 'predicted_pct', 'measured_pct'])
    for row in zip(region_ids, predictors, predicted, measured):
        region_id, x, y, m = row
        writer.writerow([region_id, _pct(x), _pct(y), _pct(m)])


def write_histogram(hist: Histogram, stream: TextIO):
    writer = _writer(stream)
    writer.writerow(['bin_lo', 'bin_hi', 'count'])
    for lo, hi, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
        writer.writerow([repr(float(lo)), repr(float(hi)), int(count)])


def write_key_values(values: Mapping[str, object], stream: TextIO, *, sort: bool = False):
    """Write one "key=value" line per entry. Booleans are written lowercase."""
    items = sorted(values.items()) if sort else values.items()
    for key, value in items:
        if isinstance(value, bool):
            value = 'true' if value else 'false'
        elif isinstance(value, float):
            value = repr(value)
        elif isinstance(value, (list, tuple)):
            value = ','.join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif value is None:
            value = ''
        stream.write('%s=%s\n' % (key, value))


def write_snapshot(state: np.ndarray, stream: TextIO):
    """Opinion state as "agent_id,x0,x1,...", one row per agent."""
    writer = _writer(stream)
    writer.writerow(['agent_id'] + ['x%d' % l for l in range(state.shape[1])])
    for i, row in enumerate(state.tolist()):
        writer.writerow([i] + [repr(v) for v in row])


def write_assignments(assign: BiasAssignment, alloc: AgentAllocation, table: RegionTable,
                      stream: TextIO):
    writer = _writer(stream)
    writer.writerow(['agent_id', 'region_id', 'group'])
    region_ids = [r.region_id for r in table.records]
    labels = assign.labels()
    for agent, region in enumerate(alloc.region_of_agent().tolist()):
        writer.writerow([agent, region_ids[region], labels[agent]])


def write_rows(header: Sequence[str], rows: Iterable[Sequence[object]], stream: TextIO):
    writer = _writer(stream)
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
