"""Regional statistics, agent allocation and bias assignment.

Rates are fractions in [0, 1] in memory and percentages in files.
"""
import csv
import decimal
import io
import logging
from dataclasses import dataclass, field
from typing import BinaryIO, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .errors import InputError, ParameterError
from .seeding import make_rng

logger = logging.getLogger(__name__)

REGION_CSV_HEADER = ['region_id', 'municipality_id', 'population', 'predictor_pct', 'outcome_pct']

GROUP_A = 0
"""Affirmative group, tied to the first opinion index."""
GROUP_B = 1

_GROUP_LABELS = {GROUP_A: 'a', GROUP_B: 'b'}


class RegionParseError(InputError):
    """Raised when a region file cannot be parsed.

    :ivar line: 1-based line number of the offending row.
    """
    def __init__(self, line, message):
        self.line = line
        super().__init__("Line %d: %s" % (line, message))


@dataclass(frozen=True)
class RegionRecord:
    region_id: str
    municipality_id: str
    population: int
    predictor_rate: float
    outcome_rate: Optional[float] = None

    def validate(self):
        if self.population < 0:
            raise InputError("Region %s has negative population." % self.region_id)
        if not 0.0 <= self.predictor_rate <= 1.0:
            raise InputError("Region %s: predictor rate outside [0, 1]." % self.region_id)
        if self.outcome_rate is not None and not 0.0 <= self.outcome_rate <= 1.0:
            raise InputError("Region %s: outcome rate outside [0, 1]." % self.region_id)


def _sort_key(record: RegionRecord):
    return record.municipality_id, record.region_id


@dataclass(frozen=True)
class RegionTable:
    """Regions sorted by (municipality_id, region_id); consecutive regions share municipalities."""
    records: Tuple[RegionRecord, ...]

    def __post_init__(self):
        ids = [r.region_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InputError("Duplicate region_id in region table.")
        keys = [_sort_key(r) for r in self.records]
        if keys != sorted(keys):
            raise InputError("Region table is not sorted by (municipality_id, region_id).")

    @classmethod
    def from_records(cls, records: Sequence[RegionRecord]) -> 'RegionTable':
        """Validate `records` and sort them into a table."""
        for record in records:
            record.validate()
        return cls(tuple(sorted(records, key=_sort_key)))

    def __len__(self):
        return len(self.records)

    @property
    def total_population(self) -> int:
        return sum(r.population for r in self.records)

    @property
    def has_outcomes(self) -> bool:
        """True if every region carries a measured outcome."""
        return all(r.outcome_rate is not None for r in self.records)

    def populations(self) -> np.ndarray:
        return np.array([r.population for r in self.records], dtype=np.int64)

    def predictor_rates(self) -> np.ndarray:
        return np.array([r.predictor_rate for r in self.records], dtype=np.float64)

    def outcome_rates(self) -> List[Optional[float]]:
        return [r.outcome_rate for r in self.records]


@dataclass(frozen=True, eq=False)
class AgentAllocation:
    """Contiguous agent index ranges [starts[r], ends[r]), one per region, in table order."""
    starts: np.ndarray
    ends: np.ndarray

    @property
    def n_total(self) -> int:
        return int(self.ends[-1]) if len(self.ends) else 0

    @property
    def lengths(self) -> np.ndarray:
        return self.ends - self.starts

    def ranges(self) -> List[Tuple[int, int]]:
        return [(int(s), int(e)) for s, e in zip(self.starts, self.ends)]

    def region_of_agent(self) -> np.ndarray:
        """Region index of every agent."""
        return np.repeat(np.arange(len(self.starts)), self.lengths)


@dataclass(frozen=True, eq=False)
class BiasAssignment:
    """Per-agent group labels (GROUP_A or GROUP_B) and the bias strength epsilon.

    Group a carries the bias [1-eps, eps], group b [eps, 1-eps].
    """
    epsilon: float
    group: np.ndarray = field(repr=False)

    @property
    def n_agents(self) -> int:
        return len(self.group)

    @property
    def count_a(self) -> int:
        return int(np.count_nonzero(self.group == GROUP_A))

    def vectors(self) -> np.ndarray:
        """Returns the (n_agents, 2) bias vectors r^i, the diagonals of R^i."""
        eps = self.epsilon
        table = np.array([[1.0 - eps, eps], [eps, 1.0 - eps]])
        return table[self.group]

    def labels(self) -> List[str]:
        return [_GROUP_LABELS[g] for g in self.group.tolist()]


@dataclass(frozen=True)
class SyntheticDataParams:
    """Parameters of the synthetic region generator.

    Municipalities draw a latent predictor level from `predictor_range`, and their regions scatter
    around it with `predictor_spread`. Outcomes follow `intercept + slope * predictor` plus noise
    whose scale grows with `heteroscedastic_gain * |predictor - heteroscedastic_center|`.
    """
    n_regions: int = 3363
    n_municipalities: int = 290
    slope: float = 0.55
    intercept: float = 0.38
    noise_scale: float = 0.02
    heteroscedastic_center: float = 0.65
    heteroscedastic_gain: float = 6.0
    predictor_range: Tuple[float, float] = (0.45, 0.95)
    predictor_spread: float = 0.08
    population_range: Tuple[int, int] = (700, 20000)
    seed: int = 0

    def validate(self):
        if self.n_regions < 1:
            raise ParameterError("n_regions must be positive.")
        if not 1 <= self.n_municipalities <= self.n_regions:
            raise ParameterError("n_municipalities must lie in [1, n_regions].")
        if self.noise_scale < 0 or self.heteroscedastic_gain < 0 or self.predictor_spread < 0:
            raise ParameterError("Noise parameters must be nonnegative.")
        if not 0.0 <= self.heteroscedastic_center <= 1.0:
            raise ParameterError("heteroscedastic_center must be a fraction.")
        lo, hi = self.predictor_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ParameterError("predictor_range must be an interval within [0, 1].")
        pop_lo, pop_hi = self.population_range
        if not 1 <= pop_lo <= pop_hi:
            raise ParameterError("population_range must be an interval of positive counts.")


def _parse_pct(raw: str, line: int, column: str) -> float:
    try:
        value = decimal.Decimal(raw.strip())
    except decimal.InvalidOperation:
        raise RegionParseError(line, "%s is not a number: %r." % (column, raw))
    if not value.is_finite() or not 0 <= value <= 100:
        raise RegionParseError(line, "%s must lie in [0, 100], got %s." % (column, raw))
    return float(value / 100)


def _format_pct(rate: float) -> str:
    return format(decimal.Decimal(repr(rate)) * 100, 'f')


def load_regions(source: Union[BinaryIO, TextIO]) -> RegionTable:
    """Read a region CSV and return the sorted table.

    :param source: Binary or text stream with the header
                   "region_id,municipality_id,population,predictor_pct,outcome_pct".
    :raises RegionParseError: A row is malformed, duplicates a region, or has a rate outside
                              [0, 100].
    :raises InputError: The header is wrong or the total population is zero.
    """
    if isinstance(source, io.TextIOBase):
        return _read_regions(source)
    text = io.TextIOWrapper(source, encoding='utf-8', newline='')
    try:
        return _read_regions(text)
    finally:
        text.detach()  # leave the caller's stream open


def _read_regions(text: TextIO) -> RegionTable:
    reader = csv.reader(text)

    header = next(reader, None)
    if header is None or [h.strip() for h in header] != REGION_CSV_HEADER:
        raise InputError("Region file header must be %s." % ",".join(REGION_CSV_HEADER))

    records = []
    seen = set()
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(REGION_CSV_HEADER):
            raise RegionParseError(line, "expected %d fields, got %d." % (
                len(REGION_CSV_HEADER), len(row)))
        region_id, municipality_id, population, predictor, outcome = (f.strip() for f in row)
        if not region_id or not municipality_id:
            raise RegionParseError(line, "empty region_id or municipality_id.")
        if region_id in seen:
            raise RegionParseError(line, "duplicate region_id %r." % region_id)
        seen.add(region_id)
        try:
            population = int(population)
        except ValueError:
            raise RegionParseError(line, "population is not an integer: %r." % population)
        if population < 0:
            raise RegionParseError(line, "population is negative.")
        records.append(RegionRecord(
            region_id=region_id,
            municipality_id=municipality_id,
            population=population,
            predictor_rate=_parse_pct(predictor, line, 'predictor_pct'),
            outcome_rate=_parse_pct(outcome, line, 'outcome_pct') if outcome else None))

    table = RegionTable.from_records(records)
    if table.total_population <= 0:
        raise InputError("Region file has zero total population.")
    logger.info("Loaded %d regions, total population %d", len(table), table.total_population)
    return table


def write_regions(table: RegionTable, stream: TextIO):
    """Write `table` in the format read by `load_regions`."""
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(REGION_CSV_HEADER)
    for r in table.records:
        writer.writerow([
            r.region_id,
            r.municipality_id,
            r.population,
            _format_pct(r.predictor_rate),
            _format_pct(r.outcome_rate) if r.outcome_rate is not None else ''])


def allocate_agents(table: RegionTable, n_total: int) -> AgentAllocation:
    """Apportion `n_total` agents to regions by largest remainder.

    Each region receives floor(n_total * share) agents; the leftover agents go to the regions with
    the largest fractional remainders, ties broken by table order. Ranges are laid out in table
    order.

    :raises InputError: The table has zero population or more populated regions than agents.
    """
    populations = table.populations()
    total = int(populations.sum())
    if total <= 0:
        raise InputError("Cannot allocate agents: total population is zero.")
    populated = int(np.count_nonzero(populations))
    if n_total < populated:
        raise InputError("n_total (%d) is smaller than the number of populated regions (%d)." % (
            n_total, populated))

    # Exact integer arithmetic: quota_r = n_total * pop_r / total.
    lengths = []
    remainders = []
    for pop in populations.tolist():
        q, rem = divmod(n_total * pop, total)
        lengths.append(q)
        remainders.append(rem)
    leftover = n_total - sum(lengths)
    order = sorted(range(len(lengths)), key=lambda r: (-remainders[r], r))
    for r in order[:leftover]:
        lengths[r] += 1

    ends = np.cumsum(np.array(lengths, dtype=np.int64))
    starts = ends - np.array(lengths, dtype=np.int64)
    empty = len(lengths) - int(np.count_nonzero(lengths))
    logger.info("Allocated %d agents to %d regions (%d empty)", n_total, len(lengths), empty)
    return AgentAllocation(starts, ends)


def round_half_up(value: decimal.Decimal) -> int:
    return int(value.quantize(decimal.Decimal(1), rounding=decimal.ROUND_HALF_UP))


def assign_biases(alloc: AgentAllocation, table: RegionTable, epsilon: float) -> BiasAssignment:
    """Split every region into a group-a prefix and a group-b suffix matching its predictor rate.

    The number of group-a agents in a region is round-half-up(length * predictor_rate), evaluated
    in decimal arithmetic on the shortest representation of the rate.

    :raises ParameterError: `epsilon` is not in (0, 0.5) or the allocation does not match the
                            table.
    """
    if not 0.0 < epsilon < 0.5:
        raise ParameterError("epsilon must lie in (0, 0.5), got %r." % epsilon)
    if len(alloc.starts) != len(table):
        raise ParameterError("Allocation has %d regions, table has %d." % (
            len(alloc.starts), len(table)))

    group = np.full(alloc.n_total, GROUP_B, dtype=np.int8)
    for (start, end), record in zip(alloc.ranges(), table.records):
        count_a = round_half_up((end - start) * decimal.Decimal(repr(record.predictor_rate)))
        group[start:start + count_a] = GROUP_A

    assignment = BiasAssignment(epsilon, group)
    logger.info("Assigned biases: %d of %d agents in group a (epsilon=%g)",
                assignment.count_a, assignment.n_agents, epsilon)
    return assignment


def shuffle_biases(assign: BiasAssignment, seed: int) -> BiasAssignment:
    """Permute the group labels uniformly at random, keeping their global counts."""
    permutation = make_rng(seed).permutation(assign.n_agents)
    return BiasAssignment(assign.epsilon, assign.group[permutation])


def split_indices(n_items: int, train_size: int, eval_size: Optional[int],
                  seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Draw disjoint train and evaluation index sets uniformly without replacement.

    :param eval_size: Size of the evaluation set; None or a value larger than the remaining items
                      takes all remaining items.
    :returns: Sorted train indices and sorted evaluation indices.
    :raises InputError: `train_size` leaves no items to evaluate on.
    """
    if not 2 <= train_size < n_items:
        raise InputError("Training set size %d must lie in [2, %d)." % (train_size, n_items))
    permutation = make_rng(seed).permutation(n_items)
    remaining = n_items - train_size
    if eval_size is None or eval_size > remaining:
        eval_size = remaining
    train = np.sort(permutation[:train_size])
    evaluate = np.sort(permutation[train_size:train_size + eval_size])
    return train, evaluate


def synthesize_regions(params: SyntheticDataParams) -> RegionTable:
    """Generate a region table with a linear, heteroscedastic predictor/outcome relationship.

    Populations are log-uniform over `population_range`. Every municipality has at least one
    region.
    """
    params.validate()
    rng = make_rng(params.seed)
    n, m = params.n_regions, params.n_municipalities

    municipality = np.concatenate([np.arange(m), rng.integers(0, m, size=n - m)])
    pop_lo, pop_hi = params.population_range
    populations = np.floor(np.exp(
        rng.uniform(np.log(pop_lo), np.log(pop_hi + 1), size=n))).astype(np.int64)
    populations = np.clip(populations, pop_lo, pop_hi)

    lo, hi = params.predictor_range
    levels = rng.uniform(lo, hi, size=m)
    predictor = np.clip(levels[municipality] + rng.normal(0.0, params.predictor_spread, size=n),
                        lo, hi)

    scale = params.noise_scale * (
        1.0 + params.heteroscedastic_gain * np.abs(predictor - params.heteroscedastic_center))
    outcome = params.intercept + params.slope * predictor + scale * rng.standard_normal(n)
    outcome = np.clip(outcome, 0.0, 1.0)

    width = len(str(n - 1))
    records = [
        RegionRecord(
            region_id='R%0*d' % (width, r),
            municipality_id='M%0*d' % (len(str(m - 1)), municipality[r]),
            population=int(populations[r]),
            predictor_rate=float(predictor[r]),
            outcome_rate=float(outcome[r]))
        for r in range(n)]
    table = RegionTable.from_records(records)
    logger.info("Synthesized %d regions in %d municipalities", n, m)
    return table
