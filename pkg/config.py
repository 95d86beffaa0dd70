"""Run configuration.

A configuration file is a flat list of `key = value` lines; `#` starts a comment. Values given on
the command line override those in the file. The merged mapping is validated against a JSON
schema before a `RunConfig` is built from it.
"""
import dataclasses
import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, TextIO, Tuple

import jsonschema

from .errors import ConfigError
from .population import SyntheticDataParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration of one CLI invocation. Defaults reproduce the published setup."""
    n_agents: int = 80000
    k_ring: int = 8
    p_rewire: float = 0.2
    epsilon: float = 0.05
    tolerance: float = 1e-8
    max_iterations: int = 10000
    seed: int = 0
    regions_path: Optional[str] = None
    synthetic: bool = False
    output_dir: str = 'output'
    snapshot_every: Optional[int] = None
    threads: int = 1
    n_sources: int = 100
    exact_path_limit: int = 5000
    train_size: int = 300
    eval_size: int = 3034
    init_point: Optional[Tuple[float, ...]] = None
    n_runs: int = 1
    outcome_threshold: Optional[float] = None
    epsilons: Tuple[float, ...] = (0.03, 0.05, 0.07, 0.1)
    export_assignments: bool = False
    synth_n_regions: int = 3363
    synth_n_municipalities: int = 290
    synth_slope: float = SyntheticDataParams.slope
    synth_intercept: float = SyntheticDataParams.intercept
    synth_noise_scale: float = SyntheticDataParams.noise_scale
    synth_heteroscedastic_center: float = SyntheticDataParams.heteroscedastic_center
    synth_heteroscedastic_gain: float = SyntheticDataParams.heteroscedastic_gain
    synth_predictor_lo: float = SyntheticDataParams.predictor_range[0]
    synth_predictor_hi: float = SyntheticDataParams.predictor_range[1]
    synth_predictor_spread: float = SyntheticDataParams.predictor_spread
    synth_population_lo: int = SyntheticDataParams.population_range[0]
    synth_population_hi: int = SyntheticDataParams.population_range[1]

    _NOT_ECHOED = ('threads', 'output_dir')
    """Keys that do not influence results and are left out of the echoed configuration."""

    def echo(self) -> Dict[str, Any]:
        """Configuration values sufficient to reproduce the outputs of a run."""
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in self._NOT_ECHOED}

    def synthetic_params(self, seed: int) -> SyntheticDataParams:
        return SyntheticDataParams(
            n_regions=self.synth_n_regions,
            n_municipalities=self.synth_n_municipalities,
            slope=self.synth_slope,
            intercept=self.synth_intercept,
            noise_scale=self.synth_noise_scale,
            heteroscedastic_center=self.synth_heteroscedastic_center,
            heteroscedastic_gain=self.synth_heteroscedastic_gain,
            predictor_range=(self.synth_predictor_lo, self.synth_predictor_hi),
            predictor_spread=self.synth_predictor_spread,
            population_range=(self.synth_population_lo, self.synth_population_hi),
            seed=seed)


_Fraction = {"type": "number", "minimum": 0, "maximum": 1}
_Count = {"type": "integer", "minimum": 1}

_config_schema = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_agents": {"type": "integer", "minimum": 3},
        "k_ring": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "p_rewire": _Fraction,
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "max_iterations": _Count,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "regions_path": {"type": ["string", "null"], "minLength": 1},
        "synthetic": {"type": "boolean"},
        "output_dir": {"type": "string", "minLength": 1},
        "snapshot_every": {"type": ["integer", "null"], "minimum": 1},
        "threads": _Count,
        "n_sources": _Count,
        "exact_path_limit": {"type": "integer", "minimum": 0, "maximum": 20000},
        "train_size": {"type": "integer", "minimum": 2},
        "eval_size": _Count,
        "init_point": {
            "type": ["array", "null"],
            "minItems": 2,
            "items": {"type": "number", "minimum": 0, "maximum": 1}
        },
        "n_runs": _Count,
        "outcome_threshold": {
            "type": ["number", "null"],
            "exclusiveMinimum": 0.5,
            "exclusiveMaximum": 1
        },
        "epsilons": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5}
        },
        "export_assignments": {"type": "boolean"},
        "synth_n_regions": _Count,
        "synth_n_municipalities": _Count,
        "synth_slope": {"type": "number"},
        "synth_intercept": {"type": "number"},
        "synth_noise_scale": {"type": "number", "minimum": 0},
        "synth_heteroscedastic_center": _Fraction,
        "synth_heteroscedastic_gain": {"type": "number", "minimum": 0},
        "synth_predictor_lo": _Fraction,
        "synth_predictor_hi": _Fraction,
        "synth_predictor_spread": {"type": "number", "minimum": 0},
        "synth_population_lo": _Count,
        "synth_population_hi": _Count,
    }
}

_config_validator = jsonschema.Draft7Validator(_config_schema)

_TRUE = {'true', 'yes', 'on', '1'}
_FALSE = {'false', 'no', 'off', '0'}


def _coerce(key: str, raw: str) -> Any:
    """Convert the string `raw` to the type the schema declares for `key`.

    :raises ConfigError: `key` is unknown or `raw` does not parse.
    """
    try:
        prop = _config_schema['properties'][key]
    except KeyError:
        raise ConfigError("Unknown configuration key %r." % key)
    types = prop['type'] if isinstance(prop['type'], list) else [prop['type']]
    raw = raw.strip()
    if raw == '' and 'null' in types:
        return None
    try:
        if 'integer' in types:
            return int(raw)
        if 'number' in types:
            return float(raw)
        if 'boolean' in types:
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(raw)
        if 'array' in types:
            return [float(v) for v in raw.split(',') if v.strip()]
    except ValueError:
        raise ConfigError("%s: cannot parse %r as %s." % (key, raw, '/'.join(types)))
    return raw


def parse_config_file(stream: TextIO) -> Dict[str, Any]:
    """Parse `key = value` lines into a dictionary of typed values.

    :raises ConfigError: A line is malformed, a key is repeated or unknown, or a value does not
                         parse.
    """
    values = {}
    for line_no, line in enumerate(stream, start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigError("Line %d: expected 'key = value'." % line_no)
        if key in values:
            raise ConfigError("Line %d: duplicate key %r." % (line_no, key))
        values[key] = _coerce(key, raw)
    return values


def _check_consistency(values: Mapping[str, Any]):
    problems = []
    if values['k_ring'] >= values['n_agents']:
        problems.append("k_ring (%d) must be smaller than n_agents (%d)" % (
            values['k_ring'], values['n_agents']))
    if values['synth_n_municipalities'] > values['synth_n_regions']:
        problems.append("synth_n_municipalities must not exceed synth_n_regions")
    if values['synth_predictor_lo'] > values['synth_predictor_hi']:
        problems.append("synth_predictor_lo must not exceed synth_predictor_hi")
    if values['synth_population_lo'] > values['synth_population_hi']:
        problems.append("synth_population_lo must not exceed synth_population_hi")
    if values['init_point'] is not None and abs(sum(values['init_point']) - 1.0) > 1e-12:
        problems.append("init_point must sum to 1")
    if problems:
        raise ConfigError(problems)


def resolve_config(stream: Optional[TextIO] = None,
                   overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Merge defaults, the configuration file `stream` and `overrides`, in increasing priority.

    Overrides whose value is None are ignored.

    :raises ConfigError: The merged configuration violates the schema or a cross-field
                         constraint.
    """
    values = {k: v for k, v in dataclasses.asdict(RunConfig()).items()}
    # JSON schema arrays are lists
    for key in ('init_point', 'epsilons'):
        if values[key] is not None:
            values[key] = list(values[key])
    if stream is not None:
        values.update(parse_config_file(stream))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        values[key] = _coerce(key, value) if isinstance(value, str) else value

    errors = sorted(_config_validator.iter_errors(values), key=lambda e: list(e.path))
    if errors:
        raise ConfigError(["%s: %s" % ('.'.join(str(p) for p in e.path) or '<root>', e.message)
                           for e in errors])
    _check_consistency(values)

    for key in ('init_point', 'epsilons'):
        if values[key] is not None:
            values[key] = tuple(values[key])
    return RunConfig(**values)
