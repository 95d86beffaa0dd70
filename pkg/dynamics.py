"""Synchronous multipolar opinion dynamics.

Every agent i holds an opinion x^i on the unit simplex and a positive bias vector r^i. One step
maps

    x^i  ->  (x^i + r^i * sum_{j in N(i)} x^j) / ||x^i + r^i * sum_{j in N(i)} x^j||_1

for all agents simultaneously, reading only the previous state.
"""
import contextlib
import logging
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import NumericalError, ParameterError
from .graph import Graph
from .population import BiasAssignment

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12
"""Largest admissible deviation of a row sum from 1."""

_LOG_EVERY = 100

Biases = Union[BiasAssignment, np.ndarray]


@dataclass(frozen=True, eq=False)
class OpinionMatrix:
    """Row-stochastic (n_agents, n_options) opinion state."""
    values: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.values.shape[0]

    @property
    def n_options(self) -> int:
        return self.values.shape[1]

    def on_simplex(self, tolerance: float = SIMPLEX_TOLERANCE) -> bool:
        return bool(np.all(self.values >= 0.0)
                    and np.all(np.abs(self.values.sum(axis=1) - 1.0) <= tolerance))


@dataclass(frozen=True)
class ConvergenceSettings:
    """Stopping rule: max over agents of the L1 step change below `tolerance`."""
    tolerance: float = 1e-8
    max_iterations: int = 10000

    def validate(self):
        if not self.tolerance > 0.0:
            raise ParameterError("tolerance must be positive, got %r." % self.tolerance)
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be at least 1.")


@dataclass(frozen=True)
class RunResult:
    final_state: OpinionMatrix
    iterations_used: int
    converged: bool
    final_residual: float


def init_opinions(n_agents: int, n_options: int,
                  point: Optional[Sequence[float]] = None) -> OpinionMatrix:
    """Initialize every agent at `point`, by default the barycenter (1/k, ..., 1/k).

    :raises ParameterError: `point` is not on the simplex, or lies on its boundary. Boundary
                            points are rejected since vertices are fixed under the dynamics.
    """
    if n_options < 2:
        raise ParameterError("Need at least two options, got %d." % n_options)
    if n_agents < 0:
        raise ParameterError("n_agents must be nonnegative.")
    if point is None:
        row = np.full(n_options, 1.0 / n_options)
    else:
        row = np.asarray(point, dtype=np.float64)
        if row.shape != (n_options,):
            raise ParameterError("Initial point must have %d entries." % n_options)
        if np.any(row < 0.0) or not math.isclose(math.fsum(row), 1.0, abs_tol=SIMPLEX_TOLERANCE):
            raise ParameterError("Initial point %s is not on the unit simplex." % list(row))
        if np.any(row == 0.0):
            logger.warning("Initial point %s lies on the simplex boundary; unanimous vertex "
                           "states are fixed points and would never move", list(row))
            raise ParameterError(
                "Initial point %s must lie strictly inside the simplex." % list(row))
    return OpinionMatrix(np.tile(row, (n_agents, 1)))


def _bias_vectors(biases: Biases, n_agents: int, n_options: int) -> np.ndarray:
    vectors = biases.vectors() if isinstance(biases, BiasAssignment) else np.asarray(biases,
                                                                                     dtype=float)
    if vectors.shape != (n_agents, n_options):
        raise ParameterError("Bias vectors have shape %s, expected %s." % (
            vectors.shape, (n_agents, n_options)))
    if not np.all(vectors > 0.0):
        raise ParameterError("Bias vectors must be strictly positive.")
    return vectors


class OpinionEngine:
    """Applies the update to whole opinion matrices.

    Rows are split into contiguous blocks, one sparse product per block. A row's neighbor sum is
    accumulated in ascending neighbor order inside scipy's CSR kernel regardless of blocking, so
    results are bit-identical for every worker count.
    """

    def __init__(self, g: Graph, biases: Biases, n_options: int = 2, *, workers: int = 1):
        self.n_agents = g.n_nodes
        self.n_options = n_options
        self.bias = _bias_vectors(biases, g.n_nodes, n_options)
        self.workers = max(1, workers)

        adjacency = g.adjacency()
        bounds = np.linspace(0, g.n_nodes, self.workers + 1).astype(np.int64)
        self._blocks = [(int(a), int(b), adjacency[a:b]) for a, b in zip(bounds[:-1], bounds[1:])
                        if b > a]

    def _neighbor_sums(self, x: np.ndarray, pool: Optional[Executor]) -> np.ndarray:
        out = np.empty_like(x)

        def block(args):
            start, end, rows = args
            out[start:end] = rows @ x

        if pool is None or len(self._blocks) == 1:
            for args in self._blocks:
                block(args)
        else:
            list(pool.map(block, self._blocks))
        return out

    def step(self, x: np.ndarray, pool: Optional[Executor] = None) -> np.ndarray:
        """Returns the next state; `x` is left untouched."""
        numerator = x + self.bias * self._neighbor_sums(x, pool)
        norm = numerator.sum(axis=1, keepdims=True)
        assert not np.any(norm == 0.0), "zero normalizer with positive biases and simplex rows"
        new = numerator / norm
        if np.max(np.abs(new.sum(axis=1) - 1.0)) > SIMPLEX_TOLERANCE:
            new /= new.sum(axis=1, keepdims=True)
        return new

    def run(self, x0: np.ndarray, settings: ConvergenceSettings,
            on_iteration: Optional[Callable[[int, np.ndarray], None]] = None) -> RunResult:
        """Iterate `step` from `x0` until the stopping rule holds or the iteration cap is hit.

        :param on_iteration: Called with (t, state) after every step, e.g. to write snapshots.
        :raises NumericalError: The state becomes non-finite.
        """
        settings.validate()
        x = x0
        residual = math.inf
        t = 0
        pool_context = (ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1
                        else contextlib.nullcontext())
        with pool_context as pool:
            while t < settings.max_iterations:
                new = self.step(x, pool)
                t += 1
                if not np.all(np.isfinite(new)):
                    raise NumericalError("Opinion state is not finite after %d iterations." % t)
                residual = float(np.max(np.abs(new - x).sum(axis=1))) if len(new) else 0.0
                x = new
                if on_iteration is not None:
                    on_iteration(t, x)
                if t % _LOG_EVERY == 0:
                    logger.debug("Iteration %d: residual %.3e", t, residual)
                if residual < settings.tolerance:
                    break

        converged = residual < settings.tolerance
        if converged:
            logger.info("Converged after %d iterations (residual %.3e)", t, residual)
        else:
            logger.warning("No convergence within %d iterations (residual %.3e)", t, residual)
        return RunResult(OpinionMatrix(x), t, converged, residual)


def _check_state(state: OpinionMatrix, g: Graph):
    if state.n_agents != g.n_nodes:
        raise ParameterError("State has %d agents, graph has %d nodes." % (
            state.n_agents, g.n_nodes))


def step(state: OpinionMatrix, g: Graph, biases: Biases, *, workers: int = 1) -> OpinionMatrix:
    """Apply one synchronous update to all agents.

    :raises ParameterError: Dimensions of state, graph and biases disagree.
    """
    _check_state(state, g)
    engine = OpinionEngine(g, biases, state.n_options, workers=workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return OpinionMatrix(engine.step(state.values, pool))
    return OpinionMatrix(engine.step(state.values))


def run(state: OpinionMatrix, g: Graph, biases: Biases, settings: ConvergenceSettings, *,
        workers: int = 1,
        on_iteration: Optional[Callable[[int, np.ndarray], None]] = None) -> RunResult:
    """Iterate the dynamics to convergence.

    Non-convergence is reported through `RunResult.converged`, not raised.

    :raises ParameterError: Dimensions of state, graph and biases disagree.
    :raises NumericalError: The state becomes non-finite.
    """
    _check_state(state, g)
    engine = OpinionEngine(g, biases, state.n_options, workers=workers)
    return engine.run(state.values, settings, on_iteration)


def global_share(state: OpinionMatrix) -> float:
    """Mean of the first opinion entry over all agents."""
    return math.fsum(state.values[:, 0]) / state.n_agents
