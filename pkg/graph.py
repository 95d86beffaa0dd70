"""Watts-Strogatz interaction graphs in compressed sparse row form.

Agents that receive consecutive indices are close in the ring lattice and, with high probability,
stay closely connected after rewiring. The population module relies on this to encode geography.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Set, TextIO, Tuple

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .errors import InputError, ParameterError
from .seeding import make_rng

logger = logging.getLogger(__name__)

_MAX_REWIRE_ATTEMPTS = 100
"""Redraws of a rewiring target before the original edge is kept."""

_EXACT_PATH_LENGTH_LIMIT = 20000
"""Largest graph for which all-pairs BFS is attempted."""

_BFS_BATCH = 64
"""Number of BFS sources handed to scipy at once."""


@dataclass(frozen=True)
class WattsStrogatzParams:
    """Parameters of the Watts-Strogatz construction.

    :ivar k_ring: Even number of ring neighbors, k_ring/2 on each side.
    :ivar p_rewire: Probability with which each clockwise edge is rewired.
    """
    n_nodes: int
    k_ring: int
    p_rewire: float
    seed: int = 0

    def validate(self):
        """:raises ParameterError: The parameters cannot produce a simple ring lattice."""
        if self.n_nodes <= 2:
            raise ParameterError("Graph needs more than two nodes, got %d." % self.n_nodes)
        if self.k_ring < 2 or self.k_ring % 2 != 0:
            raise ParameterError("k_ring must be even and at least 2, got %d." % self.k_ring)
        if self.k_ring >= self.n_nodes:
            raise ParameterError(
                "k_ring (%d) must be smaller than n_nodes (%d)." % (self.k_ring, self.n_nodes))
        if not 0.0 <= self.p_rewire <= 1.0:
            raise ParameterError("p_rewire must lie in [0, 1], got %r." % self.p_rewire)
        if not 0 <= self.seed < 2**64:
            raise ParameterError("Seed %d is not a 64-bit unsigned integer." % self.seed)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph. Neighbor lists are sorted ascending.

    The neighbors of node i are `neighbor_ids[row_offsets[i]:row_offsets[i + 1]]`.
    """
    n_nodes: int
    row_offsets: np.ndarray
    neighbor_ids: np.ndarray

    class Disconnected(ParameterError):
        def __init__(self, n_components):
            self.n_components = n_components
            super().__init__('Graph is disconnected (%d components)' % n_components)

    class TooLarge(ParameterError):
        def __init__(self, n_nodes, limit):
            super().__init__('Graph with %d nodes exceeds the limit of %d nodes' % (n_nodes, limit))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n_nodes == other.n_nodes
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.neighbor_ids, other.neighbor_ids))

    @property
    def n_edges(self) -> int:
        return len(self.neighbor_ids) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, i: int) -> np.ndarray:
        return self.neighbor_ids[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edges(self) -> Iterator[Tuple[int, int]]:
        """Yield every edge once as (i, j) with i < j, in ascending order."""
        for i in range(self.n_nodes):
            for j in self.neighbors(i):
                if i < j:
                    yield i, int(j)

    def adjacency(self) -> scipy.sparse.csr_matrix:
        """Returns the 0/1 adjacency matrix sharing this graph's index arrays."""
        data = np.ones(len(self.neighbor_ids), dtype=np.float64)
        return scipy.sparse.csr_matrix(
            (data, self.neighbor_ids, self.row_offsets), shape=(self.n_nodes, self.n_nodes))


def _graph_from_edges(n_nodes: int, edges: np.ndarray) -> Graph:
    """Build the CSR form from an (m, 2) array of undirected edges."""
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    row_offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n_nodes), out=row_offsets[1:])
    return Graph(n_nodes, row_offsets, dst.astype(np.int64))


def generate_watts_strogatz(params: WattsStrogatzParams) -> Graph:
    """Generate a Watts-Strogatz graph.

    Nodes are visited in ascending order and each node's k_ring/2 clockwise edges (i, i+d) in
    order of d. With probability `p_rewire` the far endpoint is replaced by a node drawn uniformly,
    redrawing on self-loops and duplicates up to a fixed number of attempts.

    :raises ParameterError: `params` are invalid.
    """
    params.validate()
    n, half = params.n_nodes, params.k_ring // 2
    rng = make_rng(params.seed)

    adj: List[Set[int]] = [set() for _ in range(n)]
    for i in range(n):
        for d in range(1, half + 1):
            j = (i + d) % n
            adj[i].add(j)
            adj[j].add(i)

    kept = 0
    for i in range(n):
        for d in range(1, half + 1):
            if rng.random() >= params.p_rewire:
                continue
            if len(adj[i]) >= n - 1:
                continue  # no admissible target
            for _ in range(_MAX_REWIRE_ATTEMPTS):
                u = int(rng.integers(n))
                if u != i and u not in adj[i]:
                    break
            else:
                kept += 1
                continue
            j = (i + d) % n
            adj[i].discard(j)
            adj[j].discard(i)
            adj[i].add(u)
            adj[u].add(i)
    if kept:
        logger.debug("Kept %d edges after %d failed rewiring draws each", kept, _MAX_REWIRE_ATTEMPTS)

    edges = np.array([(i, j) for i in range(n) for j in adj[i] if i < j], dtype=np.int64)
    g = _graph_from_edges(n, edges)
    logger.info("Generated Watts-Strogatz graph: n=%d, k=%d, p=%g, %d edges",
                n, params.k_ring, params.p_rewire, g.n_edges)
    return g


def connected_components(g: Graph) -> int:
    """Returns the number of connected components of `g`."""
    n_components, _ = scipy.sparse.csgraph.connected_components(g.adjacency(), directed=False)
    return int(n_components)


def _check_connected(g: Graph):
    n_components = connected_components(g)
    if n_components != 1:
        raise Graph.Disconnected(n_components)


def _distance_sum(adjacency, sources: np.ndarray) -> int:
    """Sum of BFS distances from each of `sources` to every node."""
    dist = scipy.sparse.csgraph.shortest_path(
        adjacency, method='D', directed=False, unweighted=True, indices=sources)
    return int(dist.astype(np.int64).sum())


def _total_distance(g: Graph, sources: np.ndarray, workers: int) -> int:
    """Sum of distances from `sources` to all nodes, fanned out over `workers` threads.

    Per-batch sums are integers, so the total does not depend on the batching or worker count.
    """
    adjacency = g.adjacency()
    batches = [sources[i:i + _BFS_BATCH] for i in range(0, len(sources), _BFS_BATCH)]
    if workers <= 1 or len(batches) == 1:
        return sum(_distance_sum(adjacency, b) for b in batches)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(lambda b: _distance_sum(adjacency, b), batches))


def exact_average_path_length(g: Graph, *, workers: int = 1,
                              limit: int = _EXACT_PATH_LENGTH_LIMIT) -> float:
    """Mean shortest-path distance over all unordered node pairs.

    :param limit: Largest admissible number of nodes.
    :raises Graph.TooLarge: `g` has more than `limit` nodes.
    :raises Graph.Disconnected: Some pairs are not connected.
    """
    if g.n_nodes > limit:
        raise Graph.TooLarge(g.n_nodes, limit)
    _check_connected(g)
    total = _total_distance(g, np.arange(g.n_nodes), workers)
    return total / (g.n_nodes * (g.n_nodes - 1))


def sampled_average_path_length(g: Graph, n_sources: int, seed: int, *,
                                workers: int = 1) -> float:
    """Estimate the average path length by BFS from `n_sources` distinct random sources.

    With `n_sources == g.n_nodes` the result equals `exact_average_path_length(g)`.

    :raises ParameterError: `n_sources` is out of range.
    :raises Graph.Disconnected: `g` is not connected.
    """
    if not 1 <= n_sources <= g.n_nodes:
        raise ParameterError("n_sources must lie in [1, %d], got %d." % (g.n_nodes, n_sources))
    _check_connected(g)
    sources = np.sort(make_rng(seed).choice(g.n_nodes, size=n_sources, replace=False))
    total = _total_distance(g, sources, workers)
    return total / (n_sources * (g.n_nodes - 1))


def write_edge_list(g: Graph, stream: TextIO):
    """Write `g` as a header line "n_nodes m_edges" followed by one "i j" line per edge, i < j."""
    stream.write("%d %d\n" % (g.n_nodes, g.n_edges))
    for i, j in g.edges():
        stream.write("%d %d\n" % (i, j))


def read_edge_list(stream: TextIO) -> Graph:
    """Read a graph in the format written by `write_edge_list`.

    :raises InputError: The file is malformed, or lists self-loops, duplicate or
                        out-of-range edges.
    """
    header: Optional[Tuple[int, int]] = None
    pairs = []
    seen = set()
    for line_no, line in enumerate(stream, start=1):
        fields = line.split()
        if not fields:
            continue
        try:
            a, b = (int(f) for f in fields)
        except ValueError:
            raise InputError("Line %d: expected two integers, got %r." % (line_no, line.strip()))
        if header is None:
            if a < 1 or b < 0:
                raise InputError("Line %d: invalid header %d nodes, %d edges." % (line_no, a, b))
            header = (a, b)
            continue
        if not a < b:
            raise InputError("Line %d: edge (%d, %d) must satisfy i < j." % (line_no, a, b))
        if a < 0 or b >= header[0]:
            raise InputError("Line %d: node index out of range." % line_no)
        if (a, b) in seen:
            raise InputError("Line %d: duplicate edge (%d, %d)." % (line_no, a, b))
        seen.add((a, b))
        pairs.append((a, b))
    if header is None:
        raise InputError("Edge list is empty.")
    n_nodes, m_edges = header
    if m_edges != len(pairs):
        raise InputError("Header announces %d edges, found %d." % (m_edges, len(pairs)))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return _graph_from_edges(n_nodes, edges)
