"""Communication graphs: regular random generation, connectivity, file format."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import networkx as nx

from .errors import ConfigError, GenerationExhausted, InfeasibleSpec, InvalidParams

log = logging.getLogger(__name__)

RETRY_BUDGET = 1000


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph over process IDs ``0..n-1``."""

    n: int
    adjacency: tuple[frozenset[int], ...]

    def __post_init__(self):
        if len(self.adjacency) != self.n:
            raise InvalidParams(f"adjacency has {len(self.adjacency)} rows, expected {self.n}")
        for i, nbrs in enumerate(self.adjacency):
            if i in nbrs:
                raise InvalidParams(f"self-loop at {i}")
            for j in nbrs:
                if not 0 <= j < self.n:
                    raise InvalidParams(f"vertex {i} has out-of-range neighbor {j}")
                if i not in self.adjacency[j]:
                    raise InvalidParams(f"edge {i}-{j} is not symmetric")

    @classmethod
    def from_edges(cls, n: int, edges) -> Graph:
        adj = [set() for _ in range(n)]
        for u, v in edges:
            adj[u].add(v)
            adj[v].add(u)
        return cls(n, tuple(frozenset(a) for a in adj))

    @classmethod
    def complete(cls, n: int) -> Graph:
        return cls.from_edges(n, itertools.combinations(range(n), 2))

    @classmethod
    def cycle(cls, n: int) -> Graph:
        return cls.from_edges(n, ((i, (i + 1) % n) for i in range(n)))

    def neighbors(self, v: int) -> list[int]:
        return sorted(self.adjacency[v])

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def edges(self):
        for i in range(self.n):
            for j in sorted(self.adjacency[i]):
                if i < j:
                    yield i, j

    def is_regular(self, k: int | None = None) -> bool:
        degrees = {len(a) for a in self.adjacency}
        if len(degrees) > 1:
            return False
        return k is None or degrees == {k} or (self.n == 0)

    def canonical(self) -> str:
        """Canonical text form: one ``i: sorted neighbors`` line per vertex."""
        return "".join(
            f"{i}: {' '.join(map(str, sorted(a)))}\n" for i, a in enumerate(self.adjacency)
        )

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges())
        return g


@dataclass(frozen=True)
class TopologySpec:
    n: int
    k: int
    f: int
    seed: int = 0

    def validate(self):
        if self.f < 0 or self.n < 1:
            raise InvalidParams(f"need n >= 1 and f >= 0, got n={self.n}, f={self.f}")
        if self.n < 3 * self.f + 1:
            raise InvalidParams(f"n={self.n} < 3f+1={3 * self.f + 1}")
        if self.k < 2 * self.f + 1:
            raise InvalidParams(f"k={self.k} < 2f+1={2 * self.f + 1}")
        if self.k >= self.n:
            raise InfeasibleSpec(f"k={self.k} must be < n={self.n}")
        if (self.n * self.k) % 2:
            raise InfeasibleSpec(f"n*k = {self.n * self.k} is odd; no {self.k}-regular graph exists")


def generate_regular_graph(spec: TopologySpec, retries: int = RETRY_BUDGET) -> Graph:
    """Seeded random k-regular graph with vertex connectivity >= 2f+1.

    Draws from networkx's regular-graph sampler. A draw that is not
    (2f+1)-connected (or not connected at all) is rejected and redrawn with
    seed ``seed + attempt * 2**32``, up to ``retries`` attempts. Retry
    seeds never coincide with another base seed, so neighboring seeds
    cannot collapse onto the same graph.
    """
    spec.validate()
    need = max(2 * spec.f + 1, 1)
    for attempt in range(retries):
        g = nx.random_regular_graph(spec.k, spec.n, seed=spec.seed + (attempt << 32))
        graph = Graph.from_edges(spec.n, g.edges())
        if vertex_connectivity(graph) >= need:
            if attempt:
                log.debug("graph %s accepted after %d rejected draws", spec, attempt)
            return graph
    raise GenerationExhausted(
        f"no {need}-connected {spec.k}-regular graph on {spec.n} vertices "
        f"within {retries} seeds starting at {spec.seed}"
    )


def vertex_connectivity(graph: Graph) -> int:
    """Vertex connectivity (0 for disconnected graphs, n-1 for K_n)."""
    if graph.n <= 1:
        return 0
    return nx.node_connectivity(graph.to_networkx())


def brute_force_connectivity(graph: Graph) -> int:
    """Smallest vertex set whose removal disconnects the graph (n-1 for complete graphs)."""
    n = graph.n
    for size in range(n - 1):
        for cut in itertools.combinations(range(n), size):
            removed = set(cut)
            rest = [v for v in range(n) if v not in removed]
            seen = {rest[0]}
            stack = [rest[0]]
            while stack:
                u = stack.pop()
                for w in graph.adjacency[u]:
                    if w not in removed and w not in seen:
                        seen.add(w)
                        stack.append(w)
            if len(seen) < len(rest):
                return size
    return max(n - 1, 0)


def assert_brb_feasible(graph: Graph, f: int) -> bool:
    """True iff the graph is (2f+1)-connected."""
    return vertex_connectivity(graph) >= 2 * f + 1


def format_graph(graph: Graph, k: int | None = None) -> str:
    """``n k`` then one line of space-separated neighbor IDs per vertex."""
    if k is None:
        k = max((graph.degree(v) for v in range(graph.n)), default=0)
    lines = [f"{graph.n} {k}"]
    lines += [" ".join(map(str, graph.neighbors(v))) for v in range(graph.n)]
    return "\n".join(lines) + "\n"


def parse_graph(text: str, source: str = "<graph>") -> Graph:
    lines = text.splitlines()
    if not lines:
        raise ConfigError(f"{source}: empty graph file", line=1)
    try:
        n, _k = map(int, lines[0].split())
    except ValueError:
        raise ConfigError(f"{source}: expected 'n k'", line=1) from None
    rows = lines[1 : n + 1]
    if len(rows) != n:
        raise ConfigError(f"{source}: expected {n} adjacency lines, found {len(rows)}", line=len(lines))
    adj = []
    for lineno, row in enumerate(rows, start=2):
        try:
            adj.append(frozenset(int(x) for x in row.split()))
        except ValueError:
            raise ConfigError(f"{source}: non-integer neighbor ID", line=lineno) from None
    try:
        return Graph(n, tuple(adj))
    except InvalidParams as exc:
        raise ConfigError(f"{source}: {exc}") from None


def write_graph(graph: Graph, path: str | Path, k: int | None = None):
    Path(path).write_text(format_graph(graph, k))


def read_graph(path: str | Path) -> Graph:
    return parse_graph(Path(path).read_text(), str(path))
