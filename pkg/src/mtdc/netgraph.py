"""Weighted undirected graphs for the DC grid and the communication layer."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .densela import MAX_DIM


class GraphKind(str, enum.Enum):
    DC_GRID = "dc-grid"  # weight = 1/R_ij, per-unit conductance
    COMM = "comm"  # weight = c_ij


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph on nodes ``0..n-1`` with positive edge weights.

    Edges are stored 0-based as ``(i, j, w)`` with ``i < j``. Use
    :meth:`from_edges` to build one from the 1-based terminal numbering
    used in scenario files.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]
    kind: GraphKind = GraphKind.DC_GRID

    def __post_init__(self):
        if self.n < 1 or self.n > MAX_DIM:
            raise GraphError(f"node count {self.n} outside 1..{MAX_DIM}")
        seen = set()
        norm = []
        for i, j, w in self.edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise GraphError(f"self-loop at node {i + 1}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i + 1},{j + 1}) references a node outside 1..{self.n}")
            if not (w > 0 and np.isfinite(w)):
                raise GraphError(f"edge ({i + 1},{j + 1}) has non-positive weight {w}")
            i, j = min(i, j), max(i, j)
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i + 1},{j + 1})")
            seen.add((i, j))
            norm.append((i, j, w))
        object.__setattr__(self, "edges", tuple(norm))
        object.__setattr__(self, "kind", GraphKind(self.kind))
        if self.kind is GraphKind.DC_GRID and not connectivity_check(self):
            raise GraphError("DC grid graph is not connected")

    @classmethod
    def from_edges(cls, n, edges, kind=GraphKind.DC_GRID) -> WeightedGraph:
        """Build from 1-based ``(i, j, weight)`` triples."""
        return cls(n, tuple((i - 1, j - 1, w) for i, j, w in edges), kind)

    @classmethod
    def from_resistances(cls, n, lines) -> WeightedGraph:
        """DC grid from 1-based ``(i, j, R_ij)`` triples."""
        return cls.from_edges(n, [(i, j, 1.0 / r) for i, j, r in lines], GraphKind.DC_GRID)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges], dtype=float)


def laplacian(g: WeightedGraph) -> np.ndarray:
    lap = np.zeros((g.n, g.n))
    for i, j, w in g.edges:
        lap[i, i] += w
        lap[j, j] += w
        lap[i, j] -= w
        lap[j, i] -= w
    return lap


def incidence(g: WeightedGraph) -> np.ndarray:
    """Vertex-edge incidence: column ``e`` has +1 at ``i`` and -1 at ``j``."""
    b = np.zeros((g.n, g.m))
    for e, (i, j, _) in enumerate(g.edges):
        b[i, e] = 1.0
        b[j, e] = -1.0
    return b


def connectivity_check(g: WeightedGraph) -> bool:
    adj = [[] for _ in range(g.n)]
    for i, j, _ in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == g.n


def complete_comm_graph(n: int, weight: float = 1.0) -> WeightedGraph:
    return WeightedGraph(n, tuple((i, j, weight) for i, j in combinations(range(n), 2)), GraphKind.COMM)
