"""Distances and travel times in the two arena modes.

``UnitSquareArena`` measures straight-line distances in [0, 1]^2.
``RoadGraphArena`` routes over a weighted road graph loaded from a small
line-oriented text format::

    # comment
    N <id> <x> <y>
    E <from> <to> <length> [D]

Edges are undirected unless the trailing ``D`` flag is present.  Node ids
are arbitrary tokens without whitespace.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .domain import EVChargeError, Position


class ParseError(EVChargeError, ValueError):
    pass


class DisconnectedGraph(EVChargeError, ValueError):
    def __init__(self, message: str, offending: list[str]):
        super().__init__(message)
        self.offending = offending


class Unreachable(EVChargeError):
    pass


@dataclass(frozen=True, slots=True)
class TravelEstimate:
    distance: float
    travel_time_s: float


def euclidean_estimate(a: Position, b: Position, speed: float) -> TravelEstimate:
    if speed <= 0:
        raise ValueError("speed must be positive")
    d = math.hypot(a.x - b.x, a.y - b.y)
    return TravelEstimate(d, d / speed)


@dataclass(frozen=True, eq=False)
class RoadGraph:
    nodes: dict[str, Position]
    # adjacency: node -> list of (neighbor, length), sorted by neighbor id
    adjacency: dict[str, list[tuple[str, float]]]
    edges: tuple[tuple[str, str, float, bool], ...] = ()
    _reverse: dict[str, list[tuple[str, float]]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        rev: dict[str, list[tuple[str, float]]] = {n: [] for n in self.nodes}
        for u, nbrs in self.adjacency.items():
            for v, w in nbrs:
                rev[v].append((u, w))
        for lst in rev.values():
            lst.sort()
        object.__setattr__(self, "_reverse", rev)

    @classmethod
    def from_edges(
        cls,
        nodes: dict[str, tuple[float, float]] | dict[str, Position],
        edges: list[tuple[str, str, float] | tuple[str, str, float, bool]],
    ) -> RoadGraph:
        pos = {
            str(k): v if isinstance(v, Position) else Position(float(v[0]), float(v[1]), str(k))
            for k, v in nodes.items()
        }
        pos = {k: Position(p.x, p.y, k) for k, p in pos.items()}
        adj: dict[str, list[tuple[str, float]]] = {n: [] for n in pos}
        norm = []
        for e in edges:
            u, v, w = str(e[0]), str(e[1]), float(e[2])
            directed = bool(e[3]) if len(e) > 3 else False
            if u not in pos or v not in pos:
                raise ParseError(f"edge {u}->{v} references an unknown node")
            if not (w > 0 and math.isfinite(w)):
                raise ParseError(f"edge {u}->{v} has non-positive length {w}")
            adj[u].append((v, w))
            if not directed:
                adj[v].append((u, w))
            norm.append((u, v, w, directed))
        for lst in adj.values():
            lst.sort()
        return cls(pos, adj, tuple(norm))

    def dijkstra(self, source: str, *, reverse: bool = False) -> dict[str, float]:
        """Shortest distances from ``source`` (or to it, with ``reverse``)."""
        if source not in self.nodes:
            raise KeyError(source)
        adj = self._reverse if reverse else self.adjacency
        dist = {source: 0.0}
        done: set[str] = set()
        # (distance, node id) ordering gives lexicographic tie-breaking
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, w in adj[u]:
                nd = d + w
                if nd < dist.get(v, math.inf):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    def diameter(self) -> float:
        return max(max(self.dijkstra(n).values()) for n in self.nodes)


def shortest_path_estimate(g: RoadGraph, source: str, target: str, speed: float) -> TravelEstimate:
    if source not in g.nodes or target not in g.nodes:
        raise KeyError(f"unknown node in ({source!r}, {target!r})")
    if speed <= 0:
        raise ValueError("speed must be positive")
    d = g.dijkstra(source).get(target)
    if d is None:
        raise Unreachable(f"no path from {source} to {target}")
    return TravelEstimate(d, d / speed)


def parse_road_graph(text: str) -> RoadGraph:
    nodes: dict[str, tuple[float, float]] = {}
    edges: list[tuple[str, str, float, bool]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "N" and len(parts) == 4:
                if parts[1] in nodes:
                    raise ParseError(f"line {lineno}: duplicate node {parts[1]}")
                nodes[parts[1]] = (float(parts[2]), float(parts[3]))
            elif parts[0] == "E" and len(parts) in (4, 5):
                if len(parts) == 5 and parts[4] != "D":
                    raise ParseError(f"line {lineno}: unknown edge flag {parts[4]!r}")
                edges.append((parts[1], parts[2], float(parts[3]), len(parts) == 5))
            else:
                raise ParseError(f"line {lineno}: cannot parse {raw!r}")
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"line {lineno}: {exc}") from None
    if not nodes:
        raise ParseError("graph has no nodes")
    try:
        return RoadGraph.from_edges(nodes, edges)
    except ParseError as exc:
        raise ParseError(str(exc)) from None


def check_strongly_connected(g: RoadGraph) -> None:
    first = min(g.nodes)
    fwd = g.dijkstra(first)
    bwd = g.dijkstra(first, reverse=True)
    main = set(fwd) & set(bwd)
    if len(main) != len(g.nodes):
        offending = sorted(set(g.nodes) - main)
        raise DisconnectedGraph(
            f"graph is not strongly connected; nodes outside the component of {first!r}: "
            + ", ".join(offending),
            offending,
        )


BUILTIN_PREFIX = "builtin:"


def load_road_graph(source: str | Path) -> RoadGraph:
    """Load, parse and validate a road graph.

    ``source`` is a file path, the literal graph text (if it contains a
    newline), or ``builtin:<name>`` for a graph shipped with the package.
    """
    s = str(source)
    if s.startswith(BUILTIN_PREFIX):
        name = s[len(BUILTIN_PREFIX):]
        try:
            text = resources.files("evcharge").joinpath(f"data/{name}.graph").read_text()
        except FileNotFoundError:
            raise ParseError(f"no builtin graph named {name!r}") from None
    elif "\n" in s:
        text = s
    else:
        text = Path(s).read_text()
    g = parse_road_graph(text)
    check_strongly_connected(g)
    return g


class UnitSquareArena:
    """Straight-line travel inside the unit square."""

    mode = "unit_square"

    def __init__(self, speed: float = 0.02):
        self.speed = speed
        self.d_max = math.sqrt(2.0)

    def estimate(self, a: Position, b: Position) -> TravelEstimate:
        return euclidean_estimate(a, b, self.speed)

    def sample_position(self, rng: np.random.Generator) -> Position:
        x, y = rng.random(2)
        return Position(float(x), float(y))

    def contains(self, p: Position) -> bool:
        return p.in_unit_square()


class RoadGraphArena:
    """Shortest-path travel over a road graph.

    Distances *to* registered targets (stations) are cached by one reverse
    Dijkstra per target, so per-vehicle queries are dictionary lookups.
    """

    mode = "road_graph"

    def __init__(self, graph: RoadGraph, speed: float = 10.0, d_max: float | None = None):
        self.graph = graph
        self.speed = speed
        self.d_max = graph.diameter() if d_max is None else d_max
        self._node_ids = sorted(graph.nodes)
        self._to: dict[str, dict[str, float]] = {}

    def position(self, node: str) -> Position:
        return self.graph.nodes[node]

    def _dist_to(self, target: str) -> dict[str, float]:
        table = self._to.get(target)
        if table is None:
            table = self.graph.dijkstra(target, reverse=True)
            self._to[target] = table
        return table

    def estimate(self, a: Position, b: Position) -> TravelEstimate:
        if a.node is None or b.node is None:
            raise ValueError("road-graph positions must carry a node id")
        d = self._dist_to(b.node).get(a.node)
        if d is None:
            raise Unreachable(f"no path from {a.node} to {b.node}")
        return TravelEstimate(d, d / self.speed)

    def sample_position(self, rng: np.random.Generator) -> Position:
        return self.graph.nodes[self._node_ids[int(rng.integers(len(self._node_ids)))]]

    def contains(self, p: Position) -> bool:
        return p.node is not None and p.node in self.graph.nodes
