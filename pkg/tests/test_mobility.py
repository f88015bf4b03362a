from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcharge.domain import Position
from evcharge.mobility import (
    DisconnectedGraph,
    ParseError,
    RoadGraph,
    RoadGraphArena,
    UnitSquareArena,
    Unreachable,
    euclidean_estimate,
    load_road_graph,
    parse_road_graph,
    shortest_path_estimate,
)


def test_euclidean_examples():
    assert euclidean_estimate(Position(0, 0), Position(0, 0), 0.02).distance == 0.0
    assert euclidean_estimate(Position(0, 0), Position(1, 1), 0.02).distance == pytest.approx(math.sqrt(2))
    e = euclidean_estimate(Position(0, 0), Position(0.3, 0.4), 0.02)
    assert e.distance == pytest.approx(0.5)
    assert e.travel_time_s == pytest.approx(25.0)


def test_shortest_path_trivial_cases():
    g = RoadGraph.from_edges({"a": (0, 0), "b": (5, 0)}, [("a", "b", 5.0)])
    assert shortest_path_estimate(g, "a", "a", 1.0).distance == 0.0
    assert shortest_path_estimate(g, "a", "b", 2.0).distance == 5.0
    assert shortest_path_estimate(g, "a", "b", 2.0).travel_time_s == 2.5


def test_diamond_beats_direct_edge():
    g = RoadGraph.from_edges(
        {"s": (0, 0), "u": (1, 1), "v": (1, -1), "t": (2, 0)},
        [("s", "u", 1), ("u", "t", 1), ("s", "v", 1), ("v", "t", 1), ("s", "t", 2.5)],
    )
    assert shortest_path_estimate(g, "s", "t", 1.0).distance == 2.0


def test_directed_edge_and_unreachable():
    g = RoadGraph.from_edges({"a": (0, 0), "b": (1, 0)}, [("a", "b", 1.0, True)])
    assert shortest_path_estimate(g, "a", "b", 1.0).distance == 1.0
    with pytest.raises(Unreachable):
        shortest_path_estimate(g, "b", "a", 1.0)


def _brute_force(n, edges, s, t):
    """Shortest length over every simple path (exhaustive enumeration)."""
    adj = {}
    for u, v, w, directed in edges:
        adj.setdefault(u, []).append((v, w))
        if not directed:
            adj.setdefault(v, []).append((u, w))
    best = math.inf
    if s == t:
        return 0.0
    others = [x for x in range(n) if x not in (s, t)]
    for k in range(len(others) + 1):
        for mid in itertools.permutations(others, k):
            path = (s, *mid, t)
            total = 0.0
            for a, b in zip(path, path[1:]):
                ws = [w for v, w in adj.get(a, []) if v == b]
                if not ws:
                    break
                total += min(ws)
            else:
                best = min(best, total)
    return best


def _random_graph(rng, n):
    nodes = {str(i): (float(i), 0.0) for i in range(n)}
    # a random spanning cycle keeps the graph connected, extra edges add choices
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[(i + 1) % n]), float(rng.uniform(0.1, 10)), False) for i in range(n - 1)]
    for _ in range(int(rng.integers(0, n * 2))):
        u, v = (int(x) for x in rng.integers(n, size=2))
        if u != v:
            edges.append((u, v, float(rng.uniform(0.1, 10)), bool(rng.random() < 0.3)))
    return nodes, edges


def test_dijkstra_matches_exhaustive_enumeration_on_100_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(2, 7))
        nodes, edges = _random_graph(rng, n)
        g = RoadGraph.from_edges(nodes, [(str(u), str(v), w, d) for u, v, w, d in edges])
        for s in range(n):
            dist = g.dijkstra(str(s))
            for t in range(n):
                expected = _brute_force(n, edges, s, t)
                if math.isinf(expected):
                    assert str(t) not in dist
                else:
                    assert dist[str(t)] == pytest.approx(expected)


def test_dijkstra_matches_enumeration_on_8_nodes():
    rng = np.random.default_rng(8)
    for _ in range(5):
        nodes, edges = _random_graph(rng, 8)
        g = RoadGraph.from_edges(nodes, [(str(u), str(v), w, d) for u, v, w, d in edges])
        for s in range(8):
            dist = g.dijkstra(str(s))
            for t in range(8):
                assert dist[str(t)] == pytest.approx(_brute_force(8, edges, s, t))


@settings(max_examples=50)
@given(st.integers(3, 7), st.integers(0, 2**32 - 1))
def test_triangle_inequality(n, seed):
    rng = np.random.default_rng(seed)
    nodes, edges = _random_graph(rng, n)
    g = RoadGraph.from_edges(nodes, [(str(u), str(v), w, False) for u, v, w, _ in edges])
    d = {str(a): g.dijkstra(str(a)) for a in range(n)}
    for a, b, c in itertools.product(d, repeat=3):
        assert d[a][c] <= d[a][b] + d[b][c] + 1e-9


GRAPH = """
# a small loop with a one-way shortcut
N a 0 0
N b 100 0
N c 100 100
E a b 100
E b c 100
E c a 150 D
"""


def test_parse_and_load():
    g = load_road_graph(GRAPH)
    assert set(g.nodes) == {"a", "b", "c"}
    assert shortest_path_estimate(g, "c", "a", 10).distance == 150
    assert shortest_path_estimate(g, "a", "c", 10).distance == 200


@pytest.mark.parametrize(
    "text",
    ["N a 0", "N a 0 0\nN a 1 1", "N a 0 0\nN b 1 1\nE a b -1", "N a 0 0\nE a z 1", "X 1 2 3", "N a 0 0\nN b 1 1\nE a b 1 Q", ""],
)
def test_parse_errors(text):
    with pytest.raises(ParseError):
        load_road_graph(text + "\n")


def test_disconnected_graph_lists_offending_nodes():
    text = "N a 0 0\nN b 1 0\nN c 5 5\nN d 6 5\nE a b 1\nE c d 1\n"
    with pytest.raises(DisconnectedGraph) as exc:
        load_road_graph(text)
    assert exc.value.offending == ["c", "d"]


def test_one_way_dead_end_is_not_strongly_connected():
    with pytest.raises(DisconnectedGraph):
        load_road_graph("N a 0 0\nN b 1 0\nE a b 1 D\n")


def test_builtin_city_graph():
    g = load_road_graph("builtin:synthetic_city")
    assert len(g.nodes) == 100
    assert g.diameter() > 0
    with pytest.raises(ParseError):
        load_road_graph("builtin:atlantis")


def test_arenas_share_the_estimate_contract():
    g = parse_road_graph(GRAPH)
    graph_arena = RoadGraphArena(g, speed=10.0)
    square = UnitSquareArena(speed=0.02)
    rng = np.random.default_rng(1)
    for arena in (graph_arena, square):
        a, b = arena.sample_position(rng), arena.sample_position(rng)
        est = arena.estimate(a, b)
        assert est.distance >= 0
        assert est.travel_time_s == pytest.approx(est.distance / arena.speed)
        assert arena.contains(a)
    assert graph_arena.d_max == g.diameter()
    assert graph_arena.estimate(g.nodes["c"], g.nodes["a"]).distance == 150
