from __future__ import annotations

import itertools
import random

import pytest

from ptpsec_sim.topology import NetworkGraph, build_graph


def two_link_graph(delay_us=100) -> NetworkGraph:
    return build_graph(
        {
            "nodes": ["M", "S"],
            "edges": [
                {"id": "e0", "a": "M", "b": "S", "delay_us": delay_us},
                {"id": "e1", "a": "M", "b": "S", "delay_us": delay_us},
            ],
            "master": "M",
            "slaves": ["S"],
        }
    )


def random_graph_description(rng: random.Random, max_nodes: int = 8, max_edges: int = 14) -> dict:
    """Connected multigraph with M = n0 and S = the last node."""
    n = rng.randint(2, max_nodes)
    nodes = [f"n{i}" for i in range(n)]
    pairs = []
    # random spanning tree first so the graph is connected
    for i in range(1, n):
        pairs.append((nodes[rng.randrange(i)], nodes[i]))
    extra = rng.randint(0, max_edges - len(pairs))
    for _ in range(extra):
        a, b = rng.sample(nodes, 2)
        pairs.append((a, b))
    edges = [
        {"id": f"e{k}", "a": a, "b": b, "delay_fwd_us": rng.randint(1, 200), "delay_bwd_us": rng.randint(1, 200)}
        for k, (a, b) in enumerate(pairs)
    ]
    return {"nodes": nodes, "edges": edges, "master": nodes[0], "slaves": [nodes[-1]]}


def brute_force_min_cut(graph: NetworkGraph, source: str, sink: str) -> int:
    """Smallest number of edges whose removal separates source from sink."""
    ids = sorted(graph.edges)
    for size in range(len(ids) + 1):
        for removed in itertools.combinations(ids, size):
            if not _connected_without(graph, source, sink, set(removed)):
                return size
    raise AssertionError("unreachable")


def _connected_without(graph: NetworkGraph, source: str, sink: str, removed: set[str]) -> bool:
    seen = {source}
    stack = [source]
    while stack:
        node = stack.pop()
        for nxt, eid in graph.neighbours(node):
            if eid not in removed and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return sink in seen


@pytest.fixture
def two_link():
    return two_link_graph()
