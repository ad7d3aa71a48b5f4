"""Network graph, path asymmetry accounting and edge-disjoint path discovery.

Edges are bidirectional links with an independent delay per direction. Each
edge stores ``delay_fwd`` for the ``a -> b`` direction and ``delay_bwd`` for
``b -> a``. Parallel edges between the same pair of nodes are allowed; the
edge id, not the endpoint pair, identifies a link.

Disjoint paths are found with unit-capacity augmenting paths (Ford-Fulkerson).
Each augmenting path is the shortest one by hop count with lexicographic
tie-breaking on node labels and then edge ids, so results are deterministic.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

from ptpsec_sim import units


class TopologyError(ValueError):
    """Base class for invalid graphs and paths."""


class DuplicateNode(TopologyError):
    pass


class UnknownEndpoint(TopologyError):
    pass


class Disconnected(TopologyError):
    pass


class NoMasterSlavePath(TopologyError):
    pass


class UnknownEdge(TopologyError):
    pass


class InvalidPath(TopologyError):
    pass


@dataclass(frozen=True)
class Edge:
    edge_id: str
    a: str
    b: str
    delay_fwd: int
    delay_bwd: int

    @property
    def asymmetry(self) -> int:
        """Link asymmetry ``delay_fwd - delay_bwd`` in the ``a -> b`` sense."""
        return self.delay_fwd - self.delay_bwd

    def other(self, node: str) -> str:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise InvalidPath(f"node {node!r} is not an endpoint of edge {self.edge_id!r}")


@dataclass(frozen=True)
class Hop:
    edge_id: str
    along: bool  # True when traversed a -> b


@dataclass(frozen=True)
class Path:
    origin: str
    terminus: str
    hops: tuple[Hop, ...]

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(h.edge_id for h in self.hops)

    def __len__(self) -> int:
        return len(self.hops)

    def reversed(self) -> Path:
        hops = tuple(Hop(h.edge_id, not h.along) for h in reversed(self.hops))
        return Path(self.terminus, self.origin, hops)

    def concat(self, other: Path) -> Path:
        if self.terminus != other.origin:
            raise InvalidPath("paths do not share a joining node")
        return Path(self.origin, other.terminus, self.hops + other.hops)

    def nodes(self, graph: NetworkGraph) -> tuple[str, ...]:
        seq = [self.origin]
        for hop in self.hops:
            edge = graph.edge(hop.edge_id)
            seq.append(edge.b if hop.along else edge.a)
        return tuple(seq)


@dataclass(frozen=True)
class NetworkGraph:
    nodes: tuple[str, ...]
    edges: Mapping[str, Edge]
    master: str
    slaves: tuple[str, ...]
    _adjacency: Mapping[str, tuple[tuple[str, str], ...]] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        adjacency: dict[str, list[tuple[str, str]]] = {n: [] for n in self.nodes}
        for edge in self.edges.values():
            if edge.a in adjacency:
                adjacency[edge.a].append((edge.b, edge.edge_id))
            if edge.b in adjacency:
                adjacency[edge.b].append((edge.a, edge.edge_id))
        frozen = {n: tuple(sorted(nbrs)) for n, nbrs in adjacency.items()}
        object.__setattr__(self, "_adjacency", frozen)

    def edge(self, edge_id: str) -> Edge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise UnknownEdge(f"unknown edge {edge_id!r}") from None

    def neighbours(self, node: str) -> tuple[tuple[str, str], ...]:
        """``(neighbour, edge_id)`` pairs sorted by neighbour label, then edge id."""
        return self._adjacency[node]

    def path(self, origin: str, edge_ids: Iterable[str]) -> Path:
        """Build a Path by walking ``edge_ids`` from ``origin``."""
        hops = []
        node = origin
        seen = set()
        for eid in edge_ids:
            edge = self.edge(eid)
            if eid in seen:
                raise InvalidPath(f"edge {eid!r} repeated in path")
            seen.add(eid)
            if node == edge.a:
                hops.append(Hop(eid, True))
            elif node == edge.b:
                hops.append(Hop(eid, False))
            else:
                raise InvalidPath(f"edge {eid!r} does not continue the path at {node!r}")
            node = edge.other(node)
        return Path(origin, node, tuple(hops))

    def check_path(self, path: Path) -> None:
        node = path.origin
        seen = set()
        for hop in path.hops:
            edge = self.edge(hop.edge_id)
            if hop.edge_id in seen:
                raise InvalidPath(f"edge {hop.edge_id!r} repeated in path")
            seen.add(hop.edge_id)
            start = edge.a if hop.along else edge.b
            if start != node:
                raise InvalidPath(f"hop over {hop.edge_id!r} does not start at {node!r}")
            node = edge.other(node)
        if node != path.terminus:
            raise InvalidPath(f"path ends at {node!r}, not {path.terminus!r}")


@dataclass(frozen=True)
class DisjointPathSet:
    """Pairwise edge-disjoint paths; index 0 is the synchronization path."""

    source: str
    sink: str
    paths: tuple[Path, ...]

    @property
    def count(self) -> int:
        return len(self.paths)

    @property
    def redundant(self) -> int:
        return max(len(self.paths) - 1, 0)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, index: int) -> Path:
        return self.paths[index]

    def __len__(self) -> int:
        return len(self.paths)


def _reachable(graph: NetworkGraph, start: str, skip: frozenset[str] = frozenset()) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        node = todo.pop()
        for nbr, eid in graph.neighbours(node):
            if eid not in skip and nbr not in seen:
                seen.add(nbr)
                todo.append(nbr)
    return seen


def build_graph(description: Mapping) -> NetworkGraph:
    """Validate a topology description and return a NetworkGraph.

    ``description`` follows the scenario-file layout::

        {"nodes": ["M", "S"],
         "edges": [{"id": "e0", "a": "M", "b": "S",
                    "delay_fwd_us": 100, "delay_bwd_us": 100}],
         "master": "M", "slaves": ["S"]}

    ``delay_us`` may replace the two directional keys for a symmetric link.
    """
    nodes: list[str] = []
    for node in description.get("nodes", []):
        if not isinstance(node, str) or not node:
            raise TopologyError(f"node ids must be non-empty strings, got {node!r}")
        if node in nodes:
            raise DuplicateNode(f"duplicate node {node!r}")
        nodes.append(node)

    edges: dict[str, Edge] = {}
    for raw in description.get("edges", []):
        eid = raw.get("id")
        if not isinstance(eid, str) or not eid:
            raise TopologyError(f"edge ids must be non-empty strings, got {eid!r}")
        if eid in edges:
            raise TopologyError(f"duplicate edge {eid!r}")
        a, b = raw.get("a"), raw.get("b")
        for end in (a, b):
            if end not in nodes:
                raise UnknownEndpoint(f"edge {eid!r} references unknown node {end!r}")
        if a == b:
            raise TopologyError(f"edge {eid!r} is a self-loop")
        if "delay_us" in raw:
            fwd = bwd = units.us(raw["delay_us"])
        else:
            fwd, bwd = units.us(raw["delay_fwd_us"]), units.us(raw["delay_bwd_us"])
        if fwd < 0 or bwd < 0:
            raise TopologyError(f"edge {eid!r} has a negative delay")
        edges[eid] = Edge(eid, a, b, fwd, bwd)

    master = description.get("master")
    slaves = description.get("slaves")
    if slaves is None and "slave" in description:
        slaves = [description["slave"]]
    graph = NetworkGraph(tuple(nodes), edges, master, tuple(slaves or ()))
    validate_graph(graph)
    return graph


def validate_graph(graph: NetworkGraph) -> None:
    if graph.master not in graph.nodes:
        raise NoMasterSlavePath(f"master {graph.master!r} is not a node")
    if not graph.slaves:
        raise NoMasterSlavePath("no slave configured")
    reach = _reachable(graph, graph.master)
    for slave in graph.slaves:
        if slave not in graph.nodes:
            raise NoMasterSlavePath(f"slave {slave!r} is not a node")
        if slave == graph.master:
            raise NoMasterSlavePath(f"node {slave!r} cannot be both master and slave")
        if slave not in reach:
            raise NoMasterSlavePath(f"slave {slave!r} is unreachable from the master")
    if len(reach) != len(graph.nodes):
        missing = sorted(set(graph.nodes) - reach)
        raise Disconnected(f"graph is not connected; unreachable: {missing}")


def true_path_asymmetry(graph: NetworkGraph, path: Path) -> int:
    """Sum of link asymmetries along ``path``, in the origin -> terminus sense."""
    total = 0
    for hop in path.hops:
        alpha = graph.edge(hop.edge_id).asymmetry
        total += alpha if hop.along else -alpha
    return total


# Arc predicate: (from_node, to_node, edge_id) -> usable
_Usable = Callable[[str, str, str], bool]


def _shortest_path(graph: NetworkGraph, source: str, sink: str, usable: _Usable) -> Path | None:
    """Fewest-hop path over usable arcs, lexicographically smallest among ties.

    Distances are computed backwards from the sink, then the path is walked
    forward from the source, always taking the smallest ``(node, edge_id)``
    that moves one step closer.
    """
    dist = {sink: 0}
    queue = deque([sink])
    while queue:
        node = queue.popleft()
        for prev, eid in graph.neighbours(node):
            if prev not in dist and usable(prev, node, eid):
                dist[prev] = dist[node] + 1
                queue.append(prev)
    if source not in dist:
        return None
    hops = []
    node = source
    while node != sink:
        for nxt, eid in graph.neighbours(node):
            if dist.get(nxt) == dist[node] - 1 and usable(node, nxt, eid):
                edge = graph.edges[eid]
                along = edge.a == node and edge.b == nxt
                hops.append(Hop(eid, along))
                node = nxt
                break
    return Path(source, sink, tuple(hops))


def zero_flow_path_search(
    graph: NetworkGraph, flow: Mapping[str, int], source: str, sink: str
) -> Path | None:
    """Shortest source-sink path using only edges with ``flow[e] == 0``."""
    return _shortest_path(graph, source, sink, lambda u, v, eid: flow[eid] == 0)


def find_edge_disjoint_paths(graph: NetworkGraph, source: str, sink: str) -> DisjointPathSet:
    """Maximum set of pairwise edge-disjoint paths between ``source`` and ``sink``.

    Every edge has capacity one. ``flow[e]`` is +1 when a unit flows
    ``a -> b``, -1 for ``b -> a``. An augmenting path may cross an edge
    against its current flow, which cancels it; without that step a greedy
    choice of early paths can block later ones and the result falls short of
    the minimum edge cut.

    The paths are returned shortest first (ties by node labels, then edge
    ids), so index 0 is the synchronization path.
    """
    if source == sink:
        raise InvalidPath("source and sink must differ")
    for node in (source, sink):
        if node not in graph.nodes:
            raise UnknownEndpoint(f"unknown node {node!r}")

    flow = {eid: 0 for eid in graph.edges}

    def residual(u: str, v: str, eid: str) -> bool:
        along = graph.edges[eid].a == u
        return flow[eid] <= 0 if along else flow[eid] >= 0

    while (path := _shortest_path(graph, source, sink, residual)) is not None:
        for hop in path.hops:
            flow[hop.edge_id] += 1 if hop.along else -1

    paths = _decompose(graph, flow, source, sink)
    paths.sort(key=lambda p: (len(p), p.nodes(graph), p.edge_ids))
    return DisjointPathSet(source, sink, tuple(paths))


def _decompose(graph: NetworkGraph, flow: dict[str, int], source: str, sink: str) -> list[Path]:
    out: dict[str, list[tuple[str, str]]] = {n: [] for n in graph.nodes}
    for eid, f in flow.items():
        if f:
            edge = graph.edges[eid]
            tail, head = (edge.a, edge.b) if f > 0 else (edge.b, edge.a)
            out[tail].append((head, eid))
    for arcs in out.values():
        arcs.sort(reverse=True)  # pop() yields the smallest

    paths = []
    while out[source]:
        nodes = [source]
        hops: list[Hop] = []
        while nodes[-1] != sink:
            node = nodes[-1]
            nxt, eid = out[node].pop()
            hops.append(Hop(eid, graph.edges[eid].a == node))
            if nxt in nodes:
                # flow cycle: drop it, the remaining flow stays conserved
                cut = nodes.index(nxt)
                del nodes[cut + 1 :]
                del hops[cut:]
            else:
                nodes.append(nxt)
        paths.append(Path(source, sink, tuple(hops)))
    return paths


def paths_are_disjoint(paths: Iterable[Path]) -> bool:
    seen: set[str] = set()
    for path in paths:
        ids = set(path.edge_ids)
        if ids & seen:
            return False
        seen |= ids
    return True
