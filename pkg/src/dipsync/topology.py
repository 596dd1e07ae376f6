"""Network graphs: grid/line/arbitrary topologies, BFS layers, Bernoulli link sampling.

Node ids are small non-negative integers; the gateway always gets id 0 in the
built-in generators, and the remaining ids follow breadth-first order from the
gateway (row-major tie-break for grids) so that id order tracks proximity to
the gateway.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UnreachableNodeError

Edge = tuple[int, int]

_CORNER_ALIASES = {
    "top-left": "top-left",
    "tl": "top-left",
    "left": "top-left",
    "top-right": "top-right",
    "tr": "top-right",
    "right": "top-right",
    "bottom-left": "bottom-left",
    "bl": "bottom-left",
    "bottom-right": "bottom-right",
    "br": "bottom-right",
}


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph with a distinguished gateway node.

    `edges` is the canonical edge list: each edge stored once as (u, v) with
    u < v, sorted lexicographically.  `neighbors[i]` is the ascending tuple of
    nodes adjacent to i.  Random draws that depend on edges always consume one
    value per edge in canonical order, so runs are seed-reproducible.
    """

    node_count: int
    gateway: int
    edges: tuple[Edge, ...]
    neighbors: tuple[tuple[int, ...], ...]

    @classmethod
    def from_edges(cls, node_count: int, gateway: int, edges) -> "Topology":
        if node_count < 1:
            raise ConfigError("node_count must be >= 1")
        if not 0 <= gateway < node_count:
            raise ConfigError(f"gateway id {gateway} out of range")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ConfigError(f"self-loop on node {u}")
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ConfigError(f"edge ({u},{v}) references unknown node")
            canon.add((min(u, v), max(u, v)))
        edge_list = tuple(sorted(canon))
        nbrs = [[] for _ in range(node_count)]
        for u, v in edge_list:
            nbrs[u].append(v)
            nbrs[v].append(u)
        topo = cls(
            node_count=node_count,
            gateway=gateway,
            edges=edge_list,
            neighbors=tuple(tuple(sorted(n)) for n in nbrs),
        )
        for node in range(node_count):
            if node != gateway and not topo.neighbors[node]:
                raise UnreachableNodeError(node)
        # every node must reach the gateway
        connectivity_layers(topo)
        return topo

    def degree(self, node: int) -> int:
        return len(self.neighbors[node])

    def edge_index(self) -> dict[Edge, int]:
        """Map each canonical edge to its position in `edges`."""
        return {e: i for i, e in enumerate(self.edges)}


@dataclass(frozen=True)
class LayerAssignment:
    """BFS hop distance from the gateway; the gateway itself sits at layer 0."""

    layer: tuple[int, ...]
    max_layer: int

    def of(self, node: int) -> int:
        return self.layer[node]


@dataclass(frozen=True)
class LinkRealization:
    """On/off state of every edge for a single tick, keyed by canonical edge."""

    active: dict[Edge, bool]


def make_grid(rows: int, cols: int, gateway_corner: str = "top-left") -> Topology:
    """4-neighbor grid with the gateway at a corner and BFS-ordered node ids."""
    if rows < 1 or cols < 1:
        raise ConfigError("rows and cols must be positive")
    if rows * cols < 2:
        raise ConfigError("grid needs at least 2 nodes")
    corner = _CORNER_ALIASES.get(str(gateway_corner).lower())
    if corner is None:
        raise ConfigError(f"unknown corner {gateway_corner!r}")
    corner_rc = {
        "top-left": (0, 0),
        "top-right": (0, cols - 1),
        "bottom-left": (rows - 1, 0),
        "bottom-right": (rows - 1, cols - 1),
    }[corner]

    def cell_neighbors(r, c):
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols:
                yield rr, cc

    # BFS from the gateway corner; ids assigned layer by layer, row-major ties
    dist = {corner_rc: 0}
    frontier = [corner_rc]
    order = [corner_rc]
    while frontier:
        nxt = set()
        for rc in frontier:
            for nb in cell_neighbors(*rc):
                if nb not in dist:
                    nxt.add(nb)
                    dist[nb] = dist[rc] + 1
        frontier = sorted(nxt)
        order.extend(frontier)
    ids = {rc: i for i, rc in enumerate(order)}
    edges = []
    for (r, c), i in ids.items():
        for nb in cell_neighbors(r, c):
            edges.append((i, ids[nb]))
    return Topology.from_edges(rows * cols, 0, edges)


def make_line(n: int) -> Topology:
    """Path graph 0-1-...-(n-1) with the gateway at node 0."""
    if n < 2:
        raise ConfigError("line needs at least 2 nodes")
    return Topology.from_edges(n, 0, [(i, i + 1) for i in range(n - 1)])


def connectivity_layers(topo: Topology) -> LayerAssignment:
    """BFS hop distance of every node from the gateway.

    Raises UnreachableNodeError naming the first (lowest-id) node with no
    path to the gateway.
    """
    layer = [-1] * topo.node_count
    layer[topo.gateway] = 0
    queue = deque([topo.gateway])
    while queue:
        u = queue.popleft()
        for v in topo.neighbors[u]:
            if layer[v] < 0:
                layer[v] = layer[u] + 1
                queue.append(v)
    for node, d in enumerate(layer):
        if d < 0:
            raise UnreachableNodeError(node)
    return LayerAssignment(layer=tuple(layer), max_layer=max(layer))


def sample_links(topo: Topology, p: float, rng: np.random.Generator) -> LinkRealization:
    """One Bernoulli(p) draw per edge, consumed in canonical edge order."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"link probability {p} outside [0, 1]")
    draws = rng.random(len(topo.edges))
    return LinkRealization(active={e: bool(draws[i] < p) for i, e in enumerate(topo.edges)})


def load_topology(path) -> Topology:
    """Read an edge-list file: first line "N gateway_id", then one "u v" per line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"{path}: empty topology file")
    head = lines[0].split()
    if len(head) != 2:
        raise ConfigError(f"{path}: first line must be 'N gateway_id'")
    n, gw = int(head[0]), int(head[1])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}: bad edge line {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Topology.from_edges(n, gw, edges)
