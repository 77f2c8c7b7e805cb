"""Routing game on a directed road network (Sioux Falls by default).

States and actions are both edges: a vehicle on edge ``s`` picks one of the
edges leaving the head node of ``s`` and moves onto it deterministically.
A restart edge from the destination back to the origin turns trips into an
infinite-horizon game.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import TopologyError
from .base import EnvironmentModel, constant_kernel

HEADER = ["edge_id", "tail_node", "head_node"]
SIOUX_FALLS_NODES = tuple(range(1, 25))


@dataclass(frozen=True)
class Edge:
    edge_id: int
    tail: int
    head: int
    line: int | None = None  # source line, None for the synthesized restart edge


@dataclass(frozen=True)
class NetworkTopology:
    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]
    origin: int
    destination: int
    adjacency: tuple[tuple[int, ...], ...]  # edge index -> indices of follow-up edges

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def restart_index(self) -> int:
        return len(self.edges) - 1

    def valid_actions(self, edge_index: int) -> tuple[int, ...]:
        return self.adjacency[edge_index]

    def index_of(self, edge_id: int) -> int:
        for i, e in enumerate(self.edges):
            if e.edge_id == edge_id:
                return i
        raise KeyError(edge_id)


def _parse_int(field: str, name: str, line: int) -> int:
    try:
        return int(field.strip())
    except ValueError:
        raise TopologyError(f"{name} {field!r} is not an integer", line) from None


def parse_topology(text: str, origin: int = 1, destination: int = 20, nodes=None,
                   restart_included: bool = False) -> NetworkTopology:
    """Parse an ``edge_id,tail_node,head_node`` CSV edge list.

    ``nodes`` declares the node set; edges touching any other node are
    rejected.  When omitted, the node set is whatever the edges mention.
    Unless ``restart_included`` is set (the last row is then taken to be the
    restart edge), a restart edge ``destination -> origin`` is appended with
    the next free edge id.
    """
    rows = []
    header_seen = False
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([stripped]))
        if not header_seen:
            if [f.strip() for f in fields] != HEADER:
                raise TopologyError(f"expected header {','.join(HEADER)!r}, got {stripped!r}", lineno)
            header_seen = True
            continue
        if len(fields) != 3:
            raise TopologyError(f"expected 3 fields, got {len(fields)}", lineno)
        edge_id = _parse_int(fields[0], "edge_id", lineno)
        tail = _parse_int(fields[1], "tail_node", lineno)
        head = _parse_int(fields[2], "head_node", lineno)
        rows.append(Edge(edge_id, tail, head, lineno))
    if not header_seen:
        raise TopologyError("missing header line")
    if not rows:
        raise TopologyError("no edges")

    declared = set(nodes) if nodes is not None else None
    seen_ids: dict[int, int] = {}
    for e in rows:
        if e.edge_id in seen_ids:
            raise TopologyError(f"duplicate edge id {e.edge_id} (first defined on line {seen_ids[e.edge_id]})", e.line)
        seen_ids[e.edge_id] = e.line
        if declared is not None:
            for node in (e.tail, e.head):
                if node not in declared:
                    raise TopologyError(f"edge {e.edge_id} references unknown node {node}", e.line)
    node_set = declared if declared is not None else {n for e in rows for n in (e.tail, e.head)}
    for role, node in (("origin", origin), ("destination", destination)):
        if node not in node_set:
            raise TopologyError(f"{role} node {node} is not in the network")

    if restart_included:
        last = rows[-1]
        if (last.tail, last.head) != (destination, origin):
            raise TopologyError(
                f"last edge {last.edge_id} should be the restart edge {destination}->{origin}", last.line)
        edges = rows
    else:
        edges = rows + [Edge(max(seen_ids) + 1, destination, origin)]

    outgoing: dict[int, list[int]] = {}
    for i, e in enumerate(edges):
        outgoing.setdefault(e.tail, []).append(i)
    adjacency = []
    for e in edges:
        follow = tuple(outgoing.get(e.head, ()))
        if not follow:
            raise TopologyError(f"edge {e.edge_id} ends at node {e.head}, which has no outgoing edge", e.line)
        adjacency.append(follow)

    reached = {origin}
    queue = deque([origin])
    while queue:
        node = queue.popleft()
        for i in outgoing.get(node, ()):
            nxt = edges[i].head
            if nxt not in reached:
                reached.add(nxt)
                queue.append(nxt)
    if destination not in reached:
        raise TopologyError(f"destination {destination} is unreachable from origin {origin}")

    return NetworkTopology(tuple(sorted(node_set)), tuple(edges), origin, destination, tuple(adjacency))


def sioux_falls_path() -> Path:
    return Path(str(resources.files("mfgqmi.envs") / "data" / "sioux_falls_edges.csv"))


def load_topology(path=None, origin: int = 1, destination: int = 20, nodes=None) -> NetworkTopology:
    """Read a topology file; defaults to the bundled Sioux Falls network."""
    if path is None:
        path, nodes = sioux_falls_path(), SIOUX_FALLS_NODES if nodes is None else nodes
    text = Path(path).read_text(encoding="utf-8")
    return parse_topology(text, origin=origin, destination=destination, nodes=nodes)


def make_sioux_falls(topology: NetworkTopology | None = None, c1: float = 1e5, c2: float = 10.0,
                     gamma: float = 0.8) -> EnvironmentModel:
    """Congestion cost ``-c1 * mu(s)^2`` on road edges, reward ``c2`` on the restart edge."""
    topology = topology or load_topology()
    n = topology.n_edges
    restart = topology.restart_index
    valid = np.zeros((n, n), dtype=bool)
    kernel = np.zeros((n, n, n))
    for s, follow in enumerate(topology.adjacency):
        valid[s, list(follow)] = True
        for a in range(n):
            kernel[s, a, a if valid[s, a] else s] = 1.0
    is_road = np.arange(n) != restart

    def reward(m: np.ndarray) -> np.ndarray:
        per_state = np.where(is_road, -c1 * m**2, c2)
        return np.broadcast_to(per_state[:, None], (n, n))

    return EnvironmentModel(
        name="sioux_falls",
        valid=valid,
        discount=gamma,
        reward_bound=max(c1, c2),
        reward_fn=reward,
        kernel_fn=constant_kernel(kernel),
        params={"c1": c1, "c2": c2, "gamma": gamma, "n_edges": n,
                "origin": topology.origin, "destination": topology.destination},
    )
