"""Road network with a memoized shortest-path oracle.

The network is read-only after loading. Shortest-path queries run one full
Dijkstra per source and memoize distances and predecessors; the assignment
algorithms hammer the same sources, so the memo dominates runtime savings.
The memo fill is idempotent (recomputing a source yields the same maps), so
concurrent queries are safe without locking under CPython.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

INF = math.inf


class NetworkError(ValueError):
    """Malformed network data or a query against an unknown node."""


@dataclass(frozen=True)
class PathResult:
    total_time: float
    node_sequence: tuple[int, ...]


class Network:
    def __init__(self):
        self.coords: dict[int, tuple[float, float] | None] = {}
        self.adjacency: dict[int, list[tuple[int, float, float]]] = {}
        # source -> ({node: dist}, {node: predecessor})
        self._sp: dict[int, tuple[dict[int, float], dict[int, int]]] = {}

    # -- construction -----------------------------------------------------

    def add_node(self, node_id: int, xy: tuple[float, float] | None = None):
        if node_id in self.coords:
            raise NetworkError(f"duplicate node {node_id}")
        self.coords[node_id] = xy
        self.adjacency[node_id] = []

    def add_arc(self, u: int, v: int, travel_time: float, length_m: float | None = None):
        for n in (u, v):
            if n not in self.coords:
                raise NetworkError(f"unknown node {n}")
        if not (travel_time >= 0.0) or not math.isfinite(travel_time):
            raise NetworkError(f"bad travel time {travel_time} on arc {u}->{v}")
        if length_m is None:
            length_m = travel_time  # distance proxy at 1 m/s so VMT is always defined
        # duplicate arcs keep the minimum travel time
        arcs = self.adjacency[u]
        for i, (w, t, _) in enumerate(arcs):
            if w == v:
                if travel_time < t:
                    arcs[i] = (v, travel_time, length_m)
                return
        arcs.append((v, travel_time, length_m))

    def finish(self):
        """Sort adjacency lists so Dijkstra tie-breaking is reproducible."""
        for u in self.adjacency:
            self.adjacency[u].sort()
        self._sp.clear()
        return self

    @property
    def nodes(self) -> list[int]:
        return sorted(self.coords)

    def arc(self, u: int, v: int) -> tuple[float, float]:
        """(travel_time, length) of the direct arc u->v."""
        for w, t, l in self.adjacency[u]:
            if w == v:
                return t, l
        raise NetworkError(f"no arc {u}->{v}")

    # -- shortest paths ----------------------------------------------------

    def _run_dijkstra(self, source: int):
        dist = {source: 0.0}
        pred: dict[int, int] = {}
        heap = [(0.0, source)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, t, _ in self.adjacency[u]:
                nd = d + t
                if nd < dist.get(v, INF):  # strict: equal-cost keeps the earlier pred
                    dist[v] = nd
                    pred[v] = u
                    heapq.heappush(heap, (nd, v))
        self._sp[source] = (dist, pred)
        return dist, pred

    def _tables(self, source: int):
        if source not in self.coords:
            raise NetworkError(f"unknown node {source}")
        cached = self._sp.get(source)
        if cached is None:
            cached = self._run_dijkstra(source)
        return cached

    def shortest_time(self, a: int, b: int) -> float:
        if b not in self.coords:
            raise NetworkError(f"unknown node {b}")
        dist, _ = self._tables(a)
        return dist.get(b, INF)

    def path(self, a: int, b: int) -> PathResult:
        dist, pred = self._tables(a)
        if b not in self.coords:
            raise NetworkError(f"unknown node {b}")
        if b not in dist:
            return PathResult(INF, ())
        seq = [b]
        while seq[-1] != a:
            seq.append(pred[seq[-1]])
        seq.reverse()
        return PathResult(dist[b], tuple(seq))

    def path_legs(self, a: int, b: int) -> list[tuple[int, float, float]]:
        """Consecutive (next_node, arc_time, arc_length) legs from a to b."""
        res = self.path(a, b)
        if not res.node_sequence:
            raise NetworkError(f"{b} unreachable from {a}")
        legs = []
        for u, v in zip(res.node_sequence, res.node_sequence[1:]):
            t, l = self.arc(u, v)
            legs.append((v, t, l))
        return legs


# -- builders --------------------------------------------------------------


def load_network(node_records, arc_records) -> Network:
    """Build a network from parsed (id, x, y) and (u, v, time[, length]) rows."""
    net = Network()
    for row_no, rec in enumerate(node_records, start=1):
        node_id, xy = rec[0], (rec[1], rec[2]) if len(rec) >= 3 and rec[1] is not None else None
        try:
            net.add_node(int(node_id), xy)
        except NetworkError as e:
            raise NetworkError(f"nodes row {row_no}: {e}") from None
    for row_no, rec in enumerate(arc_records, start=1):
        u, v, t = int(rec[0]), int(rec[1]), float(rec[2])
        length = float(rec[3]) if len(rec) >= 4 and rec[3] is not None else None
        if u not in net.coords:
            raise NetworkError(f"edges row {row_no}: unknown node {u}")
        if v not in net.coords:
            raise NetworkError(f"edges row {row_no}: unknown node {v}")
        if not (t > 0.0) or not math.isfinite(t):
            raise NetworkError(f"edges row {row_no}: non-positive travel time {t}")
        net.add_arc(u, v, t, length)
    return net.finish()


def grid_network(rows: int, cols: int, spacing_m: float = 100.0,
                 speed_mps: float = 10.0) -> Network:
    """Four-neighbor street grid; node r*cols+c sits at (c, r) * spacing."""
    net = Network()
    for r in range(rows):
        for c in range(cols):
            net.add_node(r * cols + c, (c * spacing_m, r * spacing_m))
    t = spacing_m / speed_mps
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                net.add_arc(u, u + 1, t, spacing_m)
                net.add_arc(u + 1, u, t, spacing_m)
            if r + 1 < rows:
                net.add_arc(u, u + cols, t, spacing_m)
                net.add_arc(u + cols, u, t, spacing_m)
    return net.finish()


def euclidean_network(points) -> Network:
    """Complete directed graph over planar points; arc time = distance (speed 1)."""
    net = Network()
    pts = list(points)
    for node_id, x, y in pts:
        net.add_node(int(node_id), (float(x), float(y)))
    for i, (a, xa, ya) in enumerate(pts):
        for b, xb, yb in pts:
            if a == b:
                continue
            d = math.hypot(xa - xb, ya - yb)
            net.add_arc(int(a), int(b), d, d)
    return net.finish()


# -- CSV interfaces ----------------------------------------------------------


def read_nodes_csv(path) -> list[tuple]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "node_id" not in reader.fieldnames:
            raise NetworkError(f"{path}: missing header row with node_id")
        for i, row in enumerate(reader, start=2):
            try:
                node_id = int(row["node_id"])
            except (TypeError, ValueError):
                raise NetworkError(f"{path} line {i}: bad node_id {row.get('node_id')!r}") from None
            x, y = row.get("x"), row.get("y")
            if x not in (None, "") and y not in (None, ""):
                rows.append((node_id, float(x), float(y)))
            else:
                rows.append((node_id, None, None))
    return rows


def read_edges_csv(path) -> list[tuple]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"from", "to", "travel_time_s"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise NetworkError(f"{path}: header must contain from,to,travel_time_s")
        for i, row in enumerate(reader, start=2):
            try:
                u, v, t = int(row["from"]), int(row["to"]), float(row["travel_time_s"])
            except (TypeError, ValueError):
                raise NetworkError(f"{path} line {i}: bad edge row {row!r}") from None
            length = row.get("length_m")
            rows.append((u, v, t, float(length) if length not in (None, "") else None))
    return rows


def load_network_csv(nodes_path, edges_path) -> Network:
    return load_network(read_nodes_csv(nodes_path), read_edges_csv(edges_path))
