"""
SBACN federation
================

A center that federates operator constellations through gateway terminals.
Each operator is abstracted as a single cloud node; terminals advertise the
transit latency and capacity of their operator's constellation. The center
admits SLA requests first-fit by latency, reserves capacity on every
traversed terminal and stitches per-operator segments into one route.

Residuals are never updated incrementally. They are recomputed as the
correctly rounded value of ``advertised - sum(active reservations)``, so a
grant followed by its release restores the previous residual bit for bit.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .constellation import node_sort_key

DEFAULT_STALENESS_S = 300.0
DEFAULT_GATEWAY_PROC_S = 2e-3
REJECT_REASONS = ("no_route", "capacity", "latency")
OP_PREFIX = "op:"


class SeamMismatch(ValueError):
    """Adjacent operator segments share no gateway."""


class UnknownGrant(KeyError):
    pass


@dataclass(frozen=True)
class SbacnTerminal:
    terminal_id: str
    operator_id: str
    gateway_sats: tuple
    advertised_capacity_bps: float
    advertised_latency_s: float
    last_update_epoch_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "gateway_sats", tuple(self.gateway_sats))
        if self.advertised_capacity_bps < 0:
            raise ValueError("advertised capacity must be >= 0")
        if self.advertised_latency_s < 0:
            raise ValueError("advertised latency must be >= 0")
        if not self.gateway_sats:
            raise ValueError("terminal needs at least one gateway satellite")


@dataclass(frozen=True)
class SlaRequest:
    request_id: str
    src_gt: str
    dst_gt: str
    min_throughput_bps: float
    max_latency_s: float
    duration_s: float = math.inf

    def __post_init__(self):
        if not self.min_throughput_bps > 0:
            raise ValueError("min throughput must be > 0")
        if not self.max_latency_s > 0:
            raise ValueError("max latency must be > 0")


@dataclass
class ServiceGrant:
    request_id: str
    state: str  # granted | rejected | released
    constellation_sequence: tuple = ()
    stitched_path: tuple = ()  # terminal ids interleaved with "op:<id>" clouds
    reserved_bps: float = 0.0
    predicted_latency_s: float | None = None
    reason: str | None = None
    reserved_on: tuple = ()
    epoch_s: float = 0.0

    def log_record(self, epoch_s: float) -> dict:
        rec = {"epoch_s": epoch_s, "request_id": self.request_id, "state": self.state}
        if self.reason is not None:
            rec["reason"] = self.reason
        rec["reserved_bps"] = self.reserved_bps
        rec["predicted_latency_s"] = self.predicted_latency_s
        return rec


@dataclass(frozen=True)
class StitchedPath:
    nodes: tuple
    latency_s: float
    seams: int


InterLinks = Iterable[tuple[str, str, float]]


def _links(inter_graph) -> list[tuple[str, str, float]]:
    if isinstance(inter_graph, nx.Graph):
        return [(u, v, float(d["latency_s"])) for u, v, d in inter_graph.edges(data=True)]
    return [(u, v, float(w)) for u, v, w in (inter_graph or ())]


@dataclass
class SbacnCenter:
    """Single-writer registry of terminals and active grants."""

    staleness_window_s: float = DEFAULT_STALENESS_S
    gateway_proc_s: float = DEFAULT_GATEWAY_PROC_S
    registry: dict = field(default_factory=dict)
    grants: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    # ------------------------------------------------------------ registry
    def register_update(self, terminal: SbacnTerminal) -> "SbacnCenter":
        self.registry[terminal.terminal_id] = terminal
        return self

    def fresh_terminals(self, now_s: float) -> list[SbacnTerminal]:
        return [self.registry[k] for k in sorted(self.registry)
                if now_s - self.registry[k].last_update_epoch_s <= self.staleness_window_s]

    def active_grants(self) -> list[ServiceGrant]:
        return [g for g in self.grants.values() if g.state == "granted"]

    def reservations(self, terminal_id: str) -> list[float]:
        return [g.reserved_bps for g in self.active_grants() if terminal_id in g.reserved_on]

    def residual(self, terminal_id: str) -> float:
        t = self.registry[terminal_id]
        # fsum is correctly rounded, so the result depends only on the active set
        return math.fsum([t.advertised_capacity_bps] + [-r for r in self.reservations(terminal_id)])

    def residuals(self) -> dict:
        return {k: self.residual(k) for k in sorted(self.registry)}

    # ------------------------------------------------------------ admission
    def _adjacency(self, now_s: float, inter_graph, min_bps: float | None) -> dict:
        fresh = {t.terminal_id: t for t in self.fresh_terminals(now_s)}
        if min_bps is not None:
            fresh = {k: t for k, t in fresh.items() if self.residual(k) >= min_bps}
        adj: dict = {}

        def link(u, v, w):
            adj.setdefault(u, {})
            adj.setdefault(v, {})
            if w < adj[u].get(v, math.inf):
                adj[u][v] = adj[v][u] = w

        for tid, t in fresh.items():
            # crossing a cloud between two of its terminals costs the mean advertised latency
            link(tid, OP_PREFIX + t.operator_id, t.advertised_latency_s / 2.0)
        for u, v, lat in _links(inter_graph):
            if u in fresh and v in fresh:
                seam = fresh[u].operator_id != fresh[v].operator_id
                link(u, v, lat + (self.gateway_proc_s if seam else 0.0))
        return adj

    @staticmethod
    def _dijkstra(adj: dict, src, dst):
        if src not in adj or dst not in adj:
            return None
        heap = [(0.0, (node_sort_key(src),), (src,))]
        done = set()
        while heap:
            d, _, nodes = heapq.heappop(heap)
            u = nodes[-1]
            if u in done:
                continue
            done.add(u)
            if u == dst:
                return d, nodes
            for v, w in adj[u].items():
                if v not in done:
                    nxt = nodes + (v,)
                    heapq.heappush(heap, (d + w, tuple(node_sort_key(n) for n in nxt), nxt))
        return None

    def _route_latency(self, nodes: tuple, adj: dict) -> float:
        return math.fsum(adj[u][v] for u, v in zip(nodes, nodes[1:]))

    def admit(self, req: SlaRequest, inter_graph=(), now_s: float = 0.0) -> ServiceGrant:
        """Minimum-latency feasible gateway sequence, or a rejection with a reason."""
        if req.request_id in self.grants and self.grants[req.request_id].state == "granted":
            raise ValueError(f"request {req.request_id!r} already holds a grant")
        if req.src_gt == req.dst_gt:
            raise ValueError("source and destination terminal must differ")
        grant = ServiceGrant(req.request_id, "rejected", epoch_s=now_s)
        if self._dijkstra(self._adjacency(now_s, inter_graph, None), req.src_gt, req.dst_gt) is None:
            grant.reason = "no_route"
        else:
            adj = self._adjacency(now_s, inter_graph, req.min_throughput_bps)
            found = self._dijkstra(adj, req.src_gt, req.dst_gt)
            if found is None:
                grant.reason = "capacity"
            else:
                nodes = found[1]
                latency = self._route_latency(nodes, adj)
                grant.predicted_latency_s = latency
                grant.stitched_path = nodes
                if latency > req.max_latency_s:
                    grant.reason = "latency"
                else:
                    terminals = tuple(n for n in nodes if not n.startswith(OP_PREFIX))
                    grant.state = "granted"
                    grant.reserved_bps = float(req.min_throughput_bps)
                    grant.reserved_on = terminals
                    grant.constellation_sequence = tuple(
                        n[len(OP_PREFIX):] for n in nodes if n.startswith(OP_PREFIX))
        if grant.state == "rejected":
            grant.stitched_path = ()
        self.grants[req.request_id] = grant
        self.log.append(grant.log_record(now_s))
        return grant

    def release(self, request_id: str, now_s: float = 0.0) -> "SbacnCenter":
        g = self.grants.get(request_id)
        if g is None or g.state != "granted":
            raise UnknownGrant(request_id)
        g.state = "released"
        self.log.append(replace(g, reserved_bps=0.0).log_record(now_s))
        return self

    def grant_log_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=False) + "\n" for r in self.log)


def stitch_path(grant: ServiceGrant, per_operator_paths,
                ground_links: Iterable[tuple] = (),
                gateway_proc_s: float = DEFAULT_GATEWAY_PROC_S) -> StitchedPath:
    """Concatenate per-operator satellite segments into one end-to-end route.

    ``per_operator_paths`` maps operator id to ``(nodes, latency_s)``, or is a
    sequence of such pairs in ``grant.constellation_sequence`` order (needed
    when an operator is visited twice). Adjacent segments must meet at a
    shared gateway node or be joined by one of ``ground_links``.
    """
    if isinstance(per_operator_paths, Mapping):
        segs = [per_operator_paths[op] for op in grant.constellation_sequence]
    else:
        segs = list(per_operator_paths)
    if not segs:
        raise ValueError("no segments to stitch")
    bridges = {frozenset((a, b)) for a, b in ground_links}
    nodes = list(segs[0][0])
    latency = [float(segs[0][1])]
    for k, (seg_nodes, seg_lat) in enumerate(segs[1:], start=1):
        seg_nodes = list(seg_nodes)
        if not nodes or not seg_nodes:
            raise SeamMismatch(f"empty segment at seam {k}")
        if nodes[-1] == seg_nodes[0]:
            nodes.extend(seg_nodes[1:])
        elif frozenset((nodes[-1], seg_nodes[0])) in bridges:
            nodes.extend(seg_nodes)
        else:
            raise SeamMismatch(f"seam {k}: {nodes[-1]!r} and {seg_nodes[0]!r} share no gateway")
        latency.append(float(seg_lat))
    seams = len(segs) - 1
    latency.append(seams * gateway_proc_s)
    return StitchedPath(tuple(nodes), math.fsum(latency), seams)
