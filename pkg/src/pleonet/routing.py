"""
Routing
=======

Path computation and multipath transport over an :class:`IslGraph`:
shortest-delay routes, the space-highway comparison, disjoint path sets,
delay-optimal MPTCP flow splitting and Monte-Carlo resilience checks.
"""

from __future__ import annotations

import heapq
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .constants import EARTH_RADIUS_KM, SPEED_OF_LIGHT_KM_S
from .constellation import GroundTerminal, IslGraph, attach_terminals, node_sort_key
from .simkit.rng import rng_stream


class NoRoute(Exception):
    pass


class InfeasibleDemand(Exception):
    pass


class AllZeroQuality(Exception):
    pass


@dataclass(frozen=True)
class Path:
    nodes: tuple
    delay_s: float
    bottleneck_capacity_bps: float = math.inf

    @property
    def hops(self) -> int:
        return max(len(self.nodes) - 1, 0)

    @property
    def edges(self) -> list[tuple]:
        return [_ekey(u, v) for u, v in zip(self.nodes, self.nodes[1:])]


def _ekey(u, v) -> tuple:
    return (u, v) if node_sort_key(u) <= node_sort_key(v) else (v, u)


def _path_key(nodes) -> tuple:
    return tuple(node_sort_key(n) for n in nodes)


def shortest_delay_path(g: IslGraph, src, dst, per_hop_proc_s: float = 0.0,
                        exclude_nodes: Iterable = (), exclude_edges: Iterable = ()) -> Path:
    """Minimum-delay route from ``src`` to ``dst``.

    Delay is the sum of edge delays plus ``per_hop_proc_s`` at every
    intermediate node. Equal-delay routes are broken by the lexicographically
    smallest node sequence.
    """
    if src not in g or dst not in g:
        raise NoRoute(f"{src!r} or {dst!r} not in graph")
    if src == dst:
        return Path((src,), 0.0)
    banned_nodes = set(exclude_nodes)
    banned_edges = {_ekey(*e) for e in exclude_edges}
    adj = g.g.adj
    # ordering key charges proc on every hop; a constant shift, so routes rank the same
    heap = [(0.0, _path_key((src,)), (src,))]
    done = set()
    while heap:
        d, _, nodes = heapq.heappop(heap)
        u = nodes[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            hops = list(zip(nodes, nodes[1:]))
            delay = sum(adj[a][b]["weight_s"] for a, b in hops) + per_hop_proc_s * (len(hops) - 1)
            cap = min(adj[a][b]["capacity_bps"] for a, b in hops)
            return Path(nodes, delay, cap)
        for v, attrs in adj[u].items():
            if v in done or v in banned_nodes or _ekey(u, v) in banned_edges:
                continue
            nd = d + attrs["weight_s"] + per_hop_proc_s
            nn = nodes + (v,)
            heapq.heappush(heap, (nd, _path_key(nn), nn))
    raise NoRoute(f"no route {src!r} -> {dst!r}")


# --------------------------------------------------------------------------
# Space highway
# --------------------------------------------------------------------------

def surface_distance_km(a: GroundTerminal, b: GroundTerminal) -> float:
    la1, la2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dlat = la2 - la1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dlat / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def terrestrial_delay_s(distance_km: float, hop_km: float, proc_s: float) -> tuple[float, int]:
    """Multihop terrestrial delay: ceil(distance / hop_km) equal hops, each
    paying propagation plus ``proc_s``."""
    if distance_km <= 0:
        return 0.0, 0
    hops = max(1, math.ceil(distance_km / hop_km))
    return hops * (distance_km / hops / SPEED_OF_LIGHT_KM_S + proc_s), hops


@dataclass(frozen=True)
class HighwayResult:
    space_delay_s: float
    terrestrial_delay_s: float
    winner: str
    space_path: Path
    terrestrial_hops: int
    surface_distance_km: float


def highway_comparison(src_gt: GroundTerminal, dst_gt: GroundTerminal, space_graph: IslGraph,
                       terrestrial_hop_km: float, terrestrial_proc_s: float,
                       space_proc_s: float = 0.0) -> HighwayResult:
    """Compare an up/ISL/down satellite route with a multihop terrestrial one.

    Terminals are attached to every satellite above their elevation mask at
    the graph's snapshot epoch. Ties go to the terrestrial route.
    """
    g = attach_terminals(space_graph, [src_gt, dst_gt])
    for gt in (src_gt, dst_gt):
        if g.degree(gt.gt_id) == 0:
            raise NoRoute(f"terminal {gt.gt_id!r} sees no satellite")
    path = shortest_delay_path(g, src_gt.gt_id, dst_gt.gt_id, space_proc_s)
    dist = surface_distance_km(src_gt, dst_gt)
    terr, hops = terrestrial_delay_s(dist, terrestrial_hop_km, terrestrial_proc_s)
    winner = "space" if path.delay_s < terr else "terrestrial"
    return HighwayResult(path.delay_s, terr, winner, path, hops, dist)


# --------------------------------------------------------------------------
# Disjoint paths
# --------------------------------------------------------------------------

@dataclass
class PathSet:
    session_id: str
    paths: list[Path]
    disjointness: str = "link_disjoint"
    requested: int = 1

    @property
    def shortfall(self) -> bool:
        return len(self.paths) < self.requested

    def is_disjoint(self) -> bool:
        seen = set()
        for p in self.paths:
            items = p.nodes[1:-1] if self.disjointness == "node_disjoint" else p.edges
            if self.disjointness == "node_disjoint" and len(p.nodes) == 2:
                items = [("edge",) + _ekey(*p.nodes)]
            for x in items:
                if x in seen:
                    return False
                seen.add(x)
        return True


def k_disjoint_paths(g: IslGraph, src, dst, k: int, mode: str = "link_disjoint",
                     per_hop_proc_s: float = 0.0, session_id: str = "") -> PathSet:
    """Up to ``k`` pairwise disjoint routes by iterative shortest-path removal."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode not in ("link_disjoint", "node_disjoint"):
        raise ValueError(f"unknown disjointness mode {mode!r}")
    paths: list[Path] = []
    ban_nodes: set = set()
    ban_edges: set = set()
    for _ in range(k):
        try:
            p = shortest_delay_path(g, src, dst, per_hop_proc_s, ban_nodes, ban_edges)
        except NoRoute:
            break
        if p.hops == 0:
            paths.append(p)
            break
        paths.append(p)
        if mode == "link_disjoint":
            ban_edges.update(p.edges)
        else:
            ban_nodes.update(p.nodes[1:-1])
            if p.hops == 1:
                ban_edges.add(_ekey(src, dst))
    if not paths:
        raise NoRoute(f"no route {src!r} -> {dst!r}")
    paths.sort(key=lambda p: (p.delay_s, _path_key(p.nodes)))
    return PathSet(session_id, paths, mode, k)


# --------------------------------------------------------------------------
# Delay-optimal MPTCP split
# --------------------------------------------------------------------------

BARRIER = 0.999


@dataclass
class FlowAllocation:
    session_id: str
    demand_bps: float
    splits_bps: list[float]
    mean_delay_s: float
    feasible: bool
    prop_delays_s: list[float] = field(default_factory=list)
    capacities_bps: list[float] = field(default_factory=list)
    pkt_bits: float = 0.0

    def marginal_delays(self) -> list[float]:
        """d/df_i of the total delay sum f_i (prop_i + L / (c_i - f_i))."""
        L = self.pkt_bits
        return [p + L * c / (c - f) ** 2
                for p, c, f in zip(self.prop_delays_s, self.capacities_bps, self.splits_bps)]


def mean_packet_delay(splits, props, caps, pkt_bits: float) -> float:
    """Flow-weighted mean delay with an M/M/1 queue per path."""
    f = np.asarray(splits, dtype=float)
    p = np.asarray(props, dtype=float)
    c = np.asarray(caps, dtype=float)
    F = f.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        per_path = np.where(f > 0, f * (p + pkt_bits / (c - f)), 0.0)
    return float(per_path.sum() / F)


def _path_params(ps) -> tuple[list[float], list[float]]:
    paths = ps.paths if isinstance(ps, PathSet) else ps
    props, caps = [], []
    for p in paths:
        if isinstance(p, Path):
            props.append(p.delay_s)
            caps.append(p.bottleneck_capacity_bps)
        else:
            props.append(float(p[0]))
            caps.append(float(p[1]))
    return props, caps


def mptcp_optimal_split(ps, demand_bps: float, pkt_bits: float, session_id: str | None = None,
                        strict: bool = False, tol: float = 1e-15, max_iter: int = 400) -> FlowAllocation:
    """Split ``demand_bps`` over the paths to minimise mean packet delay.

    ``ps`` is a :class:`PathSet` or a sequence of ``(prop_delay_s,
    capacity_bps)`` pairs. The objective is convex, so the optimum equalises
    marginal delay over the active paths; the common level is found by
    bisection and each path's flow follows in closed form. Identical paths
    are solved as one group and share their total exactly.

    Demand at or above ``0.999 * sum(capacity)`` cannot respect the
    no-congestion margin and yields ``feasible=False`` (or raises
    :class:`InfeasibleDemand` when ``strict``).
    """
    props, caps = _path_params(ps)
    if not props:
        raise ValueError("no paths")
    if demand_bps <= 0:
        raise ValueError("demand must be > 0")
    sid = session_id if session_id is not None else getattr(ps, "session_id", "")
    base = dict(prop_delays_s=props, capacities_bps=caps, pkt_bits=pkt_bits)
    total = sum(caps)
    if demand_bps >= BARRIER * total:
        if strict:
            raise InfeasibleDemand(f"demand {demand_bps} >= usable capacity {BARRIER * total}")
        return FlowAllocation(sid, demand_bps, [], math.inf, False, **base)

    groups: dict[tuple, list[int]] = {}
    for i, key in enumerate(zip(props, caps)):
        groups.setdefault(key, []).append(i)
    gkeys = list(groups)
    gp = np.array([k[0] for k in gkeys])
    gc = np.array([k[1] for k in gkeys])
    gm = np.array([len(groups[k]) for k in gkeys], dtype=float)
    L = float(pkt_bits)
    F = float(demand_bps)

    def flows(nu: float) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            f = gc - np.sqrt(L * gc / (nu - gp))
        f = np.where(nu > gp + L / gc, f, 0.0)
        return np.clip(f, 0.0, BARRIER * gc)

    lo = float(np.min(gp + L / gc))
    hi = lo + 1.0
    while (gm * flows(hi)).sum() < F:
        hi = lo + 2 * (hi - lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if (gm * flows(mid)).sum() < F:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    gtot = gm * flows(hi)
    gtot *= F / gtot.sum()
    active = np.flatnonzero(gtot > 0)
    # pin the total exactly on the largest group so sum(splits) == demand
    last = active[np.argmax(gtot[active])]
    gtot[last] = F - (gtot.sum() - gtot[last])

    splits = [0.0] * len(props)
    for j, k in enumerate(gkeys):
        share = float(gtot[j] / gm[j])
        for i in groups[k]:
            splits[i] = share
    return FlowAllocation(sid, F, splits, mean_packet_delay(splits, props, caps, L), True, **base)


# --------------------------------------------------------------------------
# Opportunistic relaying and resilience
# --------------------------------------------------------------------------

def opportunistic_relay_select(candidates: Sequence[tuple[Hashable, float]], rng_seed=None,
                               policy: str = "best"):
    """Pick a relay by link quality: ``best`` (argmax, lowest id on ties) or
    ``proportional`` (sampled with probability quality / total)."""
    if not candidates:
        raise ValueError("no candidates")
    if any(q < 0 for _, q in candidates):
        raise ValueError("qualities must be >= 0")
    if policy == "best":
        return min(candidates, key=lambda nq: (-nq[1], node_sort_key(nq[0])))[0]
    if policy == "proportional":
        q = np.array([c[1] for c in candidates], dtype=float)
        if q.sum() <= 0:
            raise AllZeroQuality("all candidate qualities are zero")
        rng = np.random.default_rng(rng_seed)
        i = int(np.searchsorted(np.cumsum(q) / q.sum(), rng.random(), side="right"))
        return candidates[min(i, len(candidates) - 1)][0]
    raise ValueError(f"unknown policy {policy!r}")


@dataclass(frozen=True)
class FailureModel:
    link_failure_prob: float = 0.0
    node_failure_prob: float = 0.0
    adversarial_set: tuple = ()
    seed: int = 0

    def __post_init__(self):
        for p in (self.link_failure_prob, self.node_failure_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("failure probabilities must be in [0, 1]")


@dataclass(frozen=True)
class Strategy:
    kind: str = "single_path"
    param: int = 1

    _PATTERN = re.compile(r"^\s*(\w+)\s*(?:\(\s*(\d+)\s*\)|:(\d+))?\s*$")

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        m = cls._PATTERN.match(text)
        if not m or m.group(1) not in ("single_path", "k_disjoint", "opportunistic"):
            raise ValueError(f"bad strategy {text!r}")
        n = m.group(2) or m.group(3)
        return cls(m.group(1), int(n) if n else (1 if m.group(1) == "single_path" else 2))


@dataclass(frozen=True)
class ResilienceResult:
    delivery_ratio: float
    mean_delay_s: float
    delivered: int
    trials: int


def _hop_distances(g: IslGraph, dst) -> dict:
    dist = {dst: 0}
    q = deque([dst])
    while q:
        u = q.popleft()
        for v in g.g.adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def _link_quality(attrs: dict) -> float:
    return attrs.get("quality", 1.0 / (attrs["weight_s"] + 1e-12))


def resilience_eval(g: IslGraph, src, dst, strategy, fm: FailureModel, trials: int,
                    per_hop_proc_s: float = 0.0) -> ResilienceResult:
    """Monte-Carlo delivery ratio under random and adversarial failures.

    Trial ``t`` draws from ``rng_stream(fm.seed, "resilience/t")``: one
    uniform per edge and per node in canonical order, compared against the
    failure probabilities, so runs at different probabilities share random
    numbers. Source and destination never fail.

    ``single_path`` and ``k_disjoint`` fix their routes on the intact graph;
    ``opportunistic`` sends ``param`` copies over distinct first hops and
    re-selects the best surviving distance-reducing relay at every hop.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(strategy, str):
        strategy = Strategy.parse(strategy)
    edges = [(u, v) for u, v, *_ in g.edges()]
    eidx = {e: i for i, e in enumerate(edges)}
    nodes = g.nodes
    nidx = {n: i for i, n in enumerate(nodes)}
    adv_nodes = {x for x in fm.adversarial_set if not isinstance(x, tuple)} - {src, dst}
    adv_edges = {_ekey(*x) for x in fm.adversarial_set if isinstance(x, tuple)}

    if strategy.kind == "single_path":
        route_set = [shortest_delay_path(g, src, dst, per_hop_proc_s)]
    elif strategy.kind == "k_disjoint":
        route_set = k_disjoint_paths(g, src, dst, strategy.param, "link_disjoint", per_hop_proc_s).paths
    elif strategy.kind == "opportunistic":
        route_set = None
        hop_dist = _hop_distances(g, dst)
        if src not in hop_dist:
            raise NoRoute(f"no route {src!r} -> {dst!r}")
    else:
        raise ValueError(f"unknown strategy {strategy.kind!r}")

    if route_set is not None:
        route_idx = [(np.array([eidx[e] for e in p.edges], dtype=int),
                      np.array([nidx[n] for n in p.nodes[1:-1]], dtype=int), p.delay_s)
                     for p in route_set]

    delivered = 0
    delay_sum = 0.0
    for t in range(trials):
        rng = rng_stream(fm.seed, f"resilience/{t}")
        edge_up = rng.random(len(edges)) >= fm.link_failure_prob
        node_up = rng.random(len(nodes)) >= fm.node_failure_prob
        node_up[nidx[src]] = node_up[nidx[dst]] = True
        for n in adv_nodes:
            node_up[nidx[n]] = False
        for e in adv_edges:
            if e in eidx:
                edge_up[eidx[e]] = False
        if route_set is not None:
            best = math.inf
            for ei, ni, d in route_idx:
                if edge_up[ei].all() and node_up[ni].all():
                    best = min(best, d)
        else:
            best = _opportunistic_trial(g, src, dst, strategy.param, hop_dist,
                                        edge_up, node_up, eidx, nidx, per_hop_proc_s)
        if best < math.inf:
            delivered += 1
            delay_sum += best
    mean_delay = delay_sum / delivered if delivered else math.nan
    return ResilienceResult(delivered / trials, mean_delay, delivered, trials)


def _opportunistic_trial(g, src, dst, copies, hop_dist, edge_up, node_up, eidx, nidx, proc) -> float:
    adj = g.g.adj

    def progressing(u):
        out = []
        for v, attrs in adj[u].items():
            if (hop_dist.get(v, math.inf) < hop_dist[u] and node_up[nidx[v]]
                    and edge_up[eidx[_ekey(u, v)]]):
                out.append((v, _link_quality(attrs)))
        return out

    if src == dst:
        return 0.0
    first = sorted(progressing(src), key=lambda nq: (-nq[1], node_sort_key(nq[0])))[:copies]
    best = math.inf
    for v, _ in first:
        delay = adj[src][v]["weight_s"]
        u = v
        while u != dst:
            cands = progressing(u)
            if not cands:
                delay = math.inf
                break
            nxt = opportunistic_relay_select(cands, policy="best")
            delay += proc + adj[u][nxt]["weight_s"]
            u = nxt
        best = min(best, delay)
    return best
