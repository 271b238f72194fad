"""
Constellation geometry
======================

Circular-orbit Walker constellations, ground terminals, visibility and the
inter-satellite-link (ISL) topology built on top of them.

All positions live in one inertial frame. Satellites are fixed to it; ground
terminals rotate with the Earth, so relative geometry is correct at every
epoch without an ECEF conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .constants import (
    EARTH_RADIUS_KM,
    EARTH_ROTATION_RAD_S,
    MU_EARTH_KM3_S2,
    SPEED_OF_LIGHT_KM_S,
)

EDGE_KINDS = ("intra_plane", "cross_plane", "shortcut", "up_down", "terrestrial")


@dataclass(frozen=True)
class ConstellationSpec:
    """One orbital shell of a Walker constellation."""

    shell_id: str
    altitude_km: float
    inclination_deg: float
    num_planes: int
    sats_per_plane: int
    phase_offset: float = 0.0  # Walker phasing factor F
    raan_spread_deg: float = 360.0
    operator_id: str = "op0"

    def __post_init__(self):
        if not self.altitude_km > 0:
            raise ValueError(f"altitude_km must be > 0, got {self.altitude_km}")
        if self.num_planes < 1 or self.sats_per_plane < 1:
            raise ValueError("num_planes and sats_per_plane must be >= 1")
        if not 0 <= self.inclination_deg <= 180:
            raise ValueError(f"inclination_deg out of [0, 180]: {self.inclination_deg}")

    @property
    def radius_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(MU_EARTH_KM3_S2 / self.radius_km**3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s

    @property
    def num_sats(self) -> int:
        return self.num_planes * self.sats_per_plane

    def sat_id(self, plane: int, slot: int) -> str:
        return f"{self.shell_id}-{plane:03d}-{slot:03d}"


@dataclass(frozen=True)
class SatelliteState:
    sat_id: str
    epoch_s: float
    position_km: np.ndarray  # inertial frame
    velocity_kms: np.ndarray
    plane_index: int
    slot_index: int


@dataclass(frozen=True)
class GroundTerminal:
    gt_id: str
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0
    min_elevation_deg: float = 10.0
    compute_capacity: float = 1.0

    def __post_init__(self):
        if not -90 <= self.lat_deg <= 90:
            raise ValueError(f"lat_deg out of range: {self.lat_deg}")
        if not -180 < self.lon_deg <= 180:
            raise ValueError(f"lon_deg out of range: {self.lon_deg}")
        if not 0 <= self.min_elevation_deg < 90:
            raise ValueError(f"min_elevation_deg out of range: {self.min_elevation_deg}")


@dataclass(frozen=True)
class IslLinkParams:
    isl_capacity_bps: float = 10e9
    up_down_capacity_bps: float = 1e9
    shortcut_capacity_bps: float | None = None  # defaults to isl_capacity_bps


@dataclass(frozen=True)
class AccessWindow:
    sat_id: str
    t_start: float
    t_end: float

    @property
    def duration_s(self) -> float:
        return self.t_end - self.t_start


# --------------------------------------------------------------------------
# Propagation
# --------------------------------------------------------------------------

def _orbit_angles(spec: ConstellationSpec):
    planes = np.repeat(np.arange(spec.num_planes), spec.sats_per_plane)
    slots = np.tile(np.arange(spec.sats_per_plane), spec.num_planes)
    raan = np.radians(spec.raan_spread_deg) * planes / spec.num_planes
    u0 = (2 * np.pi * slots / spec.sats_per_plane
          + 2 * np.pi * spec.phase_offset * planes / spec.num_sats)
    return planes, slots, raan, u0


def _positions(spec: ConstellationSpec, times) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities, shape (num_sats, len(times), 3)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    _, _, raan, u0 = _orbit_angles(spec)
    n = spec.mean_motion_rad_s
    r = spec.radius_km
    inc = np.radians(spec.inclination_deg)
    u = u0[:, None] + n * times[None, :]
    cu, su = np.cos(u), np.sin(u)
    co, so = np.cos(raan)[:, None], np.sin(raan)[:, None]
    ci, si = math.cos(inc), math.sin(inc)
    pos = np.stack([
        r * (co * cu - so * ci * su),
        r * (so * cu + co * ci * su),
        r * (si * su),
    ], axis=-1)
    vel = np.stack([
        r * n * (-co * su - so * ci * cu),
        r * n * (-so * su + co * ci * cu),
        r * n * (si * cu),
    ], axis=-1)
    return pos, vel


def propagate(spec: ConstellationSpec, epoch_s: float) -> list[SatelliteState]:
    """Return the state of every satellite in ``spec`` at ``epoch_s``.

    Satellites are ordered plane-major, slot-minor. Slot 0 of plane 0 sits
    at the ascending node at epoch 0.
    """
    if epoch_s < 0:
        raise ValueError("epoch_s must be >= 0")
    planes, slots, _, _ = _orbit_angles(spec)
    pos, vel = _positions(spec, [epoch_s])
    return [
        SatelliteState(spec.sat_id(int(p), int(s)), float(epoch_s),
                       pos[i, 0], vel[i, 0], int(p), int(s))
        for i, (p, s) in enumerate(zip(planes, slots))
    ]


def terminal_position_km(gt: GroundTerminal, epoch_s: float | np.ndarray) -> np.ndarray:
    """Inertial position of a ground terminal on a spherical rotating Earth."""
    t = np.asarray(epoch_s, dtype=float)
    r = EARTH_RADIUS_KM + gt.alt_m / 1000.0
    lat = math.radians(gt.lat_deg)
    lon = np.radians(gt.lon_deg) + EARTH_ROTATION_RAD_S * t
    return np.stack([r * math.cos(lat) * np.cos(lon),
                     r * math.cos(lat) * np.sin(lon),
                     r * math.sin(lat) * np.ones_like(lon)], axis=-1)


def _elevation_from_positions(sat_pos: np.ndarray, gt_pos: np.ndarray) -> np.ndarray:
    los = sat_pos - gt_pos
    up = gt_pos / np.linalg.norm(gt_pos, axis=-1, keepdims=True)
    sin_el = np.sum(los * up, axis=-1) / np.linalg.norm(los, axis=-1)
    return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))


def elevation_deg(sat: SatelliteState, gt: GroundTerminal) -> float:
    gt_pos = terminal_position_km(gt, sat.epoch_s)
    return float(_elevation_from_positions(sat.position_km, gt_pos))


def is_visible(sat: SatelliteState, gt: GroundTerminal) -> bool:
    return elevation_deg(sat, gt) >= gt.min_elevation_deg


def serving_satellite(states: Iterable[SatelliteState], gt: GroundTerminal) -> str | None:
    """Highest-elevation visible satellite; ties go to the lowest sat_id."""
    best = None
    for st in states:
        el = elevation_deg(st, gt)
        if el < gt.min_elevation_deg:
            continue
        key = (-el, st.sat_id)
        if best is None or key < best[0]:
            best = (key, st.sat_id)
    return None if best is None else best[1]


def access_schedule(spec: ConstellationSpec, gt: GroundTerminal,
                    horizon_s: float, step_s: float) -> list[AccessWindow]:
    """Visibility windows of every satellite in ``spec`` over ``gt``.

    Sampled on a ``step_s`` grid; each rise/set boundary strictly inside the
    horizon is then refined by bisection to well below ``step_s / 10``.
    """
    if step_s <= 0 or horizon_s < step_s:
        raise ValueError("need step_s > 0 and horizon_s >= step_s")
    n_steps = int(math.floor(horizon_s / step_s + 1e-9))
    times = np.arange(n_steps + 1) * step_s
    if times[-1] < horizon_s:
        times = np.append(times, horizon_s)
    pos, _ = _positions(spec, times)
    gt_pos = terminal_position_km(gt, times)
    el = _elevation_from_positions(pos, gt_pos[None, :, :])
    mask = el >= gt.min_elevation_deg
    planes, slots, _, _ = _orbit_angles(spec)
    sat_index = {spec.sat_id(int(p), int(s)): i for i, (p, s) in enumerate(zip(planes, slots))}
    index_sat = {i: sid for sid, i in sat_index.items()}

    def el_at(i: int, t: float) -> float:
        p, _ = _positions(spec, [t])
        return float(_elevation_from_positions(p[i, 0], terminal_position_km(gt, t)))

    def refine(i: int, t_lo: float, t_hi: float, rising: bool) -> float:
        # invariant: visibility at t_lo == (not rising), at t_hi == rising
        tol = step_s / 1000.0
        while t_hi - t_lo > tol:
            mid = 0.5 * (t_lo + t_hi)
            vis = el_at(i, mid) >= gt.min_elevation_deg
            if vis == rising:
                t_hi = mid
            else:
                t_lo = mid
        return 0.5 * (t_lo + t_hi)

    windows = []
    for i in range(mask.shape[0]):
        m = mask[i]
        if not m.any():
            continue
        edges = np.flatnonzero(np.diff(m.astype(np.int8)))
        start = 0.0 if m[0] else None
        for k in edges:
            if not m[k]:  # rise between k and k+1
                start = refine(i, times[k], times[k + 1], rising=True)
            else:
                end = refine(i, times[k], times[k + 1], rising=False)
                windows.append(AccessWindow(index_sat[i], start, end))
                start = None
        if start is not None:
            windows.append(AccessWindow(index_sat[i], start, float(times[-1])))
    windows.sort(key=lambda w: (w.t_start, w.sat_id))
    return windows


def covered_time(windows: list[AccessWindow]) -> float:
    """Length of the union of all windows."""
    total = 0.0
    cur_s = cur_e = None
    for w in sorted(windows, key=lambda w: w.t_start):
        if cur_e is None or w.t_start > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = w.t_start, w.t_end
        else:
            cur_e = max(cur_e, w.t_end)
    if cur_e is not None:
        total += cur_e - cur_s
    return total


# --------------------------------------------------------------------------
# Topology
# --------------------------------------------------------------------------

def node_sort_key(node: Hashable):
    """Total order over mixed int/str node ids."""
    return (isinstance(node, str), node)


class IslGraph:
    """Undirected, delay-weighted snapshot of the network.

    Thin wrapper over :class:`networkx.Graph`; every edge carries
    ``weight_s``, ``capacity_bps`` and ``kind``. Nodes carry ``kind``
    (satellite, ground_terminal, gateway) and optionally ``position_km``.
    """

    def __init__(self, snapshot_epoch_s: float = 0.0):
        self.snapshot_epoch_s = float(snapshot_epoch_s)
        self.g = nx.Graph()

    def add_node(self, node, kind: str = "satellite", position_km=None, **attrs):
        if position_km is not None:
            attrs["position_km"] = np.asarray(position_km, dtype=float)
        self.g.add_node(node, kind=kind, **attrs)

    def add_edge(self, u, v, weight_s: float, capacity_bps: float, kind: str):
        if u == v:
            raise ValueError(f"self-loop on {u!r}")
        if weight_s < 0:
            raise ValueError("edge weight must be >= 0")
        if kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge kind {kind!r}")
        for n in (u, v):
            if n not in self.g:
                self.add_node(n)
        self.g.add_edge(u, v, weight_s=float(weight_s),
                        capacity_bps=float(capacity_bps), kind=kind)

    def remove_edge(self, u, v):
        self.g.remove_edge(u, v)

    @property
    def nodes(self) -> list:
        return sorted(self.g.nodes, key=node_sort_key)

    def satellites(self) -> list:
        return [n for n in self.nodes if self.g.nodes[n].get("kind") == "satellite"]

    def edges(self) -> list[tuple]:
        """Edges as (u, v, weight_s, capacity_bps, kind) with u < v, sorted."""
        out = []
        for u, v, d in self.g.edges(data=True):
            if node_sort_key(v) < node_sort_key(u):
                u, v = v, u
            out.append((u, v, d["weight_s"], d["capacity_bps"], d["kind"]))
        out.sort(key=lambda e: (node_sort_key(e[0]), node_sort_key(e[1])))
        return out

    def neighbors(self, n) -> list:
        return sorted(self.g.neighbors(n), key=node_sort_key)

    def has_edge(self, u, v) -> bool:
        return self.g.has_edge(u, v)

    def edge(self, u, v) -> dict:
        return self.g.edges[u, v]

    def degree(self, n) -> int:
        return self.g.degree(n)

    def position(self, n) -> np.ndarray | None:
        return self.g.nodes[n].get("position_km")

    def number_of_edges(self) -> int:
        return self.g.number_of_edges()

    def __len__(self) -> int:
        return self.g.number_of_nodes()

    def __contains__(self, n) -> bool:
        return n in self.g

    def copy(self) -> "IslGraph":
        out = IslGraph(self.snapshot_epoch_s)
        out.g = self.g.copy()
        return out

    def compose(self, other: "IslGraph") -> "IslGraph":
        out = self.copy()
        out.g = nx.compose(out.g, other.g)
        return out

    def to_edge_list(self) -> str:
        """One ``u v weight_s capacity_bps kind`` line per edge."""
        lines = [f"{u} {v} {w!r} {c!r} {k}" for u, v, w, c, k in self.edges()]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_edge_list(cls, text: str, snapshot_epoch_s: float = 0.0) -> "IslGraph":
        g = cls(snapshot_epoch_s)
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            u, v, w, c, k = line.split()
            g.add_edge(_parse_node(u), _parse_node(v), float(w), float(c), k)
        return g

    def same_as(self, other: "IslGraph") -> bool:
        return (self.nodes == other.nodes and self.edges() == other.edges()
                and self.snapshot_epoch_s == other.snapshot_epoch_s)


def _parse_node(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def _delay(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b)) / SPEED_OF_LIGHT_KM_S


def _cross_plane_offset(pos: np.ndarray, spec: ConstellationSpec, p: int, q: int) -> int:
    S = spec.sats_per_plane
    a = pos[p * S:(p + 1) * S]
    b = pos[q * S:(q + 1) * S]
    best_k, best_d = 0, math.inf
    for k in range(S):
        d = float(np.linalg.norm(a - np.roll(b, -k, axis=0), axis=1).sum())
        if d < best_d - 1e-9:
            best_k, best_d = k, d
    return best_k


def build_isl_graph(states: list[SatelliteState], spec: ConstellationSpec,
                    link_params: IslLinkParams | None = None) -> IslGraph:
    """+Grid ISL topology for one shell snapshot.

    Every satellite links its two intra-plane neighbours and one partner in
    each adjacent plane. Partners for a plane pair share one slot offset,
    chosen to minimise the summed link length at this epoch, so degree never
    exceeds 4. Planes wrap around only for a full 360 degree RAAN spread.
    """
    params = link_params or IslLinkParams()
    P, S = spec.num_planes, spec.sats_per_plane
    if len(states) != P * S:
        raise ValueError("states do not match spec")
    epoch = states[0].epoch_s
    g = IslGraph(epoch)
    pos = np.array([s.position_km for s in states])
    ids = [s.sat_id for s in states]
    for s in states:
        g.add_node(s.sat_id, kind="satellite", position_km=s.position_km,
                   plane=s.plane_index, slot=s.slot_index, shell=spec.shell_id,
                   operator=spec.operator_id)
    cap = params.isl_capacity_bps

    def link(i: int, j: int, kind: str):
        if i != j and not g.has_edge(ids[i], ids[j]):
            g.add_edge(ids[i], ids[j], _delay(pos[i], pos[j]), cap, kind)

    if S >= 2:
        for p in range(P):
            for s in range(S):
                link(p * S + s, p * S + (s + 1) % S, "intra_plane")
    if P >= 2:
        wrap = math.isclose(spec.raan_spread_deg % 360.0, 0.0, abs_tol=1e-9)
        pairs = [(p, p + 1) for p in range(P - 1)]
        if wrap and P > 2:
            pairs.append((P - 1, 0))
        for p, q in pairs:
            k = _cross_plane_offset(pos, spec, p, q)
            for s in range(S):
                link(p * S + s, q * S + (s + k) % S, "cross_plane")
    return g


def attach_terminals(g: IslGraph, terminals: Iterable[GroundTerminal],
                     link_params: IslLinkParams | None = None) -> IslGraph:
    """Copy of ``g`` with up/down edges from each terminal to every visible satellite."""
    params = link_params or IslLinkParams()
    out = g.copy()
    sats = g.satellites()
    sat_pos = np.array([g.position(s) for s in sats]) if sats else np.zeros((0, 3))
    for gt in terminals:
        gpos = terminal_position_km(gt, g.snapshot_epoch_s)
        out.add_node(gt.gt_id, kind="ground_terminal", position_km=gpos)
        if not sats:
            continue
        el = _elevation_from_positions(sat_pos, gpos[None, :])
        for s, e, p in zip(sats, el, sat_pos):
            if e >= gt.min_elevation_deg:
                out.add_edge(gt.gt_id, s, _delay(p, gpos), params.up_down_capacity_bps, "up_down")
    return out


def add_smallworld_shortcuts(g: IslGraph, p_shortcut: float, rng_seed=None,
                             capacity_bps: float | None = None) -> IslGraph:
    """Additive small-world shortcuts over the satellite ISLs of ``g``.

    For each existing ISL, with probability ``p_shortcut`` one new edge joins
    a uniformly chosen endpoint to a uniformly chosen satellite that is not
    already its neighbour (duplicates are re-drawn). No edge is removed.
    ``rng_seed`` may be an int or a :class:`numpy.random.Generator`.
    """
    if not 0.0 <= p_shortcut <= 1.0:
        raise ValueError("p_shortcut must be in [0, 1]")
    out = g.copy()
    if p_shortcut == 0.0:
        return out
    rng = np.random.default_rng(rng_seed)
    sats = g.satellites()
    isl = [e for e in g.edges() if e[4] in ("intra_plane", "cross_plane")]
    if capacity_bps is None:
        capacity_bps = isl[0][3] if isl else IslLinkParams().isl_capacity_bps
    n = len(sats)
    for u, v, *_ in isl:
        if rng.random() >= p_shortcut:
            continue
        a = (u, v)[int(rng.integers(2))]
        if out.degree(a) >= n - 1:
            continue  # already adjacent to every satellite
        while True:
            b = sats[int(rng.integers(n))]
            if b != a and not out.has_edge(a, b):
                break
        pa, pb = out.position(a), out.position(b)
        w = _delay(pa, pb) if pa is not None and pb is not None else 0.0
        out.add_edge(a, b, w, capacity_bps, "shortcut")
    return out


@dataclass
class TopologyMetrics:
    diameter_hops: int
    avg_hop_distance: float
    degree_histogram: dict[int, int]
    delay_diameter_s: float
    avg_delay_s: float
    connected: bool
    num_nodes: int
    component_size: int = field(default=0)


def _csgraph(g: IslGraph, nodes: list, weighted: bool) -> csr_matrix:
    idx = {n: i for i, n in enumerate(nodes)}
    rows, cols, vals = [], [], []
    for u, v, w, *_ in g.edges():
        if u in idx and v in idx:
            val = w if weighted else 1.0
            rows += [idx[u], idx[v]]
            cols += [idx[v], idx[u]]
            vals += [val, val]
    n = len(nodes)
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


def topology_metrics(g: IslGraph) -> TopologyMetrics:
    """Diameter, average hop distance, degree histogram and delay extremes.

    Hop metrics come from all-pairs BFS, delay metrics from all-pairs
    Dijkstra. On a disconnected graph the largest component is measured and
    ``connected`` is False. Zero-weight edges are treated as present.
    """
    nodes = g.nodes
    hist: dict[int, int] = {}
    for n in nodes:
        d = g.degree(n)
        hist[d] = hist.get(d, 0) + 1
    hist = dict(sorted(hist.items()))
    if not nodes:
        return TopologyMetrics(0, 0.0, hist, 0.0, 0.0, True, 0, 0)
    adj = _csgraph(g, nodes, weighted=False)
    n_comp, labels = connected_components(adj, directed=False)
    connected = n_comp == 1
    if not connected:
        biggest = np.bincount(labels).argmax()
        nodes = [n for n, lab in zip(nodes, labels) if lab == biggest]
        adj = _csgraph(g, nodes, weighted=False)
    n = len(nodes)
    if n == 1:
        return TopologyMetrics(0, 0.0, hist, 0.0, 0.0, connected, len(g), 1)
    hops = shortest_path(adj, method="D", unweighted=True, directed=False)
    # tiny epsilon keeps zero-delay edges from being dropped by the sparse format
    wadj = _csgraph(g, nodes, weighted=True)
    wadj.data = wadj.data + 1e-300
    delays = shortest_path(wadj, method="D", directed=False)
    off = ~np.eye(n, dtype=bool)
    return TopologyMetrics(
        diameter_hops=int(hops[off].max()),
        avg_hop_distance=float(hops[off].mean()),
        degree_histogram=hist,
        delay_diameter_s=float(delays[off].max()),
        avg_delay_s=float(delays[off].mean()),
        connected=connected,
        num_nodes=len(g),
        component_size=n,
    )


def grid_graph_for(spec: ConstellationSpec, epoch_s: float = 0.0,
                   link_params: IslLinkParams | None = None) -> IslGraph:
    """Convenience: propagate then build the +Grid graph."""
    return build_isl_graph(propagate(spec, epoch_s), spec, link_params)
