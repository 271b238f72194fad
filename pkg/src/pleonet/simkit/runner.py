"""
Composite run
=============

Drives one scenario through the event queue. Topology is rebuilt at every
snapshot; in between, flows keep the routes and MPTCP splits chosen at the
last snapshot or failure. Access-link quality (fade, power control and
jamming) sets each terminal's packet error rate; losses on a path are the
union of its two access links plus any failed element.

Every random draw comes from a labelled ``rng_stream`` of the scenario seed,
and every output row is a function of simulated time only.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..constants import SPEED_OF_LIGHT_KM_S
from ..constellation import GroundTerminal, IslGraph, attach_terminals, build_isl_graph, \
    node_sort_key, propagate, terminal_position_km
from ..controlplane import AllocationEnv, DeploymentRunner, Engine, LearnerState
from ..linkmodel import FadeState, effective_jam_db, per, power_control_step, rain_fade_step, snr_db
from ..routing import BARRIER, NoRoute, k_disjoint_paths, mptcp_optimal_split
from ..sbacn import SbacnCenter, UnknownGrant
from .events import EVENT_KINDS, EventQueue
from .metrics import MetricsSink
from .rng import rng_stream, stream_seed
from .scenario import Scenario

# carried load when demand exceeds the usable path capacity
_OVERLOAD_FILL = 0.95


@dataclass
class FlowStats:
    sent: int = 0
    delivered: int = 0
    lost: int = 0
    delay_sum_s: float = 0.0
    reroutes: int = 0

    def summary(self) -> dict:
        return {
            "sent": self.sent, "delivered": self.delivered, "lost": self.lost,
            "delivery_ratio": self.delivered / self.sent if self.sent else None,
            "mean_delay_s": self.delay_sum_s / self.delivered if self.delivered else None,
            "reroutes": self.reroutes,
        }


@dataclass
class RunReport:
    seed: int
    horizon_s: float
    snapshots: int
    events_by_kind: dict
    flows: dict
    sla: dict
    training: dict | None
    outputs: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


@dataclass
class _Link:
    fade_db: float = 0.0
    tx_dbw: float | None = None
    fade_state: FadeState | None = None
    per: float = 0.0
    ebn0_db: float = math.nan
    outage: bool = False


def _split_counts(n: int, weights: list[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` packets (ties to lower index)."""
    w = np.asarray(weights, dtype=float)
    if n == 0 or w.sum() <= 0:
        return [0] * len(weights)
    exact = n * w / w.sum()
    base = np.floor(exact).astype(int)
    rem = n - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    return [int(x) for x in base]


class Simulation:
    def __init__(self, sc: Scenario, seed: int | None = None):
        self.sc = sc
        self.seed = sc.seed if seed is None else int(seed)
        self.q = EventQueue()
        self.sink = MetricsSink()
        self.graph: IslGraph | None = None
        self.snapshot_index = -1
        self.failed_nodes: set = set()
        self.terminals = {t.gt_id: t for t in sc.terminals}
        self.links = {gt: _Link() for gt in sc.terminal_profiles}
        self.fades = {f.gt_id: f for f in sc.fades}
        self.routes: dict = {}
        self.flow_stats = {f.flow_id: FlowStats() for f in sc.flows}
        self.flow_rng = {f.flow_id: rng_stream(self.seed, f"traffic/{f.flow_id}") for f in sc.flows}
        self.center = SbacnCenter(sc.sbacn.staleness_window_s, sc.sbacn.gateway_proc_s)
        self.kind_counts = {k: 0 for k in EVENT_KINDS}
        self.deployer: DeploymentRunner | None = None
        for gt, fc in self.fades.items():
            st = FadeState(rng_stream(self.seed, f"fade/{gt}"),
                           [0.0] * len(fc.process.ar_coeffs), [0.0] * len(fc.process.ma_coeffs))
            self.links[gt].fade_state = st
        self._declare_tables()

    # ------------------------------------------------------------ setup
    def _declare_tables(self):
        s = self.sink
        s.table("topology", ["epoch_s", "snapshot", "nodes", "edges", "failed_edges", "failed_nodes"])
        s.table("flows", ["epoch_s", "flow_id", "paths", "sent", "delivered", "lost", "mean_delay_s"])
        s.table("routes", ["epoch_s", "flow_id", "path", "hops", "prop_delay_s", "split_bps"])
        s.table("links", ["epoch_s", "gt_id", "fade_db", "tx_dbw", "ebn0_db", "per", "outage"])

    def _schedule(self):
        sc, q = self.sc, self.q
        n_snap = int(math.ceil(sc.horizon_s / sc.snapshot_interval_s))
        for k in range(n_snap):
            q.push(k * sc.snapshot_interval_s, "topology_snapshot", {"index": k})
        for t, node in sorted(sc.failures.scheduled, key=lambda x: (x[0], node_sort_key(x[1]))):
            if t < sc.horizon_s:
                q.push(t, "failure", {"node": node})
        if self.fades:
            n = int(math.ceil(sc.horizon_s / sc.fade_step_s))
            for k in range(1, n):
                for gt in sorted(self.fades):
                    q.push(k * sc.fade_step_s, "link_fade_update", {"gt_id": gt})
        dep = sc.deployment
        if dep is not None:
            n_cycles = int(math.ceil(sc.horizon_s / dep.control_cycle_s))
            self._init_deployment(n_cycles * dep.episodes_per_cycle)
            for k in range(n_cycles):
                q.push(k * dep.control_cycle_s, "control_cycle", {"engine_id": "e0", "cycle": k})
        for t, req in sorted(sc.sla_requests, key=lambda x: (x[0], x[1].request_id)):
            if t < sc.horizon_s:
                q.push(t, "sla_request", {"request_id": req.request_id})
        for f in sc.flows:
            t = f.start_s
            k = 0
            while t < min(f.stop_s, sc.horizon_s):
                q.push(t, "traffic_arrival", {"flow_id": f.flow_id})
                k += 1
                t = f.start_s + k * sc.traffic_interval_s

    def _init_deployment(self, episodes: int):
        dep = self.sc.deployment
        env_seed = stream_seed(self.seed, "deployment/env") % 2**32
        env = AllocationEnv(dep.num_agents, dep.num_channels, rng_seed=env_seed)
        kw = dict(alpha=dep.alpha, gamma=dep.gamma)
        if dep.structure.kind == "global":
            engines = [Engine("e0", learner=LearnerState(dep.num_channels ** dep.num_agents, **kw))]
        else:
            engines = [Engine(f"e{i}", learner=LearnerState(dep.num_channels, **kw))
                       for i in range(dep.num_agents)]
        self.deployer = DeploymentRunner(dep.structure, engines, env, episodes, dep.steps_per_episode,
                                         seed=env_seed, epsilon_start=dep.epsilon_start,
                                         epsilon_end=dep.epsilon_end)

    # ------------------------------------------------------------ topology
    def _build_graph(self, t: float) -> IslGraph:
        g = IslGraph(t)
        for spec in self.sc.constellations:
            g = g.compose(build_isl_graph(propagate(spec, t), spec, self.sc.link_params))
        return attach_terminals(g, self.sc.terminals, self.sc.link_params)

    def _apply_failures(self, g: IslGraph) -> tuple[int, int]:
        fc = self.sc.failures
        rng = rng_stream(self.seed, f"failure/{self.snapshot_index}")
        isl = [e for e in g.edges() if e[4] != "up_down"]
        sats = g.satellites()
        # one draw per element in canonical order, whatever the probabilities
        u_edges = rng.random(len(isl))
        u_nodes = rng.random(len(sats))
        failed_edges = 0
        for (a, b, *_), u in zip(isl, u_edges):
            if u < fc.link_failure_prob:
                g.remove_edge(a, b)
                failed_edges += 1
        down = {s for s, u in zip(sats, u_nodes) if u < fc.node_failure_prob} | self.failed_nodes
        for s in sorted(down, key=node_sort_key):
            if s in g:
                for v in g.neighbors(s):
                    g.remove_edge(s, v)
        return failed_edges, len(down)

    def _reroute(self, t: float):
        for f in self.sc.flows:
            prev = self.routes.get(f.flow_id)
            try:
                ps = k_disjoint_paths(self.graph, f.src, f.dst, f.strategy.param, f.disjointness,
                                      self.sc.per_hop_proc_s, f.flow_id)
            except NoRoute:
                self.routes[f.flow_id] = None
                if prev is not None:
                    self.flow_stats[f.flow_id].reroutes += 1
                continue
            total = sum(p.bottleneck_capacity_bps for p in ps.paths)
            carried = min(f.demand_bps, _OVERLOAD_FILL * total) if f.demand_bps >= BARRIER * total \
                else f.demand_bps
            alloc = mptcp_optimal_split(ps, carried, f.packet_bits)
            self.routes[f.flow_id] = (ps, alloc, carried)
            if prev is None or [p.nodes for p in prev[0].paths] != [p.nodes for p in ps.paths]:
                self.flow_stats[f.flow_id].reroutes += prev is not None
            for i, (p, split) in enumerate(zip(ps.paths, alloc.splits_bps)):
                self.sink.row("routes", [t, f.flow_id, i, p.hops, p.delay_s, split])

    # ------------------------------------------------------------ access links
    def _serving_range_km(self, gt: str) -> float | None:
        if self.graph is None or gt not in self.graph:
            return None
        best = None
        for s in self.graph.neighbors(gt):
            w = self.graph.edge(gt, s)["weight_s"]
            if best is None or w < best[0]:
                best = (w, s)
        return None if best is None else best[0] * SPEED_OF_LIGHT_KM_S

    def _serving_sat(self, gt: str):
        nb = [(self.graph.edge(gt, s)["weight_s"], node_sort_key(s), s) for s in self.graph.neighbors(gt)]
        return min(nb)[2] if nb else None

    def _update_link(self, gt: str, t: float):
        lk = self.links[gt]
        prof = self.sc.link_profiles[self.sc.terminal_profiles[gt]]
        rng_km = self._serving_range_km(gt)
        if rng_km is None:
            lk.per, lk.ebn0_db, lk.outage = 1.0, -math.inf, True
        else:
            clear = snr_db(prof, rng_km).ebn0_db
            tx = prof.tx_eirp_dbw if lk.tx_dbw is None else lk.tx_dbw
            fc = self.fades.get(gt)
            if fc is not None and fc.limits is not None:
                tx, _ = power_control_step(fc.target_snr_db, lk.fade_db, tx, fc.limits,
                                           clear - prof.tx_eirp_dbw)
            lk.tx_dbw = tx
            ebn0 = clear + (tx - prof.tx_eirp_dbw) - lk.fade_db
            jam = self._jam_linear(gt, prof, t)
            if jam > 0:
                ebn0 -= 10.0 * math.log10(1.0 + jam)
            lk.ebn0_db = ebn0
            lk.per = float(per(prof.modcod, ebn0, prof.packet_bits))
            lk.outage = fc is not None and fc.target_snr_db is not None and ebn0 < fc.target_snr_db - 1e-9
        self.sink.row("links", [t, gt, lk.fade_db, lk.tx_dbw if lk.tx_dbw is not None else math.nan,
                                lk.ebn0_db, lk.per, int(lk.outage)])

    def _jam_linear(self, gt: str, prof, t: float) -> float:
        total = 0.0
        sat = None
        for jc in self.sc.jammers:
            if gt not in jc.targets:
                continue
            if sat is None:
                sat = self._serving_sat(gt)
            jpos = terminal_position_km(GroundTerminal(jc.jammer_id, jc.lat_deg, jc.lon_deg), t)
            d = float(np.linalg.norm(self.graph.position(sat) - jpos))
            total += 10.0 ** (effective_jam_db(prof, jc.model, d, jc.mitigation) / 10.0)
        return total

    def _path_per(self, flow) -> float:
        ok = 1.0
        for gt in (flow.src, flow.dst):
            if gt in self.links:
                ok *= 1.0 - self.links[gt].per
        return 1.0 - ok

    # ------------------------------------------------------------ handlers
    def on_topology_snapshot(self, ev):
        t = ev.epoch_s
        self.snapshot_index = ev.payload["index"]
        self.graph = self._build_graph(t)
        fe, fn = self._apply_failures(self.graph)
        self.sink.row("topology", [t, self.snapshot_index, len(self.graph),
                                   self.graph.number_of_edges(), fe, fn])
        self._reroute(t)
        for gt in sorted(self.links):
            self._update_link(gt, t)
        for term in self.sc.sbacn.terminals:
            if t <= self.sc.sbacn.updates_until_s[term.terminal_id]:
                self.center.register_update(_with_epoch(term, t))

    def on_failure(self, ev):
        node = ev.payload["node"]
        self.failed_nodes.add(node)
        if self.graph is not None and node in self.graph:
            for v in self.graph.neighbors(node):
                self.graph.remove_edge(node, v)
        self._reroute(ev.epoch_s)

    def on_link_fade_update(self, ev):
        gt = ev.payload["gt_id"]
        lk, fc = self.links[gt], self.fades[gt]
        lk.fade_db, lk.fade_state = rain_fade_step(fc.process, lk.fade_state)
        self._update_link(gt, ev.epoch_s)

    def on_traffic_arrival(self, ev):
        fid = ev.payload["flow_id"]
        flow = next(f for f in self.sc.flows if f.flow_id == fid)
        st = self.flow_stats[fid]
        n = int(round(flow.demand_bps * self.sc.traffic_interval_s / flow.packet_bits))
        route = self.routes.get(fid)
        delivered, delay_sum, n_paths = 0, 0.0, 0
        if route is not None and n > 0:
            ps, alloc, carried = route
            n_paths = len(ps.paths)
            n_carried = int(round(n * carried / flow.demand_bps))
            counts = _split_counts(n_carried, alloc.splits_bps)
            p_loss = self._path_per(flow)
            rng = self.flow_rng[fid]
            for path, k, f_i in zip(ps.paths, counts, alloc.splits_bps):
                if k == 0:
                    continue
                ok = int(rng.binomial(k, 1.0 - p_loss))
                delivered += ok
                c = path.bottleneck_capacity_bps
                delay_sum += ok * (path.delay_s + flow.packet_bits / (c - f_i))
        lost = n - delivered
        st.sent += n
        st.delivered += delivered
        st.lost += lost
        st.delay_sum_s += delay_sum
        self.sink.incr("packets_sent", fid, n)
        self.sink.incr("packets_delivered", fid, delivered)
        self.sink.incr("packets_lost", fid, lost)
        self.sink.row("flows", [ev.epoch_s, fid, n_paths, n, delivered, lost,
                                delay_sum / delivered if delivered else math.nan])

    def on_sla_request(self, ev):
        rid = ev.payload["request_id"]
        req = next(r for _, r in self.sc.sla_requests if r.request_id == rid)
        g = self.center.admit(req, self.sc.sbacn.links, ev.epoch_s)
        self.sink.incr(f"sla_{g.state}", g.reason or "")
        if g.state == "granted" and ev.epoch_s + req.duration_s < self.sc.horizon_s:
            self.q.push(ev.epoch_s + req.duration_s, "sla_expiry", {"request_id": rid})

    def on_sla_expiry(self, ev):
        try:
            self.center.release(ev.payload["request_id"], ev.epoch_s)
            self.sink.incr("sla_released")
        except UnknownGrant:
            pass

    def on_control_cycle(self, ev):
        for _ in range(self.sc.deployment.episodes_per_cycle):
            self.deployer.run_episode()

    # ------------------------------------------------------------ main loop
    def run(self) -> RunReport:
        self._schedule()
        while self.q:
            ev = self.q.pop()
            if ev.epoch_s >= self.sc.horizon_s:
                break
            self.kind_counts[ev.kind] += 1
            self.sink.emit("events", ev.record())
            getattr(self, f"on_{ev.kind}")(ev)
        for rec in self.center.log:
            self.sink.emit("grants", rec)
        self.sink.streams.setdefault("grants", [])
        training = None
        if self.deployer is not None:
            trace = self.deployer.finish()
            tail = trace.mean_rewards()[-max(1, len(trace.episodes) // 10):]
            training = {"structure": trace.structure, "episodes": len(trace.episodes),
                        "messages": trace.messages, "final_greedy_reward": trace.final_greedy_reward,
                        "tail_mean_reward": float(tail.mean()) if len(tail) else None}
            self.training_csv = trace.to_csv()
        counts = {"granted": 0, "rejected": 0, "released": 0}
        reasons: dict = {}
        for rec in self.center.log:
            counts[rec["state"]] += 1
            if "reason" in rec:
                reasons[rec["reason"]] = reasons.get(rec["reason"], 0) + 1
        return RunReport(self.seed, self.sc.horizon_s, self.snapshot_index + 1, dict(self.kind_counts),
                         {fid: s.summary() for fid, s in sorted(self.flow_stats.items())},
                         {**counts, "reject_reasons": dict(sorted(reasons.items()))}, training)


def _with_epoch(term, t):
    return replace(term, last_update_epoch_s=t)


def run(scenario: Scenario, out_dir: str | None = None, seed: int | None = None) -> RunReport:
    """Execute ``scenario`` to its horizon; write artifacts to ``out_dir`` if given."""
    sim = Simulation(scenario, seed)
    report = sim.run()
    if out_dir is not None:
        extra = {}
        if sim.deployer is not None:
            extra["training.csv"] = sim.training_csv
        names = sorted(set(sim.sink.render()) | set(extra) | {"report.json"})
        report.outputs = names
        extra["report.json"] = report.to_json()
        sim.sink.flush(out_dir, extra)
    return report
