"""
Scenario files
==============

Scenarios are YAML documents. Top-level keys::

    seed, horizon_s, snapshot_interval_s, traffic_interval_s, fade_step_s,
    per_hop_proc_s, links, constellations, link_profiles, terminals,
    jammers, fades, failures, flows, sbacn, sla_requests, deployment

Only ``horizon_s`` is required. :func:`validate` checks every field and
cross-reference and returns all problems at once, each tagged with the
config path it came from (``constellations[0].altitude_km``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import yaml

from ..constellation import ConstellationSpec, GroundTerminal, IslLinkParams
from ..controlplane import STRUCTURES, ConfigError, DeploymentStructure
from ..linkmodel import JAMMER_STRATEGIES, MITIGATIONS, FadeProcess, JammerModel, LinkProfile, ModCod, \
    PowerLimits, is_stationary
from ..routing import Strategy
from ..sbacn import SbacnTerminal, SlaRequest


@dataclass(frozen=True)
class ValidationError:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path or '<root>'}: {self.message}"


class ScenarioError(Exception):
    def __init__(self, errors: list[ValidationError]):
        super().__init__("; ".join(map(str, errors)))
        self.errors = errors


@dataclass(frozen=True)
class FadeConfig:
    gt_id: str
    process: FadeProcess
    target_snr_db: float | None = None
    limits: PowerLimits | None = None


@dataclass(frozen=True)
class JammerConfig:
    jammer_id: str
    model: JammerModel
    lat_deg: float
    lon_deg: float
    targets: tuple
    mitigation: str = "none"


@dataclass(frozen=True)
class FailureConfig:
    link_failure_prob: float = 0.0
    node_failure_prob: float = 0.0
    scheduled: tuple = ()  # (epoch_s, node_id)


@dataclass(frozen=True)
class FlowConfig:
    flow_id: str
    src: str
    dst: str
    demand_bps: float
    start_s: float = 0.0
    stop_s: float = math.inf
    strategy: Strategy = Strategy()
    disjointness: str = "link_disjoint"
    packet_bits: int = 1500


@dataclass(frozen=True)
class SbacnConfig:
    staleness_window_s: float = 300.0
    gateway_proc_s: float = 2e-3
    terminals: tuple = ()
    updates_until_s: dict = field(default_factory=dict)
    links: tuple = ()


@dataclass(frozen=True)
class DeploymentConfig:
    structure: DeploymentStructure
    num_agents: int = 2
    num_channels: int = 2
    episodes_per_cycle: int = 10
    steps_per_episode: int = 20
    control_cycle_s: float = 60.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    alpha: float = 0.1
    gamma: float = 0.9


@dataclass
class Scenario:
    horizon_s: float
    seed: int = 1
    snapshot_interval_s: float = 60.0
    traffic_interval_s: float = 1.0
    fade_step_s: float = 1.0
    per_hop_proc_s: float = 0.0
    link_params: IslLinkParams = field(default_factory=IslLinkParams)
    constellations: list = field(default_factory=list)
    link_profiles: dict = field(default_factory=dict)
    terminals: list = field(default_factory=list)
    terminal_profiles: dict = field(default_factory=dict)
    jammers: list = field(default_factory=list)
    fades: list = field(default_factory=list)
    failures: FailureConfig = field(default_factory=FailureConfig)
    flows: list = field(default_factory=list)
    sbacn: SbacnConfig = field(default_factory=SbacnConfig)
    sla_requests: list = field(default_factory=list)  # (epoch_s, SlaRequest)
    deployment: DeploymentConfig | None = None


_MISSING = object()
_PRESETS = {
    "BPSK-uncoded": ModCod("BPSK", 0.0, 1.0, "BPSK-uncoded"),
    "BPSK-turbo": ModCod("BPSK", 12.0, 0.5, "BPSK-turbo"),
}
_MODCOD_RE = re.compile(r"^(BPSK|QPSK|16QAM)(?:\+(\d+(?:\.\d+)?)dB)?$")


def parse_modcod(text: str) -> ModCod:
    """``BPSK-uncoded``, ``BPSK-turbo``, ``QPSK`` or ``16QAM+3dB`` style names."""
    if text in _PRESETS:
        return _PRESETS[text]
    m = _MODCOD_RE.match(text)
    if not m:
        raise ValueError(f"unknown scheme {text!r}")
    gain = float(m.group(2) or 0.0)
    return ModCod(m.group(1), gain, 1.0, text)


def as_number(v):
    """Numbers, plus strings such as ``1e9`` that YAML 1.1 leaves unparsed."""
    if isinstance(v, bool):
        return None
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return None
    return None


class _Checker:
    """Field accessors that record problems instead of raising."""

    def __init__(self):
        self.errors: list[ValidationError] = []

    def err(self, path: str, msg: str):
        self.errors.append(ValidationError(path, msg))

    def mapping(self, obj, path: str) -> dict:
        if obj is None:
            return {}
        if not isinstance(obj, dict):
            self.err(path, "expected a mapping")
            return {}
        return obj

    def seq(self, obj, path: str) -> list:
        if obj is None:
            return []
        if not isinstance(obj, list):
            self.err(path, "expected a list")
            return []
        return obj

    def num(self, d: dict, key: str, path: str, default=_MISSING, *, lo=None, hi=None,
            lo_open=False, integer=False):
        p = f"{path}.{key}" if path else key
        if key not in d:
            if default is _MISSING:
                self.err(p, "required field missing")
                return None
            return default
        v = as_number(d[key])
        if v is None:
            self.err(p, f"expected a number, got {d[key]!r}")
            return None
        if integer and not float(v).is_integer():
            self.err(p, f"expected an integer, got {v!r}")
            return None
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.err(p, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
            return None
        if hi is not None and v > hi:
            self.err(p, f"must be <= {hi}, got {v!r}")
            return None
        return int(v) if integer else float(v)

    def text(self, d: dict, key: str, path: str, default=_MISSING, choices=None):
        p = f"{path}.{key}" if path else key
        if key not in d:
            if default is _MISSING:
                self.err(p, "required field missing")
                return None
            return default
        v = d[key]
        if not isinstance(v, (str, int)) or isinstance(v, bool):
            self.err(p, f"expected text, got {v!r}")
            return None
        v = str(v)
        if choices is not None and v not in choices:
            self.err(p, f"must be one of {sorted(choices)}, got {v!r}")
            return None
        return v

    def build(self, path: str, ctor, *args, **kw):
        try:
            return ctor(*args, **kw)
        except (ValueError, ConfigError) as exc:
            self.err(path, str(exc))
            return None


def _constellations(ck: _Checker, raw) -> list:
    out = []
    for i, c in enumerate(ck.seq(raw, "constellations")):
        p = f"constellations[{i}]"
        c = ck.mapping(c, p)
        n0 = len(ck.errors)
        vals = dict(
            shell_id=ck.text(c, "shell_id", p, f"s{i}"),
            altitude_km=ck.num(c, "altitude_km", p, lo=0, lo_open=True),
            inclination_deg=ck.num(c, "inclination_deg", p, lo=0, hi=180),
            num_planes=ck.num(c, "num_planes", p, lo=1, integer=True),
            sats_per_plane=ck.num(c, "sats_per_plane", p, lo=1, integer=True),
            phase_offset=ck.num(c, "phase_offset", p, 0.0),
            raan_spread_deg=ck.num(c, "raan_spread_deg", p, 360.0, lo=0, hi=360, lo_open=True),
            operator_id=ck.text(c, "operator_id", p, "op0"),
        )
        if len(ck.errors) == n0:
            spec = ck.build(p, ConstellationSpec, **vals)
            if spec is not None:
                out.append(spec)
    ids = [c.shell_id for c in out]
    for s in sorted({x for x in ids if ids.count(x) > 1}):
        ck.err("constellations", f"duplicate shell_id {s!r}")
    return out


def _link_profiles(ck: _Checker, raw) -> dict:
    out = {}
    for i, d in enumerate(ck.seq(raw, "link_profiles")):
        p = f"link_profiles[{i}]"
        d = ck.mapping(d, p)
        n0 = len(ck.errors)
        pid = ck.text(d, "id", p)
        vals = dict(
            freq_ghz=ck.num(d, "freq_ghz", p, 20.0, lo=0, lo_open=True),
            tx_eirp_dbw=ck.num(d, "eirp_dbw", p, 36.0),
            rx_gt_dbk=ck.num(d, "gt_dbk", p, 10.0),
            data_rate_bps=ck.num(d, "data_rate_bps", p, 16e6, lo=0, lo_open=True),
            spreading_factor=ck.num(d, "spreading_factor", p, 240.0, lo=1),
            rolloff=ck.num(d, "rolloff", p, 0.35, lo=0, hi=0.999),
            packet_bits=ck.num(d, "packet_bits", p, 1500, lo=1, integer=True),
            num_users=ck.num(d, "num_users", p, 1, lo=1, integer=True),
        )
        scheme = ck.text(d, "modcod", p, "BPSK-uncoded")
        mc = None
        if scheme is not None:
            try:
                mc = parse_modcod(scheme)
            except ValueError as exc:
                ck.err(f"{p}.modcod", str(exc))
        if len(ck.errors) == n0:
            vals["bandwidth_hz"] = vals["data_rate_bps"] * vals["spreading_factor"] * (1 + vals["rolloff"])
            prof = ck.build(p, LinkProfile, modcod=mc, **vals)
            if prof is not None:
                if pid in out:
                    ck.err(f"{p}.id", f"duplicate link profile {pid!r}")
                out[pid] = prof
    return out


def _terminals(ck: _Checker, raw, profiles: dict) -> tuple[list, dict]:
    out, prof_of = [], {}
    for i, d in enumerate(ck.seq(raw, "terminals")):
        p = f"terminals[{i}]"
        d = ck.mapping(d, p)
        n0 = len(ck.errors)
        vals = dict(
            gt_id=ck.text(d, "gt_id", p),
            lat_deg=ck.num(d, "lat_deg", p, lo=-90, hi=90),
            lon_deg=ck.num(d, "lon_deg", p, lo=-180, hi=180, lo_open=True),
            alt_m=ck.num(d, "alt_m", p, 0.0),
            min_elevation_deg=ck.num(d, "min_elevation_deg", p, 10.0, lo=0, hi=89.999),
            compute_capacity=ck.num(d, "compute_capacity", p, 1.0, lo=0, lo_open=True),
        )
        prof = ck.text(d, "link_profile", p, None)
        if prof is not None and prof not in profiles:
            ck.err(f"{p}.link_profile", f"unknown link profile {prof!r}")
        if len(ck.errors) == n0:
            gt = ck.build(p, GroundTerminal, **vals)
            if gt is not None:
                if any(t.gt_id == gt.gt_id for t in out):
                    ck.err(f"{p}.gt_id", f"duplicate terminal {gt.gt_id!r}")
                    continue
                out.append(gt)
                if prof is not None:
                    prof_of[gt.gt_id] = prof
    return out, prof_of


def _jammers(ck: _Checker, raw, gt_ids: set) -> list:
    out = []
    for i, d in enumerate(ck.seq(raw, "jammers")):
        p = f"jammers[{i}]"
        d = ck.mapping(d, p)
        n0 = len(ck.errors)
        jid = ck.text(d, "id", p, f"j{i}")
        eirp = ck.num(d, "eirp_dbw", p)
        lat = ck.num(d, "lat_deg", p, lo=-90, hi=90)
        lon = ck.num(d, "lon_deg", p, lo=-180, hi=180)
        strategy = ck.text(d, "strategy", p, "barrage", choices=JAMMER_STRATEGIES)
        null_depth = ck.num(d, "null_depth_db", p, 30.0, lo=0)
        hops = ck.num(d, "hop_channels", p, 1, lo=1, integer=True)
        mitigation = ck.text(d, "mitigation", p, "none", choices=MITIGATIONS)
        targets = ck.seq(d.get("targets"), f"{p}.targets") if "targets" in d else sorted(gt_ids)
        for k, t in enumerate(targets):
            if t not in gt_ids:
                ck.err(f"{p}.targets[{k}]", f"unknown terminal {t!r}")
        if len(ck.errors) == n0:
            model = ck.build(p, JammerModel, eirp, (0.0, 0.0, 0.0), strategy, null_depth, hops)
            if model is not None:
                out.append(JammerConfig(jid, model, lat, lon, tuple(targets), mitigation))
    return out


def _fades(ck: _Checker, raw, gt_ids: set, prof_of: dict, valid_gts: set) -> list:
    out = []
    for i, d in enumerate(ck.seq(raw, "fades")):
        p = f"fades[{i}]"
        d = ck.mapping(d, p)
        n0 = len(ck.errors)
        gt = ck.text(d, "gt_id", p)
        if gt is not None and gt not in gt_ids:
            ck.err(f"{p}.gt_id", f"unknown terminal {gt!r}")
        elif gt is not None and gt in valid_gts and gt not in prof_of:
            ck.err(f"{p}.gt_id", f"terminal {gt!r} has no link_profile")
        ar = ck.seq(d.get("ar", [0.98]), f"{p}.ar")
        ma = ck.seq(d.get("ma", []), f"{p}.ma")
        for name, coeffs in (("ar", ar), ("ma", ma)):
            for k, a in enumerate(coeffs):
                if as_number(a) is None:
                    ck.err(f"{p}.{name}[{k}]", f"expected a number, got {a!r}")
                else:
                    coeffs[k] = float(as_number(a))
        if len(ck.errors) == n0 and ar and not is_stationary(ar):
            ck.err(f"{p}.ar", f"AR coefficients {ar} are not stationary")
        std = ck.num(d, "noise_std_db", p, 3.0 * math.sqrt(1 - 0.98**2), lo=0)
        mean = ck.num(d, "mean_fade_db", p, 0.0)
        pc = ck.mapping(d.get("power_control"), f"{p}.power_control")
        target = limits = None
        if pc:
            pp = f"{p}.power_control"
            target = ck.num(pc, "target_snr_db", pp)
            lo_ = ck.num(pc, "min_dbw", pp)
            hi_ = ck.num(pc, "max_dbw", pp)
            if lo_ is not None and hi_ is not None:
                limits = ck.build(pp, PowerLimits, lo_, hi_)
        if len(ck.errors) == n0:
            proc = FadeProcess(tuple(ar), tuple(ma), std, mean)
            out.append(FadeConfig(gt, proc, target, limits))
    seen = [f.gt_id for f in out]
    for g in sorted({x for x in seen if seen.count(x) > 1}):
        ck.err("fades", f"terminal {g!r} has more than one fade process")
    return out


def _failures(ck: _Checker, raw, node_ids: set) -> FailureConfig:
    d = ck.mapping(raw, "failures")
    lp = ck.num(d, "link_failure_prob", "failures", 0.0, lo=0, hi=1)
    np_ = ck.num(d, "node_failure_prob", "failures", 0.0, lo=0, hi=1)
    sched = []
    for i, s in enumerate(ck.seq(d.get("scheduled"), "failures.scheduled")):
        p = f"failures.scheduled[{i}]"
        s = ck.mapping(s, p)
        t = ck.num(s, "epoch_s", p, lo=0)
        node = ck.text(s, "node", p)
        if node is not None and node not in node_ids:
            ck.err(f"{p}.node", f"unknown node {node!r}")
        elif t is not None and node is not None:
            sched.append((t, node))
    return FailureConfig(lp or 0.0, np_ or 0.0, tuple(sched))


def _flows(ck: _Checker, raw, gt_ids: set) -> list:
    out = []
    for i, d in enumerate(ck.seq(raw, "flows")):
        p = f"flows[{i}]"
        d = ck.mapping(d, p)
        n0 = len(ck.errors)
        fid = ck.text(d, "flow_id", p, f"f{i}")
        src = ck.text(d, "src", p)
        dst = ck.text(d, "dst", p)
        for key, v in (("src", src), ("dst", dst)):
            if v is not None and v not in gt_ids:
                ck.err(f"{p}.{key}", f"unknown terminal {v!r}")
        if src is not None and src == dst:
            ck.err(f"{p}.dst", "source and destination must differ")
        demand = ck.num(d, "demand_bps", p, lo=0, lo_open=True)
        start = ck.num(d, "start_s", p, 0.0, lo=0)
        stop = ck.num(d, "stop_s", p, math.inf, lo=0)
        bits = ck.num(d, "packet_bits", p, 1500, lo=1, integer=True)
        mode = ck.text(d, "disjointness", p, "link_disjoint", choices=("link_disjoint", "node_disjoint"))
        strategy = Strategy()
        stext = ck.text(d, "strategy", p, "single_path")
        if stext is not None:
            try:
                strategy = Strategy.parse(stext)
                if strategy.kind == "opportunistic":
                    ck.err(f"{p}.strategy", "opportunistic relaying is evaluated by resilience_eval only")
            except ValueError as exc:
                ck.err(f"{p}.strategy", str(exc))
        if start is not None and stop is not None and stop <= start:
            ck.err(f"{p}.stop_s", "stop_s must be after start_s")
        if len(ck.errors) == n0:
            out.append(FlowConfig(fid, src, dst, demand, start, stop, strategy, mode, bits))
    ids = [f.flow_id for f in out]
    for f in sorted({x for x in ids if ids.count(x) > 1}):
        ck.err("flows", f"duplicate flow_id {f!r}")
    return out


def _sbacn(ck: _Checker, raw, sat_ids: set) -> SbacnConfig:
    d = ck.mapping(raw, "sbacn")
    stale = ck.num(d, "staleness_window_s", "sbacn", 300.0, lo=0)
    proc = ck.num(d, "gateway_proc_s", "sbacn", 2e-3, lo=0)
    terms, until = [], {}
    for i, t in enumerate(ck.seq(d.get("terminals"), "sbacn.terminals")):
        p = f"sbacn.terminals[{i}]"
        t = ck.mapping(t, p)
        n0 = len(ck.errors)
        tid = ck.text(t, "terminal_id", p)
        op = ck.text(t, "operator_id", p)
        gws = ck.seq(t.get("gateway_sats"), f"{p}.gateway_sats")
        if not gws:
            ck.err(f"{p}.gateway_sats", "at least one gateway satellite required")
        for k, s in enumerate(gws):
            if s not in sat_ids:
                ck.err(f"{p}.gateway_sats[{k}]", f"unknown satellite {s!r}")
        cap = ck.num(t, "advertised_capacity_bps", p, lo=0)
        lat = ck.num(t, "advertised_latency_s", p, lo=0)
        upd = ck.num(t, "updates_until_s", p, math.inf, lo=0)
        if len(ck.errors) == n0:
            term = ck.build(p, SbacnTerminal, tid, op, tuple(gws), cap, lat, 0.0)
            if term is not None:
                if any(x.terminal_id == tid for x in terms):
                    ck.err(f"{p}.terminal_id", f"duplicate terminal {tid!r}")
                    continue
                terms.append(term)
                until[tid] = upd
    tids = _declared(d.get("terminals"), "terminal_id")
    links = []
    for i, l in enumerate(ck.seq(d.get("links"), "sbacn.links")):
        p = f"sbacn.links[{i}]"
        if not (isinstance(l, list) and len(l) == 3):
            ck.err(p, "expected [terminal_a, terminal_b, latency_s]")
            continue
        a, b, w = l
        w = as_number(w)
        for k, x in enumerate((a, b)):
            if x not in tids:
                ck.err(f"{p}[{k}]", f"unknown sbacn terminal {x!r}")
        if w is None or w < 0:
            ck.err(f"{p}[2]", f"latency must be a number >= 0, got {l[2]!r}")
        elif a in until and b in until:
            links.append((a, b, float(w)))
    return SbacnConfig(stale or 0.0, proc if proc is not None else 2e-3, tuple(terms), until, tuple(links))


def _sla_requests(ck: _Checker, raw, tids: set) -> list:
    out = []
    for i, r in enumerate(ck.seq(raw, "sla_requests")):
        p = f"sla_requests[{i}]"
        r = ck.mapping(r, p)
        n0 = len(ck.errors)
        rid = ck.text(r, "request_id", p, f"r{i}")
        t = ck.num(r, "epoch_s", p, 0.0, lo=0)
        src = ck.text(r, "src_gt", p)
        dst = ck.text(r, "dst_gt", p)
        for key, v in (("src_gt", src), ("dst_gt", dst)):
            if v is not None and v not in tids:
                ck.err(f"{p}.{key}", f"unknown sbacn terminal {v!r}")
        if src is not None and src == dst:
            ck.err(f"{p}.dst_gt", "source and destination must differ")
        bps = ck.num(r, "min_throughput_bps", p, lo=0, lo_open=True)
        lat = ck.num(r, "max_latency_s", p, lo=0, lo_open=True)
        dur = ck.num(r, "duration_s", p, math.inf, lo=0, lo_open=True)
        if len(ck.errors) == n0:
            if any(q.request_id == rid for _, q in out):
                ck.err(f"{p}.request_id", f"duplicate request {rid!r}")
                continue
            out.append((t, SlaRequest(rid, src, dst, bps, lat, dur)))
    return out


def _deployment(ck: _Checker, raw) -> DeploymentConfig | None:
    if raw is None:
        return None
    p = "deployment"
    d = ck.mapping(raw, p)
    n0 = len(ck.errors)
    kind = ck.text(d, "structure", p, "individual", choices=STRUCTURES)
    n = ck.num(d, "num_agents", p, 2, lo=1, integer=True)
    c = ck.num(d, "num_channels", p, 2, lo=1, integer=True)
    vals = dict(
        episodes_per_cycle=ck.num(d, "episodes_per_cycle", p, 10, lo=1, integer=True),
        steps_per_episode=ck.num(d, "steps_per_episode", p, 20, lo=1, integer=True),
        control_cycle_s=ck.num(d, "control_cycle_s", p, 60.0, lo=0, lo_open=True),
        epsilon_start=ck.num(d, "epsilon_start", p, 1.0, lo=0, hi=1),
        epsilon_end=ck.num(d, "epsilon_end", p, 0.05, lo=0, hi=1),
        alpha=ck.num(d, "alpha", p, 0.1, lo=0, hi=1),
        gamma=ck.num(d, "gamma", p, 0.9, lo=0, hi=1),
    )
    sync = ck.num(d, "sync_period_cycles", p, 10, lo=1, integer=True)
    hier = ck.mapping(d.get("hierarchy"), f"{p}.hierarchy")
    if n is not None:
        ids = {f"e{i}" for i in range(n)}
        for leader, followers in hier.items():
            if leader not in ids:
                ck.err(f"{p}.hierarchy.{leader}", f"unknown engine {leader!r}")
            for k, f in enumerate(ck.seq(followers, f"{p}.hierarchy.{leader}")):
                if f not in ids:
                    ck.err(f"{p}.hierarchy.{leader}[{k}]", f"unknown engine {f!r}")
    if len(ck.errors) != n0:
        return None
    structure = ck.build(f"{p}.hierarchy", DeploymentStructure, kind,
                         {k: list(v) for k, v in hier.items()}, sync)
    if structure is None:
        return None
    return DeploymentConfig(structure, n, c, **vals)


def _declared(raw, key: str) -> set:
    """Ids named by list entries, valid or not, so one bad entry does not
    also surface as a dangling reference everywhere it is used."""
    if not isinstance(raw, list):
        return set()
    return {str(d[key]) for d in raw if isinstance(d, dict) and isinstance(d.get(key), (str, int))}


def _declared_sats(raw) -> set:
    out = set()
    for i, c in enumerate(raw if isinstance(raw, list) else []):
        if not isinstance(c, dict):
            continue
        P, S = as_number(c.get("num_planes")), as_number(c.get("sats_per_plane"))
        if P is None or S is None or P < 1 or S < 1 or P != int(P) or S != int(S):
            continue
        shell = str(c.get("shell_id", f"s{i}"))
        out |= {f"{shell}-{p:03d}-{k:03d}" for p in range(int(P)) for k in range(int(S))}
    return out


def validate_data(data) -> tuple[Scenario | None, list[ValidationError]]:
    ck = _Checker()
    d = ck.mapping(data, "")
    known = {"seed", "horizon_s", "snapshot_interval_s", "traffic_interval_s", "fade_step_s",
             "per_hop_proc_s", "links", "constellations", "link_profiles", "terminals", "jammers",
             "fades", "failures", "flows", "sbacn", "sla_requests", "deployment"}
    for k in d:
        if k not in known:
            ck.err(str(k), "unknown top-level key")
    seed = ck.num(d, "seed", "", 1, lo=0, integer=True)
    horizon = ck.num(d, "horizon_s", "", lo=0, lo_open=True)
    snap = ck.num(d, "snapshot_interval_s", "", 60.0, lo=0, lo_open=True)
    traffic = ck.num(d, "traffic_interval_s", "", 1.0, lo=0, lo_open=True)
    fade_step = ck.num(d, "fade_step_s", "", 1.0, lo=0, lo_open=True)
    proc = ck.num(d, "per_hop_proc_s", "", 0.0, lo=0)
    lk = ck.mapping(d.get("links"), "links")
    isl = ck.num(lk, "isl_capacity_bps", "links", 10e9, lo=0, lo_open=True)
    updown = ck.num(lk, "up_down_capacity_bps", "links", 1e9, lo=0, lo_open=True)

    specs = _constellations(ck, d.get("constellations"))
    profiles = _link_profiles(ck, d.get("link_profiles"))
    terminals, prof_of = _terminals(ck, d.get("terminals"), profiles)
    gt_ids = _declared(d.get("terminals"), "gt_id")
    sat_ids = _declared_sats(d.get("constellations"))
    jammers = _jammers(ck, d.get("jammers"), gt_ids)
    fades = _fades(ck, d.get("fades"), gt_ids, prof_of, {t.gt_id for t in terminals})
    failures = _failures(ck, d.get("failures"), sat_ids)
    flows = _flows(ck, d.get("flows"), gt_ids)
    sb = _sbacn(ck, d.get("sbacn"), sat_ids)
    sb_raw = d.get("sbacn") if isinstance(d.get("sbacn"), dict) else {}
    slas = _sla_requests(ck, d.get("sla_requests"), _declared(sb_raw.get("terminals"), "terminal_id"))
    dep = _deployment(ck, d.get("deployment"))
    if ck.errors:
        return None, ck.errors
    sc = Scenario(horizon, seed, snap, traffic, fade_step, proc, IslLinkParams(isl, updown),
                  specs, profiles, terminals, prof_of, jammers, fades, failures, flows, sb, slas, dep)
    return sc, []


def validate(scenario_text: str) -> tuple[Scenario | None, list[ValidationError]]:
    """Parse YAML text and check it; returns (scenario, []) or (None, errors)."""
    try:
        data = yaml.safe_load(scenario_text)
    except yaml.YAMLError as exc:
        return None, [ValidationError("", f"YAML syntax error: {exc}")]
    if data is None:
        data = {}
    return validate_data(data)


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        sc, errors = validate(fh.read())
    if errors:
        raise ScenarioError(errors)
    return sc
