"""Acceptance suite: one test per criterion, each at its stated tolerance and
time budget. Every test records a PASS/FAIL line, printed in the terminal
summary (and immediately with ``pytest -s``)."""

import contextlib
import filecmp
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats
from scipy.sparse.csgraph import shortest_path

from conftest import ACCEPTANCE_LINES
from oracles import mptcp_grid_oracle, networkx_space_delay
from pleonet.constants import SPEED_OF_LIGHT_KM_S
from pleonet.constellation import (
    ConstellationSpec,
    GroundTerminal,
    IslGraph,
    add_smallworld_shortcuts,
    attach_terminals,
    grid_graph_for,
    topology_metrics,
)
from pleonet.controlplane import (
    AllocationEnv,
    Engine,
    federated_aggregate,
    make_engines,
    run_deployment,
    transfer_model,
)
from pleonet.linkmodel import (
    TURBO_BPSK,
    UNCODED_BPSK,
    crossing_ebn0_db,
    ebn0_grid,
    per_from_ber,
    per_sweep,
    uncoded_ber,
)
from pleonet.routing import FailureModel, highway_comparison, mptcp_optimal_split, resilience_eval
from pleonet.sbacn import SbacnCenter, SbacnTerminal, SlaRequest
from pleonet.simkit.cli import main as cli_main
from pleonet.simkit.runner import run
from pleonet.simkit.scenario import load_scenario

FLAGSHIP = Path(__file__).resolve().parents[1] / "scenarios" / "flagship.yaml"


@contextlib.contextmanager
def criterion(n: int, title: str, budget_s: float):
    t0 = time.perf_counter()
    detail: dict = {}
    try:
        yield detail
        elapsed = time.perf_counter() - t0
        assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"
    except BaseException as exc:
        line = f"AC-{n} FAIL  {title}: {exc}".splitlines()[0]
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"AC-{n} PASS  {title} ({extra}; {time.perf_counter() - t0:.2f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_ac01_spreading_gain(capsys):
    with criterion(1, "spreading gain", 1.0) as d:
        assert cli_main(["sweep", "per", "--scheme", "BPSK-uncoded", "--ebn0", "0:1:0.5",
                         "--spreading-factor", "240"]) == 0
        out = capsys.readouterr().out
        line = next(x for x in out.splitlines() if x.startswith("processing_gain_db="))
        value = float(line.split("=")[1].split()[0])
        assert value == 23.80
        assert math.floor(value) == 23
        d["reported_db"] = f"{value:.2f}"


def test_ac02_turbo_shift():
    with criterion(2, "turbo gain shift at PER 1e-3", 5.0) as d:
        grid = ebn0_grid(-5.0, 20.0, 0.1)
        rows = per_sweep([UNCODED_BPSK, TURBO_BPSK], grid, 1500)
        cross = {}
        for mc in (UNCODED_BPSK, TURBO_BPSK):
            vals = np.array([p for _, label, p in rows if label == mc.label])
            cross[mc.label] = crossing_ebn0_db(grid, vals, 1e-3)
        shift = cross["BPSK-uncoded"] - cross["BPSK-turbo"]
        assert abs(shift - 12.0) <= 0.1
        d["shift_db"] = f"{shift:.4f}"


def test_ac03_ber_per_oracle():
    with criterion(3, "analytic BER/PER", 1.0) as d:
        b = float(uncoded_ber("BPSK", 9.6))
        p = float(per_from_ber(1e-5, 1500))
        assert abs(b - 1.0e-5) <= 0.2 * 1.0e-5
        assert abs(p - 1.49e-2) <= 1e-4
        # high-precision references (mpmath, 50 digits)
        assert b == pytest.approx(9.736176018578597e-06, rel=1e-12)
        assert p == pytest.approx(0.014888134280822598, rel=1e-12)
        d["ber"] = f"{b:.4e}"
        d["per"] = f"{p:.5f}"


def test_ac04_mptcp_optimality():
    with criterion(4, "MPTCP optimality vs grid oracle", 60.0) as d:
        rng = np.random.default_rng(2024)
        worst_gap = worst_kkt = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 4))
            props = rng.uniform(0.001, 0.03, n)
            caps = rng.uniform(1e6, 2e7, n)
            demand = float(rng.uniform(0.1, 0.9) * caps.sum())
            pkt = float(rng.choice([1500.0, 12000.0]))
            fa = mptcp_optimal_split(list(zip(props, caps)), demand, pkt)
            oracle = mptcp_grid_oracle(props, caps, demand, pkt, demand / 400)
            gap = abs(fa.mean_delay_s - oracle) / oracle
            assert gap <= 0.005
            m = fa.marginal_delays()
            active = [mi for mi, f in zip(m, fa.splits_bps) if f > 0]
            kkt = max(abs(mi - active[0]) / active[0] for mi in active)
            assert kkt <= 1e-6
            worst_gap, worst_kkt = max(worst_gap, gap), max(worst_kkt, kkt)
        d["max_gap"] = f"{worst_gap:.2e}"
        d["max_kkt_rel"] = f"{worst_kkt:.1e}"


def test_ac05_symmetric_split():
    with criterion(5, "identical paths split 50/50 exactly", 1.0) as d:
        rng = np.random.default_rng(5)
        for demand in [1.0, 3.0e6, 7.77e7] + list(rng.uniform(1, 1.9e8, 20)):
            fa = mptcp_optimal_split([(0.012, 1e8), (0.012, 1e8)], float(demand), 1500)
            assert fa.splits_bps[0] == fa.splits_bps[1] == demand / 2
        d["cases"] = 23


def test_ac06_space_highway():
    with criterion(6, "space highway over 8000 km", 5.0) as d:
        shell = ConstellationSpec("S", 550.0, 53.0, 72, 22, phase_offset=39)
        g = grid_graph_for(shell, 0.0)
        a = GroundTerminal("A", 0.0, 0.0)
        b = GroundTerminal("B", 0.0, math.degrees(8000.0 / 6371.0))
        res = highway_comparison(a, b, g, 100.0, 0.001)
        # pre-build hand computation: 80 fiber hops, 80 * (100/c + 1 ms) = 106.7 ms
        hand_terrestrial = 80 * (100.0 / SPEED_OF_LIGHT_KM_S + 0.001)
        assert res.terrestrial_delay_s == pytest.approx(hand_terrestrial, rel=1e-12)
        assert res.winner == "space"
        ga = attach_terminals(g, [a, b])
        isl = [(u, v, w) for u, v, w, c, k in ga.edges() if k != "up_down"]
        up_a = [(v, w) for u, v, w, c, k in ga.edges() if k == "up_down" and u == "A"]
        up_b = [(v, w) for u, v, w, c, k in ga.edges() if k == "up_down" and u == "B"]
        oracle_space = networkx_space_delay(isl, up_a, up_b, 0.0)
        assert res.space_delay_s == pytest.approx(oracle_space, rel=1e-12)
        assert hand_terrestrial >= 0.100
        assert oracle_space <= 0.060
        d["terrestrial_ms"] = f"{1e3 * res.terrestrial_delay_s:.1f}"
        d["space_ms"] = f"{1e3 * oracle_space:.1f}"


def test_ac07_small_world():
    with criterion(7, "small-world shortcuts on 24x24 +Grid", 120.0) as d:
        g = grid_graph_for(ConstellationSpec("G", 550.0, 53.0, 24, 24, phase_offset=1), 0.0)
        base = topology_metrics(g).avg_hop_distance
        shortcut = [topology_metrics(add_smallworld_shortcuts(g, 0.1, s)).avg_hop_distance for s in range(10)]
        assert np.mean(shortcut) < base
        # additive shortcuts never lengthen any pair (full APSP, one seed)
        s = add_smallworld_shortcuts(g, 0.1, 0)
        nodes = g.nodes
        idx = {n: i for i, n in enumerate(nodes)}

        def apsp(graph):
            m = np.zeros((len(nodes), len(nodes)))
            for u, v, *_ in graph.edges():
                m[idx[u], idx[v]] = m[idx[v], idx[u]] = 1
            return shortest_path(m, unweighted=True, directed=False)

        assert np.all(apsp(s) <= apsp(g))
        d["p0_avg_hops"] = f"{base:.3f}"
        d["p0.1_avg_hops"] = f"{np.mean(shortcut):.3f}"


def _ring(n):
    g = IslGraph()
    for i in range(n):
        g.add_edge(i, (i + 1) % n, 0.001, 1e9, "intra_plane")
    return g


def test_ac08_resilience():
    with criterion(8, "resilience closed form", 60.0) as d:
        n, p = 10_000, 0.1
        fm = FailureModel(link_failure_prob=p, seed=8)
        one = resilience_eval(_ring(10), 0, 5, "single_path", fm, n).delivery_ratio
        expect = 0.9**5
        sigma = math.sqrt(expect * (1 - expect) / n)
        assert abs(one - expect) <= 3 * sigma
        two = resilience_eval(_ring(10), 0, 5, "k_disjoint(2)", fm, n).delivery_ratio
        pooled = (one + two) / 2
        z = (two - one) / math.sqrt(pooled * (1 - pooled) * 2 / n)
        assert z > stats.norm.ppf(0.95)
        d["single"] = f"{one:.4f}"
        d["closed_form"] = f"{expect:.4f}"
        d["two_disjoint"] = f"{two:.4f}"
        d["z"] = f"{z:.1f}"


def test_ac09_federated_exactness():
    with criterion(9, "federated aggregation exactness", 1.0) as d:
        out = federated_aggregate([({"k": 3.0}, 1.0), ({"k": 0.0}, 2.0), ({"k": 1.0}, 3.0)])
        # (1*3 + 2*0 + 3*1) / 6 = 1
        assert out == {"k": 1.0}
        assert federated_aggregate([({"k": 0.0}, 1.0), ({"k": 1.0}, 1.0)]) == {"k": 0.5}
        rng = np.random.default_rng(9)
        t1 = {(s, a): float(v) for (s, a), v in zip([(i, j) for i in range(5) for j in range(3)],
                                                   rng.normal(size=15) * 1e3)}
        t2 = {k: float(rng.normal()) for k in t1}
        for w in (1e-9, 0.3, 1.0, 7.0, 1e9):
            assert federated_aggregate([(t1, w), (t2, 0.0), (t2, 0.0)]) == t1
        d["checks"] = "hand arithmetic + bit-exact single weight"


def test_ac10_learning_structures():
    with criterion(10, "learning structure suite", 600.0) as d:
        seeds = range(20)
        env0 = AllocationEnv(2, 2)
        baseline = env0.random_policy_reward()
        tails = []
        for s in seeds:
            tr = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=s), 400, 20)
            tails.append(tr.mean_rewards()[-100:].mean())
        t = stats.ttest_1samp(tails, baseline, alternative="greater")
        assert t.pvalue < 0.05

        optimal = 0
        for s in seeds:
            tr = run_deployment("global", None, AllocationEnv(2, 2, rng_seed=s), 2000, 20)
            optimal += tr.final_greedy_reward == env0.max_reward()
        assert optimal >= 0.9 * len(seeds)

        warm, cold = [], []
        for s in seeds:
            pre = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=s), 400, 20)
            succ = make_engines(2, 2)
            for e, learner in zip(succ, pre.learners):
                transfer_model(Engine("pred", learner=learner), e, "full")
            env_seed = 1000 + s
            w = run_deployment("individual", succ, AllocationEnv(2, 2, rng_seed=env_seed), 400, 20,
                               track_convergence=True)
            c = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=env_seed), 400, 20,
                               track_convergence=True)
            warm.append(400 if w.converged_episode is None else w.converged_episode)
            cold.append(400 if c.converged_episode is None else c.converged_episode)
        assert np.median(warm) < np.median(cold)
        d["individual_mean"] = f"{np.mean(tails):.3f}"
        d["baseline"] = f"{baseline:.3f}"
        d["p"] = f"{t.pvalue:.1e}"
        d["global_optimal"] = f"{optimal}/20"
        d["median_warm"] = np.median(warm)
        d["median_cold"] = np.median(cold)


def test_ac11_sbacn_ledger():
    with criterion(11, "SBACN ledger replay", 10.0) as d:
        rng = np.random.default_rng(11)
        c = SbacnCenter()
        ids = [f"T{i}" for i in range(6)]
        for i, tid in enumerate(ids):
            c.register_update(SbacnTerminal(tid, "XYZ"[i % 3], (f"s{i}",), float(rng.uniform(10, 100)),
                                            float(rng.uniform(0, 0.05))))
        links = [(ids[i], ids[j], float(rng.uniform(0, 0.02)))
                 for i in range(6) for j in range(i + 1, 6) if rng.random() < 0.4]
        advertised = {k: Fraction(t.advertised_capacity_bps) for k, t in c.registry.items()}
        active: dict = {}
        grants = 0
        for op in range(1000):
            if active and rng.random() < 0.4:
                rid = sorted(active)[int(rng.integers(len(active)))]
                c.release(rid)
                del active[rid]
            else:
                s, t = rng.choice(ids, size=2, replace=False)
                req = SlaRequest(f"r{op}", str(s), str(t), float(rng.uniform(0.5, 30)),
                                 float(rng.uniform(0.01, 0.1)))
                g = c.admit(req, links)
                if g.state == "granted":
                    assert g.reserved_bps >= req.min_throughput_bps
                    assert g.predicted_latency_s <= req.max_latency_s
                    active[req.request_id] = (g.reserved_bps, g.reserved_on)
                    grants += 1
        for tid in ids:
            exact = advertised[tid] - sum((Fraction(b) for b, on in active.values() if tid in on), Fraction(0))
            assert c.residual(tid) == float(exact)
        d["grants"] = grants
        d["active_at_end"] = len(active)


def test_ac12_determinism(tmp_path):
    with criterion(12, "flagship run byte-identical", 120.0) as d:
        sc = load_scenario(str(FLAGSHIP))
        run(sc, str(tmp_path / "a"), 1)
        run(load_scenario(str(FLAGSHIP)), str(tmp_path / "b"), 1)
        names = sorted(p.name for p in (tmp_path / "a").iterdir()
                       if p.suffix in (".csv", ".jsonl"))
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir() if p.suffix in (".csv", ".jsonl"))
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
        assert mismatch == [] and errors == []
        d["files"] = len(match)
