"""Command-line entry point: ``pleonet <command> ...``.

Exit status is 0 on success, 1 for invalid input (scenario or instance
validation errors, bad arguments) and 2 for failures during execution.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from ..constellation import IslGraph, add_smallworld_shortcuts, attach_terminals, build_isl_graph, \
    propagate, topology_metrics
from ..controlplane import STRUCTURES, AllocationEnv, ConfigError, DeploymentStructure, run_deployment
from ..linkmodel import crossing_ebn0_db, ebn0_grid, per_sweep, processing_gain_db
from ..routing import InfeasibleDemand, mptcp_optimal_split
from .runner import run
from .scenario import ScenarioError, as_number, load_scenario, parse_modcod, validate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class InputError(Exception):
    """Bad user input; maps to exit status 1."""


def _write(out_dir: str | None, name: str, text: str) -> None:
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parse_range(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise InputError(f"range must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise InputError(f"empty range {text!r}")
    return ebn0_grid(start, stop, step)


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    report = run(sc, args.out, args.seed)
    print(report.to_json(), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    with open(args.scenario, encoding="utf-8") as fh:
        _, errors = validate(fh.read())
    for e in errors:
        print(e)
    if errors:
        print(f"{len(errors)} error(s)")
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        schemes = [parse_modcod(s.strip()) for s in args.scheme.split(",") if s.strip()]
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if not schemes:
        raise InputError("no schemes given")
    grid = _parse_range(args.ebn0)
    rows = per_sweep(schemes, grid, args.bits)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ebn0_db", "scheme", "per"])
    for e, label, p in rows:
        w.writerow([repr(float(e)), label, repr(float(p))])
    gain = processing_gain_db(args.spreading_factor)
    summary = {"spreading_factor": args.spreading_factor, "processing_gain_db": gain,
               "packet_bits": args.bits, "target_per": args.target, "crossings_db": {}}
    for mc in schemes:
        per_vals = np.array([p for _, label, p in rows if label == mc.label])
        try:
            summary["crossings_db"][mc.label] = crossing_ebn0_db(grid, per_vals, args.target)
        except ValueError:
            summary["crossings_db"][mc.label] = None
    _write(args.out, "per_sweep.csv", buf.getvalue())
    _write(args.out, "summary.jsonl", json.dumps(summary) + "\n")
    print(f"processing_gain_db={gain:.2f} (spreading factor {args.spreading_factor:g}, "
          f"{math.floor(gain)} dB floored)")
    for label, x in summary["crossings_db"].items():
        shown = "not reached" if x is None else f"{x:.2f} dB"
        print(f"PER={args.target:g} crossing {label}: {shown}")
    return EXIT_OK


def _scenario_graph(sc, epoch_s: float) -> IslGraph:
    g = IslGraph(epoch_s)
    for spec in sc.constellations:
        g = g.compose(build_isl_graph(propagate(spec, epoch_s), spec, sc.link_params))
    return g


def cmd_topo(args) -> int:
    sc = load_scenario(args.scenario)
    g = _scenario_graph(sc, args.epoch)
    if args.shortcut_p > 0:
        g = add_smallworld_shortcuts(g, args.shortcut_p, args.seed)
    if args.with_terminals:
        g = attach_terminals(g, sc.terminals, sc.link_params)
    m = topology_metrics(g)
    rec = {"epoch_s": args.epoch, "shortcut_p": args.shortcut_p, "num_nodes": m.num_nodes,
           "num_edges": g.number_of_edges(), "connected": m.connected, "component_size": m.component_size,
           "diameter_hops": m.diameter_hops, "avg_hop_distance": m.avg_hop_distance,
           "delay_diameter_s": m.delay_diameter_s, "avg_delay_s": m.avg_delay_s,
           "degree_histogram": {str(k): v for k, v in sorted(m.degree_histogram.items())}}
    _write(args.out, "topology_metrics.jsonl", json.dumps(rec) + "\n")
    print(json.dumps(rec, indent=2))
    return EXIT_OK


def _load_instance(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise InputError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("instance must be a mapping with demand_bps, pkt_bits and paths")
    errors = []
    for key in ("demand_bps", "pkt_bits", "paths"):
        if key not in data:
            errors.append(f"{key}: required field missing")
    paths = []
    raw_paths = data.get("paths") or []
    if not isinstance(raw_paths, list):
        errors.append("paths: expected a list")
        raw_paths = []
    for i, p in enumerate(raw_paths):
        vals = [as_number(x) for x in p] if isinstance(p, (list, tuple)) and len(p) == 2 else None
        if vals is None or None in vals:
            errors.append(f"paths[{i}]: expected [prop_delay_s, capacity_bps]")
        elif vals[0] < 0 or vals[1] <= 0:
            errors.append(f"paths[{i}]: need prop_delay_s >= 0 and capacity_bps > 0")
        else:
            paths.append(tuple(float(x) for x in vals))
    if "paths" in data and not raw_paths:
        errors.append("paths: at least one path required")
    for key in ("demand_bps", "pkt_bits"):
        if key in data:
            v = as_number(data[key])
            if v is None or v <= 0:
                errors.append(f"{key}: must be a number > 0")
            else:
                data[key] = float(v)
    data["paths"] = paths
    if errors:
        raise InputError("; ".join(errors))
    return data


def cmd_mptcp(args) -> int:
    inst = _load_instance(args.instance)
    try:
        alloc = mptcp_optimal_split(inst["paths"], float(inst["demand_bps"]),
                                    float(inst["pkt_bits"]), session_id=str(inst.get("session_id", "")),
                                    strict=True)
    except InfeasibleDemand as exc:
        raise InputError(str(exc)) from None
    rec = {"session_id": alloc.session_id, "demand_bps": alloc.demand_bps, "splits_bps": alloc.splits_bps,
           "mean_delay_s": alloc.mean_delay_s, "marginal_delays_s": alloc.marginal_delays()}
    _write(args.out, "mptcp_solution.jsonl", json.dumps(rec) + "\n")
    print(json.dumps(rec, indent=2))
    return EXIT_OK


def cmd_train(args) -> int:
    hier = json.loads(args.hierarchy) if args.hierarchy else {}
    try:
        structure = DeploymentStructure(args.structure, hier, args.sync_period)
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    env = AllocationEnv(args.agents, args.channels, rng_seed=args.seed)
    trace = run_deployment(structure, None, env, args.episodes, args.steps)
    tail = trace.mean_rewards()[-max(1, args.episodes // 10):]
    summary = {"structure": args.structure, "seed": args.seed, "episodes": args.episodes,
               "messages": trace.messages, "tail_mean_reward": float(tail.mean()),
               "final_greedy_reward": trace.final_greedy_reward,
               "random_policy_reward": env.random_policy_reward(), "max_reward": env.max_reward()}
    _write(args.out, "training.csv", trace.to_csv())
    _write(args.out, "training_summary.jsonl", json.dumps(summary) + "\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pleonet", description="p-LEO network simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario to its horizon")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a scenario and list every error")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="parameter sweeps")
    sw = p.add_subparsers(dest="what", required=True)
    q = sw.add_parser("per", help="PER vs Eb/N0 for modulation/coding schemes")
    q.add_argument("--scheme", default="BPSK-uncoded,BPSK-turbo",
                   help="comma list, e.g. BPSK-uncoded,BPSK-turbo,QPSK,16QAM+3dB")
    q.add_argument("--ebn0", default="-5:20:0.1", help="start:stop:step in dB")
    q.add_argument("--bits", type=int, default=1500)
    q.add_argument("--target", type=float, default=1e-3)
    q.add_argument("--spreading-factor", type=float, default=240.0)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_sweep)

    p = sub.add_parser("topo", help="topology tools")
    tp = p.add_subparsers(dest="what", required=True)
    q = tp.add_parser("metrics", help="hop/delay metrics of a scenario's ISL graph")
    q.add_argument("scenario")
    q.add_argument("--epoch", type=float, default=0.0)
    q.add_argument("--shortcut-p", type=float, default=0.0)
    q.add_argument("--seed", type=int, default=1)
    q.add_argument("--with-terminals", action="store_true")
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_topo)

    p = sub.add_parser("mptcp", help="MPTCP tools")
    mp = p.add_subparsers(dest="what", required=True)
    q = mp.add_parser("solve", help="delay-optimal split for one instance file")
    q.add_argument("instance")
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_mptcp)

    p = sub.add_parser("train", help="train a learning deployment on the allocation game")
    p.add_argument("--structure", required=True, choices=STRUCTURES)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--sync-period", type=int, default=10)
    p.add_argument("--hierarchy", default=None, help='JSON, e.g. {"e0": ["e1"]}')
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except ScenarioError as exc:
        for e in exc.errors:
            print(e, file=sys.stderr)
        return EXIT_INVALID
    except (InputError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
