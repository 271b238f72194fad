"""Learning control plane and SBACN federation.

Trains the four deployment structures on a small channel-allocation game,
shows warm-start model transfer, and then admits a handful of SLA requests
through an SBACN center federating two operators.
"""

import numpy as np

from pleonet.controlplane import STRUCTURES, AllocationEnv, DeploymentStructure, Engine, make_engines, \
    run_deployment, transfer_model
from pleonet.sbacn import SbacnCenter, SbacnTerminal, SlaRequest, stitch_path

env = AllocationEnv(3, 3)
print(f"random policy {env.random_policy_reward():.3f}, optimum {env.max_reward():.3f}")
for kind in STRUCTURES:
    hier = {"e0": ["e1", "e2"]} if kind == "hierarchical" else {}
    tails, msgs = [], 0
    for seed in range(5):
        tr = run_deployment(DeploymentStructure(kind, hier), None, AllocationEnv(3, 3, rng_seed=seed), 600, 20)
        tails.append(tr.mean_rewards()[-100:].mean())
        msgs += tr.messages
    print(f"{kind:>12}: last-100 reward {np.mean(tails):.3f}, messages/run {msgs // 5}")

pre = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=0), 400, 20)
warm = make_engines(2, 2)
for e, learner in zip(warm, pre.learners):
    transfer_model(Engine("old", learner=learner), e)
w = run_deployment("individual", warm, AllocationEnv(2, 2, rng_seed=7), 200, 20, track_convergence=True)
c = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=7), 200, 20, track_convergence=True)
print(f"converged at episode: warm {w.converged_episode}, cold {c.converged_episode}")

center = SbacnCenter()
for tid, op, cap, lat in [("a-eu", "A", 4e8, 0.03), ("a-us", "A", 4e8, 0.03),
                          ("b-us", "B", 2e8, 0.045), ("b-asia", "B", 2e8, 0.045)]:
    center.register_update(SbacnTerminal(tid, op, (f"{op}-gw-{tid[2:]}",), cap, lat))
links = [("a-us", "b-us", 0.001)]  # one inter-operator ground link
for rid, src, dst, bps, lat in [("r1", "a-eu", "a-us", 3e8, 0.05), ("r2", "a-eu", "a-us", 2e8, 0.05),
                                ("r3", "a-eu", "b-asia", 1e8, 0.1), ("r4", "b-us", "b-asia", 5e7, 0.01)]:
    g = center.admit(SlaRequest(rid, src, dst, bps, lat), links)
    print(f"{rid}: {g.state:8} {g.reason or '':9} path={'/'.join(g.stitched_path)}")
print("residuals:", {k: f"{v / 1e6:.0f} Mbps" for k, v in center.residuals().items()})

# r3 crosses from A to B; the two satellite segments meet over the ground link
segments = {"A": (["A-gw-eu", "a17", "A-gw-us"], 0.021), "B": (["B-gw-us", "b4", "B-gw-asia"], 0.038)}
route = stitch_path(center.grants["r3"], segments, ground_links=[("A-gw-us", "B-gw-us")])
print(f"stitched r3: {' -> '.join(route.nodes)}, {1e3 * route.latency_s:.1f} ms over {route.seams} seam")
