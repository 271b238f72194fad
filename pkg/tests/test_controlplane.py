import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pleonet.controlplane import (
    STRUCTURES,
    AllocationEnv,
    ConfigError,
    DeploymentStructure,
    Engine,
    LearnerState,
    SpaceMismatch,
    Unschedulable,
    assign_workload,
    decompose_joint_action,
    env_step,
    epsilon_schedule,
    federated_aggregate,
    make_engines,
    makespan_ratio,
    q_update,
    run_deployment,
    transfer_model,
)


# ---------------------------------------------------------------- environment

def test_env_no_collision():
    env = AllocationEnv(2, 2)
    rewards, obs = env_step(env, [0, 1])
    assert rewards == [1.0, 1.0]
    assert obs == [(0, 0), (1, 0)]


def test_env_collision():
    env = AllocationEnv(2, 2, collision_penalty=0.7)
    rewards, obs = env_step(env, [0, 0])
    assert rewards == [-0.7, -0.7]
    assert obs == [(0, 1), (0, 1)]


def test_env_dimension_checks():
    env = AllocationEnv(2, 2)
    with pytest.raises(ConfigError):
        env_step(env, [0])
    with pytest.raises(ConfigError):
        env_step(env, [0, 2])


def test_env_random_collision_rate():
    env = AllocationEnv(3, 3)
    rng = np.random.default_rng(0)
    n = 100_000
    hits = 0
    for a in rng.integers(0, 3, size=(n, 3)):
        rewards, _ = env_step(env, a)
        hits += rewards[0] < 0
    # combinatorial oracle: agent 0 collides unless both others avoid its channel
    assert hits / n == pytest.approx(1 - (2 / 3) ** 2, abs=0.01)


def test_random_baseline_closed_form_matches_enumeration():
    for n, c in [(2, 2), (3, 3), (2, 4), (4, 2)]:
        env = AllocationEnv(n, c)
        exact = np.mean([np.mean(env_step(env, a)[0])
                         for a in itertools.product(range(c), repeat=n)])
        assert env.random_policy_reward() == pytest.approx(exact)
        best = max(np.mean(env_step(env, a)[0]) for a in itertools.product(range(c), repeat=n))
        assert env.max_reward() == pytest.approx(best)


# ---------------------------------------------------------------- q-learning

def test_q_update_zero_rate():
    ls = LearnerState(2, alpha=0.0)
    ls.q_table[("s", 0)] = 0.3
    q_update(ls, "s", 0, 5.0, "t")
    assert ls.q_table == {("s", 0): 0.3}


def test_q_update_one_step():
    ls = LearnerState(2, alpha=0.5, gamma=0.9)
    q_update(ls, "s", 1, 1.0, "t")
    assert ls.q("s", 1) == 0.5
    assert list(ls.experience) == [("s", 1, 1.0, "t")]


def test_q_update_fixed_point():
    ls = LearnerState(2, alpha=0.5, gamma=0.0)
    for _ in range(50):
        q_update(ls, "s", 0, 1.0, "s")
    assert ls.q("s", 0) == pytest.approx(1.0, abs=1e-6)


@given(q0=st.floats(-100, 100), r=st.floats(-10, 10), alpha=st.floats(0.01, 1.0),
       gamma=st.floats(0, 0.99), nxt=st.floats(-100, 100))
def test_q_update_contraction(q0, r, alpha, gamma, nxt):
    ls = LearnerState(2, alpha=alpha, gamma=gamma)
    ls.q_table[("s", 0)] = q0
    ls.q_table[("t", 0)] = nxt
    target = r + gamma * max(nxt, 0.0)
    q_update(ls, "s", 0, r, "t")
    assert abs(ls.q("s", 0) - target) == pytest.approx((1 - alpha) * abs(q0 - target), rel=1e-9, abs=1e-9)


def test_experience_fifo():
    ls = LearnerState(2, capacity=3)
    for i in range(5):
        q_update(ls, i, 0, 0.0, i + 1)
    assert [e[0] for e in ls.experience] == [2, 3, 4]


def test_greedy_tie_break_lowest_action():
    ls = LearnerState(3)
    ls.q_table[("s", 1)] = 2.0
    ls.q_table[("s", 2)] = 2.0
    assert ls.greedy("s") == 1
    assert LearnerState(4).greedy("unseen") == 0


@given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 2)), st.floats(-50, 50), min_size=1),
       st.floats(0.01, 100))
def test_greedy_scale_equivariance(table, k):
    a, b = LearnerState(3), LearnerState(3)
    a.q_table = dict(table)
    b.q_table = {key: v * k for key, v in table.items()}
    for s in range(4):
        assert a.greedy(s) == b.greedy(s)


# ---------------------------------------------------------------- federated

def test_federated_identity_and_examples():
    t = {("s", 0): 0.25, ("s", 1): -3.0}
    assert federated_aggregate([(t, 1.0), (dict(t), 1.0)]) == t
    assert federated_aggregate([({"k": 0.0}, 1.0), ({"k": 1.0}, 1.0)]) == {"k": 0.5}
    out = federated_aggregate([({"k": 3.0}, 1.0), ({"k": 0.0}, 2.0), ({"k": 1.0}, 3.0)])
    assert out["k"] == 1.0


def test_federated_missing_key_is_zero():
    out = federated_aggregate([({"a": 2.0}, 1.0), ({"b": 4.0}, 1.0)])
    assert out == {"a": 1.0, "b": 2.0}


@given(st.dictionaries(st.integers(0, 20), st.floats(-1e6, 1e6), min_size=1),
       st.dictionaries(st.integers(0, 20), st.floats(-1e6, 1e6)),
       st.floats(1e-6, 1e6))
def test_federated_single_weight_is_bit_exact(t1, t2, w):
    assert federated_aggregate([(t1, w), (t2, 0.0), (t2, 0.0)]) == t1


def test_federated_errors():
    with pytest.raises(ConfigError):
        federated_aggregate([])
    with pytest.raises(ConfigError):
        federated_aggregate([({}, 0.0)])
    with pytest.raises(ConfigError):
        federated_aggregate([({}, -1.0), ({}, 2.0)])


# ---------------------------------------------------------------- deployments

def test_epsilon_schedule():
    assert epsilon_schedule(0, 100) == 1.0
    assert epsilon_schedule(50, 100) == pytest.approx(0.05)
    assert epsilon_schedule(99, 100) == pytest.approx(0.05)
    assert epsilon_schedule(25, 100) == pytest.approx(0.525)


def test_single_agent_structures_identical():
    traces = [run_deployment(k, None, AllocationEnv(1, 3, rng_seed=5), 60, 10) for k in STRUCTURES]
    ref = [(e.mean_reward, e.collisions) for e in traces[0].episodes]
    for t in traces[1:]:
        assert [(e.mean_reward, e.collisions) for e in t.episodes] == ref


@pytest.mark.parametrize("kind", STRUCTURES)
def test_determinism(kind):
    hier = {"e0": ["e1"]} if kind == "hierarchical" else {}
    a = run_deployment(DeploymentStructure(kind, hier, 5), None, AllocationEnv(2, 3, rng_seed=2), 80, 10)
    b = run_deployment(DeploymentStructure(kind, hier, 5), None, AllocationEnv(2, 3, rng_seed=2), 80, 10)
    assert a.to_csv() == b.to_csv()
    assert a.messages == b.messages


def test_hierarchical_followers_see_leader_action():
    st_ = DeploymentStructure("hierarchical", {"e0": ["e1", "e2"], "e1": ["e3"]})
    engines = make_engines(4, 3)
    engines[0].predictor_enabled = True
    tr = run_deployment(st_, engines, AllocationEnv(4, 3, rng_seed=1), 20, 8, log_steps=True)
    assert len(tr.step_log) == 160
    for rec in tr.step_log:
        s, a = rec["states"], rec["actions"]
        assert s["e1"][1] == (a["e0"],)
        assert s["e2"][1] == (a["e0"],)
        assert s["e3"][1] == (a["e1"],)
        assert len(s["e0"][2]) == 2  # predicted follower actions


def test_hierarchy_cycle_rejected():
    with pytest.raises(ConfigError):
        DeploymentStructure("hierarchical", {"e0": ["e1"], "e1": ["e0"]})
    with pytest.raises(ConfigError):
        DeploymentStructure("hierarchical", {"a": ["b"], "b": ["c"], "c": ["a"]})


def test_engine_count_mismatch():
    with pytest.raises(ConfigError):
        run_deployment("individual", make_engines(3, 2), AllocationEnv(2, 2), 1, 1)
    with pytest.raises(ConfigError):
        run_deployment("global", make_engines(2, 4), AllocationEnv(2, 2), 1, 1)


def test_control_cycle_holds_action():
    engines = make_engines(2, 2)
    engines[1].control_cycle_s = 3.0
    tr = run_deployment("individual", engines, AllocationEnv(2, 2, rng_seed=3), 3, 9, log_steps=True)
    for rec in tr.step_log:
        assert ("e1" in rec["states"]) == (rec["t"] % 3 == 0)


def test_federated_broadcast_equalises_tables():
    tr = run_deployment(DeploymentStructure("federated", sync_period_cycles=4), None,
                        AllocationEnv(2, 2, rng_seed=9), 8, 10)
    assert tr.learners[0].q_table == tr.learners[1].q_table
    assert tr.messages == 2 * 2 * 2


def test_joint_action_decomposition():
    seen = {tuple(decompose_joint_action(a, 3, 2)) for a in range(8)}
    assert seen == set(itertools.product(range(2), repeat=3))


def test_trace_csv_header():
    tr = run_deployment("individual", None, AllocationEnv(2, 2), 2, 2)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "episode,structure,seed,mean_reward,collisions"
    assert len(lines) == 3


def test_individual_beats_random_policy():
    env = AllocationEnv(2, 2, rng_seed=4)
    tr = run_deployment("individual", None, env, 2000, 20)
    tail = tr.mean_rewards()[-100:]
    se = tail.std(ddof=1) / math.sqrt(len(tail))
    assert tail.mean() - 1.645 * se > env.random_policy_reward()


# ---------------------------------------------------------------- workload

def _engines(*caps):
    return [Engine(f"g{i}", compute_capacity=c) for i, c in enumerate(caps)]


def test_workload_one_engine():
    out = assign_workload(_engines(5), [("a", 1), ("b", 2), ("c", 3)])
    assert set(out.values()) == {"g0"}


def test_workload_symmetric():
    out = assign_workload(_engines(5, 5), [("a", 4), ("b", 4)])
    assert sorted(out.values()) == ["g0", "g1"]
    assert out["a"] == "g0"


def _brute_force_makespan(engines, tasks):
    best = math.inf
    for combo in itertools.product(engines, repeat=len(tasks)):
        load = {e.engine_id: 0.0 for e in engines}
        for (tid, c), e in zip(tasks, combo):
            load[e.engine_id] += c
        best = min(best, max(load[e.engine_id] / e.compute_capacity for e in engines))
    return best


def test_workload_lpt_bound():
    eng = _engines(10, 2)
    tasks = [("t6", 6), ("t5", 5), ("t1", 1)]
    out = assign_workload(eng, tasks)
    assert makespan_ratio(eng, out, tasks) <= 4 / 3 * _brute_force_makespan(eng, tasks)


@settings(max_examples=40, deadline=None)
@given(caps=st.lists(st.integers(1, 12), min_size=1, max_size=3),
       costs=st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_workload_random_small_instances(caps, costs):
    eng = _engines(*caps)
    tasks = [(f"t{i}", c) for i, c in enumerate(costs)]
    try:
        out = assign_workload(eng, tasks)
    except Unschedulable:
        assert any(c > max(caps) for c in costs)
        return
    assert set(out) == {t for t, _ in tasks}


def test_workload_unschedulable():
    with pytest.raises(Unschedulable):
        assign_workload(_engines(2, 3), [("big", 4)])


# ---------------------------------------------------------------- transfer

def _trained(seed=0):
    tr = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=seed), 200, 10)
    return Engine("old", learner=tr.learners[0])


def test_transfer_full_same_policy():
    old = _trained()
    new = Engine("new", learner=LearnerState(2))
    ls = transfer_model(old, new, "full")
    assert ls.q_table == old.learner.q_table
    assert len(ls.experience) == 0
    for (s, _a) in old.learner.q_table:
        assert ls.greedy(s) == old.learner.greedy(s)


def test_transfer_decay_zero_cold():
    old = _trained()
    ls = transfer_model(old, Engine("new"), "decay", 0.0)
    assert all(v == 0.0 for v in ls.q_table.values())


def test_transfer_space_mismatch():
    with pytest.raises(SpaceMismatch):
        transfer_model(_trained(), Engine("x", learner=LearnerState(5)))


def test_warm_start_converges_faster():
    warm, cold = [], []
    for seed in range(20):
        pre = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=seed), 400, 20)
        succ = make_engines(2, 2)
        for e, l in zip(succ, pre.learners):
            transfer_model(Engine("pred", learner=l), e, "full")
        env_seed = 1000 + seed
        w = run_deployment("individual", succ, AllocationEnv(2, 2, rng_seed=env_seed), 400, 20,
                           track_convergence=True)
        c = run_deployment("individual", None, AllocationEnv(2, 2, rng_seed=env_seed), 400, 20,
                           track_convergence=True)
        warm.append(400 if w.converged_episode is None else w.converged_episode)
        cold.append(400 if c.converged_episode is None else c.converged_episode)
    assert np.median(warm) < np.median(cold)
