"""
Control plane
=============

ML-SDN control engines coordinating on a channel-allocation game. Engines
carry tabular Q-learners and are wired into one of four deployment
structures:

* ``individual``   -- independent learners, other engines are environment.
* ``federated``    -- individual learners whose tables are averaged and
  broadcast every ``sync_period_cycles`` episodes.
* ``hierarchical`` -- leaders act first; followers see the leaders' actions
  of the same step as part of their state.
* ``global``       -- one learner over the joint observation/action space,
  its joint action split back into per-engine actions.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .simkit.rng import rng_stream

STRUCTURES = ("individual", "federated", "hierarchical", "global")


class ConfigError(ValueError):
    pass


class Unschedulable(Exception):
    pass


class SpaceMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# Environment
# --------------------------------------------------------------------------

@dataclass
class AllocationEnv:
    """Engines pick channels; a channel chosen by exactly one engine earns
    ``throughput_unit``, a shared channel costs everyone on it
    ``collision_penalty``."""

    num_agents: int = 2
    num_channels: int = 2
    throughput_unit: float = 1.0
    collision_penalty: float = 1.0
    rng_seed: int = 1
    step_s: float = 1.0

    def __post_init__(self):
        if self.num_agents < 1 or self.num_channels < 1:
            raise ConfigError("num_agents and num_channels must be >= 1")
        self.reset()

    def reset(self) -> list[tuple]:
        self.last_obs = [(-1, 0)] * self.num_agents
        return list(self.last_obs)

    def random_policy_reward(self) -> float:
        """Expected per-engine reward when every engine picks uniformly."""
        p_free = ((self.num_channels - 1) / self.num_channels) ** (self.num_agents - 1)
        return p_free * self.throughput_unit - (1 - p_free) * self.collision_penalty

    def max_reward(self) -> float:
        """Best achievable mean per-engine reward."""
        N, C = self.num_agents, self.num_channels
        if N <= C:
            return self.throughput_unit
        # at most C - 1 engines can be alone; the rest share the last channel
        return ((C - 1) * self.throughput_unit - (N - C + 1) * self.collision_penalty) / N


def _counts(joint_action, num_channels: int) -> list[int]:
    counts = [0] * num_channels
    for a in joint_action:
        counts[a] += 1
    return counts


def _rewards(joint_action, env: AllocationEnv, counts=None) -> list[float]:
    counts = counts or _counts(joint_action, env.num_channels)
    return [env.throughput_unit if counts[a] == 1 else -env.collision_penalty for a in joint_action]


def env_step(env: AllocationEnv, joint_action: Sequence[int]) -> tuple[list[float], list[tuple]]:
    """Apply one joint action; observation i is (own action, other engines on
    the same channel)."""
    if len(joint_action) != env.num_agents:
        raise ConfigError(f"expected {env.num_agents} actions, got {len(joint_action)}")
    if any(not 0 <= a < env.num_channels for a in joint_action):
        raise ConfigError("action out of range")
    joint_action = [int(a) for a in joint_action]
    counts = _counts(joint_action, env.num_channels)
    rewards = _rewards(joint_action, env, counts)
    obs = [(a, counts[a] - 1) for a in joint_action]
    env.last_obs = obs
    return rewards, obs


# --------------------------------------------------------------------------
# Learners
# --------------------------------------------------------------------------

@dataclass
class LearnerState:
    n_actions: int
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 1.0
    capacity: int = 10_000
    q_table: dict = field(default_factory=dict)
    experience: deque = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1 and self.alpha != 0:
            raise ConfigError("alpha must be in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must be in [0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("epsilon must be in [0, 1]")
        if self.experience is None:
            self.experience = deque(maxlen=self.capacity)

    def q(self, s, a) -> float:
        return self.q_table.get((s, a), 0.0)

    def values(self, s) -> list[float]:
        return [self.q_table.get((s, a), 0.0) for a in range(self.n_actions)]

    def greedy(self, s) -> int:
        """Argmax action; lowest action id on ties."""
        table = self.q_table
        best, best_v = 0, table.get((s, 0), 0.0)
        for a in range(1, self.n_actions):
            v = table.get((s, a), 0.0)
            if v > best_v:
                best, best_v = a, v
        return best

    def copy(self) -> "LearnerState":
        out = LearnerState(self.n_actions, self.alpha, self.gamma, self.epsilon, self.capacity,
                           dict(self.q_table))
        out.experience.extend(self.experience)
        return out


def q_update(ls: LearnerState, s, a: int, r: float, s_next) -> LearnerState:
    """One Q-learning step toward r + gamma * max_b Q(s', b), in place."""
    target = r + ls.gamma * max(ls.values(s_next))
    old = ls.q(s, a)
    ls.q_table[(s, a)] = old + ls.alpha * (target - old)
    ls.experience.append((s, a, r, s_next))
    return ls


def federated_aggregate(locals_: Sequence[tuple[dict, float]]) -> dict:
    """Weighted per-key mean of Q-tables; a key missing from a table counts as 0.

    Weights are normalised before use, so a single non-zero weight returns
    that table bit-for-bit.
    """
    if not locals_:
        raise ConfigError("nothing to aggregate")
    weights = [float(w) for _, w in locals_]
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ConfigError("weights must be non-negative with a positive sum")
    total = sum(weights)
    norm = [w / total for w in weights]
    keys: dict = {}
    for (table, _), w in zip(locals_, norm):
        if w > 0:
            for k in table:
                keys.setdefault(k, None)
    out = {}
    for k in keys:
        acc = 0.0
        for (table, _), w in zip(locals_, norm):
            acc += w * table.get(k, 0.0)
        out[k] = acc
    return out


# --------------------------------------------------------------------------
# Engines and deployments
# --------------------------------------------------------------------------

@dataclass
class Engine:
    engine_id: str
    tier: str = "space"
    control_cycle_s: float = 1.0
    compute_capacity: float = 1.0
    learner: LearnerState | None = None
    predictor_enabled: bool = False

    def __post_init__(self):
        if self.tier not in ("ground", "space"):
            raise ConfigError(f"unknown tier {self.tier!r}")
        if self.control_cycle_s <= 0 or self.compute_capacity <= 0:
            raise ConfigError("control_cycle_s and compute_capacity must be > 0")


@dataclass
class DeploymentStructure:
    kind: str = "individual"
    hierarchy: dict = field(default_factory=dict)  # leader id -> follower ids
    sync_period_cycles: int = 10

    def __post_init__(self):
        if self.kind not in STRUCTURES:
            raise ConfigError(f"unknown structure {self.kind!r}")
        if self.sync_period_cycles < 1:
            raise ConfigError("sync_period_cycles must be >= 1")
        if self.hierarchy:
            self.leaders_of()  # raises on cycles

    def leaders_of(self) -> dict:
        """follower -> sorted leaders; raises ConfigError on a cycle."""
        parents: dict = {}
        for leader, followers in self.hierarchy.items():
            for f in followers:
                parents.setdefault(f, []).append(leader)
        state: dict = {}

        def visit(n, stack):
            if state.get(n) == 1:
                raise ConfigError(f"hierarchy cycle through {n!r}")
            if state.get(n) == 2:
                return
            state[n] = 1
            for p in parents.get(n, []):
                visit(p, stack)
            state[n] = 2

        for n in set(parents) | set(self.hierarchy):
            visit(n, [])
        return {f: sorted(ls) for f, ls in parents.items()}

    def acting_order(self, engine_ids: Sequence[str]) -> list[str]:
        """Leaders before followers, ties by position in ``engine_ids``."""
        parents = self.leaders_of()
        pos = {e: i for i, e in enumerate(engine_ids)}
        depth: dict = {}

        def d(n):
            if n not in depth:
                depth[n] = 0 if n not in parents else 1 + max(d(p) for p in parents[n])
            return depth[n]

        return sorted(engine_ids, key=lambda e: (d(e), pos[e]))


@dataclass
class EpisodeRecord:
    episode: int
    mean_reward: float
    collisions: int
    epsilon: float


@dataclass
class TrainingTrace:
    structure: str
    seed: int
    episodes: list[EpisodeRecord] = field(default_factory=list)
    messages: int = 0
    converged_episode: int | None = None
    final_greedy_reward: float = math.nan
    step_log: list = field(default_factory=list)
    learners: list = field(default_factory=list)

    def mean_rewards(self) -> np.ndarray:
        return np.array([e.mean_reward for e in self.episodes])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "structure", "seed", "mean_reward", "collisions"])
        for e in self.episodes:
            w.writerow([e.episode, self.structure, self.seed, repr(e.mean_reward), e.collisions])
        return buf.getvalue()


def epsilon_schedule(episode: int, episodes: int, start: float = 1.0, end: float = 0.05) -> float:
    """Linear anneal over the first half of training, then flat."""
    half = max(1, episodes // 2)
    return start + (end - start) * min(1.0, episode / half)


def make_engines(n: int, n_actions: int, **learner_kw) -> list[Engine]:
    return [Engine(f"e{i}", learner=LearnerState(n_actions, **learner_kw)) for i in range(n)]


class DeploymentRunner:
    """Episode-at-a-time trainer for one deployment; ``run_deployment`` drives
    it to completion, the simulator calls ``run_episode`` per control cycle."""

    def __init__(self, structure: DeploymentStructure, engines: Sequence[Engine], env: AllocationEnv,
                 episodes: int, steps: int, seed: int | None = None, log_steps: bool = False,
                 track_convergence: bool = False, epsilon_start: float = 1.0, epsilon_end: float = 0.05):
        self.structure = structure
        self.engines = list(engines)
        self.env = env
        self.episodes = episodes
        self.steps = steps
        self.seed = env.rng_seed if seed is None else seed
        self.log_steps = log_steps
        self.track_convergence = track_convergence
        self.eps = (epsilon_start, epsilon_end)
        self.rng = rng_stream(self.seed, "deployment/explore")
        self.episode = 0
        self.trace = TrainingTrace(structure.kind, self.seed)
        N, C = env.num_agents, env.num_channels
        ids = [e.engine_id for e in self.engines]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate engine ids")
        if structure.kind == "global":
            if len(self.engines) != 1:
                raise ConfigError("global structure takes exactly one engine (the joint learner)")
            if self.engines[0].learner is None:
                self.engines[0].learner = LearnerState(C ** N)
            if self.engines[0].learner.n_actions != C ** N:
                raise ConfigError("global learner must span the joint action space")
        else:
            if len(self.engines) != N:
                raise ConfigError(f"need {N} engines, got {len(self.engines)}")
            for e in self.engines:
                if e.learner is None:
                    e.learner = LearnerState(C)
                if e.learner.n_actions != C:
                    raise ConfigError("learner action space does not match num_channels")
        known = set(ids)
        for leader, followers in structure.hierarchy.items():
            if leader not in known or any(f not in known for f in followers):
                raise ConfigError("hierarchy references unknown engines")
        self.parents = structure.leaders_of() if structure.kind == "hierarchical" else {}
        self.followers = {l: sorted(fs) for l, fs in structure.hierarchy.items()} \
            if structure.kind == "hierarchical" else {}
        self.order = structure.acting_order(ids) if structure.kind == "hierarchical" else ids
        self.index = {e: i for i, e in enumerate(ids)}
        self.cycle = [max(1, int(round(e.control_cycle_s / env.step_s))) for e in self.engines]
        # empirical action frequencies, one row per engine
        self.freq = np.zeros((len(self.engines), C), dtype=np.int64)

    # ---- state construction -------------------------------------------------

    def _predicted(self, eid: str) -> tuple:
        out = []
        for f in self.followers.get(eid, []):
            row = self.freq[self.index[f]]
            out.append(int(np.argmax(row)) if row.any() else -1)
        return tuple(out)

    def _state(self, eid: str, obs: list, actions: dict):
        i = self.index[eid]
        s = obs[i]
        if self.structure.kind != "hierarchical":
            return s
        lead = tuple(actions[l] for l in self.parents.get(eid, []))
        pred = self._predicted(eid) if self.engines[i].predictor_enabled and eid in self.followers else ()
        if not lead and not pred:
            return s
        return (s, lead, pred)

    def _choose(self, learner: LearnerState, s, eps: float) -> int:
        if self.rng.random() < eps:
            return int(self.rng.integers(learner.n_actions))
        return learner.greedy(s)

    # ---- one episode --------------------------------------------------------

    def run_episode(self) -> EpisodeRecord:
        env, kind = self.env, self.structure.kind
        eps = epsilon_schedule(self.episode, self.episodes, *self.eps)
        for e in self.engines:
            e.learner.epsilon = eps
        obs = env.reset()
        last_actions = [0] * env.num_agents
        total, collisions = 0.0, 0
        for t in range(self.steps):
            if kind == "global":
                rewards, obs = self._global_step(obs, eps, t)
            else:
                rewards, obs, last_actions = self._decentral_step(obs, eps, t, last_actions)
            total += sum(rewards)
            collisions += sum(1 for r in rewards if r < 0)
        if kind == "federated" and (self.episode + 1) % self.structure.sync_period_cycles == 0:
            merged = federated_aggregate([(e.learner.q_table, 1.0) for e in self.engines])
            for e in self.engines:
                e.learner.q_table = dict(merged)
            self.trace.messages += 2 * len(self.engines)
        rec = EpisodeRecord(self.episode, total / (self.steps * env.num_agents), collisions, eps)
        self.trace.episodes.append(rec)
        if self.track_convergence and self.trace.converged_episode is None:
            if self.greedy_reward() >= env.max_reward() - 1e-12:
                self.trace.converged_episode = self.episode
        self.episode += 1
        return rec

    def _decentral_step(self, obs, eps, t, last_actions):
        actions: dict = {}
        states: dict = {}
        acted = []
        for eid in self.order:
            i = self.index[eid]
            if t % self.cycle[i] == 0:
                s = self._state(eid, obs, actions)
                states[eid] = s
                actions[eid] = self._choose(self.engines[i].learner, s, eps)
                acted.append(eid)
            else:
                actions[eid] = last_actions[i]
            if self.structure.kind == "hierarchical" and eid in self.parents:
                self.trace.messages += len(self.parents[eid])
        joint = [actions[e.engine_id] for e in self.engines]
        rewards, nobs = env_step(self.env, joint)
        for i, a in enumerate(joint):
            self.freq[i, a] += 1
        if self.log_steps:
            self.trace.step_log.append({"episode": self.episode, "t": t,
                                        "states": dict(states), "actions": dict(actions)})
        next_actions: dict = {}
        for eid in self.order:
            i = self.index[eid]
            if eid not in states:
                continue
            # leaders' next-step actions are unknown yet; use the greedy ones
            s_next = self._state(eid, nobs, next_actions)
            q_update(self.engines[i].learner, states[eid], actions[eid], rewards[i], s_next)
            next_actions[eid] = self.engines[i].learner.greedy(s_next)
        return rewards, nobs, joint

    def _global_step(self, obs, eps, t):
        env = self.env
        learner = self.engines[0].learner
        s = tuple(obs) if env.num_agents > 1 else obs[0]
        a = self._choose(learner, s, eps)
        joint = decompose_joint_action(a, env.num_agents, env.num_channels)
        rewards, nobs = env_step(env, joint)
        s_next = tuple(nobs) if env.num_agents > 1 else nobs[0]
        q_update(learner, s, a, sum(rewards) / len(rewards), s_next)
        self.trace.messages += 2 * env.num_agents
        if self.log_steps:
            self.trace.step_log.append({"episode": self.episode, "t": t, "states": {"joint": s},
                                        "actions": {f"e{i}": x for i, x in enumerate(joint)}})
        return rewards, nobs

    # ---- evaluation ---------------------------------------------------------

    def greedy_actions(self, obs) -> list[int]:
        env = self.env
        if self.structure.kind == "global":
            s = tuple(obs) if env.num_agents > 1 else obs[0]
            return decompose_joint_action(self.engines[0].learner.greedy(s), env.num_agents, env.num_channels)
        actions: dict = {}
        for eid in self.order:
            i = self.index[eid]
            actions[eid] = self.engines[i].learner.greedy(self._state(eid, obs, actions))
        return [actions[e.engine_id] for e in self.engines]

    def greedy_reward(self, steps: int | None = None) -> float:
        """Mean per-engine reward of a noiseless, non-learning rollout."""
        env = self.env
        saved = env.last_obs
        obs = env.reset()
        total = 0.0
        n = steps or self.steps
        for _ in range(n):
            rewards, obs = env_step(env, self.greedy_actions(obs))
            total += sum(rewards)
        env.last_obs = saved
        return total / (n * env.num_agents)

    def finish(self) -> TrainingTrace:
        self.trace.learners = [e.learner for e in self.engines]
        self.trace.final_greedy_reward = self.greedy_reward()
        return self.trace


def decompose_joint_action(a: int, num_agents: int, num_channels: int) -> list[int]:
    """Per-engine components of a joint action index (engine 0 least significant)."""
    return [(a // num_channels ** i) % num_channels for i in range(num_agents)]


def run_deployment(structure: DeploymentStructure | str, engines: Sequence[Engine] | None,
                   env: AllocationEnv, episodes: int, steps: int, seed: int | None = None,
                   **kw) -> TrainingTrace:
    """Train ``engines`` on ``env`` under ``structure``.

    ``engines`` may be None, in which case fresh engines are created (one
    joint learner for ``global``). The trace is a pure function of the
    arguments.
    """
    if isinstance(structure, str):
        structure = DeploymentStructure(structure)
    if engines is None:
        n = 1 if structure.kind == "global" else env.num_agents
        width = env.num_channels ** env.num_agents if structure.kind == "global" else env.num_channels
        engines = make_engines(n, width)
    runner = DeploymentRunner(structure, engines, env, episodes, steps, seed, **kw)
    for _ in range(episodes):
        runner.run_episode()
    return runner.finish()


# --------------------------------------------------------------------------
# Workload placement and model transfer
# --------------------------------------------------------------------------

def assign_workload(engines: Sequence[Engine], tasks: Sequence[tuple[Hashable, float]]) -> dict:
    """Longest-processing-time-first placement of tasks onto engines.

    Each task goes to the engine whose load/capacity ratio after taking it is
    smallest, among engines whose capacity covers the task; ties by
    engine_id. Returns ``{task_id: engine_id}``.
    """
    if not engines or sum(e.compute_capacity for e in engines) <= 0:
        raise ConfigError("no compute capacity")
    load = {e.engine_id: 0.0 for e in engines}
    out = {}
    for tid, cost in sorted(tasks, key=lambda t: (-t[1], str(t[0]))):
        fits = [e for e in engines if e.compute_capacity >= cost]
        if not fits:
            raise Unschedulable(f"task {tid!r} (cost {cost}) exceeds every engine capacity")
        best = min(fits, key=lambda e: ((load[e.engine_id] + cost) / e.compute_capacity, e.engine_id))
        load[best.engine_id] += cost
        out[tid] = best.engine_id
    return out


def makespan_ratio(engines: Sequence[Engine], assignment: dict, tasks) -> float:
    cost = dict(tasks)
    load = {e.engine_id: 0.0 for e in engines}
    for tid, eid in assignment.items():
        load[eid] += cost[tid]
    return max(load[e.engine_id] / e.compute_capacity for e in engines)


def transfer_model(from_engine: Engine, to_engine: Engine, mode: str = "full",
                   decay: float = 1.0) -> LearnerState:
    """Hand a predecessor's learner to its successor.

    ``full`` copies the table; ``decay`` scales every value by ``decay`` in
    [0, 1]. The experience buffer is not carried over.
    """
    src = from_engine.learner
    if src is None:
        raise ConfigError("source engine has no learner")
    dst = to_engine.learner
    if dst is not None and dst.n_actions != src.n_actions:
        raise SpaceMismatch(f"action spaces differ: {src.n_actions} vs {dst.n_actions}")
    if mode == "full":
        factor = 1.0
    elif mode == "decay":
        if not 0.0 <= decay <= 1.0:
            raise ConfigError("decay must be in [0, 1]")
        factor = decay
    else:
        raise ConfigError(f"unknown transfer mode {mode!r}")
    table = dict(src.q_table) if factor == 1.0 else {k: v * factor for k, v in src.q_table.items()}
    base = dst or src
    new = LearnerState(src.n_actions, base.alpha, base.gamma, base.epsilon, base.capacity, table)
    to_engine.learner = new
    return new
