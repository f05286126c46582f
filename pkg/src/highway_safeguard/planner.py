"""Policy-adaptive tree-search safeguard.

The safeguard estimates, by Monte-Carlo tree search over a
belief-conditioned generative model, how well the current driving
policy will do over the search horizon, and overrides it only when some
other action beats the policy's value by more than the adapter margin.
Rollouts follow the driving policy itself: the first pass through any
node executes the policy action, so its value is always estimated
before anything else is explored.

A minimum-gap check gates the whole search: while the front gap exceeds
the worst-case braking distance the policy action passes through
untouched and no tree is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .beliefs import BeliefTracker, ParticleSet
from .policies import commit_lateral, enumerate_candidates
from .safeguards import RssParams, rss_distance
from .traffic import SpawnConfig, advance_traffic, nominal_params
from .world import (
    DECISION_DT,
    LATERAL_RATE,
    OBSERVATION_RANGE,
    Action,
    DriverParams,
    EgoState,
    Observation,
    ObservedVehicle,
    RoadConfig,
    SurroundingVehicle,
    VehicleKinematics,
    WorldState,
    bumper_gap,
    observed_leader,
)


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = DECISION_DT
    discount: float = 0.95
    reward_per_step: float = 5.0    # earned for every step driven safely
    adapter_value: float = 1.0      # margin protecting the policy action
    depth: int = 12
    iterations: int = 1200
    exploration: float = 10.0
    min_speed: float = 5.0
    allow_lane_change: bool = True

    def __post_init__(self):
        if not (0.0 < self.discount < 1.0):
            raise ValueError("discount must lie in (0, 1)")
        if self.depth < 1 or self.iterations < 1:
            raise ValueError("depth and iterations must be >= 1")
        if self.reward_per_step <= 0.0 or self.adapter_value <= 0.0:
            raise ValueError("reward and adapter value must be positive")

    def q_upper_bound(self) -> float:
        g = self.discount
        return self.reward_per_step * (1.0 - g ** self.depth) / (1.0 - g)


def step_reward(collided: bool, cfg: PlannerConfig) -> float:
    """Safe driving earns the constant reward; a collision earns nothing
    and ends the episode (collision states are terminal)."""
    return 0.0 if collided else cfg.reward_per_step


# Lane-change decisions of vehicles farther than this from the ego are
# not re-evaluated inside the tree; they re-enter consideration as the
# simulated gap closes.  Covers two decision steps at the speed limit.
MOBIL_WINDOW = 72.0


class SearchNode:
    """Per-action visit counts and incremental value estimates of one
    quantized state.

    Nodes start lazy, holding only the driving action (index 0): the
    first pass through a node always executes it, so the full candidate
    set is materialized on the second visit."""

    __slots__ = ("actions", "visits", "values", "total", "expanded")

    def __init__(self, driving_action):
        self.actions = (driving_action,)
        self.visits = [0]
        self.values = [0.0]
        self.total = 0
        self.expanded = False

    def materialize(self, actions: tuple) -> None:
        """Install the full candidate set, keeping index-0 statistics:
        index 0 is the driving action by construction."""
        n0, q0 = self.visits[0], self.values[0]
        self.actions = actions
        self.visits = [n0] + [0] * (len(actions) - 1)
        self.values = [q0] + [0.0] * (len(actions) - 1)
        self.expanded = True

    def q_table(self) -> dict:
        return {a: (self.visits[i], self.values[i])
                for i, a in enumerate(self.actions)}


def select_action(node: SearchNode, cfg: PlannerConfig) -> int:
    """Upper-confidence selection with the policy-adapter bonus.

    The driving action sits at index 0 and receives the adapter margin.
    Unvisited actions carry an infinite exploration bonus (driving
    action first, then list order); with exploration disabled the bonus
    vanishes entirely and only values plus the adapter margin count.
    """
    c = cfg.exploration
    if c > 0.0:
        if node.visits[0] == 0:
            return 0
        for i in range(1, len(node.actions)):
            if node.visits[i] == 0:
                return i
    log_total = math.log(node.total) if node.total > 0 else 0.0
    best_i = 0
    best_score = -math.inf
    for i in range(len(node.actions)):
        score = node.values[i]
        if c > 0.0 and node.visits[i] > 0:
            score += c * math.sqrt(log_total / node.visits[i])
        if i == 0:
            score += cfg.adapter_value
        if score > best_score:
            best_score = score
            best_i = i
    return best_i


def select_final_action(q_values: dict, driving_action, adapter_value: float):
    """Final pick over root values: the driving action keeps the adapter
    margin, so another action wins only by beating it decisively.
    Adding any constant to all values cannot change the outcome."""
    best = None
    best_score = -math.inf
    for action, q in q_values.items():
        score = q + (adapter_value if action == driving_action else 0.0)
        if score > best_score:
            best_score = score
            best = action
    return best


def _iteration_rng(seed: int, i: int):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(i,)))


class TreeSearch:
    """Generic engine over a generative model.

    The model provides begin_iteration(rng) -> state, candidates(state)
    (driving action first), step(state, action, rng) -> (state, reward,
    terminal) and state_key(state, depth).
    """

    def __init__(self, model, cfg: PlannerConfig):
        self.model = model
        self.cfg = cfg
        self.nodes: dict = {}

    def run(self, seed: int) -> SearchNode:
        root = None
        for i in range(self.cfg.iterations):
            rng = _iteration_rng(seed, i)
            state = self.model.begin_iteration(rng)
            self._simulate(state, self.cfg.depth, rng)
            if root is None:
                root = self.nodes[self.model.state_key(state, self.cfg.depth)]
        return root

    def _simulate(self, state, depth: int, rng) -> float:
        if depth == 0:
            return 0.0
        key = self.model.state_key(state, depth)
        node = self.nodes.get(key)
        if node is None:
            node = SearchNode(self.model.policy_action(state))
            self.nodes[key] = node
            idx = 0  # rollout: follow the driving policy
        else:
            if not node.expanded:
                node.materialize(self.model.candidates(state))
            idx = select_action(node, self.cfg)
        next_state, reward, terminal = self.model.step(state, node.actions[idx], rng)
        if terminal:
            q = reward
        else:
            q = reward + self.cfg.discount * self._simulate(next_state, depth - 1, rng)
        node.visits[idx] += 1
        node.total += 1
        node.values[idx] += (q - node.values[idx]) / node.visits[idx]
        return q


def mc_policy_return(model, cfg: PlannerConfig, seed: int,
                     iterations: int | None = None) -> float:
    """Monte-Carlo mean return of the pure driving policy on the same
    per-iteration random streams the tree search uses; accumulated with
    the same incremental mean so matched seeds agree exactly."""
    its = cfg.iterations if iterations is None else iterations
    mean = 0.0
    for i in range(its):
        rng = _iteration_rng(seed, i)
        state = model.begin_iteration(rng)
        rewards = []
        for _ in range(cfg.depth):
            action = model.policy_action(state)
            state, reward, terminal = model.step(state, action, rng)
            rewards.append(reward)
            if terminal:
                break
        # fold exactly like the recursion does, for bit-exact agreement
        ret = 0.0
        for reward in reversed(rewards):
            ret = reward + cfg.discount * ret
        mean += (ret - mean) / (i + 1)
    return mean


def quantize_state(state: WorldState, depth: int) -> tuple:
    """Hashable key: quantized ego and per-vehicle kinematics plus the
    remaining depth.  Positions at 0.5 m, speeds at 0.25 m/s, lateral
    positions on the sixth-of-lane grid."""
    floor = math.floor
    ego = state.ego
    key = [depth, floor(ego.x * 2.0 + 0.5), floor(ego.vx * 4.0 + 0.5),
           ego.y_sixths, ego.lc_dir]
    per_sixth = 6.0 / state.road.lane_width
    for v in state.vehicles:
        key.append(v.vid)
        key.append(floor(v.x * 2.0 + 0.5))
        key.append(floor(v.vx * 4.0 + 0.5))
        key.append(floor(v.y * per_sixth + 0.5))
        key.append(v.target_lane)
    return tuple(key)


class TrafficSearchModel:
    """Generative model over the observed sub-world.

    Each iteration samples one parameter hypothesis per observed vehicle
    from its belief, then the world advances with the regular traffic
    dynamics (acceleration noise on) while the ego follows the actions
    chosen by the tree.
    """

    def __init__(self, obs: Observation, road: RoadConfig, cfg: SpawnConfig,
                 planner_cfg: PlannerConfig,
                 policy: Callable[[Observation], Action],
                 belief_sets: dict[int, ParticleSet] | None):
        self.road = road
        self.cfg = cfg
        self.planner_cfg = planner_cfg
        self.policy = policy
        sixth = road.lane_width / 6.0
        ego = EgoState(x=obs.ego.x, vx=obs.ego.vx,
                       y_sixths=round(obs.ego.y / sixth),
                       lc_dir=obs.ego_lc_dir)
        vehicles = []
        for ov in obs.vehicles:
            ratio = ov.kin.y / road.lane_width
            if ov.kin.vy > 0.0:
                lane, target = math.floor(ratio), math.ceil(ratio)
            elif ov.kin.vy < 0.0:
                lane, target = math.ceil(ratio), math.floor(ratio)
            else:
                lane = target = round(ratio)
            lane = min(max(lane, 0), road.lane_count - 1)
            target = min(max(target, 0), road.lane_count - 1)
            vehicles.append(SurroundingVehicle(
                ov.vid, ov.kin.x, ov.kin.y, ov.kin.vx,
                nominal_params(cfg), lane, target))
        self.template = WorldState(road, 0.0, ego, vehicles)
        self._samplers = []
        for v in vehicles:
            ps = belief_sets.get(v.vid) if belief_sets else None
            if ps is None:
                self._samplers.append(None)
            else:
                total = float(np.sum(ps.weights))
                cum = np.cumsum(ps.weights) / total
                cum[-1] = 1.0
                self._samplers.append((ps.values, cum, ps.delta))

    def begin_iteration(self, rng) -> WorldState:
        state = self.template.copy()
        for v, sampler in zip(state.vehicles, self._samplers):
            if sampler is None:
                continue
            values, cum, delta = sampler
            k = int(np.searchsorted(cum, rng.random()))
            row = values[k]
            v.params = DriverParams(row[0], row[1], row[2], row[3],
                                    row[4], row[5], delta)
        return state

    def _lean_obs(self, state: WorldState) -> Observation:
        """Observation built straight from tree state: no noise, no id
        sort; same fields the policies and candidate filter consume."""
        road = self.road
        ego = state.ego
        ego_x = ego.x
        seen = []
        for v in state.vehicles:
            if abs(v.x - ego_x) <= OBSERVATION_RANGE:
                if v.target_lane == v.lane:
                    vy = 0.0
                elif v.target_lane > v.lane:
                    vy = LATERAL_RATE
                else:
                    vy = -LATERAL_RATE
                seen.append(ObservedVehicle(v.vid, VehicleKinematics(v.x, v.y, v.vx, vy)))
        return Observation(state.time, ego.kinematics(road), ego.lane(road),
                           ego.mid_change(), ego.lc_dir, tuple(seen))

    def policy_action(self, state: WorldState) -> Action:
        obs = self._lean_obs(state)
        return commit_lateral(obs, self.policy(obs))

    def candidates(self, state: WorldState) -> tuple:
        obs = self._lean_obs(state)
        a_av = commit_lateral(obs, self.policy(obs))
        cands = enumerate_candidates(obs, a_av, self.road,
                                     self.planner_cfg.min_speed,
                                     self.planner_cfg.allow_lane_change)
        return cands.all()

    def step(self, state: WorldState, action: Action, rng):
        nxt, events = advance_traffic(state, self.planner_cfg.dt, rng, self.cfg,
                                      ego_action=action, manage_corridor=False,
                                      check_all_collisions=False,
                                      mobil_window=MOBIL_WINDOW)
        collided = bool(events)
        return nxt, step_reward(collided, self.planner_cfg), collided

    def state_key(self, state: WorldState, depth: int) -> tuple:
        return quantize_state(state, depth)


@dataclass(frozen=True)
class Decision:
    action: Action
    activated: bool
    gate_open: bool
    root_q: dict = field(default_factory=dict)
    root_visits: dict = field(default_factory=dict)


def plan(obs: Observation, beliefs: BeliefTracker | None,
         policy: Callable[[Observation], Action],
         road: RoadConfig, traffic_cfg: SpawnConfig, cfg: PlannerConfig,
         seed: int, rss: RssParams = RssParams()) -> Decision:
    """One safeguard decision.

    With the gate closed (front gap at or above the required braking
    distance) the policy action passes straight through.  Otherwise the
    tree search runs and the final action maximizes root value plus the
    adapter margin on the policy action.
    """
    a_av = commit_lateral(obs, policy(obs))
    front = observed_leader(obs, road)
    gate_open = False
    if front is not None:
        gap = bumper_gap(front.kin.x, obs.ego.x)
        gate_open = gap < rss_distance(obs.ego.vx, front.kin.vx, rss)
    if not gate_open:
        return Decision(a_av, False, False)

    sets = beliefs.sets if beliefs is not None else None
    model = TrafficSearchModel(obs, road, traffic_cfg, cfg, policy, sets)
    tree = TreeSearch(model, cfg)
    root = tree.run(seed)
    q_values = {a: root.values[i] for i, a in enumerate(root.actions)}
    visits = {a: root.visits[i] for i, a in enumerate(root.actions)}
    a_star = select_final_action(q_values, root.actions[0], cfg.adapter_value)
    return Decision(a_star, a_star != a_av, True, q_values, visits)
