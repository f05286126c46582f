"""Experiment orchestration: episode loop, test matrix, metrics, CSV.

Six canonical configurations pair two driving policies with three
safeguards in three groups (A: braking only, B/C: braking plus lane
changes).  Within a group every safeguard sees the identical initial
traffic per round, so safeguards can be compared on paired seeds.

Records are finalized at six-decimal precision and every emitted number
derives from the finalized records, so parsing the CSV output back
reproduces the aggregate metrics exactly.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .beliefs import BeliefTracker
from .calibration import (
    COMPONENT_FIELDS,
    EpisodeLikelihood,
    NaturalisticModel,
    ProposalModel,
    likelihood_ratio,
)
from .planner import PlannerConfig, plan
from .policies import (
    GippsParams,
    HumanLikeParams,
    commit_lateral,
    gipps_action,
    human_like_action,
)
from .safeguards import (
    ReachableSetParams,
    RssParams,
    reachable_set_supervise,
    rss_supervise,
)
from .traffic import SpawnConfig, advance_traffic, spawn_traffic
from .world import (
    DECISION_DT,
    Action,
    EgoState,
    RoadConfig,
    WorldState,
    observe,
)

HARD_BRAKE_THRESHOLD = -2.3

GROUP_PRESETS = {
    "A1": ("gipps", "rss", False),
    "A2": ("gipps", "adaptive", False),
    "B1": ("gipps", "reachable_set", True),
    "B2": ("gipps", "adaptive", True),
    "C1": ("human_like", "reachable_set", True),
    "C2": ("human_like", "adaptive", True),
}

SAFEGUARDS = ("none", "rss", "reachable_set", "adaptive")
POLICIES = ("gipps", "human_like")


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from integer parts; identical across runs and
    platforms."""
    ss = np.random.SeedSequence(list(parts))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ExperimentConfig:
    group: str = "A1"
    policy: str = "gipps"
    safeguard: str = "rss"
    allow_lane_change: bool = False
    rounds: int = 100
    episode_duration: float = 30.0
    master_seed: int = 20200828
    workers: int = 1
    observation_noise: float = 0.0
    hard_brake_threshold: float = HARD_BRAKE_THRESHOLD
    road: RoadConfig = field(default_factory=RoadConfig)
    spawn: SpawnConfig = field(default_factory=SpawnConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    rss: RssParams = field(default_factory=RssParams)
    reachable: ReachableSetParams = field(default_factory=ReachableSetParams)
    gipps: GippsParams = field(default_factory=GippsParams)
    human: HumanLikeParams = field(default_factory=HumanLikeParams)
    naturalistic: NaturalisticModel = field(default_factory=NaturalisticModel)

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy}")
        if self.safeguard not in SAFEGUARDS:
            raise ValueError(f"unknown safeguard {self.safeguard}")
        self.planner = replace(self.planner,
                               allow_lane_change=self.allow_lane_change)

    @classmethod
    def for_group(cls, group: str, **overrides) -> "ExperimentConfig":
        policy, safeguard, lane_change = GROUP_PRESETS[group]
        return cls(group=group, policy=policy, safeguard=safeguard,
                   allow_lane_change=lane_change, **overrides)


@dataclass(frozen=True)
class StepTrace:
    policy_action: Action
    executed: Action
    activated: bool


@dataclass
class EpisodeRecord:
    round_index: int
    seed: int
    duration_s: float
    distance_km: float
    collided: bool
    hard_brakes: int
    interventions: int
    lc_policy: int
    lc_safeguard: int
    likelihood_ratio: float
    steps: list[StepTrace] = field(default_factory=list)
    components: list[tuple] = field(default_factory=list)


def _policy_fn(cfg: ExperimentConfig):
    if cfg.policy == "gipps":
        return lambda obs: gipps_action(obs, cfg.gipps, cfg.road)
    return lambda obs: human_like_action(obs, cfg.human, cfg.road)


def run_episode(cfg: ExperimentConfig, round_index: int) -> EpisodeRecord:
    """One supervised episode: spawn, then loop decision steps until the
    duration runs out or the ego collides."""
    seed = derive_seed(cfg.master_seed, round_index)
    traffic_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    belief_rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    obs_rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))

    road = cfg.road
    ego = EgoState(x=0.0, vx=traffic_rng.uniform(cfg.spawn.speed_lo,
                                                 cfg.spawn.speed_hi),
                   y_sixths=6 * (road.lane_count // 2))
    vehicles = spawn_traffic(road, cfg.spawn, traffic_rng,
                             ego_x=ego.x, ego_y=ego.y(road), ego_vx=ego.vx)
    world = WorldState(road, 0.0, ego, vehicles,
                       next_id=len(vehicles) + 1, target_count=len(vehicles),
                       spawn_log=[v.params.as_tuple() + (v.vx,) for v in vehicles])

    policy = _policy_fn(cfg)
    tracker = BeliefTracker(cfg.spawn, road) if cfg.safeguard == "adaptive" else None

    steps: list[StepTrace] = []
    hard_brakes = interventions = lc_policy = lc_safeguard = 0
    collided = False
    n_steps = int(round(cfg.episode_duration / cfg.planner.dt))

    for step_index in range(n_steps):
        obs = observe(world, cfg.observation_noise, obs_rng)
        if tracker is not None:
            tracker.step(obs, belief_rng)

        policy_action = commit_lateral(obs, policy(obs))
        if cfg.safeguard == "none":
            executed = policy_action
        elif cfg.safeguard == "rss":
            executed = commit_lateral(
                obs, rss_supervise(obs, policy_action, road, cfg.rss))
        elif cfg.safeguard == "reachable_set":
            executed = commit_lateral(
                obs, reachable_set_supervise(obs, policy_action, road,
                                             cfg.reachable, cfg.gipps, cfg.rss))
        else:
            decision = plan(obs, tracker, policy, road, cfg.spawn, cfg.planner,
                            derive_seed(seed, 1, step_index), cfg.rss)
            executed = decision.action

        activated = executed != policy_action
        steps.append(StepTrace(policy_action, executed, activated))
        if activated:
            interventions += 1
        if executed.ax <= cfg.hard_brake_threshold:
            hard_brakes += 1
        if not obs.ego_mid_change and executed.lat_step != 0:
            if activated:
                lc_safeguard += 1
            else:
                lc_policy += 1

        world, events = advance_traffic(world, cfg.planner.dt, traffic_rng,
                                        cfg.spawn, ego_action=executed)
        if any(e.first_id == 0 for e in events):
            collided = True
            break

    proposal = ProposalModel.from_spawn_config(cfg.spawn)
    components = [tuple(round(v, 6) for v in entry) for entry in world.spawn_log]
    pairs = [(name, value) for entry in components
             for name, value in zip(COMPONENT_FIELDS, entry)]
    ratio = likelihood_ratio(pairs, cfg.naturalistic, proposal)

    return EpisodeRecord(
        round_index=round_index,
        seed=seed,
        duration_s=round(world.time, 6),
        distance_km=round(world.ego.x / 1000.0, 6),
        collided=collided,
        hard_brakes=hard_brakes,
        interventions=interventions,
        lc_policy=lc_policy,
        lc_safeguard=lc_safeguard,
        likelihood_ratio=round(ratio, 6),
        steps=steps,
        components=components,
    )


@dataclass
class AggregateMetrics:
    episodes: int
    collisions: int
    travel_time_h: float
    travel_distance_km: float
    average_speed_kmh: float | None
    hard_brakes: int
    interventions: int
    lc_policy: int
    lc_safeguard: int
    collision_rate_per_1000km: float | None
    hard_brake_rate_per_1000km: float | None
    intervention_rate_per_1000km: float | None
    naturalistic_rate_per_1e6km: float | None


def compute_metrics(records: list[EpisodeRecord]) -> AggregateMetrics:
    """Aggregate counts, durations and per-distance rates."""
    if not records:
        raise ValueError("no records")
    collisions = sum(1 for r in records if r.collided)
    time_h = sum(r.duration_s for r in records) / 3600.0
    dist_km = sum(r.distance_km for r in records)
    hard = sum(r.hard_brakes for r in records)
    inter = sum(r.interventions for r in records)
    lcp = sum(r.lc_policy for r in records)
    lcs = sum(r.lc_safeguard for r in records)
    weighted = sum(r.likelihood_ratio for r in records if r.collided)
    if dist_km > 0.0:
        rate = lambda count, scale: count / dist_km * scale  # noqa: E731
        speed = dist_km / time_h if time_h > 0.0 else None
        return AggregateMetrics(len(records), collisions, time_h, dist_km,
                                speed, hard, inter, lcp, lcs,
                                rate(collisions, 1e3), rate(hard, 1e3),
                                rate(inter, 1e3), rate(weighted, 1e6))
    return AggregateMetrics(len(records), collisions, time_h, dist_km, None,
                            hard, inter, lcp, lcs, None, None, None, None)


def naturalistic_estimate(records: list[EpisodeRecord]) -> tuple[float, float]:
    """Per-episode naturalistic collision probability and standard error."""
    likes = [EpisodeLikelihood(r.round_index, r.likelihood_ratio, r.collided)
             for r in records]
    from .calibration import is_estimate

    return is_estimate(likes)


def _run_episode_task(args) -> EpisodeRecord:
    cfg, round_index = args
    return run_episode(cfg, round_index)


def run_rounds(cfg: ExperimentConfig) -> list[EpisodeRecord]:
    """All rounds of one configuration, optionally on parallel workers;
    results are merged in round order so parallelism cannot change the
    output."""
    rounds = list(range(cfg.rounds))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_episode_task,
                                    [(cfg, r) for r in rounds],
                                    chunksize=max(1, len(rounds) // (8 * cfg.workers))))
    else:
        records = [run_episode(cfg, r) for r in rounds]
    records.sort(key=lambda r: r.round_index)
    return records


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


EPISODE_COLUMNS = ("seed", "distance_km", "duration_s", "collided",
                   "hard_brakes", "interventions", "lc_policy",
                   "lc_safeguard", "likelihood_ratio")

SUMMARY_COLUMNS = ("group", "policy", "safeguard", "rounds", "master_seed",
                   "collisions", "travel_time_h", "travel_distance_km",
                   "average_speed_kmh", "hard_brakes", "interventions",
                   "lc_policy", "lc_safeguard", "collision_rate_per_1000km",
                   "hard_brake_rate_per_1000km", "intervention_rate_per_1000km",
                   "naturalistic_rate_per_1e6km")


def write_outputs(cfg: ExperimentConfig, records: list[EpisodeRecord],
                  out_dir: str) -> AggregateMetrics:
    """Emit episodes.csv, params.csv, summary.csv and convergence.csv."""
    os.makedirs(out_dir, exist_ok=True)
    metrics = compute_metrics(records)

    with open(os.path.join(out_dir, "episodes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_COLUMNS)
        for r in records:
            w.writerow([_fmt(x) for x in (
                r.seed, r.distance_km, r.duration_s, r.collided,
                r.hard_brakes, r.interventions, r.lc_policy,
                r.lc_safeguard, r.likelihood_ratio)])

    with open(os.path.join(out_dir, "params.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("round",) + COMPONENT_FIELDS)
        for r in records:
            for entry in r.components:
                w.writerow([_fmt(r.round_index)] + [_fmt(v) for v in entry])

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerow([_fmt(x) for x in (
            cfg.group, cfg.policy, cfg.safeguard, len(records),
            cfg.master_seed, metrics.collisions, metrics.travel_time_h,
            metrics.travel_distance_km, metrics.average_speed_kmh,
            metrics.hard_brakes, metrics.interventions, metrics.lc_policy,
            metrics.lc_safeguard, metrics.collision_rate_per_1000km,
            metrics.hard_brake_rate_per_1000km,
            metrics.intervention_rate_per_1000km,
            metrics.naturalistic_rate_per_1e6km)])

    with open(os.path.join(out_dir, "convergence.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("round", "cumulative_collision_rate_per_1000km"))
        cum_coll = 0
        cum_dist = 0.0
        for r in records:
            cum_coll += int(r.collided)
            cum_dist += r.distance_km
            value = cum_coll / cum_dist * 1e3 if cum_dist > 0 else None
            w.writerow([_fmt(r.round_index), _fmt(value)])

    return metrics


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> AggregateMetrics:
    """Run the configured rounds and emit every output file."""
    records = run_rounds(cfg)
    return write_outputs(cfg, records, out_dir)


def parse_episodes_csv(path: str) -> list[EpisodeRecord]:
    """Rebuild records from an emitted episodes.csv (metric fields only)."""
    records = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            records.append(EpisodeRecord(
                round_index=i,
                seed=int(row["seed"]),
                duration_s=float(row["duration_s"]),
                distance_km=float(row["distance_km"]),
                collided=bool(int(row["collided"])),
                hard_brakes=int(row["hard_brakes"]),
                interventions=int(row["interventions"]),
                lc_policy=int(row["lc_policy"]),
                lc_safeguard=int(row["lc_safeguard"]),
                likelihood_ratio=float(row["likelihood_ratio"]),
            ))
    return records
