"""Surrounding-vehicle behavior: car-following, lane changes, spawning.

Surrounding vehicles hold each commanded acceleration for one full
decision step; kinematics are integrated on 0.075 s substeps where
collisions are also checked.  All randomness flows through an explicit
generator argument, so identical seeds give bit-identical traffic.

The stepper here is also the planner's generative model, so the inner
loops stay allocation-light: neighbor views are plain (x, vx, params)
tuples and lane occupancy is tracked as bitmasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .world import (
    DECISION_DT,
    LATERAL_RATE,
    SUBSTEPS,
    VEHICLE_LENGTH,
    VEHICLE_WIDTH,
    Action,
    AlreadyCollidingError,
    CollisionEvent,
    DriverParams,
    RoadConfig,
    SurroundingVehicle,
    TrajectorySegment,
    WorldState,
    bumper_gap,
    build_trajectory,
)

PARAM_FIELDS = ("T", "a", "b", "x_dot_0", "g0", "p")

DEFAULT_INTERVALS: dict[str, tuple[float, float]] = {
    "T": (0.3, 0.5),
    "a": (0.8, 2.0),
    "b": (1.0, 3.0),
    "x_dot_0": (27.0, 35.0),
    "g0": (0.2, 0.4),
    "p": (0.1, 0.3),
}

# CarView: plain (x, vx, DriverParams) triple used for lane-change
# reasoning; kept tuple-shaped because the stepper runs inside the
# planner's tree search.
CarView = tuple


def car_view(x: float, vx: float, params: DriverParams) -> CarView:
    return (x, vx, params)


@dataclass
class SpawnConfig:
    """Traffic generation settings: flow, speeds, parameter intervals."""

    q_max: float = 20.0            # desired maximum flow, veh/km/lane
    speed_lo: float = 27.0         # initial speed interval, m/s
    speed_hi: float = 33.0
    sigma_vel: float = 0.5         # acceleration noise strength, m/s
    delta_a_threshold: float = 0.1  # lane-change incentive threshold, m/s^2
    max_braking: float = 4.0       # braking limit applied to every vehicle
    delta: float = 4.0             # acceleration exponent
    param_intervals: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_INTERVALS))

    def __post_init__(self):
        if self.speed_hi < self.speed_lo:
            raise ValueError("empty initial speed interval")
        if self.sigma_vel < 0:
            raise ValueError("sigma_vel must be >= 0")
        for name, (lo, hi) in self.param_intervals.items():
            if hi < lo:
                raise ValueError(f"empty interval for {name}")


def sample_params(cfg: SpawnConfig, rng) -> DriverParams:
    iv = cfg.param_intervals
    draws = {name: rng.uniform(*iv[name]) for name in PARAM_FIELDS}
    return DriverParams(delta=cfg.delta, **draws)


def nominal_params(cfg: SpawnConfig) -> DriverParams:
    """Mid-interval parameter bundle, used where a vehicle must reason
    about another driver whose parameters it cannot know."""
    iv = cfg.param_intervals
    mids = {name: 0.5 * (iv[name][0] + iv[name][1]) for name in PARAM_FIELDS}
    return DriverParams(delta=cfg.delta, **mids)


def idm_acceleration(vx: float, params: DriverParams, gap: float | None,
                     lead_vx: float = 0.0, z: float = 0.0,
                     sigma_vel: float = 0.0, dt: float = DECISION_DT,
                     max_braking: float = 4.0) -> float:
    """Car-following acceleration with optional step noise.

    `gap` is the bumper-to-bumper distance to the front vehicle, or None
    when the road ahead is free.  `z` is a standard-normal draw scaled by
    sigma_vel / dt.  The result is clamped to [-max_braking, params.a].
    """
    if gap is not None and gap <= 0.0:
        raise AlreadyCollidingError(f"non-positive gap {gap:.3f}")
    acc = _idm_nf(vx, params, gap, lead_vx, math.inf)
    if sigma_vel > 0.0:
        acc += (sigma_vel / dt) * z
    if acc < -max_braking:
        return -max_braking
    if acc > params.a:
        return params.a
    return acc


def _idm_nf(vx: float, p: DriverParams, gap: float | None, lead_vx: float,
            max_braking: float) -> float:
    """Noise-free IDM core shared by the car-following and lane-change
    paths; gap must be positive or None."""
    ratio = vx / p.x_dot_0
    if p.delta == 4.0:
        ratio *= ratio
        free = ratio * ratio
    else:
        free = ratio ** p.delta
    if gap is None:
        acc = p.a * (1.0 - free)
    else:
        g_star = p.g0 + p.T * vx + \
            vx * (vx - lead_vx) / (2.0 * math.sqrt(p.a * p.b))
        r = g_star / gap
        acc = p.a * (1.0 - free - r * r)
    if acc < -max_braking:
        return -max_braking
    if acc > p.a:
        return p.a
    return acc


def idm_acceleration_arrays(vx, T, a, b, x_dot_0, g0, delta, gap, lead_vx,
                            max_braking: float = 4.0):
    """Vectorized noise-free variant over parameter arrays (one vehicle,
    many parameter hypotheses).  gap may be None for a free road."""
    import numpy as np

    free = 1.0 - (vx / x_dot_0) ** delta
    if gap is None:
        acc = a * free
    else:
        g_star = g0 + T * vx + vx * (vx - lead_vx) / (2.0 * np.sqrt(a * b))
        acc = a * (free - (g_star / gap) ** 2)
    return np.clip(acc, -max_braking, a)


def _idm_of(view: CarView, leader: CarView | None,
            max_braking: float) -> float | None:
    """Noise-free IDM acceleration of `view` behind `leader`; None when
    the configuration is already overlapping (change infeasible)."""
    x, vx, params = view
    if leader is None:
        return _idm_nf(vx, params, None, 0.0, max_braking)
    gap = leader[0] - x - VEHICLE_LENGTH
    if gap <= 0.0:
        return None
    return _idm_nf(vx, params, gap, leader[1], max_braking)


def mobil_decide(vehicle: CarView,
                 current_leader: CarView | None,
                 old_follower: CarView | None,
                 candidates: dict[str, tuple[CarView | None, CarView | None]],
                 delta_a_threshold: float,
                 max_braking: float = 4.0) -> str:
    """Lane-change decision over candidate sides ("left"/"right").

    A side qualifies when the politeness-weighted acceleration gain
    exceeds the threshold and the new follower is not forced to brake
    harder than its own desired deceleration.  Returns "stay", "left"
    or "right"; ties break toward staying.
    """
    x, vx, params = vehicle
    if current_leader is None:
        a_c = _idm_nf(vx, params, None, 0.0, max_braking)
    else:
        gap = current_leader[0] - x - VEHICLE_LENGTH
        if gap <= 0.0:
            return "stay"
        a_c = _idm_nf(vx, params, gap, current_leader[1], max_braking)
    old_term = None
    if old_follower is not None:
        a_o = _idm_of(old_follower, vehicle, max_braking)
        abar_o = _idm_of(old_follower, current_leader, max_braking)
        if a_o is not None and abar_o is not None:
            old_term = abar_o - a_o
    politeness = params.p
    best_side = "stay"
    best_incentive = None
    for side, pair in candidates.items():
        new_leader, new_follower = pair
        if new_leader is None:
            abar_c = _idm_nf(vx, params, None, 0.0, max_braking)
        else:
            gap = new_leader[0] - x - VEHICLE_LENGTH
            if gap <= 0.0:
                continue
            abar_c = _idm_nf(vx, params, gap, new_leader[1], max_braking)
        gain = abar_c - a_c
        if new_follower is not None:
            a_n = _idm_of(new_follower, new_leader, max_braking)
            abar_n = _idm_of(new_follower, vehicle, max_braking)
            if abar_n is None or a_n is None:
                continue
            if abar_n < -new_follower[2].b:
                continue  # unsafe for the new follower
            gain += politeness * (abar_n - a_n)
        if old_term is not None:
            gain += politeness * old_term
        if gain > delta_a_threshold and (best_incentive is None or gain > best_incentive):
            best_incentive = gain
            best_side = side
    return best_side


def occupied_mask(y: float, road: RoadConfig) -> int:
    """Bitmask of lanes whose span overlaps a footprint centered at y."""
    half = road.lane_width / 2.0 + VEHICLE_WIDTH / 2.0
    mask = 0
    for i in range(road.lane_count):
        if abs(y - i * road.lane_width) < half:
            mask |= 1 << i
    return mask


def spawn_traffic(road: RoadConfig, cfg: SpawnConfig, rng,
                  ego_x: float = 0.0, ego_y: float | None = None,
                  ego_vx: float = 30.0) -> list[SurroundingVehicle]:
    """Populate the corridor at a random density up to cfg.q_max.

    Vehicles keep at least their own desired standstill-plus-headway gap
    to the next vehicle in their lane; placements that cannot satisfy
    the gap after a bounded number of tries are dropped.
    """
    if ego_y is None:
        ego_y = road.lane_center(road.lane_count // 2)
    density = cfg.q_max * (1.0 - rng.random())  # uniform on (0, q_max]
    length_km = 2.0 * road.corridor_half_length / 1000.0
    count = int(round(density * length_km * road.lane_count))
    ego_lane = road.lane_index(ego_y)
    placed: list[SurroundingVehicle] = []
    vid = 1
    for _ in range(count):
        for _try in range(40):
            lane = int(rng.integers(road.lane_count))
            x = rng.uniform(-road.corridor_half_length, road.corridor_half_length)
            vx = rng.uniform(cfg.speed_lo, cfg.speed_hi)
            params = sample_params(cfg, rng)
            if _placement_ok(lane, x, vx, params, placed, road,
                             ego_lane, ego_x, ego_vx):
                placed.append(SurroundingVehicle(
                    vid, x, road.lane_center(lane), vx, params, lane))
                vid += 1
                break
    return placed


def _headway_needed(params: DriverParams, vx: float) -> float:
    return params.g0 + params.T * vx


def _placement_ok(lane: int, x: float, vx: float, params: DriverParams,
                  placed: list[SurroundingVehicle], road: RoadConfig,
                  ego_lane: int, ego_x: float, ego_vx: float) -> bool:
    same_lane = [(v.x, v.vx, v.params) for v in placed if v.lane == lane]
    if lane == ego_lane:
        # The ego needs a nominal margin to merge into.
        same_lane.append((ego_x, ego_vx, DriverParams(0.5, 1.4, 2.0, 31.0, 0.4, 0.2)))
    for ox, ovx, oparams in same_lane:
        gap = bumper_gap(max(x, ox), min(x, ox))
        follower = params if x < ox else oparams
        fvx = vx if x < ox else ovx
        if gap < _headway_needed(follower, fvx):
            return False
    return True


def advance_traffic(state: WorldState, dt: float, rng,
                    cfg: SpawnConfig,
                    ego_action: Action | None = None,
                    substeps: int = SUBSTEPS,
                    manage_corridor: bool = True,
                    check_all_collisions: bool = True,
                    mobil_window: float | None = None,
                    ) -> tuple[WorldState, list[CollisionEvent]]:
    """Advance the world one decision step.

    Every surrounding vehicle picks a lane-change decision and an IDM
    acceleration against its actual front vehicle (the ego included),
    then kinematics integrate on substeps with collision checks.  The
    input state is left untouched.  Returns the new state plus all
    collision events; an ego collision ends the step early.

    With check_all_collisions False only ego-involved collisions are
    detected (used inside the planner's generative model, where pairwise
    checks among surrounding vehicles are skipped for speed); a finite
    mobil_window additionally freezes lane-change decisions of vehicles
    farther than that from the ego for the step.
    """
    state = state.copy()
    road = state.road
    ego = state.ego
    ego_y0 = ego.y(road)
    lane_w = road.lane_width
    max_braking = cfg.max_braking

    ego_traj: TrajectorySegment | None = None
    if ego_action is not None:
        ego_traj = build_trajectory(ego.kinematics(road), ego_action, dt, road)

    # --- decision phase ------------------------------------------------
    vehicles = sorted(state.vehicles, key=lambda v: (v.x, v.vid))
    n = len(vehicles)
    merged_x = [v.x for v in vehicles]
    merged_x.append(ego.x)
    merged_vx = [v.vx for v in vehicles]
    merged_vx.append(ego.vx)
    merged_params: list[DriverParams | None] = [v.params for v in vehicles]
    merged_params.append(None)
    masks = [(1 << v.lane) if v.target_lane == v.lane
             else occupied_mask(v.y, road) for v in vehicles]
    masks.append(occupied_mask(ego_y0, road))
    order = sorted(range(n + 1), key=merged_x.__getitem__)
    rank = [0] * (n + 1)
    for pos, i in enumerate(order):
        rank[i] = pos

    nominal = nominal_params(cfg)

    def _view(j: int | None) -> CarView | None:
        if j is None:
            return None
        p = merged_params[j]
        return (merged_x[j], merged_vx[j], p if p is not None else nominal)

    def _ahead(pos: int, mask: int) -> int | None:
        for q in range(pos + 1, n + 1):
            j = order[q]
            if masks[j] & mask:
                return j
        return None

    def _behind(pos: int, mask: int) -> int | None:
        for q in range(pos - 1, -1, -1):
            j = order[q]
            if masks[j] & mask:
                return j
        return None

    noise = rng.standard_normal(n).tolist() if n else []
    sigma = cfg.sigma_vel
    noise_scale = sigma / dt

    for i, v in enumerate(vehicles):
        pos = rank[i]
        if v.target_lane == v.lane and v.y == v.lane * lane_w and \
                (mobil_window is None or abs(v.x - ego.x) <= mobil_window):
            sides = {}
            if v.lane + 1 < road.lane_count:
                bit = 1 << (v.lane + 1)
                sides["left"] = (_view(_ahead(pos, bit)), _view(_behind(pos, bit)))
            if v.lane - 1 >= 0:
                bit = 1 << (v.lane - 1)
                sides["right"] = (_view(_ahead(pos, bit)), _view(_behind(pos, bit)))
            if sides:
                bit = 1 << v.lane
                decision = mobil_decide(
                    (v.x, v.vx, v.params),
                    _view(_ahead(pos, bit)), _view(_behind(pos, bit)),
                    sides, cfg.delta_a_threshold, max_braking)
                if decision == "left":
                    v.target_lane = v.lane + 1
                elif decision == "right":
                    v.target_lane = v.lane - 1

        lj = _ahead(pos, masks[i])
        if lj is None:
            acc = _idm_nf(v.vx, v.params, None, 0.0, math.inf)
        else:
            gap = merged_x[lj] - v.x - VEHICLE_LENGTH
            if gap <= 0.0:
                acc = -max_braking
                v.accel = acc
                continue
            acc = _idm_nf(v.vx, v.params, gap, merged_vx[lj], math.inf)
        if sigma > 0.0:
            acc += noise_scale * noise[i]
        if acc < -max_braking:
            acc = -max_braking
        elif acc > v.params.a:
            acc = v.params.a
        v.accel = acc

    # --- integration phase ----------------------------------------------
    events: list[CollisionEvent] = []
    removed: set[int] = set()
    sdt = dt / substeps
    lat_step_len = LATERAL_RATE * sdt
    ego_collided = False
    elapsed = 0.0

    stepped = vehicles
    if not check_all_collisions:
        # Inside the tree only ego-involved collisions matter: vehicles out
        # of the ego's reach that drive straight take one closed-form
        # update; the rest are integrated on substeps.
        reach = (abs(ego.vx) + 40.0) * dt + 3.0 * VEHICLE_LENGTH
        stepped = []
        for v in vehicles:
            if v.target_lane == v.lane and abs(v.x - ego.x) >= reach:
                v_end = v.vx + v.accel * dt
                if v_end < 0.0:
                    if v.vx > 0.0:
                        v.x += 0.5 * v.vx * (v.vx / -v.accel)
                    v.vx = 0.0
                    v.accel = 0.0
                else:
                    v.x += v.vx * dt + 0.5 * v.accel * dt * dt
                    v.vx = v_end
            else:
                stepped.append(v)

    for k in range(1, substeps + 1):
        t = dt if k == substeps else k * sdt
        for v in stepped:
            if v.vid in removed:
                continue
            v_end = v.vx + v.accel * sdt
            if v_end < 0.0:
                if v.vx > 0.0:
                    t_stop = v.vx / -v.accel
                    v.x += 0.5 * v.vx * t_stop
                v.vx = 0.0
                v.accel = 0.0
            else:
                v.x += v.vx * sdt + 0.5 * v.accel * sdt * sdt
                v.vx = v_end
            if v.target_lane != v.lane:
                target_y = v.target_lane * lane_w
                if abs(target_y - v.y) <= lat_step_len:
                    v.y = target_y
                    v.lane = v.target_lane
                else:
                    v.y += lat_step_len if target_y > v.y else -lat_step_len

        if ego_traj is not None:
            ex, ey = ego_traj.position(t)
        else:
            ex, ey = ego.x + ego.vx * t, ego_y0

        if check_all_collisions:
            hit = _full_collision_scan(state.time + t, ex, ey, vehicles,
                                       removed, events)
        else:
            hit = False
            for v in stepped:
                if abs(v.x - ex) < VEHICLE_LENGTH and abs(v.y - ey) < VEHICLE_WIDTH:
                    events.append(CollisionEvent(state.time + t, 0, v.vid,
                                                 v.x - ex, v.y - ey))
                    hit = True
        if hit:
            ego_collided = True
            elapsed = t
            break
        elapsed = t

    # --- ego bookkeeping -------------------------------------------------
    if ego_traj is not None:
        if ego_collided:
            ego.x, _ = ego_traj.position(elapsed)
            ego.vx = ego_traj.speed(elapsed)
        else:
            ego.x, _, ego.vx = ego_traj.end_state()
            step = ego_action.lat_step
            ego.y_sixths += step
            if ego.y_sixths % 6 == 0:
                ego.lc_dir = 0
            elif step != 0:
                ego.lc_dir = step
    else:
        ego.x += ego.vx * elapsed

    state.time += elapsed
    if removed:
        state.vehicles = [v for v in vehicles if v.vid not in removed]
    else:
        state.vehicles = vehicles

    if manage_corridor and not ego_collided:
        _manage_corridor(state, cfg, rng)

    return state, events


def _full_collision_scan(time: float, ego_x: float, ego_y: float,
                         vehicles: list[SurroundingVehicle], removed: set[int],
                         events: list[CollisionEvent]) -> bool:
    """Substep collision check over every pair; returns True when the ego
    is involved.  Overlapping surrounding pairs are recorded and despawned
    so the episode can continue deterministically."""
    live = [(v.x, v.y, v.vid) for v in vehicles if v.vid not in removed]
    live.append((ego_x, ego_y, 0))
    live.sort()
    ego_hit = False
    m = len(live)
    for i in range(m):
        xi, yi, idi = live[i]
        for j in range(i + 1, m):
            xj, yj, idj = live[j]
            if xj - xi >= VEHICLE_LENGTH:
                break
            if idi in removed or idj in removed:
                continue
            if abs(yj - yi) < VEHICLE_WIDTH:
                a, b = sorted((idi, idj))
                events.append(CollisionEvent(time, a, b, xj - xi, yj - yi))
                if a == 0:
                    ego_hit = True
                else:
                    removed.add(idi)
                    removed.add(idj)
    return ego_hit


def _manage_corridor(state: WorldState, cfg: SpawnConfig, rng) -> None:
    """Despawn vehicles that left the corridor and top the count back up
    with fresh drivers entering at the corridor edges."""
    road = state.road
    ego = state.ego
    half = road.corridor_half_length
    state.vehicles = [v for v in state.vehicles if abs(v.x - ego.x) <= half]
    tries = 0
    while len(state.vehicles) < state.target_count and tries < 8:
        tries += 1
        ahead = bool(rng.integers(2))
        x = ego.x + (half if ahead else -half)
        lane = int(rng.integers(road.lane_count))
        vx = rng.uniform(cfg.speed_lo, cfg.speed_hi)
        params = sample_params(cfg, rng)
        ok = True
        for v in state.vehicles:
            if v.lane == lane or v.target_lane == lane:
                gap = bumper_gap(max(x, v.x), min(x, v.x))
                follower = params if x < v.x else v.params
                fvx = vx if x < v.x else v.vx
                if gap < _headway_needed(follower, fvx):
                    ok = False
                    break
        if ok and (lane != road.lane_index(ego.y(road)) or
                   abs(x - ego.x) > 2.0 * VEHICLE_LENGTH):
            state.vehicles.append(SurroundingVehicle(
                state.next_id, x, road.lane_center(lane), vx, params, lane))
            state.next_id += 1
            if state.spawn_log is not None:
                state.spawn_log.append(params.as_tuple() + (vx,))
