"""Ego driving policies and candidate-action enumeration for the planner.

Two policies ship: a Gipps-style safe-speed car follower that never
changes lanes, and a human-like driver running the same car-following
and lane-change models as the surrounding traffic with milder
parameters.  Both are pure functions of the observation; the six-step
lane-change commitment is carried by the ego state and surfaced through
the observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .traffic import car_view, idm_acceleration, mobil_decide
from .world import (
    DECISION_DT,
    GAMMA_LEFT,
    GAMMA_RIGHT,
    Action,
    DriverParams,
    Observation,
    RoadConfig,
    bumper_gap,
    lane_follower,
    lane_leader,
    observed_leader,
)

HARD_BRAKE = -4.0
LIGHT_BRAKE = -1.5
LIGHT_ACCEL = 1.5
AVOIDANCE_ACCELS = (HARD_BRAKE, LIGHT_BRAKE, 0.0, LIGHT_ACCEL)

MIN_EGO_SPEED = 5.0


@dataclass(frozen=True)
class GippsParams:
    v_ave: float = 27.0      # desired speed
    a_cmax: float = 1.5      # comfortable acceleration bound
    a_cmin: float = -1.5     # comfortable deceleration bound
    a_hat_e: float = 4.0     # own maximum deceleration magnitude
    a_hat_f: float = 4.0     # assumed front maximum deceleration magnitude
    k: float = 1.0           # velocity adjustment rate

    def __post_init__(self):
        if not (self.a_cmin < 0.0 < self.a_cmax):
            raise ValueError("comfort bounds must straddle zero")
        if not (0.0 < self.k <= 1.0):
            raise ValueError("k must lie in (0, 1]")


def gipps_safe_speed(v_e: float, gap: float, v_f: float,
                     p: GippsParams, dt: float = DECISION_DT) -> float:
    """Maximum speed from which stopping behind a worst-case braking
    leader stays feasible.  Decelerations enter as signed (negative)
    values; a negative discriminant means no safe speed exists and 0 is
    returned."""
    if gap <= 0.0:
        return 0.0
    ae = -p.a_hat_e
    af = -p.a_hat_f
    disc = 4.0 * ae * ae * dt * dt - ae * (2.0 * gap - 2.0 * v_e * dt - v_f * v_f / af)
    if disc < 0.0:
        return 0.0
    v_g = 2.0 * ae * dt + math.sqrt(disc)
    return max(v_g, 0.0)


def gipps_accel(v_e: float, gap: float | None, v_f: float,
                p: GippsParams, dt: float = DECISION_DT) -> float:
    """Longitudinal acceleration of the Gipps policy; gap None = free road."""
    if gap is None:
        target = p.k * p.v_ave
    else:
        target = p.k * min(gipps_safe_speed(v_e, gap, v_f, p, dt), p.v_ave)
    ax = (target - v_e) / dt
    return min(max(ax, p.a_cmin), p.a_cmax)


def gipps_action(obs: Observation, p: GippsParams, road: RoadConfig) -> Action:
    """Car-following action of the Gipps policy; never changes lanes."""
    front = observed_leader(obs, road)
    if front is None:
        return Action(gipps_accel(obs.ego.vx, None, 0.0, p))
    gap = bumper_gap(front.kin.x, obs.ego.x)
    return Action(gipps_accel(obs.ego.vx, gap, front.kin.vx, p))


@dataclass(frozen=True)
class HumanLikeParams:
    T: float = 1.5
    g0: float = 2.0
    a: float = 1.4
    b: float = 2.0
    p: float = 0.5
    v_ave: float = 27.0
    delta: float = 4.0
    delta_a_threshold: float = 0.1
    max_braking: float = 4.0

    def driver(self) -> DriverParams:
        return DriverParams(T=self.T, a=self.a, b=self.b, x_dot_0=self.v_ave,
                            g0=self.g0, p=self.p, delta=self.delta)


def human_like_action(obs: Observation, hp: HumanLikeParams,
                      road: RoadConfig) -> Action:
    """IDM car-following plus lane-change decisions for the ego.

    The ego models other drivers with its own parameter bundle when a
    lane-change evaluation needs their reactions.  A change in progress
    is continued regardless of fresh incentives.
    """
    me = hp.driver()
    front = observed_leader(obs, road)
    if front is None:
        ax = idm_acceleration(obs.ego.vx, me, None, max_braking=hp.max_braking)
    else:
        gap = bumper_gap(front.kin.x, obs.ego.x)
        if gap <= 0.0:
            ax = -hp.max_braking
        else:
            ax = idm_acceleration(obs.ego.vx, me, gap, front.kin.vx,
                                  max_braking=hp.max_braking)

    if obs.ego_mid_change:
        return Action(ax, obs.ego_lc_dir / 6.0)

    lane = obs.ego_lane
    x0 = obs.ego.x

    def view(ov):
        if ov is None:
            return None
        return car_view(ov.kin.x, ov.kin.vx, me)

    sides = {}
    if lane + 1 < road.lane_count:
        sides["left"] = (view(lane_leader(obs, road, lane + 1, x0)),
                         view(lane_follower(obs, road, lane + 1, x0)))
    if lane - 1 >= 0:
        sides["right"] = (view(lane_leader(obs, road, lane - 1, x0)),
                          view(lane_follower(obs, road, lane - 1, x0)))
    decision = "stay"
    if sides:
        decision = mobil_decide(car_view(x0, obs.ego.vx, me), view(front),
                                view(lane_follower(obs, road, lane, x0)),
                                sides, hp.delta_a_threshold, hp.max_braking)
    if decision == "left":
        return Action(ax, GAMMA_LEFT)
    if decision == "right":
        return Action(ax, GAMMA_RIGHT)
    return Action(ax, 0.0)


def commit_lateral(obs: Observation, action: Action) -> Action:
    """Force an in-progress lane change to keep moving: mid-change the
    lateral component must continue (or explicitly reverse), never hold."""
    if obs.ego_mid_change and action.lat_step == 0:
        return Action(action.ax, obs.ego_lc_dir / 6.0)
    return action


@dataclass(frozen=True)
class CandidateActionSet:
    driving: Action
    avoidance: tuple[Action, ...]

    def all(self) -> tuple[Action, ...]:
        return (self.driving,) + self.avoidance


def enumerate_candidates(obs: Observation, a_av: Action, road: RoadConfig,
                         min_speed: float = MIN_EGO_SPEED,
                         allow_lane_change: bool = True) -> CandidateActionSet:
    """Driving action plus the filtered collision-avoidance grid.

    Grid accelerations cross lane options {keep, left, right}; actions
    leaving the road, passing the speed limit, or dropping below the
    minimum speed are discarded.  Mid-change the lane options shrink to
    continue-or-reverse.  Hard braking without steering always survives
    so the set can never be empty.
    """
    v = obs.ego.vx
    if obs.ego_mid_change:
        lat_options = [obs.ego_lc_dir, -obs.ego_lc_dir] if allow_lane_change \
            else [obs.ego_lc_dir]
    else:
        lat_options = [0]
        if allow_lane_change:
            if obs.ego_lane + 1 < road.lane_count:
                lat_options.append(1)
            if obs.ego_lane - 1 >= 0:
                lat_options.append(-1)

    avoidance = []
    for ax in AVOIDANCE_ACCELS:
        v_next = max(v + ax * DECISION_DT, 0.0)
        for lat in lat_options:
            is_fallback = ax == HARD_BRAKE and lat == lat_options[0]
            if not is_fallback:
                if v_next > road.speed_limit or v_next < min_speed:
                    continue
            cand = Action(ax, lat / 6.0)
            if cand != a_av:
                avoidance.append(cand)
    return CandidateActionSet(a_av, tuple(avoidance))
