"""Benchmark safeguards: braking-only minimum-gap supervision and the
worst-case reachable-set brake-or-steer supervision.

Both are stateless supervisors: they pass the driving policy's action
through untouched unless a threat condition triggers, in which case an
emergency action replaces it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .policies import GippsParams, gipps_accel
from .world import (
    DECISION_DT,
    GAMMA_LEFT,
    GAMMA_RIGHT,
    Action,
    Observation,
    RoadConfig,
    bumper_gap,
    lane_follower,
    lane_leader,
    observed_leader,
)

INF = math.inf


@dataclass(frozen=True)
class RssParams:
    a_e_max: float = 1.4       # ego acceleration assumed during the reaction
    a_e_hb: float = 4.0        # ego hard-braking magnitude
    a_f_hb: float = 4.0        # front worst-case braking magnitude
    reaction_dt: float = DECISION_DT

    def __post_init__(self):
        if min(self.a_e_max, self.a_e_hb, self.a_f_hb, self.reaction_dt) <= 0:
            raise ValueError("all parameters must be positive")


def rss_distance(v_e: float, v_f: float | None, p: RssParams = RssParams()) -> float:
    """Minimum front gap under which worst-case braking still avoids
    contact: reaction travel while accelerating, own braking distance,
    minus the front vehicle's braking distance.  Zero without a front
    vehicle, floored at zero otherwise."""
    if v_f is None:
        return 0.0
    dt = p.reaction_dt
    v_peak = v_e + dt * p.a_e_max
    d = (v_e * dt + 0.5 * p.a_e_max * dt * dt
         + v_peak * v_peak / (2.0 * p.a_e_hb)
         - v_f * v_f / (2.0 * p.a_f_hb))
    return max(d, 0.0)


def rss_supervise(obs: Observation, a_av: Action, road: RoadConfig,
                  p: RssParams = RssParams()) -> Action:
    """Hard-brake override whenever the front gap is at or below the
    required distance; otherwise the policy action passes through."""
    front = observed_leader(obs, road)
    if front is None:
        return a_av
    gap = bumper_gap(front.kin.x, obs.ego.x)
    if gap <= rss_distance(obs.ego.vx, front.kin.vx, p):
        return Action(-p.a_e_hb, 0.0)
    return a_av


def _travel(v: float, decel: float, t: float) -> float:
    """Distance covered by time t under constant deceleration with the
    speed clamped at zero."""
    if decel <= 0.0:
        return v * t
    t_stop = v / decel
    if t >= t_stop:
        return v * t_stop - 0.5 * decel * t_stop * t_stop
    return v * t - 0.5 * decel * t * t


def _smallest_root(g: float, u: float, w: float, limit: float) -> float | None:
    """Smallest tau in [0, limit] with g + u*tau + 0.5*w*tau^2 = 0."""
    if g <= 0.0:
        return 0.0
    if w == 0.0:
        if u >= 0.0:
            return None
        tau = -g / u
        return tau if tau <= limit else None
    half = 0.5 * w
    disc = u * u - 4.0 * half * g
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    roots = sorted(((-u - sq) / (2.0 * half), (-u + sq) / (2.0 * half)))
    for tau in roots:
        if -1e-12 <= tau <= limit:
            return max(tau, 0.0)
    return None


def time_before_collision(gap: float, v_e: float, v_f: float,
                          decel_e: float, decel_f: float) -> float:
    """First time the bumper gap reaches zero under constant decelerations
    (positive magnitudes) with speeds clamped at zero.  Piecewise closed
    form over the two stop events; math.inf when contact never happens."""
    if gap <= 0.0:
        return 0.0
    t_e = v_e / decel_e if decel_e > 0.0 else (0.0 if v_e == 0.0 else INF)
    t_f = v_f / decel_f if decel_f > 0.0 else (0.0 if v_f == 0.0 else INF)
    boundaries = sorted({0.0, t_e, t_f, INF})
    for idx in range(len(boundaries) - 1):
        ta, tb = boundaries[idx], boundaries[idx + 1]
        if ta == INF:
            break
        g_a = gap + _travel(v_f, decel_f, ta) - _travel(v_e, decel_e, ta)
        e_moves = ta < t_e
        f_moves = ta < t_f
        u = (v_f - decel_f * ta if f_moves else 0.0) - \
            (v_e - decel_e * ta if e_moves else 0.0)
        w = (decel_e if e_moves else 0.0) - (decel_f if f_moves else 0.0)
        limit = tb - ta
        tau = _smallest_root(g_a, u, w, limit)
        if tau is not None:
            return ta + tau
        if not e_moves and not f_moves:
            break
    return INF


@dataclass(frozen=True)
class ReachableSetParams:
    a_max: float = 2.0               # surrounding worst-case acceleration
    a_e_b: float = 1.5               # ego deceleration magnitude during a change
    a_e_hb: float = 4.0              # ego hard-braking magnitude
    a_f_hb: float = 4.0              # front worst-case braking magnitude
    t_lc: float = 4.0 / 0.89        # full lane change at the lateral rate

    def __post_init__(self):
        if min(self.a_max, self.a_e_b, self.a_e_hb, self.a_f_hb, self.t_lc) <= 0:
            raise ValueError("all parameters must be positive")


def _rear_gap_admissible(obs: Observation, road: RoadConfig, lane: int,
                         p: ReachableSetParams) -> bool:
    """A target lane is usable when its rear vehicle, accelerating at the
    worst case while the ego decelerates through the change, cannot close
    the current gap within the lane-change time."""
    rear = lane_follower(obs, road, lane, obs.ego.x)
    if rear is None:
        return True
    gap = bumper_gap(obs.ego.x, rear.kin.x)
    closing = (rear.kin.vx - obs.ego.vx) * p.t_lc + \
        0.5 * p.t_lc * p.t_lc * (p.a_max + p.a_e_b)
    return gap >= closing


def _lane_score(obs: Observation, road: RoadConfig, lane: int,
                p: ReachableSetParams) -> float:
    front = lane_leader(obs, road, lane, obs.ego.x)
    if front is None:
        return INF
    gap = bumper_gap(front.kin.x, obs.ego.x)
    return time_before_collision(gap, obs.ego.vx, front.kin.vx,
                                 p.a_e_b, p.a_f_hb)


def reachable_set_supervise(obs: Observation, a_av: Action, road: RoadConfig,
                            p: ReachableSetParams = ReachableSetParams(),
                            gipps: GippsParams = GippsParams(),
                            rss: RssParams = RssParams()) -> Action:
    """Worst-case brake-or-steer supervision.

    No intervention while the current-lane gap exceeds the required
    braking distance.  Under threat, each admissible lane is scored by
    its worst-case time before collision and the best lane chosen:
    staying means hard braking, a lane change runs Gipps against both
    the current and the target lane front vehicles, floored at the
    lane-change deceleration.
    """
    front = observed_leader(obs, road)
    if front is None:
        return a_av
    gap_c = bumper_gap(front.kin.x, obs.ego.x)
    if gap_c > rss_distance(obs.ego.vx, front.kin.vx, rss):
        return a_av

    lane = obs.ego_lane
    score_c = time_before_collision(gap_c, obs.ego.vx, front.kin.vx,
                                    p.a_e_b, p.a_f_hb)
    scores = {"stay": score_c}
    for side, target in (("left", lane + 1), ("right", lane - 1)):
        if not (0 <= target < road.lane_count):
            continue
        if not _rear_gap_admissible(obs, road, target, p):
            continue
        scores[side] = _lane_score(obs, road, target, p)

    best = max(scores.values())
    if scores["stay"] >= best:
        return Action(-p.a_e_hb, 0.0)

    def change_accel(target: int) -> float:
        tf = lane_leader(obs, road, target, obs.ego.x)
        a_target = gipps_accel(obs.ego.vx,
                               bumper_gap(tf.kin.x, obs.ego.x) if tf else None,
                               tf.kin.vx if tf else 0.0, gipps)
        a_current = gipps_accel(obs.ego.vx, gap_c, front.kin.vx, gipps)
        return max(-p.a_e_b, min(a_target, a_current))

    if scores.get("left", -1.0) >= best:
        return Action(change_accel(lane + 1), GAMMA_LEFT)
    return Action(change_accel(lane - 1), GAMMA_RIGHT)
