"""Per-vehicle particle filters over hidden driver parameters.

Each observed vehicle gets an independent set of parameter hypotheses.
Every decision step the filter propagates each hypothesis one step with
the noise-free traffic model from the last observed scene, scores the
hypotheses against the newly observed longitudinal position and
lane-change state, and resamples with light roughening so the sets stay
diverse over long episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .traffic import (
    PARAM_FIELDS,
    SpawnConfig,
    idm_acceleration,
    idm_acceleration_arrays,
    nominal_params,
)
from .world import (
    DECISION_DT,
    LATERAL_RATE,
    DriverParams,
    Observation,
    ObservedVehicle,
    RoadConfig,
    bumper_gap,
)

PARTICLE_COUNT = 500
LANE_MISMATCH_FACTOR = 0.8
ROUGHENING_FRACTION = 0.02
DEGENERACY_FLOOR = 1e-300


@dataclass
class ParticleSet:
    """Weighted driver-parameter hypotheses for one vehicle.

    values holds one row per particle with columns in PARAM_FIELDS order.
    """

    vid: int
    values: np.ndarray
    weights: np.ndarray
    intervals: dict[str, tuple[float, float]]
    delta: float = 4.0

    @property
    def count(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, PARAM_FIELDS.index(name)]

    def posterior_mean(self) -> DriverParams:
        mean = np.average(self.values, axis=0, weights=self.weights)
        return DriverParams(*mean, delta=self.delta)

    def particle(self, k: int) -> DriverParams:
        return DriverParams(*self.values[k], delta=self.delta)


def init_particles(vid: int, intervals: dict[str, tuple[float, float]],
                   rng, n: int = PARTICLE_COUNT, delta: float = 4.0) -> ParticleSet:
    """Uniform independent draws per parameter, uniform weights."""
    cols = []
    for name in PARAM_FIELDS:
        lo, hi = intervals[name]
        cols.append(rng.uniform(lo, hi, size=n))
    values = np.column_stack(cols)
    return ParticleSet(vid, values, np.full(n, 1.0 / n), dict(intervals), delta)


def weight_particles(ps: ParticleSet, predicted_x: np.ndarray,
                     predicted_lane: np.ndarray, observed_x: float,
                     observed_lane: int, sigma: float) -> ParticleSet:
    """Gaussian likelihood on the longitudinal error with a flat penalty
    for hypotheses whose lane-change prediction disagrees."""
    err = observed_x - predicted_x
    w = np.exp(-(err * err) / (2.0 * sigma * sigma))
    w = np.where(predicted_lane == observed_lane, w, LANE_MISMATCH_FACTOR * w)
    if not np.any(w > DEGENERACY_FLOOR):
        # every hypothesis ruled out; the follow-up resample reinitializes
        w = np.zeros_like(w)
    ps.weights = w
    return ps


def resample(ps: ParticleSet, rng,
             roughening: float = ROUGHENING_FRACTION) -> ParticleSet:
    """Systematic resampling followed by truncated Gaussian roughening
    (std = roughening * interval width, clipped back to the interval).
    A set whose weights summed to zero is reinitialized from scratch."""
    total = float(np.sum(ps.weights))
    n = ps.count
    if total <= 0.0:
        return init_particles(ps.vid, ps.intervals, rng, n, ps.delta)
    positions = (np.arange(n) + rng.random()) / n
    cumulative = np.cumsum(ps.weights) / total
    cumulative[-1] = 1.0
    idx = np.searchsorted(cumulative, positions)
    values = ps.values[idx].copy()
    if roughening > 0.0:
        for j, name in enumerate(PARAM_FIELDS):
            lo, hi = ps.intervals[name]
            std = roughening * (hi - lo)
            if std > 0.0:
                values[:, j] += std * rng.standard_normal(n)
                np.clip(values[:, j], lo, hi, out=values[:, j])
    ps.values = values
    ps.weights = np.full(n, 1.0 / n)
    return ps


def sample_hypothesis(ps: ParticleSet, rng) -> DriverParams:
    """One hypothesis drawn proportionally to the current weights."""
    total = float(np.sum(ps.weights))
    if total <= 0.0:
        raise ValueError("all weights are zero")
    cumulative = np.cumsum(ps.weights) / total
    cumulative[-1] = 1.0
    k = int(np.searchsorted(cumulative, rng.random()))
    return ps.particle(k)


def observed_lane_state(kin, road: RoadConfig) -> int:
    """Lane the vehicle is in or heading for: the nearest center when
    driving straight, the next center in the direction of motion during
    a lane change."""
    ratio = kin.y / road.lane_width
    if kin.vy > 0.0:
        lane = math.ceil(ratio)
    elif kin.vy < 0.0:
        lane = math.floor(ratio)
    else:
        lane = round(ratio)
    return min(max(lane, 0), road.lane_count - 1)


@dataclass
class _SceneView:
    """Neighbor context of one vehicle frozen at the previous step."""

    kin: object
    leader: tuple[float, float] | None   # (bumper gap, speed)
    mid_change: bool
    lane: int
    mobil_sides: dict[str, float]        # side -> scalar neighbor-gain term
    side_leaders: dict[str, tuple[float, float] | None]


class BeliefTracker:
    """Maintains one particle set per surrounding vehicle and updates them
    from consecutive observations."""

    def __init__(self, cfg: SpawnConfig, road: RoadConfig,
                 n: int = PARTICLE_COUNT):
        self.cfg = cfg
        self.road = road
        self.n = n
        self.sets: dict[int, ParticleSet] = {}
        self._prev: Observation | None = None

    def step(self, obs: Observation, rng) -> None:
        prev = self._prev
        prev_ids = {ov.vid: ov for ov in prev.vehicles} if prev else {}
        for ov in obs.vehicles:
            if ov.vid not in self.sets:
                self.sets[ov.vid] = init_particles(
                    ov.vid, self.cfg.param_intervals, rng, self.n, self.cfg.delta)
                continue
            if prev is None or ov.vid not in prev_ids:
                continue
            scene = self._scene_view(prev, prev_ids[ov.vid])
            ps = self.sets[ov.vid]
            pred_x, pred_lane = self._predict(scene, ps)
            weight_particles(ps, pred_x, pred_lane, ov.kin.x,
                             observed_lane_state(ov.kin, self.road),
                             self.cfg.sigma_vel)
            self.sets[ov.vid] = resample(ps, rng)
        self._prev = obs

    def hypotheses(self, obs: Observation, rng) -> dict[int, DriverParams]:
        """One sampled parameter bundle per observed vehicle."""
        out = {}
        for ov in obs.vehicles:
            ps = self.sets.get(ov.vid)
            if ps is None:
                out[ov.vid] = nominal_params(self.cfg)
            else:
                out[ov.vid] = sample_hypothesis(ps, rng)
        return out

    # -- internal ------------------------------------------------------

    def _scene_view(self, prev: Observation, ov: ObservedVehicle) -> _SceneView:
        road = self.road
        kin = ov.kin
        mid_change = kin.vy != 0.0
        lane = observed_lane_state(kin, road)
        entries = [(o.kin.x, o.kin.y, o.kin.vx) for o in prev.vehicles
                   if o.vid != ov.vid]
        entries.append((prev.ego.x, prev.ego.y, prev.ego.vx))
        my_lanes = road.occupied_lanes(kin.y)

        def find_leader(lanes) -> tuple[float, float] | None:
            best = None
            for x, y, vx in entries:
                if x <= kin.x:
                    continue
                if any(l in lanes for l in road.occupied_lanes(y)):
                    if best is None or x < best[0]:
                        best = (x, vx)
            if best is None:
                return None
            return (bumper_gap(best[0], kin.x), best[1])

        def find_follower(lane_idx) -> tuple[float, float] | None:
            best = None
            for x, y, vx in entries:
                if x >= kin.x:
                    continue
                if lane_idx in road.occupied_lanes(y):
                    if best is None or x > best[0]:
                        best = (x, vx)
            if best is None:
                return None
            return (bumper_gap(kin.x, best[0]), best[1])

        def find_lane_leader(lane_idx) -> tuple[float, float] | None:
            return find_leader((lane_idx,))

        leader = find_leader(my_lanes)
        sides: dict[str, float] = {}
        side_leaders: dict[str, tuple[float, float] | None] = {}
        if not mid_change:
            nominal = nominal_params(self.cfg)
            mb = self.cfg.max_braking

            def idm_nominal(vx, pair) -> float:
                if pair is None:
                    return idm_acceleration(vx, nominal, None, max_braking=mb)
                gap, lead_vx = pair
                if gap <= 0.0:
                    return -mb
                return idm_acceleration(vx, nominal, gap, lead_vx, max_braking=mb)

            old_follower = find_follower(lane)
            for side, target in (("left", lane + 1), ("right", lane - 1)):
                if not (0 <= target < road.lane_count):
                    continue
                new_leader = find_lane_leader(target)
                new_follower = find_follower(target)
                if new_leader is not None and new_leader[0] <= 0.0:
                    continue  # overlapping: change impossible for any hypothesis
                term = 0.0
                feasible = True
                if new_follower is not None:
                    nf_gap, nf_vx = new_follower
                    if nf_gap <= 0.0:
                        feasible = False
                    else:
                        if new_leader is None:
                            before = idm_nominal(nf_vx, None)
                        else:
                            gap_before = new_leader[0] + nf_gap + kin.length
                            before = idm_nominal(nf_vx, (gap_before, new_leader[1]))
                        after = idm_nominal(nf_vx, (nf_gap, kin.vx))
                        if after < -nominal.b:
                            feasible = False
                        term += after - before
                if feasible and old_follower is not None:
                    of_gap, of_vx = old_follower
                    if of_gap > 0.0:
                        before = idm_nominal(of_vx, (of_gap, kin.vx))
                        if leader is None:
                            after = idm_nominal(of_vx, None)
                        else:
                            gap_after = leader[0] + of_gap + kin.length
                            after = idm_nominal(of_vx, (gap_after, leader[1]))
                        term += after - before
                if feasible:
                    sides[side] = term
                    side_leaders[side] = new_leader
        return _SceneView(kin, leader, mid_change, lane, sides, side_leaders)

    def _predict(self, scene: _SceneView, ps: ParticleSet):
        """One-step noise-free propagation of each hypothesis."""
        kin = scene.kin
        dt = DECISION_DT
        T = ps.column("T")
        a = ps.column("a")
        b = ps.column("b")
        x0 = ps.column("x_dot_0")
        g0 = ps.column("g0")
        p = ps.column("p")
        gap, lead_vx = (scene.leader if scene.leader is not None else (None, 0.0))
        if gap is not None and gap <= 0.0:
            acc = np.full(ps.count, -self.cfg.max_braking)
        else:
            acc = idm_acceleration_arrays(kin.vx, T, a, b, x0, g0, ps.delta,
                                          gap, lead_vx, self.cfg.max_braking)
        v_next = kin.vx + acc * dt
        stopped = v_next < 0.0
        dx = np.where(stopped,
                      np.where(acc < 0.0, kin.vx * kin.vx / (2.0 * np.abs(acc) + 1e-12), 0.0),
                      kin.vx * dt + 0.5 * acc * dt * dt)
        pred_x = kin.x + dx

        if scene.mid_change:
            pred_lane = np.full(ps.count, scene.lane, dtype=int)
            return pred_x, pred_lane

        pred_lane = np.full(ps.count, scene.lane, dtype=int)
        best_inc = np.full(ps.count, -np.inf)
        a_c = acc  # current-lane acceleration doubles as the incentive baseline
        for side, term in scene.mobil_sides.items():
            new_leader = scene.side_leaders[side]
            n_gap, n_vx = (new_leader if new_leader is not None else (None, 0.0))
            abar_c = idm_acceleration_arrays(kin.vx, T, a, b, x0, g0, ps.delta,
                                             n_gap, n_vx, self.cfg.max_braking)
            incentive = (abar_c - a_c) + p * term
            qualifies = incentive > self.cfg.delta_a_threshold
            better = qualifies & (incentive > best_inc)
            target = scene.lane + (1 if side == "left" else -1)
            pred_lane = np.where(better, target, pred_lane)
            best_inc = np.where(better, incentive, best_inc)
        return pred_x, pred_lane
