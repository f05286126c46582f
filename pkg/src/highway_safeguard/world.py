"""Road geometry, vehicle kinematics, action expansion and collision detection.

Coordinates: x runs along the road in the driving direction, y is lateral
with the center line of the rightmost lane at 0.  Lane centers sit at
multiples of the lane width.  The ego's lateral position is tracked on a
grid of sixths of a lane so that six consecutive lane-change increments
land exactly on the next lane center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

# Decision step used throughout; kinematic substeps refine it 10x for
# collision checking.
DECISION_DT = 0.75
SUBSTEPS = 10
SUBSTEP_DT = DECISION_DT / SUBSTEPS

OBSERVATION_RANGE = 100.0

VEHICLE_LENGTH = 4.0
VEHICLE_WIDTH = 2.0

LATERAL_RATE = 0.89  # m/s, lateral speed of an in-progress lane change


class InfeasibleActionError(ValueError):
    """Raised when an action would leave the road."""


class AlreadyCollidingError(ValueError):
    """Raised when a car-following gap is not positive."""


@dataclass(frozen=True)
class RoadConfig:
    lane_count: int = 3
    lane_width: float = 4.0
    speed_limit: float = 40.0
    corridor_half_length: float = 600.0

    def __post_init__(self):
        if self.lane_count < 1:
            raise ValueError("lane_count must be >= 1")
        if self.lane_width <= 0:
            raise ValueError("lane_width must be positive")
        if self.corridor_half_length < OBSERVATION_RANGE:
            raise ValueError("corridor must cover the observation range")

    def lane_center(self, lane: int) -> float:
        return lane * self.lane_width

    def lane_index(self, y: float) -> int:
        """Nearest lane center, clamped to the road."""
        i = int(round(y / self.lane_width))
        return min(max(i, 0), self.lane_count - 1)

    def occupied_lanes(self, y: float) -> tuple[int, ...]:
        """Lanes whose span overlaps a vehicle footprint centered at y."""
        ratio = y / self.lane_width
        center = round(ratio)
        if ratio == center and 0 <= center < self.lane_count:
            return (center,)  # exactly on a center: a single lane
        half = self.lane_width / 2.0 + VEHICLE_WIDTH / 2.0
        lanes = []
        for i in range(self.lane_count):
            if abs(y - self.lane_center(i)) < half:
                lanes.append(i)
        return tuple(lanes)

    def on_road(self, y: float) -> bool:
        """Footprint stays on the asphalt."""
        lo = -self.lane_width / 2.0 + VEHICLE_WIDTH / 2.0
        hi = (self.lane_count - 1) * self.lane_width + self.lane_width / 2.0 - VEHICLE_WIDTH / 2.0
        return lo <= y <= hi

    def in_maneuver_band(self, y: float) -> bool:
        """Lateral position reachable without entering a missing lane:
        between the outermost lane centers."""
        return 0.0 <= y <= (self.lane_count - 1) * self.lane_width


class VehicleKinematics(NamedTuple):
    x: float
    y: float
    vx: float
    vy: float = 0.0
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH


class Action(NamedTuple):
    """Longitudinal acceleration plus a lane fraction in {0, +1/6, -1/6}.

    The lane fraction is validated where actions meet the dynamics
    (apply_action / build_trajectory)."""

    ax: float
    gamma_lc: float = 0.0

    @property
    def lat_step(self) -> int:
        return round(self.gamma_lc * 6.0)


GAMMA_LEFT = 1.0 / 6.0
GAMMA_RIGHT = -1.0 / 6.0


def bumper_gap(lead_x: float, follow_x: float,
               lead_length: float = VEHICLE_LENGTH,
               follow_length: float = VEHICLE_LENGTH) -> float:
    """Bumper-to-bumper gap between a leader and its follower."""
    return lead_x - follow_x - 0.5 * (lead_length + follow_length)


def longitudinal_step(x: float, vx: float, ax: float, dt: float) -> tuple[float, float]:
    """Constant-acceleration update with the speed clamped at zero.

    Once the speed reaches zero the residual (negative) acceleration is
    dropped: vehicles do not reverse.
    """
    v_end = vx + ax * dt
    if v_end >= 0.0:
        return x + vx * dt + 0.5 * ax * dt * dt, v_end
    if vx <= 0.0:
        return x, 0.0
    t_stop = vx / -ax
    return x + 0.5 * vx * t_stop, 0.0


def apply_action(ego: VehicleKinematics, a: Action, dt: float,
                 road: RoadConfig) -> VehicleKinematics:
    """One decision-step kinematic update of the ego vehicle."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if a.lat_step not in (-1, 0, 1):
        raise InfeasibleActionError("gamma_lc must be 0 or +-1/6")
    y_new = ego.y + a.gamma_lc * road.lane_width
    if not road.in_maneuver_band(y_new):
        raise InfeasibleActionError(f"target lateral position {y_new:.2f} leaves the road")
    x_new, v_new = longitudinal_step(ego.x, ego.vx, a.ax, dt)
    return VehicleKinematics(x_new, y_new, v_new, 0.0, ego.length, ego.width)


@dataclass(frozen=True)
class TrajectorySegment:
    """One decision step expanded into smooth longitudinal/lateral profiles.

    The longitudinal profile is the commanded constant acceleration
    (with the stop clamp); the lateral profile is the minimum-jerk
    quintic with zero lateral speed and acceleration at both ends.
    """

    x0: float
    v0: float
    ax: float
    y0: float
    y1: float
    duration: float
    t_stop: float  # time at which the speed hits zero, inf if never
    lateral_coeffs: tuple[float, float, float]  # quintic c3, c4, c5 on s = t/T

    @classmethod
    def build(cls, x0: float, v0: float, ax: float, y0: float, y1: float,
              duration: float) -> "TrajectorySegment":
        if ax < 0 and v0 + ax * duration < 0:
            t_stop = v0 / -ax if ax != 0 else math.inf
        else:
            t_stop = math.inf
        dy = y1 - y0
        return cls(x0, v0, ax, y0, y1, duration, t_stop,
                   (10.0 * dy, -15.0 * dy, 6.0 * dy))

    def position(self, t: float) -> tuple[float, float]:
        if t >= self.t_stop:
            x = self.x0 + 0.5 * self.v0 * self.t_stop
        else:
            x = self.x0 + self.v0 * t + 0.5 * self.ax * t * t
        s = t / self.duration
        s3 = s * s * s
        c3, c4, c5 = self.lateral_coeffs
        y = self.y0 + s3 * (c3 + s * (c4 + s * c5))
        return x, y

    def speed(self, t: float) -> float:
        if t >= self.t_stop:
            return 0.0
        return self.v0 + self.ax * t

    def lateral_speed(self, t: float) -> float:
        s = t / self.duration
        s2 = s * s
        c3, c4, c5 = self.lateral_coeffs
        return (3.0 * c3 * s2 + 4.0 * c4 * s2 * s + 5.0 * c5 * s2 * s2) / self.duration

    def end_state(self) -> tuple[float, float, float]:
        x, y = self.position(self.duration)
        return x, y, self.speed(self.duration)


def build_trajectory(start: VehicleKinematics, a: Action, dt: float,
                     road: RoadConfig) -> TrajectorySegment:
    """Expand an action into the smooth profile the ego tracks for one step."""
    end = apply_action(start, a, dt, road)
    return TrajectorySegment.build(start.x, start.vx, a.ax, start.y, end.y, dt)


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    first_id: int
    second_id: int
    dx: float
    dy: float


def footprints_overlap(x1: float, y1: float, x2: float, y2: float,
                       length: float = VEHICLE_LENGTH,
                       width: float = VEHICLE_WIDTH) -> bool:
    """Strict overlap of two axis-aligned footprints; touching is safe."""
    return abs(x1 - x2) < length and abs(y1 - y2) < width


@dataclass(slots=True)
class DriverParams:
    """Car-following and lane-change parameter bundle of one driver.

    b is stored as a positive deceleration magnitude.
    """

    T: float
    a: float
    b: float
    x_dot_0: float
    g0: float
    p: float
    delta: float = 4.0

    def as_tuple(self) -> tuple[float, ...]:
        return (self.T, self.a, self.b, self.x_dot_0, self.g0, self.p)


@dataclass
class EgoState:
    """Ego runtime state; lateral position lives on the sixth-of-lane grid."""

    x: float
    vx: float
    y_sixths: int = 6  # middle lane of a three-lane road
    lc_dir: int = 0    # -1 right, 0 none, +1 left

    def y(self, road: RoadConfig) -> float:
        return self.y_sixths * road.lane_width / 6.0

    def lane(self, road: RoadConfig) -> int:
        return road.lane_index(self.y(road))

    def mid_change(self) -> bool:
        return self.y_sixths % 6 != 0

    def kinematics(self, road: RoadConfig) -> VehicleKinematics:
        return VehicleKinematics(self.x, self.y(road), self.vx, 0.0)

    def copy(self) -> "EgoState":
        return EgoState(self.x, self.vx, self.y_sixths, self.lc_dir)


class SurroundingVehicle:
    """Runtime state of one simulated surrounding vehicle."""

    __slots__ = ("vid", "x", "y", "vx", "accel", "params", "lane", "target_lane")

    def __init__(self, vid: int, x: float, y: float, vx: float,
                 params: DriverParams, lane: int, target_lane: int | None = None,
                 accel: float = 0.0):
        self.vid = vid
        self.x = x
        self.y = y
        self.vx = vx
        self.accel = accel
        self.params = params
        self.lane = lane
        self.target_lane = lane if target_lane is None else target_lane

    @property
    def changing(self) -> bool:
        return self.target_lane != self.lane

    def vy(self) -> float:
        if not self.changing:
            return 0.0
        return LATERAL_RATE if self.target_lane > self.lane else -LATERAL_RATE

    def kinematics(self) -> VehicleKinematics:
        return VehicleKinematics(self.x, self.y, self.vx, self.vy())

    def copy(self) -> "SurroundingVehicle":
        return SurroundingVehicle(self.vid, self.x, self.y, self.vx, self.params,
                                  self.lane, self.target_lane, self.accel)


@dataclass
class WorldState:
    """Full simulation state; surrounding drivers' params are hidden from
    the ego and only reachable through the simulator itself."""

    road: RoadConfig
    time: float
    ego: EgoState
    vehicles: list[SurroundingVehicle] = field(default_factory=list)
    next_id: int = 1
    target_count: int = 0
    # every parameter vector sampled while generating this episode,
    # recorded for importance-sampling calibration; None disables logging
    spawn_log: list | None = None

    def copy(self) -> "WorldState":
        return WorldState(self.road, self.time, self.ego.copy(),
                          [v.copy() for v in self.vehicles],
                          self.next_id, self.target_count,
                          None if self.spawn_log is None else list(self.spawn_log))

    def vehicle_ids(self) -> list[int]:
        return [v.vid for v in self.vehicles]


class ObservedVehicle(NamedTuple):
    """What the ego can see of one surrounding vehicle: kinematics only."""

    vid: int
    kin: VehicleKinematics


@dataclass(frozen=True)
class Observation:
    time: float
    ego: VehicleKinematics
    ego_lane: int
    ego_mid_change: bool
    ego_lc_dir: int
    vehicles: tuple[ObservedVehicle, ...]


def observe(state: WorldState, noise_std: float = 0.0, rng=None) -> Observation:
    """Bounded, parameter-free view of the world around the ego.

    Every vehicle within the observation range is reported with its
    kinematics; hidden driver parameters are not part of the returned
    type.  Optional zero-mean Gaussian noise perturbs observed positions.
    """
    road = state.road
    ego_kin = state.ego.kinematics(road)
    seen = []
    for v in state.vehicles:
        if abs(v.x - state.ego.x) <= OBSERVATION_RANGE:
            kin = v.kinematics()
            if noise_std > 0.0:
                kin = kin._replace(x=kin.x + noise_std * rng.standard_normal(),
                                   y=kin.y + noise_std * rng.standard_normal())
            seen.append(ObservedVehicle(v.vid, kin))
    seen.sort(key=lambda o: o.vid)
    return Observation(time=state.time, ego=ego_kin,
                       ego_lane=state.ego.lane(road),
                       ego_mid_change=state.ego.mid_change(),
                       ego_lc_dir=state.ego.lc_dir,
                       vehicles=tuple(seen))


def observed_leader(obs: Observation, road: RoadConfig) -> ObservedVehicle | None:
    """Nearest observed vehicle ahead of the ego sharing an occupied lane."""
    ego_lanes = road.occupied_lanes(obs.ego.y)
    best = None
    for ov in obs.vehicles:
        if ov.kin.x <= obs.ego.x:
            continue
        lanes = road.occupied_lanes(ov.kin.y)
        if any(l in ego_lanes for l in lanes):
            if best is None or ov.kin.x < best.kin.x:
                best = ov
    return best


def lane_leader(obs: Observation, road: RoadConfig, lane: int,
                x0: float) -> ObservedVehicle | None:
    """Nearest observed vehicle ahead of x0 occupying the given lane."""
    best = None
    for ov in obs.vehicles:
        if ov.kin.x <= x0:
            continue
        if lane in road.occupied_lanes(ov.kin.y):
            if best is None or ov.kin.x < best.kin.x:
                best = ov
    return best


def lane_follower(obs: Observation, road: RoadConfig, lane: int,
                  x0: float) -> ObservedVehicle | None:
    """Nearest observed vehicle behind x0 occupying the given lane."""
    best = None
    for ov in obs.vehicles:
        if ov.kin.x >= x0:
            continue
        if lane in road.occupied_lanes(ov.kin.y):
            if best is None or ov.kin.x > best.kin.x:
                best = ov
    return best


def detect_collisions(state: WorldState) -> list[CollisionEvent]:
    """Every strictly overlapping footprint pair, ego included (ego id 0)."""
    road = state.road
    entries = [(state.ego.x, state.ego.y(road), 0)]
    entries.extend((v.x, v.y, v.vid) for v in state.vehicles)
    entries.sort()
    events = []
    n = len(entries)
    for i in range(n):
        xi, yi, idi = entries[i]
        for j in range(i + 1, n):
            xj, yj, idj = entries[j]
            if xj - xi >= VEHICLE_LENGTH:
                break
            if abs(yj - yi) < VEHICLE_WIDTH:
                a, b = sorted((idi, idj))
                events.append(CollisionEvent(state.time, a, b, xj - xi, yj - yi))
    events.sort(key=lambda e: (e.first_id, e.second_id))
    return events
