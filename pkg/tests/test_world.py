import math

import numpy as np
import pytest

from highway_safeguard.world import (
    Action,
    DriverParams,
    EgoState,
    InfeasibleActionError,
    RoadConfig,
    SurroundingVehicle,
    VehicleKinematics,
    WorldState,
    apply_action,
    build_trajectory,
    detect_collisions,
    footprints_overlap,
    observe,
)

ROAD = RoadConfig()


def kin(x=0.0, y=0.0, vx=30.0):
    return VehicleKinematics(x, y, vx)


def params():
    return DriverParams(0.4, 1.4, 2.0, 31.0, 0.3, 0.2)


class TestApplyAction:
    def test_hard_braking_step(self):
        out = apply_action(kin(0.0, 0.0, 30.0), Action(-4.0, 0.0), 0.75, ROAD)
        assert out.x == pytest.approx(21.375, abs=1e-12)
        assert out.vx == pytest.approx(27.0, abs=1e-12)

    def test_coasting_identity(self):
        out = apply_action(kin(12.0, 4.0, 24.0), Action(0.0, 0.0), 0.75, ROAD)
        assert out.x == pytest.approx(12.0 + 24.0 * 0.75)
        assert out.vx == 24.0
        assert out.y == 4.0

    def test_lateral_increment_matches_lateral_rate(self):
        out = apply_action(kin(0.0, 0.0, 30.0), Action(0.0, 1.0 / 6.0), 0.75, ROAD)
        assert out.y == pytest.approx(4.0 / 6.0)
        assert out.y / 0.75 == pytest.approx(0.889, abs=1e-3)

    def test_speed_clamps_at_zero(self):
        out = apply_action(kin(0.0, 0.0, 2.0), Action(-4.0, 0.0), 0.75, ROAD)
        assert out.vx == 0.0
        # stops after travelling v^2 / (2|a|)
        assert out.x == pytest.approx(4.0 / 8.0)

    def test_off_road_raises(self):
        with pytest.raises(InfeasibleActionError):
            apply_action(kin(0.0, 8.0, 30.0), Action(0.0, 1.0 / 6.0), 0.75, ROAD)

    def test_bad_lane_fraction_raises(self):
        with pytest.raises(InfeasibleActionError):
            apply_action(kin(), Action(0.0, 0.5), 0.75, ROAD)


class TestTrajectory:
    def test_zero_action_straight(self):
        seg = build_trajectory(kin(0.0, 4.0, 30.0), Action(0.0, 0.0), 0.75, ROAD)
        for t in np.linspace(0.0, 0.75, 7):
            x, y = seg.position(t)
            assert x == pytest.approx(30.0 * t)
            assert y == 4.0

    @pytest.mark.parametrize("ax,gamma", [(-4.0, 0.0), (1.5, 1.0 / 6.0),
                                          (0.0, -1.0 / 6.0), (-1.5, 1.0 / 6.0)])
    def test_endpoints_match_kinematic_update(self, ax, gamma):
        start = kin(5.0, 4.0, 28.0)
        action = Action(ax, gamma)
        seg = build_trajectory(start, action, 0.75, ROAD)
        end = apply_action(start, action, 0.75, ROAD)
        x, y = seg.position(0.0)
        assert x == pytest.approx(start.x, abs=1e-9)
        assert y == pytest.approx(start.y, abs=1e-9)
        assert seg.speed(0.0) == pytest.approx(start.vx, abs=1e-9)
        x, y = seg.position(0.75)
        assert x == pytest.approx(end.x, abs=1e-9)
        assert y == pytest.approx(end.y, abs=1e-9)
        assert seg.speed(0.75) == pytest.approx(end.vx, abs=1e-9)

    def test_lateral_midpoint_is_half_increment(self):
        seg = build_trajectory(kin(0.0, 0.0, 30.0), Action(0.0, 1.0 / 6.0), 0.75, ROAD)
        _, y = seg.position(0.375)
        assert y == pytest.approx(0.5 * (4.0 / 6.0), abs=1e-12)

    def test_lateral_speed_zero_at_endpoints(self):
        seg = build_trajectory(kin(0.0, 0.0, 30.0), Action(0.0, 1.0 / 6.0), 0.75, ROAD)
        assert seg.lateral_speed(0.0) == pytest.approx(0.0, abs=1e-12)
        assert seg.lateral_speed(0.75) == pytest.approx(0.0, abs=1e-9)

    def test_chained_actions_consistent_with_segments(self):
        rng = np.random.default_rng(7)
        state = kin(0.0, 4.0, 30.0)
        for _ in range(60):
            ax = rng.choice([-4.0, -1.5, 0.0, 1.5])
            lat = 0
            y_next = state.y + lat * 4.0 / 6.0
            if ROAD.on_road(state.y + 4.0 / 6.0) and rng.random() < 0.3:
                lat = int(rng.choice([-1, 1]))
                if not ROAD.on_road(state.y + lat * 4.0 / 6.0):
                    lat = 0
            action = Action(float(ax), lat / 6.0)
            seg = build_trajectory(state, action, 0.75, ROAD)
            end = apply_action(state, action, 0.75, ROAD)
            x, y = seg.position(0.75)
            assert x == pytest.approx(end.x, abs=1e-9)
            assert y == pytest.approx(end.y, abs=1e-9)
            assert seg.speed(0.75) == pytest.approx(end.vx, abs=1e-9)
            state = end


class TestCollisions:
    def make_world(self, entries):
        vehicles = [SurroundingVehicle(i + 1, x, y, 30.0, params(), ROAD.lane_index(y))
                    for i, (x, y) in enumerate(entries[1:])]
        ego = EgoState(entries[0][0], 30.0,
                       y_sixths=round(entries[0][1] / (4.0 / 6.0)))
        return WorldState(ROAD, 0.0, ego, vehicles)

    def test_longitudinal_overlap(self):
        assert detect_collisions(self.make_world([(0.0, 4.0), (3.9, 4.0)]))
        assert not detect_collisions(self.make_world([(0.0, 4.0), (4.1, 4.0)]))

    def test_touching_widths_are_safe(self):
        assert not detect_collisions(self.make_world([(0.0, 4.0), (2.0, 6.0)]))
        assert footprints_overlap(0.0, 4.0, 2.0, 5.9)

    def test_symmetry_and_translation_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            x1, x2 = rng.uniform(-20, 20, 2)
            y1, y2 = rng.uniform(0, 8, 2)
            a = footprints_overlap(x1, y1, x2, y2)
            assert a == footprints_overlap(x2, y2, x1, y1)
            shift = rng.uniform(-100, 100)
            assert a == footprints_overlap(x1 + shift, y1, x2 + shift, y2)

    def test_pairs_reported_with_ids(self):
        events = detect_collisions(self.make_world([(0.0, 4.0), (3.0, 4.0), (50.0, 4.0)]))
        assert [(e.first_id, e.second_id) for e in events] == [(0, 1)]


class TestObservation:
    def make_world(self):
        vehicles = [
            SurroundingVehicle(1, 150.0, 4.0, 30.0, params(), 1),
            SurroundingVehicle(2, -50.0, 0.0, 28.0, params(), 0),
            SurroundingVehicle(3, 99.0, 8.0, 33.0, params(), 2),
        ]
        return WorldState(ROAD, 0.0, EgoState(0.0, 30.0), vehicles)

    def test_range_window(self):
        obs = observe(self.make_world())
        ids = [ov.vid for ov in obs.vehicles]
        assert ids == [2, 3]

    def test_noise_off_is_exact(self):
        obs = observe(self.make_world())
        v2 = next(ov for ov in obs.vehicles if ov.vid == 2)
        assert v2.kin.x == -50.0 and v2.kin.y == 0.0 and v2.kin.vx == 28.0

    def test_noise_perturbs_positions_only(self):
        rng = np.random.default_rng(0)
        obs = observe(self.make_world(), noise_std=0.5, rng=rng)
        v2 = next(ov for ov in obs.vehicles if ov.vid == 2)
        assert v2.kin.x != -50.0
        assert v2.kin.vx == 28.0

    def test_hidden_params_not_observable(self):
        obs = observe(self.make_world())
        assert "params" not in obs.vehicles[0]._fields
        assert not hasattr(obs.vehicles[0], "params")


class TestEgoLateralGrid:
    def test_six_steps_is_exactly_one_lane(self):
        ego = EgoState(0.0, 30.0, y_sixths=6)
        for _ in range(6):
            ego.y_sixths += 1
        assert ego.y(ROAD) == 8.0
        assert ego.lane(ROAD) == 2
        assert not ego.mid_change()

    def test_mid_change_flag(self):
        ego = EgoState(0.0, 30.0, y_sixths=8, lc_dir=1)
        assert ego.mid_change()


class TestRoadConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            RoadConfig(lane_count=0)
        with pytest.raises(ValueError):
            RoadConfig(corridor_half_length=50.0)

    def test_occupied_lanes(self):
        assert ROAD.occupied_lanes(4.0) == (1,)
        assert ROAD.occupied_lanes(2.0) == (0, 1)
        assert ROAD.occupied_lanes(0.0) == (0,)

    def test_lane_index_clamps(self):
        assert ROAD.lane_index(-3.0) == 0
        assert ROAD.lane_index(11.0) == 2
