import math

import numpy as np
import pytest

from highway_safeguard.policies import (
    AVOIDANCE_ACCELS,
    CandidateActionSet,
    GippsParams,
    HumanLikeParams,
    commit_lateral,
    enumerate_candidates,
    gipps_accel,
    gipps_action,
    gipps_safe_speed,
    human_like_action,
)
from highway_safeguard.traffic import idm_acceleration
from highway_safeguard.world import (
    Action,
    Observation,
    ObservedVehicle,
    RoadConfig,
    VehicleKinematics,
    bumper_gap,
)

ROAD = RoadConfig()
DT = 0.75


def make_obs(ego_vx=30.0, ego_y=4.0, vehicles=(), mid_change=False, lc_dir=0):
    return Observation(
        time=0.0,
        ego=VehicleKinematics(0.0, ego_y, ego_vx),
        ego_lane=ROAD.lane_index(ego_y),
        ego_mid_change=mid_change,
        ego_lc_dir=lc_dir,
        vehicles=tuple(ObservedVehicle(i + 1, VehicleKinematics(x, y, vx))
                       for i, (x, y, vx) in enumerate(vehicles)),
    )


def max_safe_speed_numeric(gap, v_f, brake=4.0, dt=DT):
    """Largest speed from which one reaction step at constant speed
    followed by hard braking still stops behind the leader's worst-case
    stop point.  Bisection on the closed-form stopping distances."""
    def safe(v):
        ego_stop = v * dt + v * v / (2.0 * brake)
        front_stop = gap + v_f * v_f / (2.0 * brake)
        return ego_stop <= front_stop

    lo, hi = 0.0, 80.0
    if not safe(lo):
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if safe(mid):
            lo = mid
        else:
            hi = mid
    return lo


class TestGipps:
    def test_free_road_drives_to_desired_speed(self):
        p = GippsParams()
        obs = make_obs(ego_vx=20.0)
        a = gipps_action(obs, p, ROAD)
        assert a.gamma_lc == 0.0
        assert a.ax == p.a_cmax  # (27 - 20) / 0.75 clamps at the comfort bound

    def test_equilibrium_at_desired_speed(self):
        p = GippsParams()
        obs = make_obs(ego_vx=27.0, vehicles=[(95.0, 4.0, 35.0)])
        a = gipps_action(obs, p, ROAD)
        assert a.ax == pytest.approx(0.0, abs=1e-9)

    def test_hand_case_clamps_to_comfort_braking(self):
        p = GippsParams()
        v_g = gipps_safe_speed(30.0, 30.0, 20.0, p)
        assert v_g == pytest.approx(-6.0 + math.sqrt(496.0), abs=1e-12)
        ax = gipps_accel(30.0, 30.0, 20.0, p)
        assert ax == p.a_cmin  # (16.27 - 30)/0.75 clamps at -1.5

    def test_negative_discriminant_means_stop(self):
        p = GippsParams()
        assert gipps_safe_speed(40.0, 1.0, 0.0, p) == 0.0

    def test_safe_speed_below_numeric_bound(self):
        p = GippsParams()
        rng = np.random.default_rng(2)
        for _ in range(3000):
            gap = rng.uniform(0.5, 150.0)
            v_e = rng.uniform(0.0, 40.0)
            v_f = rng.uniform(0.0, 40.0)
            v_g = gipps_safe_speed(v_e, gap, v_f, p)
            bound = max_safe_speed_numeric(gap, v_f)
            assert v_g <= bound + 1e-6

    def test_monotone_in_gap_and_front_speed(self):
        p = GippsParams()
        rng = np.random.default_rng(3)
        for _ in range(2000):
            gap = rng.uniform(1.0, 120.0)
            v_e = rng.uniform(0.0, 40.0)
            v_f = rng.uniform(0.0, 40.0)
            v_g = gipps_safe_speed(v_e, gap, v_f, p)
            assert gipps_safe_speed(v_e, gap + rng.uniform(0.1, 20.0), v_f, p) >= v_g - 1e-12
            assert gipps_safe_speed(v_e, gap, v_f + rng.uniform(0.1, 10.0), p) >= v_g - 1e-12

    def test_comfort_bounds_respected(self):
        p = GippsParams()
        rng = np.random.default_rng(4)
        for _ in range(2000):
            ax = gipps_accel(rng.uniform(0, 40),
                             rng.uniform(0.2, 120) if rng.random() < 0.9 else None,
                             rng.uniform(0, 40), p)
            assert p.a_cmin <= ax <= p.a_cmax

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            GippsParams(a_cmin=0.5)
        with pytest.raises(ValueError):
            GippsParams(k=0.0)


class TestHumanLike:
    def test_empty_road_at_desired_speed_idles(self):
        hp = HumanLikeParams()
        a = human_like_action(make_obs(ego_vx=27.0), hp, ROAD)
        assert a.ax == pytest.approx(0.0, abs=1e-9)
        assert a.gamma_lc == 0.0

    def test_longitudinal_matches_car_following_model(self):
        hp = HumanLikeParams()
        obs = make_obs(ego_vx=27.0, vehicles=[(40.0, 4.0, 22.0)])
        a = human_like_action(obs, hp, ROAD)
        expected = idm_acceleration(27.0, hp.driver(), bumper_gap(40.0, 0.0), 22.0)
        assert a.ax == pytest.approx(expected, abs=1e-12)

    def test_overtakes_slow_leader_into_empty_lane(self):
        hp = HumanLikeParams()
        obs = make_obs(ego_vx=27.0, ego_y=0.0, vehicles=[(14.0, 0.0, 16.0)])
        a = human_like_action(obs, hp, ROAD)
        assert a.lat_step == 1  # left is the only available side from lane 0

    def test_mid_change_continues_regardless(self):
        hp = HumanLikeParams()
        obs = make_obs(ego_vx=27.0, ego_y=4.0 + 2.0 / 3.0,
                       mid_change=True, lc_dir=1)
        a = human_like_action(obs, hp, ROAD)
        assert a.lat_step == 1

    def test_blocked_thresholds_reduce_to_pure_car_following(self):
        hp = HumanLikeParams(delta_a_threshold=1e9)
        rng = np.random.default_rng(5)
        for _ in range(100):
            vehicles = [(rng.uniform(6, 90), float(rng.choice([0.0, 4.0, 8.0])),
                         rng.uniform(10, 35)) for _ in range(4)]
            obs = make_obs(ego_vx=rng.uniform(15, 35), vehicles=vehicles)
            a = human_like_action(obs, hp, ROAD)
            assert a.lat_step == 0


class TestCommitLateral:
    def test_mid_change_forces_continuation(self):
        obs = make_obs(mid_change=True, lc_dir=-1)
        out = commit_lateral(obs, Action(-4.0, 0.0))
        assert out == Action(-4.0, -1.0 / 6.0)

    def test_reversal_and_straight_pass_through(self):
        obs = make_obs(mid_change=True, lc_dir=-1)
        assert commit_lateral(obs, Action(0.0, 1.0 / 6.0)) == Action(0.0, 1.0 / 6.0)
        obs2 = make_obs()
        assert commit_lateral(obs2, Action(0.0, 0.0)) == Action(0.0, 0.0)


class TestCandidates:
    def test_policy_action_first_and_full_braking_present(self):
        obs = make_obs(ego_vx=30.0)
        a_av = Action(0.37, 0.0)
        cands = enumerate_candidates(obs, a_av, ROAD)
        assert cands.all()[0] == a_av
        assert Action(-4.0, 0.0) in cands.all()

    def test_rightmost_lane_has_no_right_option(self):
        obs = make_obs(ego_vx=30.0, ego_y=0.0)
        cands = enumerate_candidates(obs, Action(0.0, 0.0), ROAD)
        assert all(a.lat_step >= 0 for a in cands.all())

    def test_speed_limit_filters_acceleration(self):
        obs = make_obs(ego_vx=39.5)
        cands = enumerate_candidates(obs, Action(0.0, 0.0), ROAD)
        assert all(a.ax < 1.5 for a in cands.all())

    def test_min_speed_filter_keeps_hard_brake_fallback(self):
        obs = make_obs(ego_vx=5.5)
        cands = enumerate_candidates(obs, Action(0.0, 0.0), ROAD)
        acts = cands.all()
        assert Action(-4.0, 0.0) in acts
        assert Action(-1.5, 0.0) not in acts  # would drop below the minimum
        assert Action(-4.0, 1.0 / 6.0) not in acts

    def test_mid_change_restricted_to_continue_or_reverse(self):
        obs = make_obs(ego_vx=30.0, ego_y=4.0 + 2.0 / 3.0,
                       mid_change=True, lc_dir=1)
        cands = enumerate_candidates(obs, Action(0.0, 1.0 / 6.0), ROAD)
        assert {a.lat_step for a in cands.all()} == {1, -1}

    def test_brake_only_mode_never_steers(self):
        obs = make_obs(ego_vx=30.0)
        cands = enumerate_candidates(obs, Action(0.0, 0.0), ROAD,
                                     allow_lane_change=False)
        assert {a.lat_step for a in cands.all()} == {0}

    def test_duplicate_of_policy_action_removed(self):
        obs = make_obs(ego_vx=30.0)
        a_av = Action(-1.5, 0.0)
        cands = enumerate_candidates(obs, a_av, ROAD)
        assert cands.all().count(a_av) == 1
