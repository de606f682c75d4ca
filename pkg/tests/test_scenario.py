import math

import numpy as np
import pytest

from navrisk.scenario import (
    EGO_ID,
    ActorCommand,
    ActorState,
    CaseStudyParams,
    Phase,
    RoadMap,
    Scenario,
    ScenarioError,
    Trajectory,
    generate_case_study,
    load_scenario,
    run_phase_script,
    save_scenario,
    slice_world,
    wrap_angle,
)


def make_straight(actor_id="a", n=10, speed=5.0, dt=0.1, y=1.75):
    states = tuple(
        ActorState(speed * dt * i, y, 0.0, speed) for i in range(n + 1))
    return Trajectory(actor_id, 0, dt, states)


def tiny_scenario(n=10):
    road = RoadMap(2, 3.5, 200.0, 15.0)
    trajs = {"a": make_straight("a", n), "b": make_straight("b", n, y=5.25)}
    return Scenario(
        map=road, npc_trajectories=trajs,
        ego_initial=ActorState(0.0, 1.75, 0.0, 5.0),
        horizon_ticks=n, dt=0.1,
        actor_radius={"a": 1.2, "b": 1.2, EGO_ID: 1.2})


class TestTypes:
    def test_negative_speed_rejected(self):
        with pytest.raises(ScenarioError):
            ActorState(0, 0, 0, -1.0)

    def test_heading_range_enforced(self):
        with pytest.raises(ScenarioError):
            ActorState(0, 0, 4.0, 1.0)

    def test_wrap_angle(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

    def test_empty_trajectory_rejected(self):
        with pytest.raises(ScenarioError):
            Trajectory("a", 0, 0.1, ())

    def test_kinematic_check_passes_for_consistent(self):
        make_straight().check_kinematics()

    def test_kinematic_check_rejects_teleport(self):
        states = (ActorState(0, 0, 0, 1.0), ActorState(50, 0, 0, 1.0))
        with pytest.raises(ScenarioError, match="implied speed"):
            Trajectory("a", 0, 0.1, states).check_kinematics()

    def test_lane_helpers(self):
        road = RoadMap(3, 3.5, 100.0, 10.0)
        assert road.lane_center(0) == pytest.approx(1.75)
        assert road.lane_center(2) == pytest.approx(8.75)
        assert road.lane_of(1.0) == 0
        assert road.lane_of(9.0) == 2
        assert road.width == pytest.approx(10.5)

    def test_ego_id_reserved(self):
        road = RoadMap(1, 3.5, 100.0, 10.0)
        traj = make_straight(EGO_ID)
        with pytest.raises(ScenarioError, match="reserved"):
            Scenario(road, {EGO_ID: traj}, ActorState(0, 1, 0, 1), 10, 0.1,
                     {EGO_ID: 1.0})


class TestSliceWorld:
    def test_identity_window(self):
        s = tiny_scenario()
        out = slice_world(s, 0, s.horizon_ticks)
        assert out.keys() == s.npc_trajectories.keys()
        for aid in out:
            assert out[aid].states == s.npc_trajectories[aid].states

    def test_zero_horizon_gives_single_states(self):
        s = tiny_scenario()
        out = slice_world(s, 4, 0)
        for aid, traj in out.items():
            assert len(traj) == 1
            assert traj.start_tick == 4
            assert traj.states[0] == s.npc_trajectories[aid].states[4]

    def test_out_of_range_rejected(self):
        s = tiny_scenario()
        with pytest.raises(ScenarioError):
            slice_world(s, 5, 20)

    def test_splice_oracle(self):
        # slice(t, k) + slice(t+k, m) minus the duplicated boundary state
        # must reproduce slice(t, k+m), over random windows.
        s = tiny_scenario(n=40)
        rng = np.random.default_rng(7)
        for _ in range(25):
            t = int(rng.integers(0, 20))
            k = int(rng.integers(1, 10))
            m = int(rng.integers(1, 10))
            left = slice_world(s, t, k)
            right = slice_world(s, t + k, m)
            whole = slice_world(s, t, k + m)
            for aid in whole:
                spliced = left[aid].states + right[aid].states[1:]
                assert spliced == whole[aid].states


class TestPhaseScript:
    def test_braking_stop_ticks_match_closed_form(self):
        # discrete braking from v at rate a stops after ceil(v / (a*dt)) ticks
        road = RoadMap(1, 3.5, 100.0, 10.0)
        v0, decel, dt = 2.78, 6.0, 0.1
        phases = [Phase("brake", ("stopped", "a"),
                        {"a": ActorCommand(target_speed=0.0, decel=decel)})]
        trajs, spans = run_phase_script(
            phases, {"a": ActorState(0.0, 1.75, 0.0, v0)}, road, dt,
            tail_ticks=3)
        expected_ticks = math.ceil(v0 / (decel * dt))
        assert expected_ticks == 5
        speeds = trajs["a"].speeds
        assert speeds[expected_ticks] == 0.0
        assert speeds[expected_ticks - 1] > 0.0
        # trapezoidal stopping distance matches v^2/(2a) to tick resolution
        stop_x = trajs["a"].states[expected_ticks].position_x
        assert abs(stop_x - v0 ** 2 / (2 * decel)) < v0 * dt

    def test_constant_speed_displacement_exact(self):
        road = RoadMap(1, 3.5, 500.0, 10.0)
        phases = [Phase("cruise", ("ticks", 50))]
        trajs, _ = run_phase_script(
            phases, {"a": ActorState(0.0, 1.75, 0.0, 4.0)}, road, 0.1)
        xs = trajs["a"].xy[:, 0]
        steps = np.diff(xs)
        assert np.all(np.abs(steps - 0.4) < 1e-6)
        assert np.all(np.abs(trajs["a"].speeds - 4.0) < 1e-9)

    def test_triggers_fire_once_in_order(self):
        road = RoadMap(2, 3.5, 500.0, 10.0)
        phases = [
            Phase("accel", ("speeds_settled", 0.05),
                  {"a": ActorCommand(target_speed=5.0)}),
            Phase("hold", ("ticks", 20)),
            Phase("change", ("lane_settled", "a"),
                  {"a": ActorCommand(target_lane=1, lane_change_duration=1.0)}),
        ]
        init = {"a": ActorState(0.0, 1.75, 0.0, 0.0)}
        trajs, spans = run_phase_script(phases, init, road, 0.1)
        names = [p.name for p in spans]
        assert names == ["accel", "hold", "change"]
        for prev, cur in zip(spans, spans[1:]):
            assert prev.end_tick == cur.start_tick
            assert cur.end_tick > cur.start_tick
        assert trajs["a"].states[-1].position_y == pytest.approx(5.25)

    def test_replay_bit_identical(self):
        a = generate_case_study()
        b = generate_case_study()
        assert save_scenario(a) == save_scenario(b)


class TestCaseStudy:
    def test_default_has_seven_actors_and_five_phases(self):
        s = generate_case_study()
        assert len(s.npc_trajectories) == 6  # plus the ego
        assert [p.name for p in s.phases] == ["s1", "s2", "s3", "s4", "s5"]
        assert s.phases[0].start_tick == 0
        assert s.phases[-1].end_tick == s.horizon_ticks

    def test_steady_phase_speeds_constant(self):
        s = generate_case_study()
        s2 = next(p for p in s.phases if p.name == "s2")
        for traj in s.npc_trajectories.values():
            seg = traj.speeds[s2.start_tick:s2.end_tick + 1]
            assert np.all(np.abs(seg - seg[0]) < 1e-9)

    def test_all_trajectories_kinematically_consistent(self):
        s = generate_case_study()
        for traj in s.npc_trajectories.values():
            traj.check_kinematics()

    def test_zero_brake_continues_constant_speed(self):
        p = CaseStudyParams(brake_decel=0.0)
        s = generate_case_study(p)
        s5 = next(ph for ph in s.phases if ph.name == "s5")
        mover = s.npc_trajectories[p.lane_change_actor]
        seg = mover.speeds[s5.start_tick:s5.end_tick + 1]
        assert np.all(np.abs(seg - seg[0]) < 1e-9)

    def test_infeasible_lane_reports_actor(self):
        p = CaseStudyParams(ego_lane=0)  # cutin would start in lane -1
        with pytest.raises(ScenarioError, match="cutin"):
            generate_case_study(p)

    def test_overspeed_target_reports_actor(self):
        p = CaseStudyParams(lead_speed=99.0)
        with pytest.raises(ScenarioError, match="lead"):
            generate_case_study(p)

    def test_phase_boundaries_near_reference_timing(self):
        # with dt/speeds tuned, event-triggered boundaries land near
        # (375, 795, 1035, 1215, 1905)
        p = CaseStudyParams(
            accel=0.2,
            init_speed_factor=0.0,
            ego_speed=7.5,
            lead_speed=7.5, cutin_speed=7.5, near_speed=7.5, far_speed=7.5,
            rear_speed=7.5, outer_speed=7.5,
            cutin_merge_speed=None,
            steady_ticks=420,
            lane_change_duration=24.0,
            steady2_ticks=180,
            brake_decel=0.15,
            tail_ticks=190,
        )
        s = generate_case_study(p)
        bounds = [ph.end_tick for ph in s.phases]
        for got, want in zip(bounds, (375, 795, 1035, 1215, 1905)):
            assert abs(got - want) <= 20


class TestDocuments:
    def test_round_trip(self):
        s = generate_case_study()
        data = save_scenario(s)
        s2 = load_scenario(data)
        assert save_scenario(s2) == data
        assert s2.horizon_ticks == s.horizon_ticks
        assert s2.npc_trajectories.keys() == s.npc_trajectories.keys()
        for aid in s.npc_trajectories:
            assert s2.npc_trajectories[aid].states == \
                s.npc_trajectories[aid].states

    def test_short_trajectory_names_actor(self):
        s = tiny_scenario()
        import json
        doc = json.loads(save_scenario(s))
        doc["actors"][0]["states"] = doc["actors"][0]["states"][:3]
        with pytest.raises(ScenarioError, match="'a'"):
            load_scenario(json.dumps(doc))

    def test_duplicate_id_rejected(self):
        s = tiny_scenario()
        import json
        doc = json.loads(save_scenario(s))
        doc["actors"][1]["id"] = doc["actors"][0]["id"]
        with pytest.raises(ScenarioError, match="duplicate"):
            load_scenario(json.dumps(doc))

    def test_missing_field_path_in_message(self):
        with pytest.raises(ScenarioError, match=r"\$\.map"):
            load_scenario(b'{"version": 1}')

    def test_bad_version(self):
        with pytest.raises(ScenarioError, match="version"):
            load_scenario(b'{"version": 99}')
