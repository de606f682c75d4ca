"""Acceptance suite.

One test per acceptance criterion, each at its stated tolerance, each
printing a single PASS line when it holds (run with `pytest -s
tests/test_acceptance.py` to see them).
"""

import csv
import math
import time

import numpy as np
import pytest

from navrisk.cli import main
from navrisk.planner import (
    GoalSpec,
    LatticeConfig,
    PlannerConfig,
    collision_check,
    enumerate_plans,
)
from navrisk.prediction import PredictionConfig, predict_linear
from navrisk.risk import (
    PlanDistribution,
    RouterConfig,
    actor_importance,
    actor_risk_exact,
    expected_actor_risk,
    min_risk_selection,
    plan_divergence_kl,
    total_risk_exact,
    traj_difference_euclidean,
)
from navrisk.scenario import (
    EGO_ID,
    ActorState,
    CaseStudyParams,
    RoadMap,
    Scenario,
    Trajectory,
    generate_case_study,
    slice_world,
)

from oracles import static_actor, walk_enumerate, world_to_positions

DT = 0.1


def build_scenario(actors, ego, n, road, radii=None):
    all_radii = {EGO_ID: 1.2, **{aid: 1.2 for aid in actors}}
    if radii:
        all_radii.update(radii)
    return Scenario(map=road, npc_trajectories=actors, ego_initial=ego,
                    horizon_ticks=n, dt=DT, actor_radius=all_radii)


def moving_actor(actor_id, x0, y, speed, n, dt=DT):
    states = tuple(
        ActorState(x0 + speed * dt * i, y, 0.0, speed) for i in range(n + 1))
    return Trajectory(actor_id, 0, dt, states)


def test_c1_exact_oracle_equivalence():
    """Lattice risks equal the brute-force walk oracle exactly, < 1 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(101)

    cases = []
    # the (17-8)/17 fixture
    road = RoadMap(3, 3.5, 300.0, 15.0)
    cases.append((road, ActorState(10.0, road.lane_center(1), 0.0, 1.0),
                  3, 10, [("blk", 11.5, road.lane_center(2))]))
    # corners and a randomized family up to 3 lanes x 5 steps, <= 3 actors
    for lanes, steps in [(1, 1), (2, 2), (3, 4), (3, 5)]:
        r = RoadMap(lanes, 3.5, 300.0, 15.0)
        ego = ActorState(10.0, r.lane_center(lanes // 2), 0.0, 1.5)
        acts = [
            (f"s{i}", float(rng.uniform(8, 18)), float(rng.uniform(0, r.width)))
            for i in range(int(rng.integers(0, 4)))
        ]
        cases.append((r, ego, steps, int(rng.integers(4, 7)), acts))
    for _ in range(6):
        lanes = int(rng.integers(1, 4))
        steps = int(rng.integers(1, 6))
        r = RoadMap(lanes, 3.5, 300.0, 15.0)
        ego = ActorState(10.0, r.lane_center(int(rng.integers(lanes))),
                         0.0, float(rng.uniform(0.5, 3.0)))
        acts = [
            (f"s{i}", float(rng.uniform(8, 18)), float(rng.uniform(0, r.width)))
            for i in range(int(rng.integers(0, 4)))
        ]
        cases.append((r, ego, steps, int(rng.integers(3, 7)), acts))

    checked = 0
    for road, ego, steps, tps, actor_spec in cases:
        k = steps * tps
        lattice = LatticeConfig(steps, ("keep", "shift_left", "shift_right"),
                                tps)
        actors = {aid: static_actor(aid, x, y, k)
                  for aid, x, y in actor_spec}
        s = build_scenario(actors, ego, k, road)
        universe, survivors = walk_enumerate(
            road, ego, steps, lattice.maneuvers, tps, lattice.speed_step, DT,
            world_to_positions(actors), {aid: 2.9 for aid in actors})
        got_total = total_risk_exact(s, 0, k, lattice)
        want_total = (universe - len(survivors)) / universe
        assert abs(got_total - want_total) <= 1e-12
        for aid in actors:
            rest = {a: tr for a, tr in actors.items() if a != aid}
            _, surv_wo = walk_enumerate(
                road, ego, steps, lattice.maneuvers, tps, lattice.speed_step,
                DT, world_to_positions(rest), {a: 2.9 for a in rest})
            want = (len(surv_wo) - len(survivors)) / universe
            got = actor_risk_exact(s, aid, 0, k, lattice)
            assert abs(got - want) <= 1e-12
            checked += 1
        # the fixture counts must also come out exactly
        if actor_spec and actor_spec[0][0] == "blk":
            assert universe == 17 and len(survivors) == 8

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"criterion 1 took {elapsed:.2f}s"
    print(f"\nACCEPTANCE C1 exact-oracle-equivalence: PASS "
          f"({len(cases)} lattices, {checked} ablations, {elapsed:.2f}s)")


def test_c2_monotonicity_under_added_actors():
    """Adding an actor never decreases total risk: 200 scenarios, 0 slack."""
    rng = np.random.default_rng(7)
    road = RoadMap(3, 3.5, 300.0, 15.0)
    lattice = LatticeConfig(3, ("keep", "shift_left", "shift_right"), 8)
    violations = 0
    for trial in range(200):
        ego = ActorState(10.0, road.lane_center(int(rng.integers(3))),
                         0.0, float(rng.uniform(0.5, 2.5)))
        base = {}
        for i in range(int(rng.integers(0, 3))):
            aid = f"b{i}"
            base[aid] = static_actor(aid, float(rng.uniform(8, 18)),
                                     float(rng.uniform(0, road.width)), 24)
        s0 = build_scenario(dict(base), ego, 24, road)
        before = total_risk_exact(s0, 0, 24, lattice)
        base["added"] = static_actor("added", float(rng.uniform(8, 18)),
                                     float(rng.uniform(0, road.width)), 24)
        s1 = build_scenario(base, ego, 24, road)
        after = total_risk_exact(s1, 0, 24, lattice)
        if after < before:
            violations += 1
    assert violations == 0
    print("\nACCEPTANCE C2 monotonicity: PASS (200 scenarios, 0 violations)")


def test_c3_null_ablation_exact_zero():
    """An actor beyond road_length has importance exactly 0, both operators."""
    rng = np.random.default_rng(13)
    road = RoadMap(3, 3.5, 300.0, 15.0)
    lattice = LatticeConfig(2, ("keep", "shift_left", "shift_right"), 10)
    router = RouterConfig()
    for trial in range(100):
        k = 20
        ego = ActorState(10.0, road.lane_center(int(rng.integers(3))),
                         0.0, 10.0)
        world = {}
        radii = {}
        for i in range(int(rng.integers(0, 3))):
            aid = f"a{i}"
            world[aid] = moving_actor(
                aid, float(rng.uniform(18, 35)),
                float(rng.uniform(1.2, road.width - 1.2)),
                float(rng.uniform(0, 7)), k)
            radii[aid] = 1.2
        world["ghost"] = static_actor(
            "ghost", road.road_length + float(rng.uniform(1, 80)),
            road.lane_center(int(rng.integers(3))), k)
        radii["ghost"] = 1.2
        cfg = PlannerConfig(iteration_budget=150,
                            seed=int(rng.integers(0, 2 ** 31)),
                            goal=GoalSpec(18.0, road.lane_of(ego.position_y)),
                            target_speed=10.0)
        g_e = actor_importance(world, "ghost", ego, 0, k, cfg, "euclid",
                               road=road, radii=radii, router=router)
        g_kl = actor_importance(world, "ghost", ego, 0, k, cfg, "kl",
                                road=road, radii=radii, lattice=lattice)
        assert g_e == 0.0
        assert g_kl == 0.0
    print("\nACCEPTANCE C3 null-ablation: PASS "
          "(100 scenarios, exact zero, both operators)")


def test_c4_case_study_replication(tmp_path):
    """Default case study reproduces the qualitative orderings, < 60 s."""
    start = time.perf_counter()
    out = tmp_path / "case"
    code = main(["run", "--casestudy-defaults", "--out", str(out)])
    elapsed = time.perf_counter() - start
    assert code == 0
    assert elapsed < 60.0, f"criterion 4 took {elapsed:.1f}s"

    with open(out / "phase_summary.csv") as f:
        rows = {(r["phase"], r["actor_id"]): r for r in csv.DictReader(f)}

    def med(ph, actor, col):
        v = rows[(ph, actor)][col]
        return float(v) if v else None

    mover = "cutin"
    candidates = ("near", "far")
    others = ("lead", "rear", "outer")

    # (a) the lane-change actor's error spikes at s3 and s5 vs s2
    e2 = med("s2", mover, "prediction_error_median")
    e3 = med("s3", mover, "prediction_error_median")
    e5 = med("s5", mover, "prediction_error_median")
    assert e3 >= 5 * e2
    assert e5 >= 5 * e2

    # (b) at s5 the candidate medians are strictly ordered above the
    # braking actor's
    g5 = sorted((med("s5", a, "gamma_euclid_median") for a in candidates),
                reverse=True)
    g5_mover = med("s5", mover, "gamma_euclid_median")
    assert g5[0] > g5[1] > g5_mover

    # (c) at s4 both candidates dominate every other npc
    g4_cand = min(med("s4", a, "gamma_euclid_median") for a in candidates)
    g4_other = max(med("s4", a, "gamma_euclid_median")
                   for a in (mover,) + others)
    assert g4_cand > g4_other

    print(f"\nACCEPTANCE C4 case-study-replication: PASS "
          f"(err x{e3 / max(e2, 1e-300):.0e}/{e5 / max(e2, 1e-300):.0e}, "
          f"s5 gammas {g5[0]:.2f}>{g5[1]:.2f}>{g5_mover:.2f}, "
          f"s4 {g4_cand:.2f}>{g4_other:.2f}, {elapsed:.1f}s)")


def test_c5_monte_carlo_correctness():
    """Zero noise is exact; the two-branch mixture matches enumeration."""
    road = RoadMap(3, 3.5, 300.0, 15.0)
    ego = ActorState(10.0, road.lane_center(1), 0.0, 10.0)
    router = RouterConfig()
    cfg = PlannerConfig(iteration_budget=150, seed=31,
                        goal=GoalSpec(20.0, 1), target_speed=10.0)

    # zero-noise: variance exactly 0, mean exactly the deterministic gamma
    hists = {"a": moving_actor("a", 22.0, road.lane_center(1), 6.0, 5)}
    pcfg = PredictionConfig(0.0, 0.0, sample_count=6, seed=3)
    mean, var = expected_actor_risk(hists, "a", ego, 5, 20, pcfg, cfg,
                                    "euclid", road=road, radii={"a": 1.2},
                                    router=router)
    det = actor_importance({"a": predict_linear(hists["a"], 20)}, "a", ego,
                           5, 20, cfg, "euclid", road=road,
                           radii={"a": 1.2}, router=router)
    assert var == 0.0
    assert mean == det

    # two-branch mixture at n = 500 within 3 standard errors
    k, n = 20, 500
    cruise = moving_actor("a", 22.0, road.lane_center(1), 7.0, k)
    cruise = Trajectory("a", 5, DT, cruise.states)
    states = [ActorState(22.0, road.lane_center(1), 0.0, 7.0)]
    x, v = 22.0, 7.0
    for _ in range(k):
        v2 = max(0.0, v - 4.0 * DT)
        x += 0.5 * (v + v2) * DT
        v = v2
        states.append(ActorState(x, road.lane_center(1), 0.0, v2))
    brake = Trajectory("a", 5, DT, tuple(states))

    def sampler(histories, k_, cfg_):
        rng = np.random.default_rng(cfg_.seed)
        return [{"a": brake if rng.uniform() < 0.5 else cruise}
                for _ in range(cfg_.sample_count)]

    pcfg = PredictionConfig(0.0, 0.0, sample_count=n, seed=77)
    mean, var = expected_actor_risk(
        hists, "a", ego, 5, k, pcfg, cfg, "euclid", road=road,
        radii={"a": 1.2}, router=router, sampler=sampler)
    g_b = actor_importance({"a": brake}, "a", ego, 5, k, cfg, "euclid",
                           road=road, radii={"a": 1.2}, router=router)
    g_c = actor_importance({"a": cruise}, "a", ego, 5, k, cfg, "euclid",
                           road=road, radii={"a": 1.2}, router=router)
    oracle = 0.5 * (g_b + g_c)
    se = math.sqrt(var / n)
    assert abs(mean - oracle) <= 3 * se
    assert var >= 0.0
    print(f"\nACCEPTANCE C5 monte-carlo: PASS "
          f"(zero-noise exact; |{mean:.4f}-{oracle:.4f}| <= 3*{se:.4f})")


def test_c6_operator_properties():
    """KL >= 0 (= 0 iff equal) on 1000 pairs; pseudometric on 1000 triples."""
    rng = np.random.default_rng(3)
    universe = [(f"s{i}",) for i in range(12)]
    for _ in range(1000):
        fa = frozenset(u for u in universe if rng.uniform() < 0.5)
        fb = frozenset(u for u in universe if rng.uniform() < 0.5)
        p = PlanDistribution.uniform_feasible(universe, fa)
        q = PlanDistribution.uniform_feasible(universe, fb)
        kl = plan_divergence_kl(p, q)
        assert kl >= 0.0
        if fa == fb:
            assert kl <= 1e-9
        else:
            assert kl > 1e-9

    for _ in range(1000):
        m = int(rng.integers(2, 10))
        trajs = []
        for _ in range(3):
            xy = rng.uniform(-25, 25, (m, 2))
            trajs.append(Trajectory("r", 0, DT, tuple(
                ActorState(float(a), float(b), 0.0, 0.0) for a, b in xy)))
        a, b, c = trajs
        dab = traj_difference_euclidean(a, b)
        assert dab >= 0.0
        assert abs(dab - traj_difference_euclidean(b, a)) <= 1e-9
        assert traj_difference_euclidean(a, a) <= 1e-9
        assert traj_difference_euclidean(a, c) <= \
            dab + traj_difference_euclidean(b, c) + 1e-9
    print("\nACCEPTANCE C6 operator-properties: PASS "
          "(1000 KL pairs, 1000 euclid triples)")


def test_c7_determinism(tmp_path):
    """Identical config and seed give byte-identical run.csv, regardless of
    thread count."""
    args = ["run", "--casestudy-defaults", "--seed", "11", "--budget", "400",
            "--replan-every", "20"]
    outs = []
    for i, extra in enumerate(([], [], ["--threads", "3"])):
        out = tmp_path / f"d{i}"
        assert main(args + extra + ["--out", str(out)]) == 0
        outs.append((out / "run.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] == outs[2]
    print("\nACCEPTANCE C7 determinism: PASS "
          "(byte-identical across reruns and thread counts)")


def test_c8_mitigation_demo():
    """Risk-aware selection avoids the collision the min-cost follow plan
    drives into."""
    params = CaseStudyParams(cutin_merge_speed=5.5, lead_slow_speed=None,
                             near_offset=45.0, far_offset=51.0)
    s = generate_case_study(params)
    brake_start = next(p for p in s.phases if p.name == "s5").start_tick
    t, k = brake_start + 5, 30
    cutin_x = s.npc_trajectories["cutin"].states[t].position_x
    ego = ActorState(cutin_x - 11.0, s.map.lane_center(1), 0.0, 9.0)

    lattice = LatticeConfig(2, ("keep", "shift_left"), 15)
    candidates = enumerate_plans(s.map, ego, t, k, lattice, dt=s.dt)
    naive = min(candidates.plans, key=lambda p: p.cost)
    assert naive.maneuver_seq == ("keep", "keep")

    from navrisk.prediction import sample_worlds
    hists = {aid: tr.window(0, t) for aid, tr in s.npc_trajectories.items()}
    worlds = sample_worlds(hists, k,
                           PredictionConfig(0.8, 0.02, sample_count=40,
                                            seed=9))
    sel = min_risk_selection(candidates, worlds, s.actor_radius,
                             s.radius_of(EGO_ID), 0.5)
    truth = slice_world(s, t, k)
    assert sel.plan.maneuver_seq != naive.maneuver_seq
    assert collision_check(naive.trajectory, truth, s.actor_radius,
                           s.radius_of(EGO_ID), 0.5)
    assert not collision_check(sel.plan.trajectory, truth, s.actor_radius,
                               s.radius_of(EGO_ID), 0.5)
    print("\nACCEPTANCE C8 mitigation-demo: PASS "
          f"(selected {'+'.join(sel.plan.maneuver_seq)} avoids the "
          "realized stop; min-cost follow collides)")
