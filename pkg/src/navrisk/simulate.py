"""Closed-loop replanning simulation over a scripted scenario.

Every replan_every ticks the loop slices ground truth into per-actor
histories, predicts each npc's future, routes a goal for the ego on the
full predicted world (lane preference with hysteresis and a commit lock
while a lane change is in progress, follow-gap clamped advance), plans
with the sampling planner, and evaluates per-actor leave-one-out risk with
the planner seed held fixed across ablations.  The ego then executes the
first replan_every ticks of the plan.

Prediction error is reported retrospectively: the error of the prediction
made at tick t is recorded once ground truth through t+k exists, so the
final k ticks of a run carry no error values.  Phase attribution uses the
phase active at planning time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .planner import (
    GoalSpec,
    LatticeConfig,
    PlannerConfig,
    PlanningInfeasible,
    plan_sampling,
)
from .prediction import predict_linear, sample_worlds, prediction_error, \
    PredictionConfig
from .risk import (
    RouterConfig,
    actor_importance,
    actor_risk_exact,
    follow_advance,
    route_planner_cfg,
    traj_difference_euclidean,
)
from .scenario import EGO_ID, ActorState, Scenario


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    horizon: int = 40
    replan_every: int = 15
    samples: int = 0
    noise_accel: float = 0.35
    noise_yawrate: float = 0.02
    operators: tuple[str, ...] = ("euclid",)
    exact_lattice: Optional[LatticeConfig] = None
    iteration_budget: int = 700
    steer_step: float = 2.0
    goal_tolerance: float = 2.0
    safety_margin: float = 0.5
    target_speed: Optional[float] = None   # None: ego's initial speed
    router: RouterConfig = field(default_factory=RouterConfig)
    threads: int = 1

    def __post_init__(self):
        if self.replan_every < 1:
            raise ValueError("replan_every must be >= 1")
        if self.horizon < self.replan_every:
            raise ValueError("horizon must be >= replan_every")
        bad = set(self.operators) - {"euclid", "kl"}
        if bad:
            raise ValueError(f"unknown operators {sorted(bad)}")


@dataclass(frozen=True)
class StepRecord:
    tick: int
    phase: str
    actor_id: str
    gamma_euclid: Optional[float]
    gamma_kl: Optional[float]
    rho_exact: Optional[float]
    mean_gamma: Optional[float]
    var_gamma: Optional[float]
    prediction_error: Optional[float]
    ego_lane: int
    plan_partial: bool


@dataclass(frozen=True)
class RunResult:
    records: tuple[StepRecord, ...]
    ego_states: tuple[ActorState, ...]   # one per replan tick
    replan_ticks: tuple[int, ...]


def _phase_at(s: Scenario, tick: int) -> str:
    for p in s.phases:
        if p.start_tick <= tick < p.end_tick:
            return p.name
    if s.phases and tick >= s.phases[-1].end_tick:
        return s.phases[-1].name
    return ""


def _planner_seed(seed: int, t: int) -> int:
    ss = np.random.SeedSequence(entropy=seed & (2 ** 64 - 1), spawn_key=(t,))
    return int(ss.generate_state(1, np.uint64)[0])


def _pick_lane(world, ego, s, base_advance, speed, router, preferred):
    """Lane preference with hysteresis; adjacent switches only."""
    road = s.map
    candidates = [l for l in (preferred - 1, preferred, preferred + 1)
                  if 0 <= l < road.lane_count]
    utility = {
        l: follow_advance(world, ego, road, l, base_advance, speed, router)
        for l in candidates
    }
    # prefer the current lane, break remaining ties leftward (overtaking
    # side); switch only on a clear gain
    best = max(candidates,
               key=lambda l: (utility[l], l == preferred, l))
    if best != preferred and \
            utility[best] > utility[preferred] + router.switch_hysteresis:
        return best
    return preferred


def _gamma_pair(args):
    (aid, world, ego, t, k, cfg, road, radii, ego_radius, dt, router,
     plan_full) = args
    world_m = {a: tr for a, tr in world.items() if a != aid}
    try:
        cfg_m = route_planner_cfg(cfg, world_m, ego, road, router)
        plan_m = plan_sampling(road, ego, t, k, world_m, cfg_m, radii,
                               ego_radius, dt)
    except PlanningInfeasible:
        plan_m = None
    if plan_full is None and plan_m is None:
        return aid, 0.0, False
    if plan_full is None or plan_m is None:
        return aid, road.road_length / k, True
    return aid, traj_difference_euclidean(plan_full.trajectory,
                                          plan_m.trajectory), False


def run_simulation(s: Scenario, cfg: RunConfig = RunConfig()) -> RunResult:
    road = s.map
    ego = s.ego_initial
    ego_radius = s.radius_of(EGO_ID)
    radii = dict(s.actor_radius)
    speed = cfg.target_speed if cfg.target_speed is not None else \
        (ego.speed if ego.speed > 0 else 0.7 * road.speed_limit)
    speed = min(speed, road.speed_limit)
    base_advance = cfg.horizon * s.dt * speed
    preferred = road.lane_of(ego.position_y)
    router = cfg.router

    records: list[StepRecord] = []
    ego_states: list[ActorState] = []
    replan_ticks: list[int] = []

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for t in range(0, s.horizon_ticks, cfg.replan_every):
            k_eff = min(cfg.horizon, s.horizon_ticks - t)
            if k_eff < 1:
                break
            replan_ticks.append(t)
            ego_states.append(ego)
            phase = _phase_at(s, t)
            ego_lane = road.lane_of(ego.position_y)

            histories = {aid: tr.window(t, 0)
                         for aid, tr in s.npc_trajectories.items()}
            world = {aid: predict_linear(h, k_eff)
                     for aid, h in histories.items()}

            # route on the full predicted world; commit while mid-transition
            mid_change = abs(
                ego.position_y - road.lane_center(preferred)
            ) > 0.25 * road.lane_width
            if not mid_change:
                preferred = _pick_lane(world, ego, s, base_advance, speed,
                                       router, preferred)

            seed_t = _planner_seed(cfg.seed, t)
            base_cfg = PlannerConfig(
                iteration_budget=cfg.iteration_budget, seed=seed_t,
                goal=GoalSpec(base_advance, preferred),
                steer_step=cfg.steer_step,
                goal_tolerance=cfg.goal_tolerance,
                safety_margin=cfg.safety_margin, target_speed=speed,
                sample_advance=base_advance)
            try:
                full_cfg = route_planner_cfg(base_cfg, world, ego, road,
                                             router)
                plan_full = plan_sampling(road, ego, t, k_eff, world,
                                          full_cfg, radii, ego_radius, s.dt)
            except PlanningInfeasible:
                plan_full = None

            jobs = [
                (aid, world, ego, t, k_eff, base_cfg, road, radii,
                 ego_radius, s.dt, router, plan_full)
                for aid in s.npc_trajectories
            ]
            if pool is not None:
                gammas = list(pool.map(_gamma_pair, jobs))
            else:
                gammas = [_gamma_pair(j) for j in jobs]

            kl_values = {}
            rho_values = {}
            lattice = cfg.exact_lattice
            if lattice is not None and lattice.horizon == k_eff:
                for aid in s.npc_trajectories:
                    if "kl" in cfg.operators:
                        kl_values[aid] = actor_importance(
                            world, aid, ego, t, k_eff, base_cfg, "kl",
                            road=road, radii=radii, ego_radius=ego_radius,
                            dt=s.dt, lattice=lattice)
                    rho_values[aid] = actor_risk_exact(
                        s, aid, t, k_eff, lattice, ego=ego,
                        margin=cfg.safety_margin)

            mc_stats = {}
            if cfg.samples >= 1:
                pcfg = PredictionConfig(
                    cfg.noise_accel, cfg.noise_yawrate,
                    sample_count=cfg.samples, seed=cfg.seed)
                worlds_mc = sample_worlds(histories, k_eff, pcfg)
                per_actor: dict[str, list[float]] = \
                    {aid: [] for aid in s.npc_trajectories}
                for w in worlds_mc:
                    try:
                        w_cfg = route_planner_cfg(base_cfg, w, ego, road,
                                                  router)
                        w_full = plan_sampling(road, ego, t, k_eff, w,
                                               w_cfg, radii, ego_radius,
                                               s.dt)
                    except PlanningInfeasible:
                        w_full = None
                    for aid in s.npc_trajectories:
                        _, g, _ = _gamma_pair(
                            (aid, w, ego, t, k_eff, base_cfg, road, radii,
                             ego_radius, s.dt, router, w_full))
                        per_actor[aid].append(g)
                for aid, gs in per_actor.items():
                    arr = np.array(gs)
                    if float(arr.max()) == float(arr.min()):
                        mc_stats[aid] = (float(arr[0]), 0.0)
                    else:
                        mc_stats[aid] = (float(np.mean(arr)),
                                         float(np.var(arr, ddof=1)))

            err = {}
            if t + cfg.horizon <= s.horizon_ticks:
                for aid, h in histories.items():
                    pred = predict_linear(h, cfg.horizon)
                    err[aid] = prediction_error(
                        pred, s.npc_trajectories[aid].window(t, cfg.horizon))

            for aid, gamma, saturated in gammas:
                mean_g, var_g = mc_stats.get(aid, (None, None))
                records.append(StepRecord(
                    tick=t, phase=phase, actor_id=aid,
                    gamma_euclid=gamma if "euclid" in cfg.operators else None,
                    gamma_kl=kl_values.get(aid),
                    rho_exact=rho_values.get(aid),
                    mean_gamma=mean_g, var_gamma=var_g,
                    prediction_error=err.get(aid),
                    ego_lane=ego_lane,
                    plan_partial=bool(
                        (plan_full.partial if plan_full else True)
                        or saturated),
                ))

            steps = min(cfg.replan_every, k_eff)
            if plan_full is not None:
                ego = plan_full.trajectory.states[steps]
            # with no feasible plan the ego holds position
    finally:
        if pool is not None:
            pool.shutdown()

    return RunResult(tuple(records), tuple(ego_states), tuple(replan_ticks))
