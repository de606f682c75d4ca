"""Per-actor risk quantification.

Three layers:

* exact set-reduction risk from lattice plan counts: the total risk is the
  normalized loss of navigable plans caused by all actors, the per-actor
  risk is the normalized count of plans that reappear when that actor is
  ablated (computed as (|Z w/o i| - |Z|) / |Z empty| so it is nonnegative
  under subset semantics);
* leave-one-out importance: replan with and without one actor, all
  randomness and routing inputs held fixed, and measure the plan change
  with a per-waypoint Euclidean operator or a KL divergence over lattice
  plan distributions;
* Monte-Carlo risk: the same importance evaluated across sampled futures,
  reported as sample mean and unbiased variance.

Ablating one of two actors that redundantly block the same plans changes
nothing, so per-actor risks are not additive and may all be zero while the
total risk is large (ablation masking).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .planner import (
    GoalSpec,
    LatticeConfig,
    Plan,
    PlannerConfig,
    PlanSet,
    PlanningInfeasible,
    collision_check,
    enumerate_plans,
    plan_sampling,
)
from .prediction import (
    PredictedWorld,
    PredictionConfig,
    predict_linear,
    prediction_error,
    sample_worlds,
)
from .scenario import (
    EGO_ID,
    ActorState,
    RoadMap,
    Scenario,
    ScenarioError,
    Trajectory,
    slice_world,
)

KL_EPSILON = 1e-6
UNIVERSE_CAP = 1_000_000


class DegenerateScenario(Exception):
    """The map itself admits no plan (|Z empty| = 0)."""


class LatticeCapExceeded(Exception):
    """The lattice universe exceeds the configured tractability cap."""


@dataclass(frozen=True)
class ActorRisk:
    gamma_euclid: Optional[float] = None
    gamma_kl: Optional[float] = None
    rho_exact: Optional[float] = None
    mean_gamma: Optional[float] = None
    var_gamma: Optional[float] = None
    prediction_error: Optional[float] = None
    saturated: bool = False

    def __post_init__(self):
        for name in ("gamma_euclid", "gamma_kl", "mean_gamma", "var_gamma"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if self.rho_exact is not None and not (0 <= self.rho_exact <= 1):
            raise ValueError(f"rho_exact must lie in [0, 1]")


@dataclass(frozen=True)
class RiskReport:
    t: int
    k: int
    per_actor: Mapping[str, ActorRisk]
    total_rho: Optional[float] = None

    def __post_init__(self):
        if self.total_rho is not None and not (0 <= self.total_rho <= 1):
            raise ValueError("total_rho must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Difference operators
# ---------------------------------------------------------------------------

def traj_difference_euclidean(a: Trajectory, b: Trajectory) -> float:
    """Mean Euclidean position distance per waypoint.

    Unequal spans are aligned by holding the shorter trajectory's final
    state; equal-horizon inputs (the normal case: both plans span [t, t+k])
    make this a pseudometric.
    """
    xa, xb = a.xy, b.xy
    n = max(len(xa), len(xb))
    if len(xa) < n:
        xa = np.vstack([xa, np.repeat(xa[-1:], n - len(xa), axis=0)])
    if len(xb) < n:
        xb = np.vstack([xb, np.repeat(xb[-1:], n - len(xb), axis=0)])
    d = xa - xb
    return float(np.mean(np.hypot(d[:, 0], d[:, 1])))


@dataclass(frozen=True)
class PlanDistribution:
    """Epsilon-floored distribution over the lattice plan universe."""

    support: tuple[tuple[str, ...], ...]
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        if len(self.support) != len(p):
            raise ValueError("support and probabilities differ in length")
        if abs(float(np.sum(p)) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1 within 1e-9")
        if len(p) and float(np.min(p)) < KL_EPSILON / len(p):
            raise ValueError("probabilities must be epsilon-floored")

    @classmethod
    def uniform_feasible(cls, universe: Sequence[tuple[str, ...]],
                         feasible: Sequence[tuple[str, ...]],
                         eps: float = KL_EPSILON) -> "PlanDistribution":
        """Uniform over feasible plans, floored by eps over the universe.

        With no feasible plan this degenerates to the floor itself (uniform
        over the universe), which keeps the divergence finite.
        """
        universe = tuple(universe)
        fs = set(feasible)
        if not universe:
            raise ValueError("empty universe")
        u = np.array([1.0 / len(fs) if s in fs else 0.0 for s in universe]) \
            if fs else np.zeros(len(universe))
        p = (u + eps) / (1.0 + len(universe) * eps) if fs else \
            np.full(len(universe), 1.0 / len(universe))
        return cls(universe, p)


def plan_divergence_kl(p: PlanDistribution, q: PlanDistribution) -> float:
    """KL(p || q) in nats over a shared universe; >= 0, zero iff p = q."""
    if p.support != q.support:
        raise ValueError("distributions must share the same plan universe")
    pa, qa = p.probabilities, q.probabilities
    return float(np.sum(pa * np.log(pa / qa)))


# ---------------------------------------------------------------------------
# Exact set-reduction risk
# ---------------------------------------------------------------------------

def _check_cap(lattice: LatticeConfig, cap: int):
    if not lattice.universe_cap_ok(cap):
        raise LatticeCapExceeded(
            f"{len(lattice.maneuvers)}^{lattice.decision_steps} sequences "
            f"exceed the cap of {cap}")


def _z_counts(s: Scenario, t: int, k: int, lattice: LatticeConfig,
              ego: Optional[ActorState], margin: float,
              ablate: Optional[str] = None) -> tuple[int, int]:
    ego = ego if ego is not None else s.ego_initial
    world = slice_world(s, t, k)
    if ablate is not None:
        world = {a: tr for a, tr in world.items() if a != ablate}
    empty = enumerate_plans(s.map, ego, t, k, lattice, dt=s.dt)
    if empty.universe_size == 0:
        raise DegenerateScenario("the map admits no plan (|Z empty| = 0)")
    full = enumerate_plans(s.map, ego, t, k, lattice, world, s.actor_radius,
                           s.radius_of(EGO_ID), margin, dt=s.dt)
    return empty.universe_size, len(full)


def total_risk_exact(s: Scenario, t: int, k: int, lattice: LatticeConfig,
                     ego: Optional[ActorState] = None, margin: float = 0.5,
                     cap: int = UNIVERSE_CAP) -> float:
    """(|Z empty| - |Z|) / |Z empty| over the ground-truth world slice."""
    _check_cap(lattice, cap)
    z_empty, z = _z_counts(s, t, k, lattice, ego, margin)
    return (z_empty - z) / z_empty


def actor_risk_exact(s: Scenario, actor_id: str, t: int, k: int,
                     lattice: LatticeConfig, ego: Optional[ActorState] = None,
                     margin: float = 0.5, cap: int = UNIVERSE_CAP) -> float:
    """(|Z without i| - |Z|) / |Z empty|: the plan count actor i suppresses."""
    _check_cap(lattice, cap)
    if actor_id not in s.npc_trajectories:
        raise ScenarioError(f"unknown actor id {actor_id!r}")
    z_empty, z = _z_counts(s, t, k, lattice, ego, margin)
    _, z_without = _z_counts(s, t, k, lattice, ego, margin, ablate=actor_id)
    return (z_without - z) / z_empty


# ---------------------------------------------------------------------------
# Routing: follow-gap clamped goal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RouterConfig:
    """Deterministic goal placement used by the replanning loop.

    The goal advance in the preferred lane is clamped by the lane's
    occupants: an occupant moving slower than the ego limits the reachable
    advance to (gap - follow_gap) * v / (v - v_occ), the distance at which
    the ego would close to follow_gap.  Occupant terms combine through a
    soft minimum with temperature `softness` so that every occupant of the
    lane influences the goal continuously, not only the nearest one.
    """

    follow_gap: float = 6.0
    softness: float = 12.0
    min_advance: float = 2.0
    switch_hysteresis: float = 5.0


def follow_advance(world: Mapping[str, Trajectory], ego: ActorState,
                   road: RoadMap, lane: int, base_advance: float,
                   ego_speed: float, router: RouterConfig) -> float:
    """Clamped goal advance in one lane given predicted occupants."""
    lo = lane * road.lane_width
    hi = lo + road.lane_width
    terms = [math.exp(-base_advance / router.softness)]
    for traj in world.values():
        xy = traj.xy
        in_band = (xy[:, 1] >= lo) & (xy[:, 1] < hi)
        ahead = (xy[:, 0] > ego.position_x) & (xy[:, 0] <= road.road_length)
        if not np.any(in_band & ahead):
            continue
        gap = float(xy[0, 0]) - ego.position_x
        v_occ = (float(xy[-1, 0]) - float(xy[0, 0])) / \
            ((len(xy) - 1) * traj.dt) if len(xy) > 1 else traj.states[0].speed
        if v_occ >= ego_speed - 1e-9:
            continue  # never caught within any horizon
        fa = max(0.0, (gap - router.follow_gap) * ego_speed
                 / (ego_speed - v_occ))
        terms.append(math.exp(-fa / router.softness))
    adv = -router.softness * math.log(sum(terms))
    return float(min(max(adv, router.min_advance), base_advance))


def route_planner_cfg(cfg: PlannerConfig, world: Mapping[str, Trajectory],
                      ego: ActorState, road: RoadMap,
                      router: RouterConfig) -> PlannerConfig:
    """Clamp cfg.goal.advance for this world; the sample window keeps the
    unclamped basis so paired runs share one stream."""
    base = cfg.sample_advance if cfg.sample_advance is not None \
        else cfg.goal.advance
    speed = min(cfg.target_speed, road.speed_limit)
    adv = follow_advance(world, ego, road, cfg.goal.lane, base, speed, router)
    return replace(cfg, goal=GoalSpec(adv, cfg.goal.lane), sample_advance=base)


# ---------------------------------------------------------------------------
# Leave-one-out importance
# ---------------------------------------------------------------------------

WorldLike = Union[PredictedWorld, Mapping[str, Trajectory]]


def _as_world(world: WorldLike) -> Mapping[str, Trajectory]:
    if isinstance(world, PredictedWorld):
        out = {}
        for aid, p in world.predictions.items():
            if isinstance(p, list):
                raise ScenarioError(
                    "sampled predictions go through expected_actor_risk")
            out[aid] = p
        return out
    return world


def _paired_plan(road, ego, t, k, world, cfg, radii, ego_radius, dt,
                 router) -> Plan:
    run_cfg = route_planner_cfg(cfg, world, ego, road, router) if router \
        else cfg
    return plan_sampling(road, ego, t, k, world, run_cfg, radii,
                         ego_radius, dt)


def actor_importance(world: WorldLike, actor_id: str, ego: ActorState,
                     t: int, k: int, planner_cfg: PlannerConfig,
                     operator: str = "euclid", *,
                     road: RoadMap, radii: Mapping[str, float],
                     ego_radius: float = 1.2, dt: float = 0.1,
                     lattice: Optional[LatticeConfig] = None,
                     router: Optional[RouterConfig] = None) -> float:
    """Replan with and without one actor under identical seeds and measure
    the plan change.

    operator="euclid" runs the sampling planner twice (paired stream; when a
    router is given the goal is re-clamped per world) and returns the mean
    per-waypoint displacement.  operator="kl" builds epsilon-floored lattice
    plan distributions for both worlds and returns their KL divergence.
    If one world admits no feasible plan and the other does, the euclid
    operator saturates at road_length / k per waypoint.
    """
    world = _as_world(world)
    if actor_id not in world:
        raise ScenarioError(f"unknown actor id {actor_id!r}")
    world_m = {a: tr for a, tr in world.items() if a != actor_id}

    if operator == "kl":
        if lattice is None:
            raise ScenarioError("operator='kl' needs a lattice config")
        margin = planner_cfg.safety_margin
        full = enumerate_plans(road, ego, t, k, lattice, world, radii,
                               ego_radius, margin, dt)
        without = enumerate_plans(road, ego, t, k, lattice, world_m, radii,
                                  ego_radius, margin, dt)
        universe = [
            p.maneuver_seq
            for p in enumerate_plans(road, ego, t, k, lattice, dt=dt).plans
        ]
        p = PlanDistribution.uniform_feasible(universe, full.sequences())
        q = PlanDistribution.uniform_feasible(universe, without.sequences())
        return plan_divergence_kl(p, q)

    if operator != "euclid":
        raise ScenarioError(f"unknown operator {operator!r}")

    try:
        plan_full = _paired_plan(road, ego, t, k, world, planner_cfg, radii,
                                 ego_radius, dt, router)
    except PlanningInfeasible:
        plan_full = None
    try:
        plan_m = _paired_plan(road, ego, t, k, world_m, planner_cfg, radii,
                              ego_radius, dt, router)
    except PlanningInfeasible:
        plan_m = None

    if plan_full is None and plan_m is None:
        return 0.0
    if plan_full is None or plan_m is None:
        return road.road_length / k
    return traj_difference_euclidean(plan_full.trajectory, plan_m.trajectory)


def expected_actor_risk(histories: Mapping[str, Trajectory], actor_id: str,
                        ego: ActorState, t: int, k: int,
                        pred_cfg: PredictionConfig,
                        planner_cfg: PlannerConfig,
                        operator: str = "euclid", *,
                        road: RoadMap, radii: Mapping[str, float],
                        ego_radius: float = 1.2, dt: float = 0.1,
                        lattice: Optional[LatticeConfig] = None,
                        router: Optional[RouterConfig] = None,
                        sampler: Optional[Callable] = None
                        ) -> tuple[float, float]:
    """Sample mean and unbiased variance of the importance over joint
    prediction samples.

    Worlds are drawn by `sampler(histories, k, pred_cfg)` (default: the
    keyed Gaussian stream of sample_predictions) and evaluated with the
    planner seed held fixed, so sample j of the full and ablated worlds is
    a paired experiment.
    """
    draw = sampler if sampler is not None else sample_worlds
    worlds = draw(histories, k, pred_cfg)
    if not worlds:
        raise ScenarioError("sampler produced no worlds")
    gammas = []
    for j, w in enumerate(worlds):
        try:
            gammas.append(actor_importance(
                w, actor_id, ego, t, k, planner_cfg, operator, road=road,
                radii=radii, ego_radius=ego_radius, dt=dt, lattice=lattice,
                router=router))
        except (ScenarioError, PlanningInfeasible) as e:
            raise type(e)(f"sample {j}: {e}") from e
    arr = np.array(gammas)
    if float(arr.max()) == float(arr.min()):
        return float(arr[0]), 0.0
    return float(np.mean(arr)), float(np.var(arr, ddof=1))


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

def evaluate_tick(s: Scenario, t: int, k: int, planner_cfg: PlannerConfig,
                  operator: str = "euclid", *,
                  ego: Optional[ActorState] = None,
                  lattice: Optional[LatticeConfig] = None,
                  router: Optional[RouterConfig] = None,
                  exact: bool = False) -> RiskReport:
    """One-tick risk report: per-actor importance on the linearly predicted
    world (plus exact set-reduction risk when a lattice is given)."""
    ego = ego if ego is not None else s.ego_initial
    histories = {aid: tr.window(t, 0)
                 for aid, tr in s.npc_trajectories.items()}
    k_pred = min(k, s.horizon_ticks - t)
    world = {aid: predict_linear(h, k_pred) for aid, h in histories.items()}
    per_actor = {}
    total = None
    if exact and lattice is not None:
        total = total_risk_exact(s, t, k_pred, lattice, ego=ego,
                                 margin=planner_cfg.safety_margin)
    for aid in s.npc_trajectories:
        gamma = actor_importance(
            world, aid, ego, t, k_pred, planner_cfg, "euclid",
            road=s.map, radii=s.actor_radius, ego_radius=s.radius_of(EGO_ID),
            dt=s.dt, router=router)
        kl = None
        rho = None
        if operator == "kl" and lattice is not None:
            kl = actor_importance(
                world, aid, ego, t, k_pred, planner_cfg, "kl",
                road=s.map, radii=s.actor_radius,
                ego_radius=s.radius_of(EGO_ID), dt=s.dt, lattice=lattice)
        if exact and lattice is not None:
            rho = actor_risk_exact(s, aid, t, k_pred, lattice, ego=ego,
                                   margin=planner_cfg.safety_margin)
        err = None
        if t + k <= s.horizon_ticks:
            err = prediction_error(
                predict_linear(histories[aid], k),
                s.npc_trajectories[aid].window(t, k))
        per_actor[aid] = ActorRisk(gamma_euclid=gamma, gamma_kl=kl,
                                   rho_exact=rho, prediction_error=err)
    return RiskReport(t=t, k=k_pred, per_actor=per_actor, total_rho=total)


# ---------------------------------------------------------------------------
# Risk-aware plan selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionResult:
    plan: Plan
    collision_fraction: float
    all_candidates_always_collide: bool


def min_risk_selection(candidates: PlanSet,
                       sampled_worlds: Sequence[Mapping[str, Trajectory]],
                       radii: Mapping[str, float], ego_radius: float = 1.2,
                       margin: float = 0.5) -> SelectionResult:
    """Pick the candidate with the lowest empirical collision frequency
    across sampled worlds; ties break on cost, then maneuver sequence."""
    if not candidates.plans:
        raise ScenarioError("no candidate plans")
    if not sampled_worlds:
        raise ScenarioError("no sampled worlds")
    scored = []
    for idx, plan in enumerate(candidates.plans):
        hits = sum(
            collision_check(plan.trajectory, w, radii, ego_radius, margin)
            for w in sampled_worlds)
        scored.append((hits, plan.cost, plan.maneuver_seq or (), idx))
    scored.sort()
    hits, _, _, idx = scored[0]
    n = len(sampled_worlds)
    all_collide = all(s[0] == n for s in scored)
    return SelectionResult(candidates.plans[idx], hits / n, all_collide)


def select_min_risk_plan(candidates: PlanSet,
                         sampled_worlds: Sequence[Mapping[str, Trajectory]],
                         radii: Mapping[str, float], ego_radius: float = 1.2,
                         margin: float = 0.5) -> Plan:
    return min_risk_selection(candidates, sampled_worlds, radii, ego_radius,
                              margin).plan
