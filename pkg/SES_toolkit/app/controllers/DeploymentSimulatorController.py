"""
Desk-scale deployment simulator.

A unicycle robot with a full-circle lidar drives on occupancy maps under a
sampled-rollout local planner that follows an A* global path. When every
sampled rollout collides the planner backs up and flags the step as
suboptimal; those flags are the difficulty signal the extraction stage
aggregates.
"""

import os
import math
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.distance import cdist

from app.models import (
    EnvironmentSet,
    NavigationTask,
    Pose,
    StepRecord,
    Trajectory,
    WorldMap,
    as_world_map,
    beam_angles,
    cell_center,
    cell_index,
    euclidean,
)
from app.utils.rng import SeededRng
from app.controllers.ArtifactStoreController import write_trajectory
from app.controllers.NavigationPlannerController import (
    free_components,
    inflate_obstacles,
    is_navigable,
    path_to_world,
    plan_global,
    raycast,
)
from app.controllers.ResponseCodesController import (
    ConfigError,
    ContractError,
    UnreachableError,
)

logger = logging.getLogger(__name__)

Outcome = Literal["success", "collision", "timeout"]
TRACE_MANIFEST_COLUMNS = [
    "trace_file",
    "deployment_id",
    "map_id",
    "seed",
    "outcome",
    "steps",
    "time_cost",
    "suboptimal_total",
]


class PlannerParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "custom"
    max_linear_velocity: float = Field(gt=0)
    max_angular_velocity: float = Field(gt=0)
    sample_count: int = Field(gt=0)
    inflation_radius: float = Field(ge=0)
    recovery_reverse_velocity: float = Field(lt=0)

    @model_validator(mode="after")
    def _check_reverse(self):
        if abs(self.recovery_reverse_velocity) > self.max_linear_velocity:
            raise ValueError("recovery_reverse_velocity may not exceed max_linear_velocity in magnitude")
        return self


PLANNER_PRESETS: Dict[str, PlannerParams] = {
    "dwa_slow": PlannerParams(
        name="dwa_slow",
        max_linear_velocity=0.5,
        max_angular_velocity=1.57,
        sample_count=20,
        inflation_radius=0.1,
        recovery_reverse_velocity=-0.1,
    ),
    "dwa_fast": PlannerParams(
        name="dwa_fast",
        max_linear_velocity=1.0,
        max_angular_velocity=1.57,
        sample_count=40,
        inflation_radius=0.1,
        recovery_reverse_velocity=-0.1,
    ),
}


def get_planner(name: str) -> PlannerParams:
    if name not in PLANNER_PRESETS:
        raise ConfigError(f"{name!r}; choose from {sorted(PLANNER_PRESETS)}", "UNKNOWN_PLANNER")
    return PLANNER_PRESETS[name]


def planner_grid(
    base: PlannerParams,
    max_linear_velocities: Sequence[float] = (),
    sample_counts: Sequence[int] = (),
    inflation_radii: Sequence[float] = (),
) -> List[PlannerParams]:
    """Cartesian product of overrides on `base`; an empty axis keeps the base value."""
    candidates = []
    for velocity in max_linear_velocities or [base.max_linear_velocity]:
        for samples in sample_counts or [base.sample_count]:
            for radius in inflation_radii or [base.inflation_radius]:
                candidates.append(
                    base.model_copy(
                        update={
                            "name": f"{base.name}-v{velocity:g}-n{samples}-r{radius:g}",
                            "max_linear_velocity": velocity,
                            "sample_count": samples,
                            "inflation_radius": radius,
                        }
                    )
                )
    return candidates


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    timestep: float = Field(default=0.1, gt=0)
    beam_count: int = Field(default=360, gt=0)
    max_range: float = Field(default=10.0, gt=0)
    goal_tolerance: float = Field(default=0.3, gt=0)
    max_steps: int = Field(default=1000, gt=0)
    horizon: float = Field(default=1.5, gt=0)
    robot_radius: float = Field(default=0.0, ge=0)
    min_speed_ratio: float = Field(default=0.2, gt=0, le=1)
    lookahead: float = Field(default=1.0, gt=0)
    clearance_weight: float = Field(default=0.2, ge=0)
    replan_distance: float = Field(default=1.0, gt=0)
    map_resolution: float = Field(default=0.1, gt=0)


@dataclass(frozen=True)
class Command:
    linear: float
    angular: float


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    linear: float = 0.0
    angular: float = 0.0


class CollisionMap:
    """Cells a point robot of `robot_radius` may not enter; leaving the map also counts as a collision."""

    def __init__(self, world: WorldMap, robot_radius: float = 0.0) -> None:
        self.world = world
        self.blocked = inflate_obstacles(world.cells, world.resolution, robot_radius)

    def collides(self, xs, ys) -> np.ndarray:
        cols, inside_x = cell_index(xs, self.world.resolution, self.world.width)
        rows, inside_y = cell_index(ys, self.world.resolution, self.world.height)
        return ~(inside_x & inside_y) | self.blocked[rows, cols]

    def pose_collides(self, pose: Pose) -> bool:
        return bool(self.collides(pose.x, pose.y))


def integrate(pose: Pose, command: Command, dt: float) -> Pose:
    """One Euler step of unicycle kinematics."""
    return Pose(
        pose.x + command.linear * math.cos(pose.theta) * dt,
        pose.y + command.linear * math.sin(pose.theta) * dt,
        pose.theta + command.angular * dt,
    )


def scan_endpoints(pose: Pose, scan: np.ndarray, max_range: float) -> np.ndarray:
    hit = scan < max_range
    bearings = pose.theta + beam_angles(scan.size)[hit]
    return np.column_stack((pose.x + scan[hit] * np.cos(bearings), pose.y + scan[hit] * np.sin(bearings)))


def candidate_commands(params: PlannerParams, cfg: SimulationConfig, rng: SeededRng) -> np.ndarray:
    """(C, 2) array of (v, w): straight at full speed, the two tightest arcs, then `sample_count` random pairs."""
    v_max, w_max = params.max_linear_velocity, params.max_angular_velocity
    v_min = cfg.min_speed_ratio * v_max
    fixed = np.array([[v_max, 0.0], [v_min, w_max], [v_min, -w_max]])
    sampled = np.column_stack(
        (
            rng.uniform(v_min, v_max, size=params.sample_count),
            rng.uniform(-w_max, w_max, size=params.sample_count),
        )
    )
    return np.vstack((fixed, sampled))


def rollout(pose: Pose, commands: np.ndarray, cfg: SimulationConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Forward-simulate every command for the horizon; returns (C, T) x and y arrays."""
    steps = max(1, int(round(cfg.horizon / cfg.timestep)))
    count = commands.shape[0]
    x = np.full(count, pose.x)
    y = np.full(count, pose.y)
    theta = np.full(count, pose.theta)
    xs = np.empty((count, steps))
    ys = np.empty((count, steps))
    for step in range(steps):
        x = x + commands[:, 0] * np.cos(theta) * cfg.timestep
        y = y + commands[:, 0] * np.sin(theta) * cfg.timestep
        theta = theta + commands[:, 1] * cfg.timestep
        xs[:, step] = x
        ys[:, step] = y
    return xs, ys


def lookahead_target(position: np.ndarray, waypoints: np.ndarray, progress: int, lookahead: float) -> Tuple[np.ndarray, int]:
    """
    Point to steer at and the updated progress index.

    Progress is the nearest waypoint at or after the previous progress; the
    target is the first later waypoint at least `lookahead` away, else the
    final waypoint.
    """
    remaining = waypoints[progress:]
    distances = np.hypot(*(remaining - position).T)
    progress += int(np.argmin(distances))
    ahead = np.hypot(*(waypoints[progress:] - position).T)
    far = np.flatnonzero(ahead >= lookahead)
    target = waypoints[progress + far[0]] if far.size else waypoints[-1]
    return target, progress


def step_controller(
    state: RobotState,
    params: PlannerParams,
    waypoints: np.ndarray,
    scan: np.ndarray,
    collision_map: CollisionMap,
    cfg: SimulationConfig,
    rng: SeededRng,
) -> Tuple[Command, int]:
    """
    Choose the next velocity command.

    Candidates are rolled out over the horizon; rollouts touching a blocked
    cell or leaving the map are discarded. The rest are scored by
    -distance(rollout end, target) + clearance_weight * min(clearance, 1 m),
    where clearance is measured to the current lidar endpoints and the
    target is the last waypoint of `waypoints`.

    Returns:
        tuple: (command, suboptimal flag); the flag is 1 only for the
        reverse recovery command issued when every rollout collides.
    """
    commands = candidate_commands(params, cfg, rng)
    xs, ys = rollout(state.pose, commands, cfg)
    colliding = collision_map.collides(xs, ys).any(axis=1)
    if colliding.all():
        return Command(params.recovery_reverse_velocity, 0.0), 1

    target = np.asarray(waypoints, dtype=np.float64).reshape(-1, 2)[-1]
    progress_term = -np.hypot(xs[:, -1] - target[0], ys[:, -1] - target[1])
    endpoints = scan_endpoints(state.pose, scan, cfg.max_range)
    if endpoints.size:
        poses = np.column_stack((xs.ravel(), ys.ravel()))
        clearance = cdist(poses, endpoints).min(axis=1).reshape(xs.shape).min(axis=1)
    else:
        clearance = np.full(commands.shape[0], np.inf)
    scores = progress_term + cfg.clearance_weight * np.minimum(clearance, 1.0)
    scores[colliding] = -np.inf
    best = int(np.argmax(scores))
    return Command(float(commands[best, 0]), float(commands[best, 1])), 0


@dataclass(frozen=True)
class EpisodeResult:
    trajectory: Trajectory
    outcome: Outcome
    time_cost: float
    suboptimal_total: int
    steps: int = 0

    @property
    def success(self) -> bool:
        return self.outcome == "success"


def _global_waypoints(world: WorldMap, start_cell, goal_cell, goal: Pose, params: PlannerParams) -> np.ndarray:
    try:
        waypoints = path_to_world(plan_global(world, start_cell, goal_cell, params.inflation_radius), world.resolution)
    except UnreachableError:
        waypoints = np.zeros((1, 2))
    waypoints[-1] = (goal.x, goal.y)
    return waypoints


def run_episode(
    task: NavigationTask,
    params: PlannerParams,
    cfg: SimulationConfig,
    rng: SeededRng,
    deployment_id: str = "episode",
    map_id: Optional[str] = None,
    require_navigable: bool = True,
    controller: Optional[Callable[..., Tuple[Command, int]]] = None,
) -> EpisodeResult:
    """
    Closed-loop episode: scan, plan, command, integrate.

    Terminates on reaching the goal tolerance (success), on a forward move
    into a blocked cell (collision) or after `max_steps` commands (timeout).
    A recovery move that would enter a blocked cell leaves the pose where
    it is. Every control step is recorded, then the terminal observation.

    `step_controller` only issues forward commands whose rollout is clear,
    and the first rollout pose is the pose `integrate` produces, so with the
    default controller an episode never ends in collision. The collision
    outcome is reached through a `controller` with the same signature that
    does not check its rollouts.

    Args:
        task (NavigationTask): Environment with start and goal.
        params (PlannerParams): Planner settings.
        cfg (SimulationConfig): Simulator settings.
        rng (SeededRng): This episode's random stream.
        require_navigable (bool): Reject tasks with no 4-connected path.
        controller (callable): Replaces `step_controller`.

    Returns:
        EpisodeResult: Trace and outcome.
    """
    world = as_world_map(task.env)
    map_id = map_id or world.map_id
    start_cell, goal_cell = task.cells()
    if require_navigable and not is_navigable(world, start_cell, goal_cell):
        raise ContractError(f"task on {map_id} from {start_cell} to {goal_cell} is not navigable", "GRID_NOT_NAVIGABLE")

    controller = controller or step_controller
    collision_map = CollisionMap(world, cfg.robot_radius)
    waypoints = _global_waypoints(world, start_cell, goal_cell, task.goal, params)
    progress = 0
    state = RobotState(task.start)
    records = []
    executed = 0
    outcome = "timeout"

    while True:
        if euclidean(state.pose, task.goal) <= cfg.goal_tolerance:
            outcome = "success"
            break
        if executed >= cfg.max_steps:
            break
        position = state.pose.position()
        if np.hypot(*(waypoints - position).T).min() > cfg.replan_distance:
            current = world.cell_of(state.pose.x, state.pose.y)
            if current is not None and world.is_free(*current):
                waypoints = _global_waypoints(world, current, goal_cell, task.goal, params)
                progress = 0
        target, progress = lookahead_target(position, waypoints, progress, cfg.lookahead)

        scan = raycast(world, state.pose, cfg.beam_count, cfg.max_range)
        command, flag = controller(state, params, target[None, :], scan, collision_map, cfg, rng)
        records.append(StepRecord(scan=scan, pose=state.pose, suboptimal=flag))
        executed += 1

        moved = integrate(state.pose, command, cfg.timestep)
        if collision_map.pose_collides(moved):
            if flag == 1:
                moved = state.pose
            else:
                outcome = "collision"
                break
        state = RobotState(moved, command.linear, command.angular)

    records.append(StepRecord(scan=raycast(world, state.pose, cfg.beam_count, cfg.max_range), pose=state.pose))
    trajectory = Trajectory(steps=tuple(records), deployment_id=deployment_id, map_id=map_id, max_range=cfg.max_range)
    return EpisodeResult(
        trajectory=trajectory,
        outcome=outcome,
        time_cost=executed * cfg.timestep,
        suboptimal_total=trajectory.suboptimal_total(),
        steps=executed,
    )


def summarize_outcomes(results: Sequence[EpisodeResult]) -> dict:
    """
    Success rate and time statistics for a group of trials.

    Time cost is averaged over successful trials only; std is the
    population standard deviation; both are NaN without successes.
    """
    times = np.array([result.time_cost for result in results if result.success])
    trials = len(results)
    return {
        "trials": trials,
        "successes": int(times.size),
        "success_rate": times.size / trials if trials else float("nan"),
        "mean_time": float(times.mean()) if times.size else float("nan"),
        "std_time": float(times.std(ddof=0)) if times.size else float("nan"),
        "mean_suboptimal": float(np.mean([result.suboptimal_total for result in results])) if trials else float("nan"),
    }


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    planner: PlannerParams
    per_environment: pd.DataFrame
    success_rate: float
    mean_time_cost: float
    trials: int

    def summary_row(self) -> dict:
        return {
            "Planner": self.planner.name,
            "Time cost (s)": self.mean_time_cost,
            "Success rate (%)": 100.0 * self.success_rate,
        }


def _evaluate_tasks(
    named_tasks: Sequence[Tuple[str, NavigationTask]],
    params: PlannerParams,
    trials: int,
    rng: SeededRng,
    cfg: SimulationConfig,
    n_jobs: int = 1,
) -> EvaluationReport:
    jobs = [
        (env_id, trial, task)
        for env_id, task in named_tasks
        for trial in range(trials)
    ]
    results = Parallel(n_jobs=n_jobs)(
        delayed(run_episode)(task, params, cfg, rng.fork(env_id, trial), f"{env_id}-t{trial:02d}")
        for env_id, trial, task in jobs
    )
    rows = []
    all_results = []
    for position, (env_id, _) in enumerate(named_tasks):
        group = results[position * trials : (position + 1) * trials]
        all_results.extend(group)
        rows.append({"env_id": env_id, **summarize_outcomes(group)})
    overall = summarize_outcomes(all_results)
    frame = pd.DataFrame(
        rows, columns=["env_id", "trials", "successes", "success_rate", "mean_time", "std_time", "mean_suboptimal"]
    )
    return EvaluationReport(
        planner=params,
        per_environment=frame,
        success_rate=overall["success_rate"],
        mean_time_cost=overall["mean_time"],
        trials=overall["trials"],
    )


def evaluate(
    envs: EnvironmentSet,
    params: PlannerParams,
    trials: int,
    rng: SeededRng,
    cfg: SimulationConfig,
    n_jobs: int = 1,
) -> EvaluationReport:
    """
    Run `trials` episodes on every environment of the set (bottom-middle to top-middle).

    Returns:
        EvaluationReport: Per-environment and aggregate success rate and time cost.
    """
    named_tasks = []
    for entry in envs:
        if not is_navigable(entry.grid):
            raise ContractError(f"environment {entry.env_id} is not navigable", "GRID_NOT_NAVIGABLE")
        named_tasks.append((entry.env_id, NavigationTask.for_grid(entry.grid)))
    return _evaluate_tasks(named_tasks, params, trials, rng, cfg, n_jobs)


def sample_task(
    world: WorldMap, rng: SeededRng, min_separation: float = 5.0, attempts: int = 1000
) -> Optional[NavigationTask]:
    """
    Rejection-sample a start/goal pair of free cells in one 4-connected region,
    at least `min_separation` meters apart, with a uniform start heading.
    """
    labels = free_components(world.cells)
    free_rows, free_cols = np.nonzero(labels)
    if free_rows.size < 2:
        return None
    for _ in range(attempts):
        first, second = rng.integers(0, free_rows.size, size=2)
        start = (int(free_cols[first]), int(free_rows[first]))
        goal = (int(free_cols[second]), int(free_rows[second]))
        if labels[start[1], start[0]] != labels[goal[1], goal[0]]:
            continue
        start_xy = cell_center(*start, world.resolution)
        goal_xy = cell_center(*goal, world.resolution)
        if math.dist(start_xy, goal_xy) < min_separation:
            continue
        heading = float(rng.uniform(-math.pi, math.pi))
        return NavigationTask(env=world, start=Pose(*start_xy, heading), goal=Pose(*goal_xy, heading))
    return None


def _map_tasks(
    maps: Sequence[WorldMap], per_map: int, rng: SeededRng, min_separation: float, attempts: int, label: str
) -> List[Tuple[int, int, NavigationTask]]:
    tasks = []
    for map_index, world in enumerate(maps):
        for index in range(per_map):
            task = sample_task(world, rng.fork(label, map_index, index), min_separation, attempts)
            if task is None:
                logger.warning(
                    f"Skipping map {world.map_id}: no start-goal pair {min_separation} m apart after {attempts} attempts"
                )
                break
            tasks.append((map_index, index, task))
    return tasks


def deploy_batch(
    maps: Sequence[WorldMap],
    params: PlannerParams,
    per_map: int,
    rng: SeededRng,
    cfg: SimulationConfig,
    min_separation: float = 5.0,
    attempts: int = 1000,
    n_jobs: int = 1,
) -> List[EpisodeResult]:
    """
    Deploy the planner `per_map` times on every map between random start-goal pairs.

    Each episode's stream is forked from (map index, deployment index), so
    results do not depend on `n_jobs`.

    Returns:
        list: One EpisodeResult per deployment, maps in input order.
    """
    if not maps:
        raise ContractError("deploy_batch needs at least one map")
    tasks = _map_tasks(maps, per_map, rng, min_separation, attempts, "pair")
    return Parallel(n_jobs=n_jobs)(
        delayed(run_episode)(
            task,
            params,
            cfg,
            rng.fork("episode", map_index, index),
            f"{maps[map_index].map_id}-d{index:03d}",
            maps[map_index].map_id,
        )
        for map_index, index, task in tasks
    )


def evaluate_on_maps(
    maps: Sequence[WorldMap],
    params: PlannerParams,
    trials: int,
    rng: SeededRng,
    cfg: SimulationConfig,
    pairs_per_map: int = 5,
    min_separation: float = 5.0,
    attempts: int = 1000,
    n_jobs: int = 1,
) -> EvaluationReport:
    """Evaluate on sampled start-goal pairs of full maps; environment ids are `<map_id>:pair<j>`."""
    tasks = _map_tasks(maps, pairs_per_map, rng, min_separation, attempts, "heldout")
    named = [(f"{maps[map_index].map_id}:pair{index}", task) for map_index, index, task in tasks]
    return _evaluate_tasks(named, params, trials, rng, cfg, n_jobs)


class DeploymentSimulatorPipeline:
    def __init__(self, params: PlannerParams, config: SimulationConfig, n_jobs: int = 1, log_level: int = 0) -> None:
        """
        Args:
            params (PlannerParams): Planner used for deployments.
            config (SimulationConfig): Simulator settings.
            n_jobs (int): Parallel episode workers.
            log_level (int): Logging verbosity level
        """
        self.params = params
        self.config = config
        self.n_jobs = n_jobs
        self.log_level = log_level

    def deploy(
        self,
        maps: Sequence[WorldMap],
        per_map: int,
        rng: SeededRng,
        traces_dir: str,
        min_separation: float = 5.0,
        attempts: int = 1000,
    ) -> List[str]:
        """
        Run deployments and write one JSONL trace per episode plus `manifest.csv`.

        Returns:
            list: Paths of all files written.
        """
        results = deploy_batch(maps, self.params, per_map, rng, self.config, min_separation, attempts, self.n_jobs)
        os.makedirs(traces_dir, exist_ok=True)
        for stale in os.listdir(traces_dir):
            if stale.endswith(".jsonl") or stale == "manifest.csv":
                os.remove(os.path.join(traces_dir, stale))

        written = []
        rows = []
        for result in results:
            trajectory = result.trajectory
            file_name = f"{trajectory.deployment_id}.jsonl"
            write_trajectory(trajectory, os.path.join(traces_dir, file_name))
            written.append(os.path.join(traces_dir, file_name))
            rows.append(
                {
                    "trace_file": file_name,
                    "deployment_id": trajectory.deployment_id,
                    "map_id": trajectory.map_id,
                    "seed": rng.seed,
                    "outcome": result.outcome,
                    "steps": len(trajectory),
                    "time_cost": result.time_cost,
                    "suboptimal_total": result.suboptimal_total,
                }
            )
            if self.log_level >= 2:
                logger.info(
                    f"{trajectory.deployment_id}: {result.outcome} in {result.time_cost:.1f} s, "
                    f"{result.suboptimal_total} recovery steps"
                )
        manifest_path = os.path.join(traces_dir, "manifest.csv")
        pd.DataFrame(rows, columns=TRACE_MANIFEST_COLUMNS).to_csv(
            manifest_path, index=False, float_format="%.6f", lineterminator="\n"
        )
        written.append(manifest_path)
        if self.log_level >= 1:
            successes = sum(result.success for result in results)
            logger.info(f"Deployed {len(results)} episodes on {len(maps)} maps; {successes} reached the goal")
        return written

