# Turns deployment traces into scenario environments: segmentation, re-oriented rasterization and difficulty filtering
import math
import logging
from typing import List, Literal, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from app.models import (
    GRID_EXTENT,
    GRID_RESOLUTION,
    GRID_SIZE,
    EnvironmentEntry,
    EnvironmentSet,
    OccupancyGrid,
    Scenario,
    StepRecord,
    Trajectory,
    beam_angles,
    cell_index,
    euclidean,
    grid_from_cells,
)
from app.controllers.ResponseCodesController import ContractError, PipelineError
from app.controllers.ArtifactStoreController import load_trajectories, save_environment_set

logger = logging.getLogger(__name__)


class ExtractionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    segment_length: float = Field(default=5.0, gt=0)
    difficulty_threshold: int = Field(default=50, ge=0)
    max_range: float = Field(default=10.0, gt=0)
    unknown_as: Literal["free"] = "free"


def segment_trajectory(traj: Trajectory, cfg: ExtractionConfig) -> List[Scenario]:
    """
    Split a trajectory into scenarios.

    A scenario closes at the first step farther than `segment_length`
    (Euclidean) from its initial step; that step opens the next scenario.
    The trailing partial segment is dropped.

    Args:
        traj (Trajectory): Recorded deployment.
        cfg (ExtractionConfig): Segmentation settings.

    Returns:
        list: Scenarios in trajectory order.
    """
    scenarios = []
    steps = traj.steps
    initial = 0
    for index in range(1, len(steps)):
        if euclidean(steps[initial].pose, steps[index].pose) > cfg.segment_length:
            window = steps[initial : index + 1]
            scenarios.append(
                Scenario(
                    steps=window,
                    initial_index=initial,
                    final_index=index,
                    suboptimal_total=aggregate_suboptimal(window),
                    source_id=traj.deployment_id,
                )
            )
            initial = index
    return scenarios


def aggregate_suboptimal(scenario) -> int:
    """Sum of per-step suboptimal flags, boundary steps included."""
    steps = scenario.steps if isinstance(scenario, Scenario) else tuple(scenario)
    if not steps:
        raise ContractError("cannot aggregate an empty scenario")
    return int(sum(step.suboptimal for step in steps))


def scenario_frame(start, goal) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rigid transform into the scenario frame.

    Returns:
        tuple: (R, offset) such that p' = R @ (p - start) + offset puts the
        start at the bottom-middle and the start->goal direction along +y.
    """
    dx, dy = goal.x - start.x, goal.y - start.y
    if math.hypot(dx, dy) == 0.0:
        raise ContractError("scenario start and goal coincide")
    angle = math.pi / 2 - math.atan2(dy, dx)
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    return rotation, np.array([GRID_EXTENT / 2, 0.0])


def lidar_endpoints(steps: Sequence[StepRecord], max_range: float) -> np.ndarray:
    """(n, 2) world-frame endpoints of every beam that hit something (range < max_range)."""
    points = []
    for step in steps:
        hit = step.scan < max_range
        if not np.any(hit):
            continue
        bearings = step.pose.theta + beam_angles(step.scan.size)[hit]
        ranges = step.scan[hit]
        points.append(
            np.column_stack((step.pose.x + ranges * np.cos(bearings), step.pose.y + ranges * np.sin(bearings)))
        )
    if not points:
        return np.zeros((0, 2))
    return np.vstack(points)


def to_scenario_frame(points: np.ndarray, start, goal) -> np.ndarray:
    rotation, offset = scenario_frame(start, goal)
    relative = np.asarray(points, dtype=np.float64).reshape(-1, 2) - np.array([start.x, start.y])
    return relative @ rotation.T + offset


def rasterize_scenario(scenario: Scenario, cfg: ExtractionConfig) -> OccupancyGrid:
    """
    Rebuild a scenario's environment from its lidar endpoints.

    Endpoints are moved into the scenario frame and every cell holding at
    least one endpoint inside the 5 m x 5 m window is occupied; everything
    else, including space never observed, is free.

    Args:
        scenario (Scenario): Sub-trajectory to rasterize.
        cfg (ExtractionConfig): Supplies the lidar max range.

    Returns:
        OccupancyGrid: Grid with start at (15, 0) and goal at (15, 29), both free.
    """
    local = to_scenario_frame(lidar_endpoints(scenario.steps, cfg.max_range), scenario.start, scenario.goal)
    cells = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.uint8)
    cols, inside_x = cell_index(local[:, 0], GRID_RESOLUTION, GRID_SIZE)
    rows, inside_y = cell_index(local[:, 1], GRID_RESOLUTION, GRID_SIZE)
    inside = inside_x & inside_y
    cells[rows[inside], cols[inside]] = 1
    return grid_from_cells(cells)


def filter_challenging(envs: EnvironmentSet, cfg: ExtractionConfig) -> EnvironmentSet:
    """Keep entries whose suboptimal count is strictly above the threshold, in order."""
    if envs.kind != "raw":
        raise ContractError(f"expected a raw environment set, got {envs.kind}")
    kept = tuple(
        entry
        for entry in envs
        if entry.suboptimal_total is not None and entry.suboptimal_total > cfg.difficulty_threshold
    )
    return EnvironmentSet(entries=kept, kind="challenging", difficulty_threshold=cfg.difficulty_threshold)


def _extract_trajectory(traj: Trajectory, cfg: ExtractionConfig) -> Tuple[list, int]:
    results = []
    skipped = 0
    for scenario in segment_trajectory(traj, cfg):
        try:
            grid = rasterize_scenario(scenario, cfg)
        except PipelineError as e:
            logger.warning(f"Skipping scenario {traj.deployment_id}[{scenario.initial_index}]: {str(e)}")
            skipped += 1
            continue
        results.append((grid, scenario))
    return results, skipped


def extract_domain(
    trajs: Sequence[Trajectory], cfg: ExtractionConfig, n_jobs: int = 1
) -> Tuple[EnvironmentSet, EnvironmentSet]:
    """
    Segment and rasterize every trajectory, then filter the challenging subset.

    Args:
        trajs (list): Trajectories, processed independently.
        cfg (ExtractionConfig): Extraction settings.
        n_jobs (int): joblib worker count; output order always follows input order.

    Returns:
        tuple: (raw, challenging) environment sets.
    """
    if not trajs:
        raise ContractError("extract_domain needs at least one trajectory")
    per_trajectory = Parallel(n_jobs=n_jobs)(delayed(_extract_trajectory)(traj, cfg) for traj in trajs)

    entries = []
    skipped = 0
    for results, skipped_here in per_trajectory:
        skipped += skipped_here
        for grid, scenario in results:
            entries.append(
                EnvironmentEntry(
                    env_id=f"raw-{len(entries):05d}",
                    grid=grid,
                    suboptimal_total=scenario.suboptimal_total,
                    provenance="extracted",
                    source_id=scenario.source_id,
                    initial_index=scenario.initial_index,
                    final_index=scenario.final_index,
                )
            )
    if skipped:
        logger.warning(f"{skipped} scenario(s) could not be rasterized and were skipped")

    raw = EnvironmentSet(entries=tuple(entries), kind="raw")
    return raw, filter_challenging(raw, cfg)


class DomainExtractionPipeline:
    def __init__(self, config: ExtractionConfig, n_jobs: int = 1, log_level: int = 0) -> None:
        """
        Args:
            config (ExtractionConfig): Extraction settings.
            n_jobs (int): Parallel workers for per-trajectory processing.
            log_level (int): Logging verbosity level
        """
        self.config = config
        self.n_jobs = n_jobs
        self.log_level = log_level

    def run(self, traces_dir: str, raw_dir: str, challenging_dir: str) -> dict:
        """
        Extract environments from every trace in `traces_dir` and write both sets.

        Returns:
            dict: Counts and the list of files written.
        """
        trajectories = load_trajectories(traces_dir)
        try:
            raw, challenging = extract_domain(trajectories, self.config, n_jobs=self.n_jobs)
        except Exception as e:
            logger.error(f"Error extracting environments: {str(e)}")
            raise

        outputs = save_environment_set(raw, raw_dir) + save_environment_set(challenging, challenging_dir)
        if self.log_level >= 1:
            logger.info(
                f"Extracted {len(raw)} environments from {len(trajectories)} traces; "
                f"{len(challenging)} above {self.config.difficulty_threshold} suboptimal steps"
            )
        if self.log_level >= 2:
            for entry in challenging:
                logger.info(f"  {entry.env_id}: c={entry.suboptimal_total} from {entry.source_id}")
        return {
            "trajectories": len(trajectories),
            "raw": len(raw),
            "challenging": len(challenging),
            "outputs": outputs,
        }
