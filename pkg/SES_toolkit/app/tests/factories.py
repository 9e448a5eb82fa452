"""Builders shared by the test modules."""

import math
import tempfile
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from app.models import (
    GRID_SIZE,
    EnvironmentSet,
    OccupancyGrid,
    Pose,
    StepRecord,
    Trajectory,
    WorldMap,
    grid_from_cells,
)
from app.controllers.NavigationPlannerController import is_navigable
from app.utils.rng import SeededRng


class TempDirMixin:
    """Gives each test a fresh temporary directory as `self.tmp`."""

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()


def empty_cells() -> np.ndarray:
    return np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.uint8)


def open_grid() -> OccupancyGrid:
    return grid_from_cells(empty_cells())


def wall_grid(row: int = 15, gap_col: Optional[int] = None) -> OccupancyGrid:
    """A full horizontal wall, optionally with a one-cell gap."""
    cells = empty_cells()
    cells[row, :] = 1
    if gap_col is not None:
        cells[row, gap_col] = 0
    return grid_from_cells(cells)


def side_wall_grid(side: str, thickness: int = 10) -> OccupancyGrid:
    """Columns along the left or right edge occupied; the middle column stays free."""
    cells = empty_cells()
    if side == "left":
        cells[:, :thickness] = 1
    else:
        cells[:, GRID_SIZE - thickness :] = 1
    return grid_from_cells(cells)


def bimodal_grids(per_mode: int = 32, seed: int = 0, noise_cells: int = 4) -> list:
    """
    Left-wall and right-wall grids, alternating, each with a few flipped
    cells far from the middle column.
    """
    rng = SeededRng(seed, ("bimodal",))
    grids = []
    for index in range(2 * per_mode):
        side = "left" if index % 2 == 0 else "right"
        cells = side_wall_grid(side).cells.copy()
        for _ in range(noise_cells):
            row = int(rng.integers(0, GRID_SIZE))
            col = int(rng.integers(0, 8)) if side == "right" else int(rng.integers(GRID_SIZE - 8, GRID_SIZE))
            cells[row, col] = 1 - cells[row, col]
        grids.append(grid_from_cells(cells))
    return grids


def random_grids(count: int, density: float, seed: int) -> list:
    rng = SeededRng(seed, ("random-grids",))
    return [grid_from_cells((rng.random((GRID_SIZE, GRID_SIZE)) < density).astype(np.uint8)) for _ in range(count)]


def env_set(grids: Sequence[OccupancyGrid], kind: str = "raw", totals: Optional[Sequence[int]] = None, threshold=None):
    if kind == "challenging" and totals is None:
        threshold = 50 if threshold is None else threshold
        totals = [threshold + 1] * len(grids)
    return EnvironmentSet.from_grids(grids, kind=kind, suboptimal_totals=totals, difficulty_threshold=threshold)


def step(x: float, y: float, theta: float = 0.0, flag: int = 0, scan: Optional[Iterable[float]] = None, beams: int = 8):
    ranges = np.full(beams, 10.0) if scan is None else np.asarray(list(scan), dtype=np.float64)
    return StepRecord(scan=ranges, pose=Pose(x, y, theta), suboptimal=flag)


def trajectory_from_points(
    points: Sequence[Tuple[float, float]], flags: Optional[Sequence[int]] = None, deployment_id: str = "dep-000"
) -> Trajectory:
    flags = [0] * len(points) if flags is None else flags
    steps = tuple(step(x, y, flag=flag) for (x, y), flag in zip(points, flags))
    return Trajectory(steps=steps, deployment_id=deployment_id, map_id="map-000")


def straight_trajectory(length: float = 12.0, spacing: float = 0.5, deployment_id: str = "dep-000") -> Trajectory:
    count = int(round(length / spacing)) + 1
    return trajectory_from_points([(index * spacing, 0.0) for index in range(count)], deployment_id=deployment_id)


def loop_trajectory(radius: float = 2.0, count: int = 200) -> Trajectory:
    angles = 2.0 * math.pi * np.arange(count) / count
    return trajectory_from_points([(radius * math.cos(a), radius * math.sin(a)) for a in angles])


def random_walk_trajectory(seed: int, steps: int = 400, deployment_id: str = "walk") -> Trajectory:
    """Heading-persistent random walk with random recovery flags and hit ranges."""
    rng = SeededRng(seed, ("walk",))
    x = y = 0.0
    heading = float(rng.uniform(-math.pi, math.pi))
    records = []
    for _ in range(steps):
        scan = np.round(rng.uniform(0.5, 10.0, size=8), 4)
        scan[rng.random(8) < 0.3] = 10.0
        records.append(StepRecord(scan=scan, pose=Pose(x, y, heading), suboptimal=int(rng.random() < 0.2)))
        heading += float(rng.normal(0.0, 0.3))
        distance = float(rng.uniform(0.0, 0.4))
        x += distance * math.cos(heading)
        y += distance * math.sin(heading)
    return Trajectory(steps=tuple(records), deployment_id=deployment_id, map_id="walk-map")


def room_map(width: int = 60, height: int = 60, resolution: float = 0.1, map_id: str = "room") -> WorldMap:
    """Open room with a one-cell border wall."""
    cells = np.zeros((height, width), dtype=np.uint8)
    cells[0, :] = cells[-1, :] = 1
    cells[:, 0] = cells[:, -1] = 1
    return WorldMap(cells=cells, resolution=resolution, map_id=map_id)


def boxed_grid() -> OccupancyGrid:
    """The start cell enclosed on all four sides."""
    cells = empty_cells()
    cells[1, 14:17] = 1
    cells[0, 14] = cells[0, 16] = 1
    return grid_from_cells(cells)


def corridor_grid(turn_col: Optional[int] = None) -> OccupancyGrid:
    """Everything occupied except a one-cell corridor from the start cell to the goal cell.

    With `turn_col` the corridor leaves the middle column at row 10, runs up
    column `turn_col` to row 20 and comes back.
    """
    cells = np.ones((GRID_SIZE, GRID_SIZE), dtype=np.uint8)
    middle = GRID_SIZE // 2
    if turn_col is None:
        cells[:, middle] = 0
        return grid_from_cells(cells)
    low, high = sorted((turn_col, middle))
    cells[:11, middle] = 0
    cells[10, low : high + 1] = 0
    cells[10:21, turn_col] = 0
    cells[20, low : high + 1] = 0
    cells[20:, middle] = 0
    return grid_from_cells(cells)


def navigable_grids(count: int, density: float, seed: int) -> list:
    """The first `count` sparse random grids with a free start-to-goal path."""
    rng = SeededRng(seed, ("navigable-grids",))
    grids = []
    while len(grids) < count:
        cells = (rng.random((GRID_SIZE, GRID_SIZE)) < density).astype(np.uint8)
        cells[0, GRID_SIZE // 2] = cells[-1, GRID_SIZE // 2] = 0
        grid = grid_from_cells(cells)
        if is_navigable(grid):
            grids.append(grid)
    return grids
