"""
Domain types shared by every stage of the environment synthesis pipeline.

All types are immutable after construction; numpy payloads are stored as
read-only copies so instances can be shared between worker processes.
"""

import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.controllers.ResponseCodesController import (
    ContractError,
    GridDimensionError,
    GridValueError,
)

GRID_SIZE = 30
GRID_EXTENT = 5.0
GRID_RESOLUTION = GRID_EXTENT / GRID_SIZE
START_CELL = (15, 0)  # (col, row); row 0 is the bottom edge
GOAL_CELL = (15, 29)
ENV_KINDS = ("raw", "challenging", "synthesized")

# Decimals kept when snapping world coordinates onto cell boundaries.
BOUNDARY_DECIMALS = 9


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]; angles already in range are returned unchanged."""
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def cell_index(values, resolution: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map world coordinates along one axis to cell indices.

    Cells are half-open on the low side, (i*res, (i+1)*res]; coordinates
    within 1e-9 cells of a boundary snap onto it, and 0 belongs to cell 0.

    Args:
        values: Scalar or array of coordinates in meters.
        resolution (float): Meters per cell.
        count (int): Number of cells along the axis.

    Returns:
        tuple: (indices, inside) arrays; indices are clamped to [0, count-1] and
        only meaningful where inside is True.
    """
    scaled = np.round(np.asarray(values, dtype=np.float64) / resolution, BOUNDARY_DECIMALS)
    inside = (scaled >= 0.0) & (scaled <= count)
    indices = np.clip(np.ceil(scaled).astype(np.int64) - 1, 0, count - 1)
    return indices, inside


def cell_center(col: int, row: int, resolution: float) -> Tuple[float, float]:
    return (col + 0.5) * resolution, (row + 0.5) * resolution


def beam_angles(beam_count: int) -> np.ndarray:
    """Bearings of a full-circle lidar relative to the robot heading: -pi + 2*pi*i/B."""
    return -math.pi + 2.0 * math.pi * np.arange(beam_count, dtype=np.float64) / beam_count


@dataclass(frozen=True)
class Pose:
    """Robot pose in the world frame."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ContractError(f"pose must be finite, got ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def euclidean(a: Pose, b: Pose) -> float:
    """Planar distance between two poses; headings are ignored."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True, eq=False)
class StepRecord:
    """One recorded control step: lidar scan, pose and the recovery flag."""

    scan: np.ndarray
    pose: Pose
    suboptimal: int = 0

    def __post_init__(self) -> None:
        scan = _frozen_array(self.scan, np.float64)
        if scan.ndim != 1 or scan.size == 0:
            raise ContractError("scan must be a non-empty 1-D array of ranges")
        if not np.all(np.isfinite(scan)) or np.any(scan < 0.0):
            raise ContractError("scan ranges must be finite and non-negative")
        if self.suboptimal not in (0, 1):
            raise ContractError(f"suboptimal flag must be 0 or 1, got {self.suboptimal}")
        object.__setattr__(self, "scan", scan)
        object.__setattr__(self, "suboptimal", int(self.suboptimal))

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepRecord):
            return NotImplemented
        return (
            self.pose == other.pose
            and self.suboptimal == other.suboptimal
            and np.array_equal(self.scan, other.scan)
        )

    __hash__ = None


@dataclass(frozen=True)
class Trajectory:
    """A full deployment trace."""

    steps: Tuple[StepRecord, ...]
    deployment_id: str
    map_id: str
    max_range: float = 10.0

    def __post_init__(self) -> None:
        steps = tuple(self.steps)
        if not steps:
            raise ContractError(f"trajectory {self.deployment_id} is empty")
        beam_count = steps[0].scan.size
        for index, step in enumerate(steps):
            if step.scan.size != beam_count:
                raise ContractError(f"step {index} has {step.scan.size} beams, expected {beam_count}")
            if np.any(step.scan > self.max_range):
                raise ContractError(f"step {index} has ranges beyond max_range {self.max_range}")
            if index and euclidean(steps[index - 1].pose, step.pose) >= 1.0:
                raise ContractError(f"steps {index - 1} and {index} are 1 m or more apart")
        object.__setattr__(self, "steps", steps)

    @property
    def beam_count(self) -> int:
        return self.steps[0].scan.size

    def __len__(self) -> int:
        return len(self.steps)

    def suboptimal_total(self) -> int:
        return sum(step.suboptimal for step in self.steps)


@dataclass(frozen=True)
class Scenario:
    """A sub-trajectory between an initial and a final step of one trajectory."""

    steps: Tuple[StepRecord, ...]
    initial_index: int
    final_index: int
    suboptimal_total: int
    source_id: str = ""

    def __post_init__(self) -> None:
        steps = tuple(self.steps)
        if not steps:
            raise ContractError("scenario must contain at least one step")
        if len(steps) != self.final_index - self.initial_index + 1:
            raise ContractError("scenario length does not match its index range")
        if self.suboptimal_total != sum(step.suboptimal for step in steps):
            raise ContractError("suboptimal_total must equal the sum of step flags")
        object.__setattr__(self, "steps", steps)

    @property
    def start(self) -> Pose:
        return self.steps[0].pose

    @property
    def goal(self) -> Pose:
        return self.steps[-1].pose


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """A 30x30 scenario environment over 5 m x 5 m; cells[row][col], row 0 at the bottom."""

    cells: np.ndarray

    def __post_init__(self) -> None:
        cells = _frozen_array(self.cells, np.uint8)
        if cells.shape != (GRID_SIZE, GRID_SIZE):
            raise GridDimensionError(f"got shape {cells.shape}")
        if np.any(cells > 1):
            raise GridValueError("found values outside {0, 1}")
        if cells[START_CELL[1], START_CELL[0]] or cells[GOAL_CELL[1], GOAL_CELL[0]]:
            raise ContractError("start and goal cells must be free")
        object.__setattr__(self, "cells", cells)

    extent = GRID_EXTENT
    resolution = GRID_RESOLUTION
    start_cell = START_CELL
    goal_cell = GOAL_CELL

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    def __hash__(self) -> int:
        return hash(self.cells.tobytes())

    def density(self) -> float:
        return float(self.cells.mean())

    def to_world_map(self, map_id: str = "scenario") -> "WorldMap":
        return WorldMap(cells=self.cells, resolution=self.resolution, map_id=map_id)


def grid_from_cells(cells) -> OccupancyGrid:
    """
    Build an OccupancyGrid from a 30x30 binary matrix.

    The start cell (col 15, row 0) and goal cell (col 15, row 29) are forced
    free; every other cell is kept as given.

    Args:
        cells: 30x30 matrix of {0, 1}.

    Returns:
        OccupancyGrid: The validated grid.
    """
    matrix = np.asarray(cells)
    if matrix.ndim != 2 or matrix.shape != (GRID_SIZE, GRID_SIZE):
        raise GridDimensionError(f"got shape {matrix.shape}")
    if not np.all(np.isin(matrix, (0, 1))):
        raise GridValueError("found values outside {0, 1}")
    matrix = matrix.astype(np.uint8)
    matrix[START_CELL[1], START_CELL[0]] = 0
    matrix[GOAL_CELL[1], GOAL_CELL[0]] = 0
    return OccupancyGrid(matrix)


def grid_to_bitvector(grid: OccupancyGrid) -> np.ndarray:
    """Row-major flattening: element r*30+c is cells[r][c]."""
    return grid.cells.reshape(GRID_SIZE * GRID_SIZE).copy()


def grid_from_bitvector(vector) -> OccupancyGrid:
    return grid_from_cells(np.asarray(vector).reshape(GRID_SIZE, GRID_SIZE))


@dataclass(frozen=True, eq=False)
class WorldMap:
    """An arbitrary-size deployment map; cells[row][col], row 0 at the bottom."""

    cells: np.ndarray
    resolution: float
    map_id: str = "map"

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or min(cells.shape) < 2:
            raise GridDimensionError(f"map {self.map_id} must be at least 2x2, got {cells.shape}")
        if not np.all(np.isin(cells, (0, 1))):
            raise GridValueError(f"map {self.map_id} has values outside {{0, 1}}")
        if not self.resolution > 0:
            raise ContractError(f"map {self.map_id} resolution must be positive")
        object.__setattr__(self, "cells", _frozen_array(cells, np.uint8))
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def size_meters(self) -> Tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution

    def cell_of(self, x: float, y: float) -> Optional[Tuple[int, int]]:
        """(col, row) of a world point, or None outside the map."""
        cols, inside_x = cell_index(x, self.resolution, self.width)
        rows, inside_y = cell_index(y, self.resolution, self.height)
        if not (bool(inside_x) and bool(inside_y)):
            return None
        return int(cols), int(rows)

    def is_free(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height and not self.cells[row, col]


MapLike = Union[OccupancyGrid, WorldMap]


def as_world_map(env: MapLike) -> WorldMap:
    return env.to_world_map() if isinstance(env, OccupancyGrid) else env


@dataclass(frozen=True)
class NavigationTask:
    """An environment with start and goal poses."""

    env: MapLike
    start: Pose
    goal: Pose

    def __post_init__(self) -> None:
        world = as_world_map(self.env)
        for label, pose in (("start", self.start), ("goal", self.goal)):
            cell = world.cell_of(pose.x, pose.y)
            if cell is None:
                raise ContractError(f"{label} pose ({pose.x:.3f}, {pose.y:.3f}) is outside the map")
            if not world.is_free(*cell):
                raise ContractError(f"{label} pose lies on occupied cell {cell}")

    @classmethod
    def for_grid(cls, grid: OccupancyGrid) -> "NavigationTask":
        """The canonical scenario task: bottom-middle to top-middle, facing +y."""
        start = Pose(*cell_center(*grid.start_cell, grid.resolution), math.pi / 2)
        goal = Pose(*cell_center(*grid.goal_cell, grid.resolution), math.pi / 2)
        return cls(env=grid, start=start, goal=goal)

    def cells(self) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        world = as_world_map(self.env)
        return world.cell_of(self.start.x, self.start.y), world.cell_of(self.goal.x, self.goal.y)


@dataclass(frozen=True)
class EnvironmentEntry:
    """One environment of a set, with its difficulty count and where it came from."""

    env_id: str
    grid: OccupancyGrid
    suboptimal_total: Optional[int] = None
    provenance: str = ""
    source_id: Optional[str] = None
    initial_index: Optional[int] = None
    final_index: Optional[int] = None
    source_index: Optional[int] = None


@dataclass(frozen=True)
class EnvironmentSet:
    """Ordered environments of one kind: raw, challenging or synthesized."""

    entries: Tuple[EnvironmentEntry, ...]
    kind: str
    difficulty_threshold: Optional[int] = None

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        if self.kind not in ENV_KINDS:
            raise ContractError(f"unknown environment set kind {self.kind!r}")
        if self.kind == "challenging":
            if self.difficulty_threshold is None:
                raise ContractError("a challenging set must record its difficulty threshold")
            for entry in entries:
                if entry.suboptimal_total is None or entry.suboptimal_total <= self.difficulty_threshold:
                    raise ContractError(
                        f"{entry.env_id} has suboptimal_total {entry.suboptimal_total}, "
                        f"not above {self.difficulty_threshold}"
                    )
        if self.kind == "synthesized":
            from app.controllers.NavigationPlannerController import is_navigable

            for entry in entries:
                if not is_navigable(entry.grid):
                    raise ContractError(f"synthesized environment {entry.env_id} is not navigable")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[EnvironmentEntry]:
        return iter(self.entries)

    def __getitem__(self, index: int) -> EnvironmentEntry:
        return self.entries[index]

    def grids(self) -> List[OccupancyGrid]:
        return [entry.grid for entry in self.entries]

    def bitvectors(self) -> np.ndarray:
        """(N, 900) uint8 matrix of flattened grids."""
        if not self.entries:
            return np.zeros((0, GRID_SIZE * GRID_SIZE), dtype=np.uint8)
        return np.stack([grid_to_bitvector(entry.grid) for entry in self.entries])

    @classmethod
    def empty(cls, kind: str, difficulty_threshold: Optional[int] = None) -> "EnvironmentSet":
        return cls(entries=(), kind=kind, difficulty_threshold=difficulty_threshold)

    @classmethod
    def from_grids(
        cls,
        grids: Sequence[OccupancyGrid],
        kind: str = "raw",
        suboptimal_totals: Optional[Sequence[int]] = None,
        prefix: str = "env",
        difficulty_threshold: Optional[int] = None,
    ) -> "EnvironmentSet":
        totals = list(suboptimal_totals) if suboptimal_totals is not None else [0] * len(grids)
        entries = tuple(
            EnvironmentEntry(env_id=f"{prefix}-{index:05d}", grid=grid, suboptimal_total=total)
            for index, (grid, total) in enumerate(zip(grids, totals))
        )
        return cls(entries=entries, kind=kind, difficulty_threshold=difficulty_threshold)
