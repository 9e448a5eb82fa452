# Grid navigation primitives: reachability, obstacle inflation, A* global planning and lidar ray casting
import math
import logging
from heapq import heappush, heappop
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from app.models import MapLike, OccupancyGrid, Pose, as_world_map, beam_angles, cell_index
from app.controllers.ResponseCodesController import ContractError, UnreachableError

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]  # (col, row)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
SQRT2 = math.sqrt(2.0)
# (d_row, d_col, cost); orthogonal moves first
MOVES = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0)] + [
    (d_row, d_col, SQRT2) for d_row in (-1, 1) for d_col in (-1, 1)
]
RAY_STEP_FRACTION = 0.25


def _cells_of(env) -> np.ndarray:
    if isinstance(env, np.ndarray):
        return env
    return env.cells


def _check_in_bounds(cells: np.ndarray, cell: Cell, label: str) -> None:
    col, row = cell
    if not (0 <= row < cells.shape[0] and 0 <= col < cells.shape[1]):
        raise ContractError(f"{label} cell {cell} is outside a {cells.shape[1]}x{cells.shape[0]} map")


def is_navigable(env, start_cell: Optional[Cell] = None, goal_cell: Optional[Cell] = None) -> bool:
    """
    Check 4-connected reachability between two free cells.

    Args:
        env: OccupancyGrid, WorldMap or a binary cell matrix (cells[row][col]).
        start_cell (tuple): (col, row); defaults to the grid's start cell.
        goal_cell (tuple): (col, row); defaults to the grid's goal cell.

    Returns:
        bool: True iff a 4-connected free-cell path exists. An occupied start
        or goal gives False.
    """
    cells = _cells_of(env)
    if start_cell is None or goal_cell is None:
        if not isinstance(env, OccupancyGrid):
            raise ContractError("start and goal cells are required for maps other than scenario grids")
        start_cell = start_cell or env.start_cell
        goal_cell = goal_cell or env.goal_cell
    _check_in_bounds(cells, start_cell, "start")
    _check_in_bounds(cells, goal_cell, "goal")
    if cells[start_cell[1], start_cell[0]] or cells[goal_cell[1], goal_cell[0]]:
        return False
    labels, _ = ndimage.label(cells == 0, structure=FOUR_CONNECTED)
    return bool(labels[start_cell[1], start_cell[0]] == labels[goal_cell[1], goal_cell[0]])


def free_components(cells: np.ndarray) -> np.ndarray:
    """Label 4-connected free regions; occupied cells get label 0."""
    labels, _ = ndimage.label(np.asarray(cells) == 0, structure=FOUR_CONNECTED)
    return labels


def disk_structure(radius_cells: float) -> np.ndarray:
    reach = int(math.floor(radius_cells))
    offsets = np.arange(-reach, reach + 1)
    d_row, d_col = np.meshgrid(offsets, offsets, indexing="ij")
    return (d_row**2 + d_col**2) <= radius_cells**2 + 1e-9


def inflate_obstacles(cells: np.ndarray, resolution: float, radius: float) -> np.ndarray:
    """Boolean map of cells within `radius` meters (centre to centre) of an occupied cell."""
    occupied = np.asarray(cells).astype(bool)
    if radius <= 0.0:
        return occupied.copy()
    structure = disk_structure(radius / resolution)
    return ndimage.binary_dilation(occupied, structure=structure)


def _astar(blocked: np.ndarray, start: Cell, goal: Cell) -> Optional[List[Cell]]:
    height, width = blocked.shape
    start_rc = (start[1], start[0])
    goal_rc = (goal[1], goal[0])

    def heuristic(row: int, col: int) -> float:
        return math.hypot(goal_rc[0] - row, goal_rc[1] - col)

    def is_free(row: int, col: int) -> bool:
        return 0 <= row < height and 0 <= col < width and not blocked[row, col]

    # Heap entries (f, row, col): equal f expands the smaller row, then column
    queue = [(heuristic(*start_rc), start_rc[0], start_rc[1])]
    best_cost: Dict[Tuple[int, int], float] = {start_rc: 0.0}
    came_from: Dict[Tuple[int, int], Tuple[int, int]] = {}
    closed = set()

    while queue:
        _, row, col = heappop(queue)
        current = (row, col)
        if current in closed:
            continue
        if current == goal_rc:
            path = [current]
            while current in came_from:
                current = came_from[current]
                path.append(current)
            return [(c, r) for r, c in reversed(path)]
        closed.add(current)

        for d_row, d_col, cost in MOVES:
            nxt = (row + d_row, col + d_col)
            if not is_free(*nxt) or nxt in closed:
                continue
            # No corner cutting
            if d_row and d_col and not (is_free(row + d_row, col) and is_free(row, col + d_col)):
                continue
            new_cost = best_cost[current] + cost
            if new_cost < best_cost.get(nxt, math.inf):
                best_cost[nxt] = new_cost
                came_from[nxt] = current
                heappush(queue, (new_cost + heuristic(*nxt), nxt[0], nxt[1]))
    return None


def plan_global(env: MapLike, start_cell: Cell, goal_cell: Cell, inflation_radius: float = 0.0) -> List[Cell]:
    """
    Shortest 8-connected path by A* with a Euclidean heuristic.

    Obstacles are inflated by `inflation_radius` meters; the start and goal
    cells always stay open. When the inflated map has no path the raw map
    is searched instead.

    Args:
        env: Map to plan on.
        start_cell (tuple): (col, row) start.
        goal_cell (tuple): (col, row) goal.
        inflation_radius (float): Obstacle inflation in meters.

    Returns:
        list: (col, row) waypoints from start to goal inclusive.
    """
    world = as_world_map(env)
    cells = world.cells
    _check_in_bounds(cells, start_cell, "start")
    _check_in_bounds(cells, goal_cell, "goal")
    if cells[start_cell[1], start_cell[0]] or cells[goal_cell[1], goal_cell[0]]:
        raise UnreachableError(f"start {start_cell} or goal {goal_cell} is occupied")

    if inflation_radius > 0.0:
        blocked = inflate_obstacles(cells, world.resolution, inflation_radius)
        blocked[start_cell[1], start_cell[0]] = False
        blocked[goal_cell[1], goal_cell[0]] = False
        path = _astar(blocked, start_cell, goal_cell)
        if path is not None:
            return path
        logger.debug(f"No path on the map inflated by {inflation_radius} m; retrying on the raw map")

    path = _astar(cells.astype(bool), start_cell, goal_cell)
    if path is None:
        raise UnreachableError(f"from {start_cell} to {goal_cell} on map {world.map_id}")
    return path


def path_cost(path: List[Cell]) -> float:
    """Sum of step lengths in cells (1 for orthogonal moves, sqrt(2) for diagonal ones)."""
    return float(sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])))


def path_to_world(path: List[Cell], resolution: float) -> np.ndarray:
    """(n, 2) array of waypoint cell centres in meters."""
    cells = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    return (cells + 0.5) * resolution


def raycast(env: MapLike, pose: Pose, beam_count: int, max_range: float) -> np.ndarray:
    """
    Simulated full-circle lidar.

    Each beam is marched in steps of a quarter cell; the reading is the first
    sample that falls in an occupied cell. Beams that leave the map or reach
    `max_range` without a hit read exactly `max_range`.

    Returns:
        numpy.ndarray: (beam_count,) ranges rounded to 1e-4 m.
    """
    world = as_world_map(env)
    step = world.resolution * RAY_STEP_FRACTION
    distances = step * np.arange(1, int(math.floor(max_range / step)) + 1)
    bearings = pose.theta + beam_angles(beam_count)
    xs = pose.x + np.cos(bearings)[:, None] * distances[None, :]
    ys = pose.y + np.sin(bearings)[:, None] * distances[None, :]
    cols, inside_x = cell_index(xs, world.resolution, world.width)
    rows, inside_y = cell_index(ys, world.resolution, world.height)
    hits = inside_x & inside_y & (world.cells[rows, cols] == 1)
    has_hit = hits.any(axis=1)
    first = np.argmax(hits, axis=1)
    ranges = np.where(has_hit, distances[first], max_range)
    return np.minimum(np.round(ranges, 4), max_range)
