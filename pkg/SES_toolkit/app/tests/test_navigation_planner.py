import math

import numpy as np
from django.test import SimpleTestCase
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import dijkstra

from app.controllers.NavigationPlannerController import (
    MOVES,
    free_components,
    inflate_obstacles,
    is_navigable,
    path_cost,
    path_to_world,
    plan_global,
    raycast,
)
from app.controllers.ResponseCodesController import ContractError, UnreachableError
from app.models import Pose, WorldMap, grid_from_cells
from app.tests.factories import empty_cells, open_grid, random_grids, room_map, wall_grid


def dijkstra_cost(blocked: np.ndarray, start, goal) -> float:
    """Shortest 8-connected cost without corner cutting, via scipy's graph search."""
    height, width = blocked.shape
    graph = lil_matrix((height * width, height * width))
    for row in range(height):
        for col in range(width):
            if blocked[row, col]:
                continue
            for d_row, d_col, cost in MOVES:
                r, c = row + d_row, col + d_col
                if not (0 <= r < height and 0 <= c < width) or blocked[r, c]:
                    continue
                if d_row and d_col and (blocked[row + d_row, col] or blocked[row, col + d_col]):
                    continue
                graph[row * width + col, r * width + c] = cost
    distances = dijkstra(graph.tocsr(), indices=start[1] * width + start[0])
    return float(distances[goal[1] * width + goal[0]])


def paths_are_valid(test, blocked, path, start, goal):
    test.assertEqual(path[0], start)
    test.assertEqual(path[-1], goal)
    for (c0, r0), (c1, r1) in zip(path, path[1:]):
        test.assertLessEqual(max(abs(c1 - c0), abs(r1 - r0)), 1)
        test.assertFalse(blocked[r1, c1])
        if c1 != c0 and r1 != r0:
            test.assertFalse(blocked[r0, c1] or blocked[r1, c0])


class NavigabilityTests(SimpleTestCase):
    def test_open_grid(self):
        self.assertTrue(is_navigable(open_grid()))

    def test_full_wall(self):
        self.assertFalse(is_navigable(wall_grid()))

    def test_wall_with_gap(self):
        self.assertTrue(is_navigable(wall_grid(gap_col=7)))

    def test_diagonal_gap_is_not_a_passage(self):
        cells = empty_cells()
        for col in range(30):
            cells[15 if col < 10 else 16, col] = 1
        self.assertFalse(is_navigable(grid_from_cells(cells)))

    def test_occupied_endpoint_is_false_not_error(self):
        cells = np.zeros((5, 5), dtype=np.uint8)
        cells[4, 4] = 1
        self.assertFalse(is_navigable(cells, (0, 0), (4, 4)))

    def test_miniature_gap(self):
        cells = np.zeros((5, 5), dtype=np.uint8)
        cells[2, :] = 1
        self.assertFalse(is_navigable(cells, (2, 0), (2, 4)))
        cells[2, 4] = 0
        self.assertTrue(is_navigable(cells, (2, 0), (2, 4)))

    def test_world_map_needs_cells(self):
        with self.assertRaises(ContractError):
            is_navigable(room_map())

    def test_out_of_bounds(self):
        with self.assertRaises(ContractError):
            is_navigable(open_grid(), (30, 0), (15, 29))

    def test_components(self):
        labels = free_components(wall_grid().cells)
        self.assertEqual(len(np.unique(labels[labels > 0])), 2)


class PlannerTests(SimpleTestCase):
    def test_straight_corridor(self):
        path = plan_global(open_grid(), (15, 0), (15, 29))
        self.assertEqual(path, [(15, row) for row in range(30)])
        self.assertEqual(path_cost(path), 29.0)

    def test_diagonal_is_octile_optimal(self):
        path = plan_global(open_grid(), (0, 0), (29, 20))
        self.assertAlmostEqual(path_cost(path), 20 * math.sqrt(2) + 9, delta=1e-9)

    def test_matches_dijkstra(self):
        for grid in random_grids(12, 0.3, seed=5):
            blocked = grid.cells.astype(bool)
            expected = dijkstra_cost(blocked, grid.start_cell, grid.goal_cell)
            if math.isinf(expected):
                with self.assertRaises(UnreachableError):
                    plan_global(grid, grid.start_cell, grid.goal_cell)
                continue
            path = plan_global(grid, grid.start_cell, grid.goal_cell)
            paths_are_valid(self, blocked, path, grid.start_cell, grid.goal_cell)
            self.assertAlmostEqual(path_cost(path), expected, delta=1e-9)

    def test_no_corner_cutting(self):
        cells = np.zeros((3, 3), dtype=np.uint8)
        cells[1, 0] = cells[0, 1] = 1
        cells[1, 1] = 0
        with self.assertRaises(UnreachableError):
            plan_global(WorldMap(cells=cells, resolution=1.0), (0, 0), (1, 1))

    def test_blocked(self):
        with self.assertRaises(UnreachableError):
            plan_global(wall_grid(), (15, 0), (15, 29))

    def test_unreachable_is_not_a_contract_error(self):
        self.assertFalse(issubclass(UnreachableError, ContractError))

    def test_inflation_keeps_clear_of_walls(self):
        cells = empty_cells()
        cells[10:20, 12] = 1
        grid = grid_from_cells(cells)
        path = plan_global(grid, (13, 5), (13, 25), inflation_radius=0.3)
        inflated = inflate_obstacles(grid.cells, grid.resolution, 0.3)
        self.assertFalse(any(inflated[row, col] for col, row in path[1:-1]))

    def test_inflation_falls_back_to_raw_map(self):
        path = plan_global(wall_grid(gap_col=15), (15, 0), (15, 29), inflation_radius=0.5)
        self.assertIn((15, 15), path)

    def test_world_coordinates(self):
        np.testing.assert_allclose(path_to_world([(0, 0), (2, 3)], 0.5), [[0.25, 0.25], [1.25, 1.75]])


class InflationTests(SimpleTestCase):
    def test_zero_radius(self):
        cells = empty_cells()
        cells[5, 5] = 1
        self.assertEqual(int(inflate_obstacles(cells, 1 / 6, 0.0).sum()), 1)

    def test_disk(self):
        cells = np.zeros((9, 9), dtype=np.uint8)
        cells[4, 4] = 1
        inflated = inflate_obstacles(cells, 1.0, 1.0)
        self.assertEqual(int(inflated.sum()), 5)
        self.assertEqual(int(inflate_obstacles(cells, 1.0, 1.5).sum()), 9)


class RaycastTests(SimpleTestCase):
    def test_open_grid_reads_max_range(self):
        ranges = raycast(open_grid(), Pose(2.5, 2.5), beam_count=16, max_range=10.0)
        self.assertTrue(np.all(ranges == 10.0))

    def test_wall_distance(self):
        ranges = raycast(room_map(60, 60), Pose(3.0, 3.0, 0.0), beam_count=4, max_range=10.0)
        # beam 2 points along the heading; the right wall starts just past x = 5.9
        self.assertAlmostEqual(ranges[2], 2.925, places=4)
        self.assertTrue(np.all(ranges < 3.0))

    def test_max_range_caps_reading(self):
        ranges = raycast(room_map(60, 60), Pose(3.0, 3.0, 0.0), beam_count=4, max_range=1.0)
        self.assertTrue(np.all(ranges == 1.0))
