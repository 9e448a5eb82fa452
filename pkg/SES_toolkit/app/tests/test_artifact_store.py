import json
import os

import numpy as np
from django.test import SimpleTestCase

from app.controllers.ArtifactStoreController import (
    format_grid_line,
    format_grid_pgm,
    hash_files,
    list_files,
    load_environment_set,
    load_trajectories,
    load_world_maps,
    parse_grid_line,
    parse_grid_pgm,
    read_grid,
    read_trajectory,
    read_world_map,
    save_environment_set,
    trace_lines,
    write_trajectory,
    write_world_map,
)
from app.controllers.ResponseCodesController import DataError, TraceParseError
from app.models import EnvironmentEntry, EnvironmentSet, WorldMap
from app.tests.factories import TempDirMixin, env_set, random_grids, random_walk_trajectory, room_map, wall_grid


class TraceFileTests(TempDirMixin, SimpleTestCase):
    def test_round_trip(self):
        trajectory = random_walk_trajectory(seed=3, steps=50)
        path = os.path.join(self.tmp, "walk.jsonl")
        write_trajectory(trajectory, path)
        loaded = read_trajectory(path)
        self.assertEqual(loaded.deployment_id, trajectory.deployment_id)
        self.assertEqual(loaded.map_id, trajectory.map_id)
        self.assertEqual(loaded.steps, trajectory.steps)

    def test_malformed_line_names_line_number(self):
        lines = trace_lines(random_walk_trajectory(seed=1, steps=30))
        lines[16] = '{"scan": [1.0], "x": 0'
        path = os.path.join(self.tmp, "broken.jsonl")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
        with self.assertRaises(TraceParseError) as ctx:
            read_trajectory(path)
        self.assertEqual(ctx.exception.line_number, 17)
        self.assertEqual(ctx.exception.exit_status, 3)

    def test_beam_count_mismatch(self):
        lines = trace_lines(random_walk_trajectory(seed=1, steps=5))
        record = json.loads(lines[3])
        record["scan"] = record["scan"][:4]
        lines[3] = json.dumps(record)
        path = os.path.join(self.tmp, "beams.jsonl")
        with open(path, "w") as f:
            f.write("\n".join(lines))
        with self.assertRaises(TraceParseError) as ctx:
            read_trajectory(path)
        self.assertEqual(ctx.exception.line_number, 4)

    def test_header_only(self):
        path = os.path.join(self.tmp, "empty.jsonl")
        with open(path, "w") as f:
            f.write(trace_lines(random_walk_trajectory(seed=1, steps=2))[0] + "\n")
        with self.assertRaises(TraceParseError):
            read_trajectory(path)

    def test_missing_directory(self):
        with self.assertRaises(DataError) as ctx:
            load_trajectories(os.path.join(self.tmp, "nothing"))
        self.assertEqual(ctx.exception.code_key, "TRACES_MISSING")

    def test_natural_order(self):
        for index in (10, 2, 1):
            write_trajectory(random_walk_trajectory(seed=index, steps=3, deployment_id=f"dep-{index}"),
                             os.path.join(self.tmp, f"dep-{index}.jsonl"))
        ids = [trajectory.deployment_id for trajectory in load_trajectories(self.tmp)]
        self.assertEqual(ids, ["dep-1", "dep-2", "dep-10"])


class GridFileTests(TempDirMixin, SimpleTestCase):
    def test_pgm_layout(self):
        text = format_grid_pgm(wall_grid(row=0, gap_col=15))
        lines = text.splitlines()
        self.assertEqual(lines[:3], ["P2", "30 30", "1"])
        # bottom row is written last; its only free pixel is the start cell
        bottom = lines[-1].split()
        self.assertEqual(bottom.count("1"), 1)
        self.assertEqual(bottom[15], "1")
        self.assertTrue(all(token == "1" for token in lines[3].split()))

    def test_pgm_and_line_agree(self):
        for grid in random_grids(4, 0.35, seed=9):
            self.assertEqual(parse_grid_pgm(format_grid_pgm(grid)), grid)
            self.assertEqual(parse_grid_line(format_grid_line(grid)), grid)
            self.assertEqual(len(format_grid_line(grid)), 901)

    def test_pgm_comments_ignored(self):
        text = format_grid_pgm(wall_grid(gap_col=3)).replace("P2\n", "P2\n# generated\n", 1)
        self.assertEqual(parse_grid_pgm(text), wall_grid(gap_col=3))

    def test_bad_pgm(self):
        with self.assertRaises(DataError):
            parse_grid_pgm("P2\n29 30\n1\n" + "1 " * 870)
        with self.assertRaises(DataError):
            parse_grid_pgm("P5\n30 30\n1\n")

    def test_bad_line(self):
        with self.assertRaises(DataError):
            parse_grid_line("01" * 449)
        with self.assertRaises(DataError):
            parse_grid_line("2" * 900)

    def test_read_grid_unreadable(self):
        path = os.path.join(self.tmp, "bad.txt")
        with open(path, "w") as f:
            f.write("nope\n")
        with self.assertRaises(DataError):
            read_grid(path)


class EnvironmentSetFileTests(TempDirMixin, SimpleTestCase):
    def test_round_trip_keeps_manifest_fields(self):
        grids = random_grids(3, 0.1, seed=2)
        entries = tuple(
            EnvironmentEntry(
                env_id=f"chal-{index:05d}",
                grid=grid,
                suboptimal_total=51 + index,
                provenance="extracted",
                source_id="dep-000",
                initial_index=10 * index,
                final_index=10 * index + 9,
            )
            for index, grid in enumerate(grids)
        )
        envs = EnvironmentSet(entries=entries, kind="challenging", difficulty_threshold=50)
        written = save_environment_set(envs, self.tmp)
        self.assertEqual(len(written), 7)
        loaded = load_environment_set(self.tmp, "challenging", 50)
        self.assertEqual(loaded.entries, envs.entries)

    def test_stale_files_removed(self):
        save_environment_set(env_set(random_grids(5, 0.1, seed=1)), self.tmp)
        save_environment_set(env_set(random_grids(2, 0.1, seed=1)), self.tmp)
        self.assertEqual(len(list_files(self.tmp, (".txt",))), 2)
        self.assertEqual(len(load_environment_set(self.tmp, "raw")), 2)

    def test_empty_set(self):
        save_environment_set(EnvironmentSet.empty("raw"), self.tmp)
        self.assertEqual(len(load_environment_set(self.tmp, "raw")), 0)

    def test_missing_manifest(self):
        with self.assertRaises(DataError) as ctx:
            load_environment_set(self.tmp, "raw")
        self.assertEqual(ctx.exception.code_key, "ENV_SET_MISSING")

    def test_unnavigable_synthesized_set_rejected(self):
        save_environment_set(env_set([wall_grid()]), self.tmp)
        with self.assertRaises(DataError) as ctx:
            load_environment_set(self.tmp, "synthesized")
        self.assertEqual(ctx.exception.code_key, "GRID_NOT_NAVIGABLE")

    def test_hashes_are_relative_and_content_based(self):
        paths = save_environment_set(env_set(random_grids(2, 0.1, seed=1)), self.tmp)
        first = hash_files(paths, self.tmp)
        self.assertIn("manifest.csv", first)
        self.assertEqual(first, hash_files(paths, self.tmp))
        save_environment_set(env_set(random_grids(2, 0.1, seed=2)), self.tmp)
        self.assertNotEqual(first, hash_files(paths, self.tmp))


class WorldMapFileTests(TempDirMixin, SimpleTestCase):
    def test_round_trip(self):
        world = room_map(40, 30)
        path = os.path.join(self.tmp, "room.pgm")
        write_world_map(world, path)
        loaded = read_world_map(path, resolution=0.1)
        self.assertEqual(loaded.map_id, "room")
        self.assertTrue(np.array_equal(loaded.cells, world.cells))
        self.assertEqual((loaded.width, loaded.height), (40, 30))

    def test_vertical_orientation(self):
        cells = np.zeros((10, 12), dtype=np.uint8)
        cells[0, 3] = 1
        path = os.path.join(self.tmp, "dot.pgm")
        write_world_map(WorldMap(cells=cells, resolution=0.5, map_id="dot"), path)
        loaded = read_world_map(path, resolution=0.5)
        self.assertFalse(loaded.is_free(3, 0))
        self.assertTrue(loaded.is_free(3, 9))

    def test_not_an_image(self):
        path = os.path.join(self.tmp, "junk.pgm")
        with open(path, "w") as f:
            f.write("junk")
        with self.assertRaises(DataError) as ctx:
            read_world_map(path, 0.1)
        self.assertEqual(ctx.exception.code_key, "MAP_FILE_INVALID")

    def test_missing_maps(self):
        with self.assertRaises(DataError) as ctx:
            load_world_maps(self.tmp, 0.1)
        self.assertEqual(ctx.exception.code_key, "MAPS_MISSING")
