import os

import numpy as np
from django.test import SimpleTestCase
from pydantic import ValidationError

from app.controllers.ArtifactStoreController import load_world_maps
from app.controllers.MapGeneratorController import (
    MapGeneratorConfig,
    MapGeneratorPipeline,
    generate_maps,
    generate_world_map,
)
from app.controllers.NavigationPlannerController import free_components
from app.tests.factories import TempDirMixin
from app.utils.rng import SeededRng

SMALL = MapGeneratorConfig(width=60, height=50)


class GenerateWorldMapTests(SimpleTestCase):
    def test_border_is_wall(self):
        cells = generate_world_map(SMALL, SeededRng(0)).cells
        self.assertEqual(cells.shape, (50, 60))
        self.assertTrue(cells[0].all() and cells[-1].all())
        self.assertTrue(cells[:, 0].all() and cells[:, -1].all())

    def test_single_free_region(self):
        for seed in range(5):
            cells = generate_world_map(SMALL, SeededRng(seed)).cells
            labels = free_components(cells)
            self.assertEqual(set(np.unique(labels[labels > 0]).tolist()), {1})

    def test_empty_fill_stays_open(self):
        cells = generate_world_map(SMALL.model_copy(update={"fill_probability": 0.0}), SeededRng(0)).cells
        self.assertGreater(1.0 - cells[1:-1, 1:-1].mean(), 0.9)

    def test_seeded(self):
        first = generate_world_map(SMALL, SeededRng(3)).cells
        second = generate_world_map(SMALL, SeededRng(3)).cells
        self.assertTrue(np.array_equal(first, second))
        self.assertFalse(np.array_equal(first, generate_world_map(SMALL, SeededRng(4)).cells))

    def test_maps_are_named_and_distinct(self):
        maps = generate_maps(3, SMALL, SeededRng(0))
        self.assertEqual([world.map_id for world in maps], ["map-000", "map-001", "map-002"])
        self.assertFalse(np.array_equal(maps[0].cells, maps[1].cells))
        self.assertEqual(maps[0].resolution, 0.1)

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            MapGeneratorConfig(fill_probability=1.0)
        with self.assertRaises(ValidationError):
            MapGeneratorConfig(colour="red")


class MapGeneratorPipelineTests(TempDirMixin, SimpleTestCase):
    def test_writes_and_reloads(self):
        pipeline = MapGeneratorPipeline(SMALL)
        written = pipeline.generate(SeededRng(1), self.tmp)
        self.assertEqual([os.path.basename(path) for path in written], ["map-000.pgm", "map-001.pgm"])
        loaded = load_world_maps(self.tmp, SMALL.resolution)
        expected = generate_maps(2, SMALL, SeededRng(1))
        for world, reference in zip(loaded, expected):
            self.assertEqual(world.map_id, reference.map_id)
            self.assertTrue(np.array_equal(world.cells, reference.cells))

    def test_old_maps_removed(self):
        pipeline = MapGeneratorPipeline(SMALL)
        pipeline.generate(SeededRng(1), self.tmp, count=4)
        pipeline.generate(SeededRng(1), self.tmp, count=1)
        self.assertEqual(sorted(os.listdir(self.tmp)), ["map-000.pgm"])
