# Procedural deployment maps: cellular-automaton caves with border walls
import os
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from app.models import WorldMap
from app.utils.rng import SeededRng
from app.controllers.ArtifactStoreController import list_files, write_world_map
from app.controllers.NavigationPlannerController import free_components

logger = logging.getLogger(__name__)

NEIGHBORHOOD = np.ones((3, 3), dtype=np.int64)


class MapGeneratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    count: int = Field(default=2, ge=1)
    width: int = Field(default=120, ge=3)
    height: int = Field(default=120, ge=3)
    resolution: float = Field(default=0.1, gt=0)
    fill_probability: float = Field(default=0.42, ge=0, lt=1)
    smoothing_iterations: int = Field(default=4, ge=0)
    wall_threshold: int = Field(default=5, ge=1, le=9)


def _add_border(cells: np.ndarray) -> np.ndarray:
    cells[0, :] = cells[-1, :] = 1
    cells[:, 0] = cells[:, -1] = 1
    return cells


def generate_world_map(cfg: MapGeneratorConfig, rng: SeededRng, map_id: str = "map") -> WorldMap:
    """
    Cellular-automaton layout.

    Cells start occupied with `fill_probability`; each smoothing pass makes a
    cell occupied iff at least `wall_threshold` cells of its 3x3
    neighbourhood (itself included, outside counted as wall) are occupied.
    Only the largest 4-connected free region stays free.
    """
    cells = (rng.random((cfg.height, cfg.width)) < cfg.fill_probability).astype(np.uint8)
    cells = _add_border(cells)
    for _ in range(cfg.smoothing_iterations):
        walls = ndimage.convolve(cells.astype(np.int64), NEIGHBORHOOD, mode="constant", cval=1)
        cells = _add_border((walls >= cfg.wall_threshold).astype(np.uint8))

    labels = free_components(cells)
    if labels.max() > 0:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        cells = np.where(labels == int(np.argmax(sizes)), 0, 1).astype(np.uint8)
    else:
        logger.warning(f"Generated map {map_id} has no free cells")
    return WorldMap(cells=cells, resolution=cfg.resolution, map_id=map_id)


def generate_maps(count: int, cfg: MapGeneratorConfig, rng: SeededRng) -> List[WorldMap]:
    return [generate_world_map(cfg, rng.fork("map", index), f"map-{index:03d}") for index in range(count)]


class MapGeneratorPipeline:
    def __init__(self, config: MapGeneratorConfig, log_level: int = 0) -> None:
        self.config = config
        self.log_level = log_level

    def generate(self, rng: SeededRng, maps_dir: str, count: Optional[int] = None) -> List[str]:
        """Write `count` (default `config.count`) maps as `map-XXX.pgm` into `maps_dir`; older maps are removed."""
        count = self.config.count if count is None else count
        os.makedirs(maps_dir, exist_ok=True)
        for stale in list_files(maps_dir, (".pgm",)):
            os.remove(stale)
        written = []
        for world in generate_maps(count, self.config, rng):
            path = os.path.join(maps_dir, f"{world.map_id}.pgm")
            write_world_map(world, path)
            written.append(path)
            if self.log_level >= 2:
                logger.info(f"{world.map_id}: {1.0 - world.cells.mean():.1%} free")
        if self.log_level >= 1:
            logger.info(f"Generated {count} maps of {self.config.width}x{self.config.height} cells in {maps_dir}")
        return written
