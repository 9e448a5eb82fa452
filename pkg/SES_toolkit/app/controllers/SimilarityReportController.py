import os
import json
import math
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy.spatial.distance import cdist

from app.models import GRID_SIZE, EnvironmentSet, OccupancyGrid

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 16
CELL_PIXELS = 4
SEPARATOR_SHADE = 128
FREE_SHADE = 255
OCCUPIED_SHADE = 0


@dataclass(frozen=True, eq=False)
class SimilarityReport:
    synthesized_count: int
    challenging_count: int
    nearest_hamming: np.ndarray
    hamming_mean: float
    hamming_median: float
    hamming_max: float
    synthesized_histogram: np.ndarray
    challenging_histogram: np.ndarray
    histogram_l1: float

    def to_dict(self) -> dict:
        """JSON-ready view; NaN statistics become null."""

        def number(value: float) -> Optional[float]:
            return None if math.isnan(value) else round(float(value), 9)

        return {
            "synthesized_count": self.synthesized_count,
            "challenging_count": self.challenging_count,
            "nearest_hamming": {
                "mean": number(self.hamming_mean),
                "median": number(self.hamming_median),
                "max": number(self.hamming_max),
                "per_grid": [int(value) for value in self.nearest_hamming],
            },
            "density_histogram": {
                "bins": HISTOGRAM_BINS,
                "synthesized": [number(value) for value in self.synthesized_histogram],
                "challenging": [number(value) for value in self.challenging_histogram],
                "l1_distance": number(self.histogram_l1),
            },
        }


def density_histogram(envs: EnvironmentSet) -> np.ndarray:
    """Fraction of grids per occupancy-density bin over [0, 1]; all zeros for an empty set."""
    if len(envs) == 0:
        return np.zeros(HISTOGRAM_BINS)
    densities = np.array([grid.density() for grid in envs.grids()])
    counts, _ = np.histogram(densities, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return counts / counts.sum()


def nearest_hamming(synthesized: EnvironmentSet, reference: EnvironmentSet) -> np.ndarray:
    """Per synthesized grid, the cell count differing from its closest reference grid."""
    if len(synthesized) == 0 or len(reference) == 0:
        return np.zeros(0, dtype=np.int64)
    fractions = cdist(synthesized.bitvectors(), reference.bitvectors(), "hamming")
    return np.rint(fractions.min(axis=1) * GRID_SIZE * GRID_SIZE).astype(np.int64)


def similarity_report(synthesized: EnvironmentSet, challenging: EnvironmentSet) -> SimilarityReport:
    distances = nearest_hamming(synthesized, challenging)
    synthesized_hist = density_histogram(synthesized)
    challenging_hist = density_histogram(challenging)
    if distances.size:
        mean, median, largest = float(distances.mean()), float(np.median(distances)), float(distances.max())
    else:
        mean = median = largest = float("nan")
    both = len(synthesized) and len(challenging)
    return SimilarityReport(
        synthesized_count=len(synthesized),
        challenging_count=len(challenging),
        nearest_hamming=distances,
        hamming_mean=mean,
        hamming_median=median,
        hamming_max=largest,
        synthesized_histogram=synthesized_hist,
        challenging_histogram=challenging_hist,
        histogram_l1=float(np.abs(synthesized_hist - challenging_hist).sum()) if both else float("nan"),
    )


def write_similarity(report: SimilarityReport, file_path: str) -> None:
    with open(file_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def montage_layout(count: int) -> Tuple[int, int]:
    """(rows, cols) with cols = ceil(sqrt(n)); (0, 0) for no grids."""
    if count <= 0:
        return 0, 0
    cols = math.ceil(math.sqrt(count))
    return math.ceil(count / cols), cols


def _tile(grid: OccupancyGrid) -> np.ndarray:
    # Row 29 on top so the goal edge reads upward
    shades = np.where(grid.cells[::-1] == 1, OCCUPIED_SHADE, FREE_SHADE).astype(np.uint8)
    return np.kron(shades, np.ones((CELL_PIXELS, CELL_PIXELS), dtype=np.uint8))


def render_montage(grids: Sequence[OccupancyGrid], file_path: str) -> Optional[Tuple[int, int]]:
    """
    Tile grids row-major into one binary PGM, separated by 1 px grey lines.

    Returns:
        tuple: (rows, cols) of the layout, or None when there is nothing to draw.
    """
    rows, cols = montage_layout(len(grids))
    if not rows:
        return None
    tile = GRID_SIZE * CELL_PIXELS
    canvas = np.full((rows * tile + rows - 1, cols * tile + cols - 1), SEPARATOR_SHADE, dtype=np.uint8)
    for index, grid in enumerate(grids):
        row, col = divmod(index, cols)
        top, left = row * (tile + 1), col * (tile + 1)
        canvas[top : top + tile, left : left + tile] = _tile(grid)
    Image.fromarray(canvas).save(file_path, format="PPM")
    return rows, cols


class SimilarityReportPipeline:
    def __init__(self, gallery_limit: int = 400, log_level: int = 0) -> None:
        self.gallery_limit = gallery_limit
        self.log_level = log_level

    def gallery(self, envs: EnvironmentSet, reports_dir: str, name: str) -> Optional[str]:
        """Write `gallery_<name>.pgm` for the first `gallery_limit` grids of the set."""
        path = os.path.join(reports_dir, f"gallery_{name}.pgm")
        if os.path.exists(path):
            os.remove(path)
        layout = render_montage(envs.grids()[: self.gallery_limit], path)
        if layout is None:
            if self.log_level >= 1:
                logger.info(f"Gallery {name}: 0 environments, nothing to draw")
            return None
        if self.log_level >= 2:
            logger.info(f"Gallery {name}: {layout[0]}x{layout[1]} tiles")
        return path

    def compare(self, synthesized: EnvironmentSet, challenging: EnvironmentSet, file_path: str) -> SimilarityReport:
        report = similarity_report(synthesized, challenging)
        write_similarity(report, file_path)
        if self.log_level >= 1:
            logger.info(
                f"Similarity: mean nearest Hamming {report.hamming_mean:.1f}, "
                f"density histogram L1 {report.histogram_l1:.3f}"
            )
        return report
