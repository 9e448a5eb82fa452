import os
import json
import hashlib
import logging
from typing import Iterable, List, Literal, Optional

import numpy as np
import pandas as pd
from PIL import Image
from natsort import natsorted
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.models import (
    GRID_SIZE,
    EnvironmentEntry,
    EnvironmentSet,
    OccupancyGrid,
    Pose,
    StepRecord,
    Trajectory,
    WorldMap,
    grid_from_cells,
    grid_to_bitvector,
)
from app.controllers.ResponseCodesController import (
    ContractError,
    DataError,
    PipelineError,
    TraceParseError,
)

logger = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.csv"
MANIFEST_COLUMNS = [
    "env_id",
    "suboptimal_total",
    "provenance",
    "source_id",
    "initial_index",
    "final_index",
    "source_index",
]
HASH_CHUNK_SIZE = 1 << 20


class TraceHeader(BaseModel):
    """First line of a trace file."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    type: Literal["header"]
    format_version: Literal[1]
    deployment_id: str
    map_id: str
    beam_count: int = Field(gt=0)
    max_range: float = Field(gt=0)


class TraceStep(BaseModel):
    """One StepRecord line of a trace file."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scan: List[float]
    x: float
    y: float
    theta: float
    suboptimal: Literal[0, 1]


# ---------------------------------------------------------------------------
# Hashing and listing
# ---------------------------------------------------------------------------


def hash_file_content(file_path: str) -> str:
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(HASH_CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_files(file_paths: Iterable[str], root: Optional[str] = None) -> dict:
    """Map of (root-relative) file path to content digest, in natural order."""
    hashes = {}
    for path in natsorted(file_paths):
        key = os.path.relpath(path, root) if root else path
        hashes[key.replace(os.sep, "/")] = hash_file_content(path)
    return hashes


def list_files(directory: str, suffixes: Iterable[str]) -> List[str]:
    """Files in `directory` ending with one of `suffixes`, naturally sorted; [] if it does not exist."""
    if not os.path.isdir(directory):
        return []
    suffixes = tuple(suffixes)
    return natsorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.endswith(suffixes) and os.path.isfile(os.path.join(directory, name))
    )


# ---------------------------------------------------------------------------
# Grid files
# ---------------------------------------------------------------------------


def format_grid_pgm(grid: OccupancyGrid) -> str:
    """
    Plain PGM (P2, maxval 1) text for a grid.

    Pixel 1 is free, 0 is occupied. The first pixel line is grid row 29 so
    the bottom row (the start side) is written last.
    """
    lines = ["P2", f"{GRID_SIZE} {GRID_SIZE}", "1"]
    for row in range(GRID_SIZE - 1, -1, -1):
        lines.append(" ".join("0" if cell else "1" for cell in grid.cells[row]))
    return "\n".join(lines) + "\n"


def parse_grid_pgm(text: str, source: str = "<grid>") -> OccupancyGrid:
    tokens = []
    for line in text.splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if len(tokens) < 4 or tokens[0] != "P2":
        raise DataError(f"{source}: expected a plain P2 graymap header")
    try:
        width, height, maxval = (int(token) for token in tokens[1:4])
        pixels = np.array([int(token) for token in tokens[4:]], dtype=np.int64)
    except ValueError:
        raise DataError(f"{source}: non-integer token in graymap")
    if (width, height) != (GRID_SIZE, GRID_SIZE):
        raise DataError(f"{source}: grid must be {GRID_SIZE}x{GRID_SIZE}, got {width}x{height}")
    if maxval != 1 or pixels.size != width * height or np.any((pixels != 0) & (pixels != 1)):
        raise DataError(f"{source}: expected {width * height} pixels of 0/1 with maxval 1")
    cells = 1 - pixels.reshape(height, width)[::-1]
    return grid_from_cells(cells)


def format_grid_line(grid: OccupancyGrid) -> str:
    """900 characters of 0/1 in row-major order, newline-terminated."""
    return "".join(str(int(value)) for value in grid_to_bitvector(grid)) + "\n"


def parse_grid_line(text: str, source: str = "<grid>") -> OccupancyGrid:
    line = text.strip()
    if len(line) != GRID_SIZE * GRID_SIZE or set(line) - {"0", "1"}:
        raise DataError(f"{source}: expected one line of {GRID_SIZE * GRID_SIZE} '0'/'1' characters")
    bits = np.frombuffer(line.encode("ascii"), dtype=np.uint8) - ord("0")
    return grid_from_cells(bits.reshape(GRID_SIZE, GRID_SIZE))


def write_grid(grid: OccupancyGrid, directory: str, env_id: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, f"{env_id}.pgm"), "w", newline="\n") as f:
        f.write(format_grid_pgm(grid))
    with open(os.path.join(directory, f"{env_id}.txt"), "w", newline="\n") as f:
        f.write(format_grid_line(grid))


def read_grid(file_path: str) -> OccupancyGrid:
    """Read a grid from a `.pgm` or `.txt` file."""
    try:
        with open(file_path, "r") as f:
            text = f.read()
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"{file_path}: {str(e)}")
    try:
        if file_path.endswith(".txt"):
            return parse_grid_line(text, file_path)
        return parse_grid_pgm(text, file_path)
    except ContractError as e:
        raise DataError(f"{file_path}: {e.detail}")


# ---------------------------------------------------------------------------
# Deployment maps
# ---------------------------------------------------------------------------


def read_world_map(file_path: str, resolution: float, map_id: Optional[str] = None) -> WorldMap:
    """
    Load a deployment map from any PGM (P2 or P5) that Pillow can read.

    Pixels darker than half the grey range are occupied; the top image row
    becomes the map's highest row.
    """
    map_id = map_id or os.path.splitext(os.path.basename(file_path))[0]
    try:
        with Image.open(file_path) as image:
            pixels = np.asarray(image.convert("L"), dtype=np.uint8)
    except Exception as e:
        logger.error(f"Error reading map {file_path}: {str(e)}")
        raise DataError(f"{file_path}: {str(e)}", "MAP_FILE_INVALID")
    cells = (pixels < 128).astype(np.uint8)[::-1]
    try:
        return WorldMap(cells=cells, resolution=resolution, map_id=map_id)
    except ContractError as e:
        raise DataError(f"{file_path}: {e.detail}", "MAP_FILE_INVALID")


def write_world_map(world: WorldMap, file_path: str) -> None:
    """Binary PGM (P5, maxval 255): free cells white, occupied black."""
    os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
    pixels = np.where(world.cells[::-1] == 1, 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(file_path, format="PPM")


def load_world_maps(directory: str, resolution: float) -> List[WorldMap]:
    paths = list_files(directory, (".pgm",))
    if not paths:
        raise DataError(f"expected map files (*.pgm) in {directory}", "MAPS_MISSING")
    return [read_world_map(path, resolution) for path in paths]


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


def trace_lines(trajectory: Trajectory) -> List[str]:
    header = TraceHeader(
        type="header",
        format_version=TRACE_FORMAT_VERSION,
        deployment_id=trajectory.deployment_id,
        map_id=trajectory.map_id,
        beam_count=trajectory.beam_count,
        max_range=trajectory.max_range,
    )
    lines = [json.dumps(header.model_dump())]
    for step in trajectory.steps:
        record = {
            "scan": step.scan.tolist(),
            "x": step.pose.x,
            "y": step.pose.y,
            "theta": step.pose.theta,
            "suboptimal": step.suboptimal,
        }
        lines.append(json.dumps(record))
    return lines


def write_trajectory(trajectory: Trajectory, file_path: str) -> None:
    """Write a trajectory as JSON lines: a header line, then one line per step."""
    os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
    with open(file_path, "w", newline="\n") as f:
        f.write("\n".join(trace_lines(trajectory)) + "\n")


def _validation_reason(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "line"
    return f"{location}: {first['msg']}"


def read_trajectory(file_path: str) -> Trajectory:
    """
    Parse a JSON-lines trace file.

    Args:
        file_path (str): Path to the trace.

    Returns:
        Trajectory: The recorded deployment.

    Raises:
        TraceParseError: Malformed JSON or a field that fails validation; the
        error names the 1-based line number.
    """
    header = None
    steps = []
    with open(file_path, "r") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceParseError(file_path, line_number, f"invalid JSON ({e.msg})")
            try:
                if header is None:
                    header = TraceHeader.model_validate(payload)
                    continue
                record = TraceStep.model_validate(payload)
            except ValidationError as e:
                raise TraceParseError(file_path, line_number, _validation_reason(e))
            if len(record.scan) != header.beam_count:
                raise TraceParseError(
                    file_path, line_number, f"{len(record.scan)} beams, header says {header.beam_count}"
                )
            if any(value > header.max_range or value < 0.0 for value in record.scan):
                raise TraceParseError(file_path, line_number, f"range outside [0, {header.max_range}]")
            try:
                pose = Pose(record.x, record.y, record.theta)
                steps.append(StepRecord(scan=np.array(record.scan), pose=pose, suboptimal=record.suboptimal))
            except ContractError as e:
                raise TraceParseError(file_path, line_number, e.detail)
    if header is None:
        raise TraceParseError(file_path, 1, "missing header line")
    if not steps:
        raise TraceParseError(file_path, 2, "trace has no steps")
    try:
        return Trajectory(
            steps=tuple(steps),
            deployment_id=header.deployment_id,
            map_id=header.map_id,
            max_range=header.max_range,
        )
    except ContractError as e:
        raise DataError(f"{file_path}: {e.detail}", "TRACE_PARSE_ERROR")


def load_trajectories(directory: str) -> List[Trajectory]:
    paths = list_files(directory, (".jsonl",))
    if not paths:
        raise DataError(f"expected trace files (*.jsonl) in {directory}", "TRACES_MISSING")
    return [read_trajectory(path) for path in paths]


# ---------------------------------------------------------------------------
# Environment sets
# ---------------------------------------------------------------------------


def _optional(value):
    return "" if value is None else value


def _optional_int(value: str) -> Optional[int]:
    return None if value == "" else int(value)


def manifest_frame(envs: EnvironmentSet) -> pd.DataFrame:
    rows = [
        {
            "env_id": entry.env_id,
            "suboptimal_total": _optional(entry.suboptimal_total),
            "provenance": entry.provenance,
            "source_id": _optional(entry.source_id),
            "initial_index": _optional(entry.initial_index),
            "final_index": _optional(entry.final_index),
            "source_index": _optional(entry.source_index),
        }
        for entry in envs
    ]
    return pd.DataFrame(rows, columns=MANIFEST_COLUMNS)


def save_environment_set(envs: EnvironmentSet, directory: str) -> List[str]:
    """
    Write every grid as `<env_id>.pgm` + `<env_id>.txt` and a `manifest.csv`.

    Stale grid files from an earlier run are removed first.

    Returns:
        list: Paths of all files written.
    """
    os.makedirs(directory, exist_ok=True)
    for stale in list_files(directory, (".pgm", ".txt", MANIFEST_FILE)):
        os.remove(stale)
    written = []
    for entry in envs:
        write_grid(entry.grid, directory, entry.env_id)
        written += [os.path.join(directory, f"{entry.env_id}{ext}") for ext in (".pgm", ".txt")]
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    manifest_frame(envs).to_csv(manifest_path, index=False, lineterminator="\n")
    written.append(manifest_path)
    return written


def load_environment_set(directory: str, kind: str, difficulty_threshold: Optional[int] = None) -> EnvironmentSet:
    """Inverse of `save_environment_set`; grids are read from the `.txt` files."""
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    if not os.path.isfile(manifest_path):
        raise DataError(f"expected {manifest_path}", "ENV_SET_MISSING")
    frame = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
    missing = set(MANIFEST_COLUMNS) - set(frame.columns)
    if missing:
        raise DataError(f"{manifest_path}: missing columns {sorted(missing)}", "ENV_SET_MISSING")
    entries = []
    for row in frame.itertuples(index=False):
        grid = read_grid(os.path.join(directory, f"{row.env_id}.txt"))
        entries.append(
            EnvironmentEntry(
                env_id=row.env_id,
                grid=grid,
                suboptimal_total=_optional_int(row.suboptimal_total),
                provenance=row.provenance,
                source_id=row.source_id or None,
                initial_index=_optional_int(row.initial_index),
                final_index=_optional_int(row.final_index),
                source_index=_optional_int(row.source_index),
            )
        )
    try:
        return EnvironmentSet(entries=tuple(entries), kind=kind, difficulty_threshold=difficulty_threshold)
    except PipelineError as e:
        raise DataError(f"{directory}: {e.detail}", "GRID_NOT_NAVIGABLE")
