"""
Response Code System
-------------------
This file defines all response codes used throughout the toolkit and the
exceptions that carry them.

NAMING CONVENTION:
- Each code consists of a 3-letter prefix followed by a 3-digit number (e.g., SUC001)
- The prefix identifies the category of the code
- The 3-digit number provides unique identification within that category

PREFIX MEANINGS:
SUC - Success codes (exit status 0)
CFG - Configuration errors (exit status 2)
DAT - Data and artifact errors (exit status 3)
NAV - Navigation errors, e.g. an unreachable goal (exit status 3)
CON - Contract violations raised by the numerical modules (exit status 4)
SYS - General system codes (exit status 4)
"""

from typing import Optional

# Success Codes
SUCCESS_CODES = {
    "SUCCESS": {"code": "SUC001", "message": "Success"},
    "STAGE_COMPLETED": {"code": "SUC002", "message": "Stage completed."},
    "STAGE_SKIPPED": {"code": "SUC003", "message": "Stage outputs are up to date; skipped."},
    "MAPS_GENERATED": {"code": "SUC004", "message": "Maps generated."},
}

# Configuration Error Codes
CONFIG_ERROR_CODES = {
    "CONFIG_INVALID": {"code": "CFG001", "message": "Invalid configuration."},
    "CONFIG_FILE_NOT_FOUND": {"code": "CFG002", "message": "Configuration file not found."},
    "CONFIG_UNKNOWN_KEY": {"code": "CFG003", "message": "Unknown configuration key."},
    "CONFIG_METHOD_MISMATCH": {
        "code": "CFG004",
        "message": "Settings for the chosen synthesis method are inconsistent.",
    },
    "DIRECTORY_NOT_CREATABLE": {"code": "CFG005", "message": "Workspace directory cannot be created."},
    "UNKNOWN_PLANNER": {"code": "CFG006", "message": "Unknown planner preset."},
}

# Data and Artifact Error Codes
DATA_ERROR_CODES = {
    "MAPS_MISSING": {"code": "DAT001", "message": "No map files found."},
    "TRACES_MISSING": {"code": "DAT002", "message": "No trace files found."},
    "TRACE_PARSE_ERROR": {"code": "DAT003", "message": "Malformed trace file."},
    "GRID_FILE_INVALID": {"code": "DAT004", "message": "Malformed grid file."},
    "MAP_FILE_INVALID": {"code": "DAT005", "message": "Malformed map file."},
    "ENV_SET_MISSING": {"code": "DAT006", "message": "Environment set not found."},
    "CHALLENGING_SET_EMPTY": {
        "code": "DAT007",
        "message": "The challenging set is empty; lower EXTRACT_DIFFICULTY_THRESHOLD or deploy more.",
    },
    "CHALLENGING_SET_TOO_SMALL": {
        "code": "DAT008",
        "message": "The challenging set is too small for the chosen synthesis method.",
    },
    "GRID_NOT_NAVIGABLE": {"code": "DAT009", "message": "Environment is not navigable."},
    "STALE_ARTIFACT": {
        "code": "DAT010",
        "message": "Cached stage outputs were produced with a different configuration; rerun with --force.",
    },
    "WORKSPACE_LOCKED": {"code": "DAT011", "message": "Another process holds the workspace lock."},
    "CHECKPOINT_INVALID": {"code": "DAT012", "message": "Model checkpoint is missing or malformed."},
    "SAMPLING_EXHAUSTED": {"code": "DAT013", "message": "Retry cap exhausted while sampling navigable grids."},
    "METRICS_MISSING": {"code": "DAT014", "message": "Evaluation metrics not found."},
}

# Navigation Error Codes
NAVIGATION_ERROR_CODES = {
    "UNREACHABLE_GOAL": {"code": "NAV001", "message": "No path exists between start and goal."},
    "NO_VALID_PAIR": {"code": "NAV002", "message": "No start-goal pair satisfies the separation constraint."},
}

# Contract Error Codes
CONTRACT_ERROR_CODES = {
    "CONTRACT_VIOLATION": {"code": "CON001", "message": "Precondition violated."},
    "GRID_DIMENSION": {"code": "CON002", "message": "Grid must be exactly 30x30."},
    "GRID_VALUE": {"code": "CON003", "message": "Grid cells must be 0 or 1."},
    "SHAPE_MISMATCH": {"code": "CON004", "message": "Array shape does not match the model."},
    "TRAINING_DIVERGED": {"code": "CON005", "message": "Training produced a non-finite loss."},
}

# General System Error Codes
GENERAL_ERROR_CODES = {
    "INTERNAL_ERROR": {"code": "SYS001", "message": "Internal error."},
}

# Combine all response codes into one dictionary for lookup
RESPONSE_CODES = {
    **SUCCESS_CODES,
    **CONFIG_ERROR_CODES,
    **DATA_ERROR_CODES,
    **NAVIGATION_ERROR_CODES,
    **CONTRACT_ERROR_CODES,
    **GENERAL_ERROR_CODES,
}

EXIT_STATUS_BY_PREFIX = {"SUC": 0, "CFG": 2, "DAT": 3, "NAV": 3, "CON": 4, "SYS": 4}


def get_response_code(code_key: str) -> dict:
    """
    Get response code by key.
    Args:
        code_key (str): Key for response code.
    Returns:
        dict: Response code dictionary.
    """
    if code_key in RESPONSE_CODES:
        return RESPONSE_CODES[code_key]
    else:
        return {"code": "ERR000", "message": "Unknown error code."}


def get_exit_status(code_key: str) -> int:
    """
    Map a response code key to the process exit status of its category.

    Args:
        code_key (str): Key for response code.

    Returns:
        int: 0 for success codes, 2/3/4 for configuration, data and internal failures.
    """
    prefix = get_response_code(code_key)["code"][:3]
    return EXIT_STATUS_BY_PREFIX.get(prefix, 4)


class PipelineError(Exception):
    """Base error carrying a response code key."""

    default_code_key = "INTERNAL_ERROR"

    def __init__(self, detail: str = "", code_key: Optional[str] = None) -> None:
        self.code_key = code_key or self.default_code_key
        self.detail = detail
        self.response = get_response_code(self.code_key)
        message = f"[{self.response['code']}] {self.response['message']}"
        super().__init__(f"{message} {detail}".rstrip())

    @property
    def exit_status(self) -> int:
        return get_exit_status(self.code_key)

    def with_stage(self, stage: str) -> "PipelineError":
        """Return an error with the same code whose detail names the failing stage."""
        return PipelineError(f"stage '{stage}': {self.detail}", self.code_key)


class ConfigError(PipelineError):
    default_code_key = "CONFIG_INVALID"


class DataError(PipelineError):
    default_code_key = "GRID_FILE_INVALID"


class TraceParseError(DataError):
    default_code_key = "TRACE_PARSE_ERROR"

    def __init__(self, path: str, line_number: int, reason: str) -> None:
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}, line {line_number}: {reason}")


class StaleArtifactError(DataError):
    default_code_key = "STALE_ARTIFACT"


class SamplingExhaustedError(DataError):
    default_code_key = "SAMPLING_EXHAUSTED"


class UnreachableError(PipelineError):
    default_code_key = "UNREACHABLE_GOAL"


class ContractError(PipelineError, ValueError):
    default_code_key = "CONTRACT_VIOLATION"


class GridDimensionError(ContractError):
    default_code_key = "GRID_DIMENSION"


class GridValueError(ContractError):
    default_code_key = "GRID_VALUE"


class ShapeError(ContractError):
    default_code_key = "SHAPE_MISMATCH"


class TrainingDivergedError(ContractError):
    default_code_key = "TRAINING_DIVERGED"
