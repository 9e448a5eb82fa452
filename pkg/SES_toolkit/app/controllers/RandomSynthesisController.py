import logging
from typing import Optional, Sequence

from app.models import EnvironmentEntry, EnvironmentSet
from app.utils.rng import SeededRng
from app.controllers.NavigationPlannerController import is_navigable
from app.controllers.ResponseCodesController import ContractError, DataError

logger = logging.getLogger(__name__)


def sample_uniform(
    envs: EnvironmentSet, count: int, rng: SeededRng, candidates: Optional[Sequence[int]] = None
) -> EnvironmentSet:
    """
    Draw `count` environments uniformly with replacement.

    Args:
        envs (EnvironmentSet): Source set.
        count (int): Number of draws M.
        rng (SeededRng): Draw source.
        candidates (list): Indices of `envs` eligible for drawing; all by default.

    Returns:
        EnvironmentSet: Synthesized set; `source_index` records each draw's index in `envs`.
    """
    if count < 0:
        raise ContractError("count must be non-negative")
    pool = list(range(len(envs))) if candidates is None else list(candidates)
    if not pool and count > 0:
        raise ContractError("cannot sample from an empty environment set")
    if count == 0:
        return EnvironmentSet.empty("synthesized")
    draws = rng.integers(0, len(pool), size=count)
    entries = tuple(
        EnvironmentEntry(
            env_id=f"syn-{index:03d}",
            grid=envs[pool[draw]].grid,
            provenance="rs",
            source_id=envs[pool[draw]].env_id,
            source_index=pool[draw],
        )
        for index, draw in enumerate(draws)
    )
    return EnvironmentSet(entries=entries, kind="synthesized")


class RandomSynthesisPipeline:
    def __init__(self, log_level: int = 0) -> None:
        self.log_level = log_level

    def synthesize(self, challenging: EnvironmentSet, count: int, rng: SeededRng) -> EnvironmentSet:
        """Uniform draws from the navigable members of the challenging set."""
        navigable = [index for index, entry in enumerate(challenging) if is_navigable(entry.grid)]
        if not navigable and count > 0:
            raise DataError(
                f"none of the {len(challenging)} challenging environments is navigable", "CHALLENGING_SET_TOO_SMALL"
            )
        if self.log_level >= 1:
            logger.info(f"Sampling {count} of {len(navigable)} navigable challenging environments")
        return sample_uniform(challenging, count, rng, candidates=navigable)
