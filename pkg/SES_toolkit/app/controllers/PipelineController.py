"""
End-to-end orchestration: configuration loading, the workspace lock, stage
caching and the stages themselves (deploy, extract, synthesize, evaluate,
report), plus procedural map generation.
"""

import os
import json
import shutil
import hashlib
import logging
from contextlib import contextmanager
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, get_origin

import numpy as np
import pandas as pd
from django.conf import settings
from dotenv import dotenv_values
from filelock import FileLock, Timeout
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.models import EnvironmentSet
from app.utils.rng import SeededRng
from app.controllers.ArtifactStoreController import (
    hash_files,
    list_files,
    load_environment_set,
    load_world_maps,
    save_environment_set,
)
from app.controllers.ClusterSynthesisController import ClusterSynthesisPipeline
from app.controllers.DeploymentSimulatorController import (
    DeploymentSimulatorPipeline,
    EvaluationReport,
    PlannerParams,
    SimulationConfig,
    evaluate,
    evaluate_on_maps,
    get_planner,
    planner_grid,
)
from app.controllers.DomainExtractionController import DomainExtractionPipeline, ExtractionConfig
from app.controllers.GANSynthesisController import GANSynthesisPipeline, GanTrainConfig
from app.controllers.MapGeneratorController import MapGeneratorConfig, MapGeneratorPipeline
from app.controllers.NavigationPlannerController import is_navigable
from app.controllers.RandomSynthesisController import RandomSynthesisPipeline
from app.controllers.ResponseCodesController import (
    ConfigError,
    DataError,
    PipelineError,
    StaleArtifactError,
)
from app.controllers.SimilarityReportController import SimilarityReportPipeline

logger = logging.getLogger(__name__)

STAGES = ("deploy", "extract", "synthesize", "evaluate", "report")
ENV_SET_NAMES = ("raw", "challenging", "synthesized")
STAGE_RECORDS_FILE = "stages.json"
LOCK_FILE = ".ses.lock"
CSV_FLOAT_FORMAT = "%.6f"
# Process-level variables that share the SES_ prefix but are not pipeline keys
PROCESS_KEYS = {"CONFIG_FILE", "LOG_LEVEL"}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    workspace_dir: str = "workspace"
    maps_dir: str = "maps"
    traces_dir: str = "traces"
    envs_dir: str = "envs"
    models_dir: str = "models"
    metrics_dir: str = "metrics"
    reports_dir: str = "reports"


class ClusterConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    components: int = Field(default=100, gt=0)
    clusters: int = Field(default=20, gt=0)
    per_cluster: int = Field(default=5, gt=0)


class DeployConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    planner: str = "dwa_slow"
    per_map: int = Field(default=20, gt=0)
    min_separation: float = Field(default=5.0, gt=0)
    attempts: int = Field(default=1000, gt=0)


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    env_set: Literal["raw", "challenging", "synthesized", "maps"] = "synthesized"
    planners: Tuple[str, ...] = ("dwa_slow", "dwa_fast")
    grid_velocities: Tuple[float, ...] = ()
    grid_sample_counts: Tuple[int, ...] = ()
    grid_inflation_radii: Tuple[float, ...] = ()
    trials: int = Field(default=20, gt=0)
    success_floor: float = Field(default=0.5, ge=0, le=1)
    heldout_pairs: int = Field(default=5, gt=0)


class ReportConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    gallery_limit: int = Field(default=400, gt=0)
    directional_check: bool = True
    heldout_envs: int = Field(default=20, gt=0)
    trials: int = Field(default=5, gt=0)


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(default=0, ge=0)
    method: Literal["gan", "pca", "rs"] = "gan"
    synth_count: int = Field(default=100, ge=0)
    n_jobs: int = 1
    paths: PathsConfig = PathsConfig()
    extract: ExtractionConfig = ExtractionConfig()
    gan: GanTrainConfig = GanTrainConfig()
    cluster: ClusterConfig = ClusterConfig()
    sim: SimulationConfig = SimulationConfig()
    deploy: DeployConfig = DeployConfig()
    evaluate: EvalConfig = EvalConfig()
    report: ReportConfig = ReportConfig()
    mapgen: MapGeneratorConfig = MapGeneratorConfig()


TOP_LEVEL_KEYS = {"SEED": "seed", "METHOD": "method", "SYNTH_COUNT": "synth_count", "N_JOBS": "n_jobs"}
SECTION_PREFIXES = {
    "extract": "EXTRACT_",
    "gan": "GAN_",
    "cluster": "CLUSTER_",
    "sim": "SIM_",
    "deploy": "DEPLOY_",
    "evaluate": "EVAL_",
    "report": "REPORT_",
    "mapgen": "MAPGEN_",
}


def config_keys() -> Dict[str, Tuple[Optional[str], str]]:
    """Every flat key mapped to (section or None, field name)."""
    keys = {key: (None, field) for key, field in TOP_LEVEL_KEYS.items()}
    for field in PathsConfig.model_fields:
        keys[field.upper()] = ("paths", field)
    for section, prefix in SECTION_PREFIXES.items():
        model = PipelineConfig.model_fields[section].annotation
        for field in model.model_fields:
            keys[f"{prefix}{field.upper()}"] = (section, field)
    return keys


def _field_annotation(section: Optional[str], field: str):
    if section is None:
        return PipelineConfig.model_fields[field].annotation
    return PipelineConfig.model_fields[section].annotation.model_fields[field].annotation


def _coerce(section: Optional[str], field: str, value):
    # Sequence keys are written comma-separated in files and flags
    if isinstance(value, str) and get_origin(_field_annotation(section, field)) in (tuple, list):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


def nest_config(flat: Mapping[str, object]) -> dict:
    """Group flat KEY=value pairs into the nested PipelineConfig layout."""
    known = config_keys()
    unknown = sorted(key for key in flat if key not in known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}", "CONFIG_UNKNOWN_KEY")
    nested: dict = {}
    for key, value in flat.items():
        section, field = known[key]
        target = nested if section is None else nested.setdefault(section, {})
        target[field] = _coerce(section, field, value)
    if "seed" in nested and "seed" not in nested.get("gan", {}):
        nested.setdefault("gan", {})["seed"] = nested["seed"]
    return nested


def check_method_settings(config: PipelineConfig) -> None:
    if config.method == "pca" and config.cluster.clusters * config.cluster.per_cluster != config.synth_count:
        raise ConfigError(
            f"CLUSTER_CLUSTERS ({config.cluster.clusters}) x CLUSTER_PER_CLUSTER ({config.cluster.per_cluster}) "
            f"must equal SYNTH_COUNT ({config.synth_count})",
            "CONFIG_METHOD_MISMATCH",
        )


def load_pipeline_config(
    config_file: Optional[str] = None,
    overrides: Optional[Mapping[str, object]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> PipelineConfig:
    """
    Build the pipeline configuration.

    Precedence, lowest first: model defaults, the `SES_WORKSPACE_DIR`
    setting, `SES_<KEY>` environment variables, the config file, `overrides`
    (command-line flags; None values are ignored).

    Args:
        config_file (str): Optional KEY=value file.
        overrides (dict): Flat keys from the command line.
        environ (dict): Environment to read; `os.environ` by default.

    Returns:
        PipelineConfig: Validated configuration.
    """
    environ = os.environ if environ is None else environ
    known = config_keys()
    flat: Dict[str, object] = {"WORKSPACE_DIR": str(settings.SES_WORKSPACE_DIR)}

    for name, value in environ.items():
        if not name.startswith("SES_") or name[4:] in PROCESS_KEYS:
            continue
        if name[4:] in known:
            flat[name[4:]] = value
        else:
            logger.debug(f"Ignoring environment variable {name}: not a pipeline key")

    if config_file:
        if not os.path.isfile(config_file):
            raise ConfigError(config_file, "CONFIG_FILE_NOT_FOUND")
        file_values = {key: value for key, value in dotenv_values(config_file).items() if value is not None}
        nest_config(file_values)
        flat.update(file_values)

    flat.update({key: value for key, value in (overrides or {}).items() if value is not None})

    try:
        config = PipelineConfig.model_validate(nest_config(flat))
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in e.errors()
        )
        raise ConfigError(problems)
    check_method_settings(config)
    return config


def flatten_section(section: Mapping[str, object], prefix: str = "") -> Dict[str, object]:
    flat = {}
    for key, value in section.items():
        if isinstance(value, Mapping):
            flat.update(flatten_section(value, f"{prefix}{key}."))
        else:
            flat[f"{prefix}{key}"] = value
    return flat


# ---------------------------------------------------------------------------
# Workspace and stage records
# ---------------------------------------------------------------------------


class Workspace:
    """Resolved directories of one pipeline workspace."""

    def __init__(self, paths: PathsConfig) -> None:
        self.root = os.path.abspath(paths.workspace_dir)

        def resolve(directory: str) -> str:
            return directory if os.path.isabs(directory) else os.path.join(self.root, directory)

        self.maps_dir = resolve(paths.maps_dir)
        self.traces_dir = resolve(paths.traces_dir)
        self.envs_dir = resolve(paths.envs_dir)
        self.models_dir = resolve(paths.models_dir)
        self.metrics_dir = resolve(paths.metrics_dir)
        self.reports_dir = resolve(paths.reports_dir)
        self.lock_path = os.path.join(self.root, LOCK_FILE)
        self.records_path = os.path.join(self.root, STAGE_RECORDS_FILE)

    def env_dir(self, name: str) -> str:
        return os.path.join(self.envs_dir, name)

    def ensure(self) -> None:
        directories = [self.root, self.maps_dir, self.traces_dir, self.envs_dir, self.models_dir]
        directories += [self.metrics_dir, self.reports_dir]
        for directory in directories:
            try:
                os.makedirs(directory, exist_ok=True)
            except OSError as e:
                raise ConfigError(f"{directory}: {str(e)}", "DIRECTORY_NOT_CREATABLE")

    @contextmanager
    def locked(self):
        """Hold `<workspace>/.ses.lock` without waiting; a held lock is an error."""
        self.ensure()
        lock = FileLock(self.lock_path, timeout=0)
        try:
            lock.acquire()
        except Timeout:
            raise DataError(self.lock_path, "WORKSPACE_LOCKED")
        try:
            yield self
        finally:
            lock.release()

    def relative(self, path: str) -> str:
        return os.path.relpath(path, self.root).replace(os.sep, "/")


def stage_key(stage: str, section: Mapping[str, object], input_hashes: Mapping[str, str]) -> str:
    """SHA-256 over the stage name, its configuration section and its input file hashes."""
    payload = json.dumps({"stage": stage, "config": section, "inputs": input_hashes}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class StageRecords:
    """`stages.json`: stage -> key, configuration section, inputs and outputs of its last run."""

    def __init__(self, workspace: Workspace) -> None:
        self.workspace = workspace
        self.records: Dict[str, dict] = {}
        if os.path.isfile(workspace.records_path):
            try:
                with open(workspace.records_path, "r", encoding="utf-8") as f:
                    self.records = json.load(f)
            except (OSError, ValueError) as e:
                logger.warning(f"Ignoring unreadable stage records {workspace.records_path}: {str(e)}")

    def get(self, stage: str) -> Optional[dict]:
        return self.records.get(stage)

    def outputs_exist(self, stage: str) -> bool:
        record = self.records.get(stage)
        if not record:
            return False
        return all(os.path.exists(os.path.join(self.workspace.root, path)) for path in record["outputs"])

    def record(self, stage: str, key: str, section: dict, inputs: dict, outputs: Sequence[str]) -> None:
        self.records[stage] = {
            "key": key,
            "config": section,
            "inputs": inputs,
            "outputs": sorted(self.workspace.relative(path) for path in outputs),
        }
        with open(self.workspace.records_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.records, f, indent=2, sort_keys=True)
            f.write("\n")


def changed_fields(previous: Mapping[str, object], current: Mapping[str, object]) -> List[str]:
    before, after = flatten_section(previous), flatten_section(current)
    return sorted(key for key in set(before) | set(after) if before.get(key) != after.get(key))


# ---------------------------------------------------------------------------
# Planner selection
# ---------------------------------------------------------------------------


def candidate_planners(cfg: EvalConfig) -> List[PlannerParams]:
    """Named presets, each expanded over the configured parameter grid."""
    axes = (cfg.grid_velocities, cfg.grid_sample_counts, cfg.grid_inflation_radii)
    candidates = []
    for name in cfg.planners:
        base = get_planner(name)
        candidates += planner_grid(base, *axes) if any(axes) else [base]
    if not candidates:
        raise ConfigError("EVAL_PLANNERS names no planner")
    return candidates


def select_planner(reports: Sequence[EvaluationReport], success_floor: float) -> Tuple[int, bool]:
    """
    Index of the fastest candidate whose success rate meets the floor.

    Without such a candidate the most successful one wins (then the
    fastest). Returns (index, floor met); ties keep the earlier candidate.
    """

    def time_of(report: EvaluationReport) -> float:
        return report.mean_time_cost if np.isfinite(report.mean_time_cost) else float("inf")

    eligible = [index for index, report in enumerate(reports) if report.success_rate >= success_floor]
    if eligible:
        return min(eligible, key=lambda index: (time_of(reports[index]), index)), True
    best = min(range(len(reports)), key=lambda index: (-reports[index].success_rate, time_of(reports[index]), index))
    return best, False


def _markdown_table(frame: pd.DataFrame) -> List[str]:
    def cell(value) -> str:
        if isinstance(value, float):
            return "nan" if np.isnan(value) else f"{value:.2f}"
        return str(value)

    lines = ["| " + " | ".join(str(column) for column in frame.columns) + " |"]
    lines.append("|" + "---|" * len(frame.columns))
    for row in frame.itertuples(index=False):
        lines.append("| " + " | ".join(cell(value) for value in row) + " |")
    return lines


def _write_csv(frame: pd.DataFrame, file_path: str) -> str:
    frame.to_csv(file_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return file_path


def _write_json(payload: dict, file_path: str) -> str:
    with open(file_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return file_path


def _number(value: float) -> Optional[float]:
    return None if not np.isfinite(value) else round(float(value), 6)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


class SESPipeline:
    def __init__(self, config: PipelineConfig, force: bool = False, log_level: int = 0) -> None:
        """
        Args:
            config (PipelineConfig): Validated configuration.
            force (bool): Recompute stages whose cached outputs are up to date or stale.
            log_level (int): Logging verbosity level
        """
        self.config = config
        self.force = force
        self.log_level = log_level
        self.workspace = Workspace(config.paths)
        self.rng = SeededRng(config.seed)

    # -- stage bookkeeping --------------------------------------------------

    def stage_section(self, stage: str) -> dict:
        """The configuration a stage's outputs depend on."""
        cfg = self.config.model_dump(mode="json")
        if stage == "generate_maps":
            return {"seed": cfg["seed"], "mapgen": cfg["mapgen"], "map_resolution": cfg["sim"]["map_resolution"]}
        if stage == "deploy":
            return {"seed": cfg["seed"], "deploy": cfg["deploy"], "sim": cfg["sim"]}
        if stage == "extract":
            return {"extract": cfg["extract"]}
        if stage == "synthesize":
            section = {"seed": cfg["seed"], "method": cfg["method"], "synth_count": cfg["synth_count"]}
            if self.config.method == "gan":
                section["gan"] = cfg["gan"]
            elif self.config.method == "pca":
                section["cluster"] = cfg["cluster"]
            return section
        if stage == "evaluate":
            return {"seed": cfg["seed"], "evaluate": cfg["evaluate"], "sim": cfg["sim"]}
        if stage == "report":
            return {
                "seed": cfg["seed"],
                "report": cfg["report"],
                "evaluate": cfg["evaluate"],
                "sim": cfg["sim"],
            }
        raise ConfigError(f"unknown stage {stage!r}")

    def stage_inputs(self, stage: str) -> List[str]:
        ws = self.workspace
        env_files = (".txt", ".csv")
        if stage == "generate_maps":
            return []
        if stage == "deploy":
            return list_files(ws.maps_dir, (".pgm",))
        if stage == "extract":
            return list_files(ws.traces_dir, (".jsonl",))
        if stage == "synthesize":
            return list_files(ws.env_dir("challenging"), env_files)
        if stage == "evaluate":
            env_set = self.config.evaluate.env_set
            if env_set == "maps":
                return list_files(ws.maps_dir, (".pgm",))
            return list_files(ws.env_dir(env_set), env_files)
        if stage == "report":
            inputs = []
            for name in ENV_SET_NAMES:
                inputs += list_files(ws.env_dir(name), env_files)
            return inputs + list_files(ws.metrics_dir, (".csv", ".json"))
        raise ConfigError(f"unknown stage {stage!r}")

    def record_name(self, stage: str) -> str:
        """Evaluations of different environment sets keep separate records."""
        return f"evaluate:{self.config.evaluate.env_set}" if stage == "evaluate" else stage

    def _runner(self, stage: str):
        return {
            "generate_maps": self._generate_maps,
            "deploy": self._deploy,
            "extract": self._extract,
            "synthesize": self._synthesize,
            "evaluate": self._evaluate,
            "report": self._report,
        }[stage]

    def _execute(self, stage: str, records: StageRecords) -> dict:
        section = self.stage_section(stage)
        inputs = hash_files(self.stage_inputs(stage), self.workspace.root)
        key = stage_key(stage, section, inputs)
        if self.log_level >= 1:
            logger.info(f"Running stage {stage}")
        result = self._runner(stage)()
        records.record(self.record_name(stage), key, section, inputs, result["outputs"])
        result["status"] = "STAGE_COMPLETED"
        return result

    def run(self, stage: str) -> dict:
        """Run one stage under the workspace lock, always recomputing, and refresh its record."""
        with self.workspace.locked():
            return self._execute(stage, StageRecords(self.workspace))

    def run_all(self) -> Dict[str, dict]:
        """deploy -> extract -> synthesize -> evaluate -> report under one lock."""
        return self.run_stages(STAGES)

    def run_stages(self, stages: Sequence[str]) -> Dict[str, dict]:
        """
        Run `stages` in order under one lock, reusing cached outputs.

        A stage whose recorded key matches and whose outputs exist is
        skipped. A recorded stage whose configuration differs raises
        StaleArtifactError unless `force`; one whose inputs alone changed
        is recomputed.
        """
        results = {}
        with self.workspace.locked():
            records = StageRecords(self.workspace)
            for stage in stages:
                try:
                    results[stage] = self._run_cached(stage, records)
                except PipelineError as e:
                    logger.error(f"Error in stage {stage}: {str(e)}")
                    raise e.with_stage(stage)
                except Exception as e:
                    logger.error(f"Error in stage {stage}: {str(e)}")
                    raise PipelineError(f"{type(e).__name__}: {str(e)}").with_stage(stage)
        return results

    def _run_cached(self, stage: str, records: StageRecords) -> dict:
        name = self.record_name(stage)
        previous = records.get(name)
        if previous and not self.force:
            section = self.stage_section(stage)
            key = stage_key(stage, section, hash_files(self.stage_inputs(stage), self.workspace.root))
            if previous["key"] == key and records.outputs_exist(name):
                if self.log_level >= 1:
                    logger.info(f"Stage {stage} is up to date; skipping")
                return {"status": "STAGE_SKIPPED", "outputs": previous["outputs"]}
            differing = changed_fields(previous["config"], section)
            if differing:
                raise StaleArtifactError(f"{stage} outputs differ in {', '.join(differing)}")
        return self._execute(stage, records)

    # -- stages -------------------------------------------------------------

    def _generate_maps(self) -> dict:
        cfg = self.config.mapgen.model_copy(update={"resolution": self.config.sim.map_resolution})
        outputs = MapGeneratorPipeline(cfg, self.log_level).generate(
            self.rng.fork("generate_maps"), self.workspace.maps_dir
        )
        return {"maps": len(outputs), "outputs": outputs}

    def _deploy(self) -> dict:
        cfg = self.config
        params = get_planner(cfg.deploy.planner)
        maps = load_world_maps(self.workspace.maps_dir, cfg.sim.map_resolution)
        pipeline = DeploymentSimulatorPipeline(params, cfg.sim, cfg.n_jobs, self.log_level)
        outputs = pipeline.deploy(
            maps,
            cfg.deploy.per_map,
            self.rng.fork("deploy"),
            self.workspace.traces_dir,
            cfg.deploy.min_separation,
            cfg.deploy.attempts,
        )
        return {"maps": len(maps), "traces": len(outputs) - 1, "outputs": outputs}

    def _extract(self) -> dict:
        ws = self.workspace
        pipeline = DomainExtractionPipeline(self.config.extract, self.config.n_jobs, self.log_level)
        return pipeline.run(ws.traces_dir, ws.env_dir("raw"), ws.env_dir("challenging"))

    def load_set(self, name: str) -> EnvironmentSet:
        threshold = self.config.extract.difficulty_threshold if name == "challenging" else None
        return load_environment_set(self.workspace.env_dir(name), name, threshold)

    def _synthesize(self) -> dict:
        cfg = self.config
        ws = self.workspace
        challenging = self.load_set("challenging")
        if len(challenging) == 0:
            raise DataError(
                f"{ws.env_dir('challenging')} holds no environment above {cfg.extract.difficulty_threshold}",
                "CHALLENGING_SET_EMPTY",
            )
        rng = self.rng.fork("synthesize", cfg.method)
        checkpoint = None
        if cfg.method == "gan":
            checkpoint = os.path.join(ws.models_dir, "gan.safetensors")
            synthesized, _ = GANSynthesisPipeline(cfg.gan, self.log_level).synthesize(
                challenging, cfg.synth_count, rng, checkpoint
            )
        elif cfg.method == "pca":
            checkpoint = os.path.join(ws.models_dir, "pca.safetensors")
            pipeline = ClusterSynthesisPipeline(
                cfg.cluster.components, cfg.cluster.clusters, cfg.cluster.per_cluster, self.log_level
            )
            synthesized, _ = pipeline.synthesize(challenging, cfg.synth_count, rng, checkpoint)
        else:
            synthesized = RandomSynthesisPipeline(self.log_level).synthesize(challenging, cfg.synth_count, rng)

        outputs = save_environment_set_with_similarity(
            synthesized, challenging, ws.env_dir("synthesized"), self.log_level
        )
        if checkpoint:
            outputs.append(checkpoint)
        return {"method": cfg.method, "synthesized": len(synthesized), "outputs": outputs}

    def evaluation_targets(self, env_set: str):
        """Named navigation targets: an EnvironmentSet or the deployment maps."""
        if env_set == "maps":
            return load_world_maps(self.workspace.maps_dir, self.config.sim.map_resolution)
        envs = self.load_set(env_set)
        for entry in envs:
            if not is_navigable(entry.grid):
                path = os.path.join(self.workspace.env_dir(env_set), f"{entry.env_id}.txt")
                raise DataError(path, "GRID_NOT_NAVIGABLE")
        return envs

    def evaluate_candidates(
        self, targets, candidates: Sequence[PlannerParams], rng: SeededRng, trials: int
    ) -> List[EvaluationReport]:
        cfg = self.config
        reports = []
        for params in candidates:
            # Every candidate sees the same episode streams
            if isinstance(targets, EnvironmentSet):
                report = evaluate(targets, params, trials, rng, cfg.sim, cfg.n_jobs)
            else:
                report = evaluate_on_maps(
                    targets,
                    params,
                    trials,
                    rng,
                    cfg.sim,
                    cfg.evaluate.heldout_pairs,
                    cfg.deploy.min_separation,
                    cfg.deploy.attempts,
                    cfg.n_jobs,
                )
            if self.log_level >= 1:
                logger.info(
                    f"{params.name}: success {report.success_rate:.1%}, time cost {report.mean_time_cost:.2f} s"
                )
            reports.append(report)
        return reports

    def _evaluate(self) -> dict:
        cfg = self.config.evaluate
        candidates = candidate_planners(cfg)
        targets = self.evaluation_targets(cfg.env_set)
        reports = self.evaluate_candidates(targets, candidates, self.rng.fork("evaluate", cfg.env_set), cfg.trials)
        best, met_floor = select_planner(reports, cfg.success_floor)
        if not met_floor:
            logger.warning(f"No planner reached a {cfg.success_floor:.0%} success rate on {cfg.env_set}")

        os.makedirs(self.workspace.metrics_dir, exist_ok=True)
        per_environment = pd.concat(
            [report.per_environment.assign(planner=report.planner.name) for report in reports], ignore_index=True
        )
        per_environment = per_environment[["planner"] + [c for c in per_environment.columns if c != "planner"]]
        env_order = list(reports[0].per_environment["env_id"])
        time_by_env = (
            per_environment.pivot(index="env_id", columns="planner", values="mean_time")
            .reindex(index=env_order, columns=[params.name for params in candidates])
            .reset_index()
        )
        summary = pd.DataFrame([report.summary_row() for report in reports])

        metrics = self.workspace.metrics_dir
        outputs = [
            _write_csv(per_environment, os.path.join(metrics, f"evaluation_{cfg.env_set}.csv")),
            _write_csv(summary, os.path.join(metrics, f"summary_{cfg.env_set}.csv")),
            _write_csv(time_by_env, os.path.join(metrics, f"time_by_env_{cfg.env_set}.csv")),
            _write_json(
                {
                    "env_set": cfg.env_set,
                    "planner": reports[best].planner.model_dump(mode="json"),
                    "success_rate": _number(reports[best].success_rate),
                    "mean_time_cost": _number(reports[best].mean_time_cost),
                    "success_floor": cfg.success_floor,
                    "met_floor": met_floor,
                    "trials": cfg.trials,
                },
                os.path.join(metrics, f"best_params_{cfg.env_set}.json"),
            ),
        ]
        return {"env_set": cfg.env_set, "best": reports[best].planner.name, "summary": summary, "outputs": outputs}

    def directional_check(
        self, raw: EnvironmentSet, challenging: EnvironmentSet, synthesized: EnvironmentSet
    ) -> dict:
        """
        Success rates on held-out challenging environments of the planner
        selected on the synthesized set and of the one selected on an
        equally sized random subset of raw environments.
        """
        cfg = self.config
        heldout_entries = tuple(entry for entry in challenging if is_navigable(entry.grid))[: cfg.report.heldout_envs]
        raw_navigable = [index for index, entry in enumerate(raw) if is_navigable(entry.grid)]
        if not (heldout_entries and raw_navigable and len(synthesized)):
            return {"performed": False, "reason": "needs synthesized, raw and navigable challenging environments"}

        rng = self.rng.fork("report", "directional")
        picks = rng.fork("raw-subset").choice(
            raw_navigable, size=min(len(synthesized), len(raw_navigable)), replace=False
        )
        raw_subset = EnvironmentSet(entries=tuple(raw[int(index)] for index in sorted(picks)), kind="raw")
        heldout = EnvironmentSet(
            entries=heldout_entries, kind="challenging", difficulty_threshold=challenging.difficulty_threshold
        )
        candidates = candidate_planners(cfg.evaluate)
        trials = cfg.report.trials
        result = {"performed": True, "heldout_envs": len(heldout), "raw_subset": len(raw_subset)}
        for label, training in (("synthesized", synthesized), ("raw_subset", raw_subset)):
            reports = self.evaluate_candidates(training, candidates, rng.fork("select", label), trials)
            best, _ = select_planner(reports, cfg.evaluate.success_floor)
            chosen = candidates[best]
            heldout_report = evaluate(heldout, chosen, trials, rng.fork("heldout"), cfg.sim, cfg.n_jobs)
            result[label] = {"planner": chosen.name, "heldout_success_rate": _number(heldout_report.success_rate)}
        if self.log_level >= 1:
            logger.info(
                f"Directional check: synthesized-selected {result['synthesized']['heldout_success_rate']} vs "
                f"raw-selected {result['raw_subset']['heldout_success_rate']} held-out success"
            )
        return result

    def _report(self) -> dict:
        ws = self.workspace
        sets = {name: self.load_set(name) for name in ENV_SET_NAMES}
        os.makedirs(ws.reports_dir, exist_ok=True)
        for stale in list_files(ws.reports_dir, (".pgm", ".csv", ".json", ".md")):
            os.remove(stale)

        similarity = SimilarityReportPipeline(self.config.report.gallery_limit, self.log_level)
        outputs = []
        for name, envs in sets.items():
            gallery = similarity.gallery(envs, ws.reports_dir, name)
            if gallery:
                outputs.append(gallery)
        similarity_path = os.path.join(ws.reports_dir, "similarity.json")
        report = similarity.compare(sets["synthesized"], sets["challenging"], similarity_path)
        outputs.append(similarity_path)

        metric_files = list_files(ws.metrics_dir, (".csv", ".json"))
        for path in metric_files:
            target = os.path.join(ws.reports_dir, os.path.basename(path))
            shutil.copyfile(path, target)
            outputs.append(target)

        directional = None
        if self.config.report.directional_check:
            directional = self.directional_check(sets["raw"], sets["challenging"], sets["synthesized"])
            outputs.append(_write_json(directional, os.path.join(ws.reports_dir, "directional_check.json")))

        lines = ["# Environment synthesis report", "", "## Environment sets", ""]
        for name, envs in sets.items():
            lines.append(f"- {name}: {len(envs)} environments")
        lines += ["", f"Synthesis method: {self.config.method}; master seed {self.config.seed}.", ""]
        lines += ["## Similarity of synthesized to challenging environments", ""]
        stats = report.to_dict()
        lines.append(
            f"- nearest-neighbour Hamming distance: mean {stats['nearest_hamming']['mean']}, "
            f"median {stats['nearest_hamming']['median']}, max {stats['nearest_hamming']['max']}"
        )
        lines.append(f"- occupancy-density histogram L1 distance: {stats['density_histogram']['l1_distance']}")
        lines += ["", "## Planner evaluation", ""]
        summaries = [path for path in metric_files if os.path.basename(path).startswith("summary_")]
        if not summaries:
            lines.append("No evaluation has been run.")
        for path in summaries:
            env_set = os.path.basename(path)[len("summary_") : -len(".csv")]
            lines += [f"### {env_set}", ""] + _markdown_table(pd.read_csv(path)) + [""]
        if directional is not None:
            lines += ["## Directional check", ""]
            if directional["performed"]:
                for label in ("synthesized", "raw_subset"):
                    entry = directional[label]
                    lines.append(
                        f"- selected on {label}: {entry['planner']}, held-out success rate "
                        f"{entry['heldout_success_rate']}"
                    )
            else:
                lines.append(f"Not performed: {directional['reason']}.")
        report_path = os.path.join(ws.reports_dir, "report.md")
        with open(report_path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines).rstrip() + "\n")
        outputs.append(report_path)
        return {"sets": {name: len(envs) for name, envs in sets.items()}, "outputs": outputs}


def save_environment_set_with_similarity(
    synthesized: EnvironmentSet, challenging: EnvironmentSet, directory: str, log_level: int = 0
) -> List[str]:
    """Write the synthesized set and its `similarity.json` next to it."""
    outputs = save_environment_set(synthesized, directory)
    similarity_path = os.path.join(directory, "similarity.json")
    SimilarityReportPipeline(log_level=log_level).compare(synthesized, challenging, similarity_path)
    return outputs + [similarity_path]
