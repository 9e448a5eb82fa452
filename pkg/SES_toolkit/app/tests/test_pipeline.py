import json
import os
from io import StringIO

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings, tag
from filelock import FileLock

from app.controllers.ArtifactStoreController import load_environment_set, write_trajectory
from app.controllers.DeploymentSimulatorController import EvaluationReport, get_planner
from app.controllers.NavigationPlannerController import is_navigable
from app.controllers.PipelineController import (
    EvalConfig,
    SESPipeline,
    Workspace,
    candidate_planners,
    load_pipeline_config,
    nest_config,
    select_planner,
    stage_key,
)
from app.controllers.ResponseCodesController import ConfigError, DataError, PipelineError
from app.tests.factories import TempDirMixin, random_walk_trajectory

FAST_SETTINGS = {
    "METHOD": "rs",
    "SYNTH_COUNT": "3",
    "EXTRACT_DIFFICULTY_THRESHOLD": "2",
    "SIM_BEAM_COUNT": "18",
    "SIM_MAX_STEPS": "100",
    "EVAL_PLANNERS": "dwa_fast",
    "EVAL_TRIALS": "1",
    "REPORT_DIRECTIONAL_CHECK": "false",
}


def report(success_rate: float, mean_time: float, name: str = "p") -> EvaluationReport:
    return EvaluationReport(
        planner=get_planner("dwa_slow").model_copy(update={"name": name}),
        per_environment=pd.DataFrame(),
        success_rate=success_rate,
        mean_time_cost=mean_time,
        trials=10,
    )


def write_config(path: str, values: dict) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# test pipeline configuration\n")
        for key, value in values.items():
            f.write(f"{key}={value}\n")
    return path


class ConfigTests(TempDirMixin, SimpleTestCase):
    def test_defaults(self):
        with override_settings(SES_WORKSPACE_DIR=self.tmp):
            config = load_pipeline_config(environ={})
        self.assertEqual(config.paths.workspace_dir, self.tmp)
        self.assertEqual((config.seed, config.method, config.synth_count), (0, "gan", 100))
        self.assertEqual(config.extract.difficulty_threshold, 50)
        self.assertEqual(config.evaluate.planners, ("dwa_slow", "dwa_fast"))

    def test_precedence(self):
        config_file = write_config(os.path.join(self.tmp, "ses.env"), {"SEED": "5", "SYNTH_COUNT": "40"})
        environ = {"SES_SEED": "3", "SES_METHOD": "rs", "SES_SYNTH_COUNT": "7"}
        config = load_pipeline_config(config_file, {"SEED": 9, "SYNTH_COUNT": None}, environ)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.method, "rs")
        self.assertEqual(config.synth_count, 40)
        self.assertEqual(config.gan.seed, 9)

    def test_explicit_gan_seed_kept(self):
        config = load_pipeline_config(overrides={"SEED": 4, "GAN_SEED": 11}, environ={})
        self.assertEqual((config.seed, config.gan.seed), (4, 11))

    def test_unrelated_environment_ignored(self):
        config = load_pipeline_config(environ={"SES_FOO": "1", "SES_LOG_LEVEL": "DEBUG", "PATH": "/bin"})
        self.assertEqual(config.seed, 0)

    def test_unknown_file_key(self):
        config_file = write_config(os.path.join(self.tmp, "ses.env"), {"SEED": "1", "BOGUS_KEY": "2"})
        with self.assertRaises(ConfigError) as ctx:
            load_pipeline_config(config_file, environ={})
        self.assertEqual(ctx.exception.code_key, "CONFIG_UNKNOWN_KEY")
        self.assertIn("BOGUS_KEY", str(ctx.exception))
        self.assertEqual(ctx.exception.exit_status, 2)

    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            load_pipeline_config(os.path.join(self.tmp, "absent.env"), environ={})
        self.assertEqual(ctx.exception.code_key, "CONFIG_FILE_NOT_FOUND")

    def test_invalid_value(self):
        with self.assertRaises(ConfigError) as ctx:
            load_pipeline_config(overrides={"SEED": -1}, environ={})
        self.assertEqual(ctx.exception.code_key, "CONFIG_INVALID")
        self.assertIn("seed", str(ctx.exception))

    def test_cluster_count_mismatch(self):
        with self.assertRaises(ConfigError) as ctx:
            load_pipeline_config(overrides={"METHOD": "pca", "SYNTH_COUNT": 50}, environ={})
        self.assertEqual(ctx.exception.code_key, "CONFIG_METHOD_MISMATCH")
        config = load_pipeline_config(overrides={"METHOD": "gan", "SYNTH_COUNT": 50}, environ={})
        self.assertEqual(config.synth_count, 50)

    def test_comma_separated_sequences(self):
        nested = nest_config({"EVAL_PLANNERS": "dwa_fast, dwa_slow", "EVAL_GRID_VELOCITIES": "0.4,0.6"})
        self.assertEqual(nested["evaluate"]["planners"], ["dwa_fast", "dwa_slow"])
        config = load_pipeline_config(overrides={"EVAL_GRID_VELOCITIES": "0.4,0.6"}, environ={})
        self.assertEqual(config.evaluate.grid_velocities, (0.4, 0.6))


class PlannerSelectionTests(SimpleTestCase):
    def test_fastest_above_floor(self):
        reports = [report(1.0, 12.0), report(0.9, 8.0), report(0.4, 5.0)]
        self.assertEqual(select_planner(reports, 0.5), (1, True))
        self.assertEqual(select_planner(reports, 0.95), (0, True))

    def test_most_successful_when_floor_missed(self):
        reports = [report(0.3, 12.0), report(0.4, 20.0), report(0.4, 9.0)]
        self.assertEqual(select_planner(reports, 0.9), (2, False))

    def test_tie_keeps_earlier(self):
        self.assertEqual(select_planner([report(1.0, 10.0), report(1.0, 10.0)], 0.5), (0, True))

    def test_no_successes_counts_as_slowest(self):
        reports = [report(0.0, float("nan")), report(0.0, float("nan"))]
        self.assertEqual(select_planner(reports, 0.0), (0, True))
        self.assertEqual(select_planner([report(0.5, float("nan")), report(0.5, 30.0)], 0.5), (1, True))

    def test_candidate_grid(self):
        candidates = candidate_planners(EvalConfig(planners=("dwa_slow",), grid_velocities=(0.3, 0.4)))
        self.assertEqual([c.max_linear_velocity for c in candidates], [0.3, 0.4])
        self.assertEqual(len(candidate_planners(EvalConfig())), 2)
        with self.assertRaises(ConfigError):
            candidate_planners(EvalConfig(planners=()))
        with self.assertRaises(ConfigError):
            candidate_planners(EvalConfig(planners=("dwb",)))

    def test_stage_key_tracks_inputs(self):
        first = stage_key("extract", {"a": 1}, {"traces/x.jsonl": "00"})
        self.assertEqual(first, stage_key("extract", {"a": 1}, {"traces/x.jsonl": "00"}))
        self.assertNotEqual(first, stage_key("extract", {"a": 1}, {"traces/x.jsonl": "01"}))
        self.assertNotEqual(first, stage_key("extract", {"a": 2}, {"traces/x.jsonl": "00"}))


class StageCachingTests(TempDirMixin, SimpleTestCase):
    """Stages after deploy, on a workspace seeded with recorded traces."""

    def setUp(self):
        super().setUp()
        self.workspace_dir = os.path.join(self.tmp, "ws")
        for seed in range(3):
            self.add_trace(seed)

    def add_trace(self, seed: int) -> None:
        path = os.path.join(self.workspace_dir, "traces", f"walk-{seed}.jsonl")
        write_trajectory(random_walk_trajectory(seed, deployment_id=f"walk-{seed}"), path)

    def pipeline(self, force: bool = False, **values) -> SESPipeline:
        overrides = {**FAST_SETTINGS, "WORKSPACE_DIR": self.workspace_dir, **values}
        return SESPipeline(load_pipeline_config(overrides=overrides, environ={}), force=force)

    def statuses(self, results: dict) -> dict:
        return {stage: result["status"] for stage, result in results.items()}

    def test_stages_complete_then_skip(self):
        stages = ("extract", "synthesize", "evaluate", "report")
        results = self.pipeline().run_stages(stages)
        self.assertEqual(set(self.statuses(results).values()), {"STAGE_COMPLETED"})
        self.assertGreater(results["extract"]["challenging"], 0)

        synthesized = load_environment_set(os.path.join(self.workspace_dir, "envs", "synthesized"), "synthesized")
        self.assertEqual(len(synthesized), 3)
        self.assertTrue(all(is_navigable(grid) for grid in synthesized.grids()))

        metrics = os.path.join(self.workspace_dir, "metrics")
        summary = pd.read_csv(os.path.join(metrics, "summary_synthesized.csv"))
        self.assertEqual(list(summary.columns), ["Planner", "Time cost (s)", "Success rate (%)"])
        with open(os.path.join(metrics, "best_params_synthesized.json"), encoding="utf-8") as f:
            self.assertEqual(json.load(f)["planner"]["name"], "dwa_fast")
        with open(os.path.join(self.workspace_dir, "reports", "report.md"), encoding="utf-8") as f:
            text = f.read()
        self.assertIn("- synthesized: 3 environments", text)
        self.assertIn("### synthesized", text)

        rerun = self.pipeline().run_stages(stages)
        self.assertEqual(set(self.statuses(rerun).values()), {"STAGE_SKIPPED"})

    def test_changed_config_is_stale(self):
        self.pipeline().run_stages(("extract", "synthesize"))
        with self.assertRaises(PipelineError) as ctx:
            self.pipeline(SYNTH_COUNT="4").run_stages(("extract", "synthesize"))
        self.assertEqual(ctx.exception.code_key, "STALE_ARTIFACT")
        self.assertIn("synth_count", str(ctx.exception))
        self.assertIn("stage 'synthesize'", str(ctx.exception))
        self.assertEqual(ctx.exception.exit_status, 3)

        results = self.pipeline(force=True, SYNTH_COUNT="4").run_stages(("extract", "synthesize"))
        self.assertEqual(results["synthesize"]["synthesized"], 4)

    def test_changed_inputs_recompute(self):
        self.pipeline().run_stages(("extract",))
        self.add_trace(3)
        results = self.pipeline().run_stages(("extract",))
        self.assertEqual(results["extract"]["status"], "STAGE_COMPLETED")
        self.assertEqual(results["extract"]["trajectories"], 4)

    def test_missing_output_recomputes(self):
        results = self.pipeline().run_stages(("extract",))
        os.remove(os.path.join(self.workspace_dir, "envs", "raw", "manifest.csv"))
        self.assertEqual(self.pipeline().run_stages(("extract",))["extract"]["status"], "STAGE_COMPLETED")
        self.assertEqual(results["extract"]["raw"], len(load_environment_set(os.path.join(self.workspace_dir, "envs", "raw"), "raw")))

    def test_single_stage_always_recomputes(self):
        self.pipeline().run("extract")
        self.assertEqual(self.pipeline().run("extract")["status"], "STAGE_COMPLETED")
        with open(os.path.join(self.workspace_dir, "stages.json"), encoding="utf-8") as f:
            records = json.load(f)
        self.assertIn("traces/walk-0.jsonl", records["extract"]["inputs"])
        self.assertIn("envs/raw/manifest.csv", records["extract"]["outputs"])

    def test_held_lock(self):
        pipeline = self.pipeline()
        pipeline.workspace.ensure()
        lock = FileLock(pipeline.workspace.lock_path, timeout=0)
        lock.acquire()
        try:
            with self.assertRaises(DataError) as ctx:
                pipeline.run("extract")
            self.assertEqual(ctx.exception.code_key, "WORKSPACE_LOCKED")
        finally:
            lock.release()
        self.assertEqual(pipeline.run("extract")["status"], "STAGE_COMPLETED")

    def test_empty_challenging_set(self):
        self.pipeline(EXTRACT_DIFFICULTY_THRESHOLD="100000").run("extract")
        with self.assertRaises(DataError) as ctx:
            self.pipeline(EXTRACT_DIFFICULTY_THRESHOLD="100000").run("synthesize")
        self.assertEqual(ctx.exception.code_key, "CHALLENGING_SET_EMPTY")

    def test_relative_paths_resolve_under_workspace(self):
        workspace = Workspace(self.pipeline().config.paths)
        self.assertEqual(workspace.env_dir("raw"), os.path.join(os.path.abspath(self.workspace_dir), "envs", "raw"))
        self.assertEqual(workspace.relative(workspace.env_dir("raw")), "envs/raw")


class CommandTests(TempDirMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.workspace_dir = os.path.join(self.tmp, "ws")
        self.config_file = write_config(
            os.path.join(self.tmp, "ses.env"), {**FAST_SETTINGS, "WORKSPACE_DIR": self.workspace_dir}
        )

    def call(self, name: str, **options) -> str:
        out = StringIO()
        call_command(name, config=self.config_file, stdout=out, **options)
        return out.getvalue()

    def test_extract_reports_success_code(self):
        write_trajectory(
            random_walk_trajectory(0, deployment_id="walk-0"),
            os.path.join(self.workspace_dir, "traces", "walk-0.jsonl"),
        )
        output = self.call("extract")
        self.assertIn("[SUC002] extract:", output)
        self.assertIn("trajectories=1", output)

    def test_missing_traces_is_a_data_error(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("extract")
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn("DAT002", str(ctx.exception))

    def test_config_error_exit_status(self):
        write_config(self.config_file, {"NOT_A_KEY": "1"})
        with self.assertRaises(CommandError) as ctx:
            self.call("extract")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_unknown_planner_flag(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("deploy", planner="teb")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_maps(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("deploy")
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn("DAT001", str(ctx.exception))


@tag("slow")
class EndToEndTests(TempDirMixin, SimpleTestCase):
    """Two small cave maps through every stage."""

    def setUp(self):
        super().setUp()
        self.workspace_dir = os.path.join(self.tmp, "ws")
        settings = {
            "WORKSPACE_DIR": self.workspace_dir,
            "SEED": "7",
            "METHOD": "rs",
            "SYNTH_COUNT": "10",
            "MAPGEN_COUNT": "2",
            "MAPGEN_WIDTH": "80",
            "MAPGEN_HEIGHT": "80",
            "DEPLOY_PLANNER": "dwa_fast",
            "DEPLOY_PER_MAP": "5",
            "SIM_BEAM_COUNT": "90",
            "SIM_MIN_SPEED_RATIO": "1.0",
            "EXTRACT_DIFFICULTY_THRESHOLD": "0",
            "CLUSTER_CLUSTERS": "2",
            "CLUSTER_PER_CLUSTER": "5",
            "EVAL_TRIALS": "1",
            "REPORT_HELDOUT_ENVS": "3",
            "REPORT_TRIALS": "1",
        }
        self.config_file = write_config(os.path.join(self.tmp, "ses.env"), settings)

    def run_all(self, **options) -> str:
        out = StringIO()
        call_command("run_all", config=self.config_file, stdout=out, **options)
        return out.getvalue()

    def read(self, *parts) -> bytes:
        with open(os.path.join(self.workspace_dir, *parts), "rb") as f:
            return f.read()

    def test_full_pipeline(self):
        call_command("generate_maps", config=self.config_file, stdout=StringIO())
        output = self.run_all()
        self.assertIn("deploy=stage_completed", output)
        self.assertIn("report=stage_completed", output)

        challenging = load_environment_set(os.path.join(self.workspace_dir, "envs", "challenging"), "challenging", 0)
        self.assertGreater(len(challenging), 0)
        synthesized = load_environment_set(os.path.join(self.workspace_dir, "envs", "synthesized"), "synthesized")
        self.assertEqual(len(synthesized), 10)
        self.assertTrue(all(is_navigable(grid) for grid in synthesized.grids()))
        similarity = json.loads(self.read("reports", "similarity.json"))
        self.assertEqual(similarity["synthesized_count"], 10)
        summary = pd.read_csv(os.path.join(self.workspace_dir, "metrics", "summary_synthesized.csv"))
        self.assertEqual(list(summary["Planner"]), ["dwa_slow", "dwa_fast"])
        self.assertTrue(np.all((summary["Success rate (%)"] >= 0) & (summary["Success rate (%)"] <= 100)))

        self.assertNotIn("stage_completed", self.run_all())

        before = {name: self.read(*name.split("/")) for name in ("traces/manifest.csv", "metrics/summary_synthesized.csv", "reports/report.md")}
        self.run_all(force=True)
        for name, content in before.items():
            self.assertEqual(self.read(*name.split("/")), content, name)

        with self.assertRaises(CommandError) as ctx:
            self.run_all(method="pca")
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn("DAT010", str(ctx.exception))
