from app.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Evaluate planner candidates on an environment set and record the best parameters"
    stage = "evaluate"

    def add_stage_arguments(self, parser):
        parser.add_argument(
            "--env-set", choices=["raw", "challenging", "synthesized", "maps"], help="Set to evaluate on (EVAL_ENV_SET)"
        )
        parser.add_argument("--planners", help="Comma-separated planner presets (EVAL_PLANNERS)")
        parser.add_argument("--trials", help="Trials per environment (EVAL_TRIALS)")

    def stage_overrides(self, options) -> dict:
        return {
            "EVAL_ENV_SET": options.get("env_set"),
            "EVAL_PLANNERS": options.get("planners"),
            "EVAL_TRIALS": options.get("trials"),
        }

    def describe(self, result: dict) -> str:
        return f"best planner on {result['env_set']} is {result['best']}\n{result['summary'].to_string(index=False)}"
