from app.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Run deploy, extract, synthesize, evaluate and report, reusing up-to-date stage outputs"
    stage = "run_all"

    def add_stage_arguments(self, parser):
        parser.add_argument("--method", choices=["gan", "pca", "rs"], help="Synthesis method (METHOD)")

    def stage_overrides(self, options) -> dict:
        return {"METHOD": options.get("method")}

    def run_pipeline(self, pipeline, options) -> dict:
        results = pipeline.run_all()
        return {stage: result["status"].lower() for stage, result in results.items()}
