from django.conf import settings
from django.core.management.base import BaseCommand

from app.controllers.PipelineController import SESPipeline, load_pipeline_config
from app.controllers.ResponseCodesController import get_response_code
from app.utils.decorators import pipeline_command


class PipelineCommand(BaseCommand):
    """
    Shared surface of the pipeline subcommands.

    Subclasses set `stage`, add their own flags in `add_stage_arguments` and
    translate them to configuration keys in `stage_overrides`.
    """

    stage = None

    def add_arguments(self, parser):
        parser.add_argument("--config", help="KEY=value pipeline configuration file")
        parser.add_argument("--seed", type=int, help="Master seed (SEED)")
        parser.add_argument("--force", action="store_true", help="Recompute cached stages")
        self.add_stage_arguments(parser)

    def add_stage_arguments(self, parser):
        pass

    def stage_overrides(self, options) -> dict:
        return {}

    def build_pipeline(self, options) -> SESPipeline:
        config_file = options.get("config") or settings.SES_CONFIG_FILE or None
        overrides = {"SEED": options.get("seed"), **self.stage_overrides(options)}
        config = load_pipeline_config(config_file, overrides)
        return SESPipeline(config, force=options.get("force", False), log_level=options.get("verbosity", 1))

    def run_pipeline(self, pipeline: SESPipeline, options) -> dict:
        return pipeline.run(self.stage)

    def describe(self, result: dict) -> str:
        counts = ", ".join(f"{key}={value}" for key, value in result.items() if isinstance(value, (int, str)))
        return counts

    @pipeline_command
    def handle(self, *args, **options):
        result = self.run_pipeline(self.build_pipeline(options), options)
        status = get_response_code(result.get("status", "STAGE_COMPLETED"))
        self.stdout.write(self.style.SUCCESS(f"[{status['code']}] {self.stage}: {self.describe(result)}"))
