from app.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Extract raw and challenging environment sets from the deployment traces"
    stage = "extract"

    def add_stage_arguments(self, parser):
        parser.add_argument("--threshold", help="Difficulty threshold (EXTRACT_DIFFICULTY_THRESHOLD)")

    def stage_overrides(self, options) -> dict:
        return {"EXTRACT_DIFFICULTY_THRESHOLD": options.get("threshold")}
