from app.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Render galleries, similarity statistics and metrics tables into the reports directory"
    stage = "report"

    def describe(self, result: dict) -> str:
        return ", ".join(f"{name}: {count} environments" for name, count in result["sets"].items())
