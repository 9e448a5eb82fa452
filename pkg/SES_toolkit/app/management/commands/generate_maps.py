from app.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Generate procedural deployment maps into the workspace maps directory"
    stage = "generate_maps"

    def add_stage_arguments(self, parser):
        parser.add_argument("--count", help="Number of maps (MAPGEN_COUNT)")
        parser.add_argument("--width", help="Map width in cells (MAPGEN_WIDTH)")
        parser.add_argument("--height", help="Map height in cells (MAPGEN_HEIGHT)")

    def stage_overrides(self, options) -> dict:
        return {
            "MAPGEN_COUNT": options.get("count"),
            "MAPGEN_WIDTH": options.get("width"),
            "MAPGEN_HEIGHT": options.get("height"),
        }
