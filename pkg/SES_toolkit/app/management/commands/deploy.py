from app.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Deploy the base planner on every map and write JSONL traces plus a run manifest"
    stage = "deploy"

    def add_stage_arguments(self, parser):
        parser.add_argument("--planner", help="Planner preset (DEPLOY_PLANNER)")
        parser.add_argument("--per-map", help="Deployments per map (DEPLOY_PER_MAP)")

    def stage_overrides(self, options) -> dict:
        return {"DEPLOY_PLANNER": options.get("planner"), "DEPLOY_PER_MAP": options.get("per_map")}
