from app.management.base import PipelineCommand
from app.controllers.GANSynthesisController import GanTrainConfig

# GanTrainConfig.seed would clash with the master --seed flag
GAN_FLAG_NAMES = {field: ("gan-seed" if field == "seed" else field.replace("_", "-")) for field in GanTrainConfig.model_fields}


class Command(PipelineCommand):
    help = "Synthesize the training environment set from the challenging set (gan, pca or rs)"
    stage = "synthesize"

    def add_stage_arguments(self, parser):
        parser.add_argument("--method", choices=["gan", "pca", "rs"], help="Synthesis method (METHOD)")
        parser.add_argument("--count", help="Environments to synthesize (SYNTH_COUNT)")
        parser.add_argument("--components", help="PCA components (CLUSTER_COMPONENTS)")
        parser.add_argument("--clusters", help="K-means clusters (CLUSTER_CLUSTERS)")
        parser.add_argument("--per-cluster", help="Environments per cluster (CLUSTER_PER_CLUSTER)")
        gan = parser.add_argument_group("GAN training")
        for field, flag in GAN_FLAG_NAMES.items():
            gan.add_argument(f"--{flag}", dest=f"gan_{field}", help=f"GAN_{field.upper()}")

    def stage_overrides(self, options) -> dict:
        overrides = {
            "METHOD": options.get("method"),
            "SYNTH_COUNT": options.get("count"),
            "CLUSTER_COMPONENTS": options.get("components"),
            "CLUSTER_CLUSTERS": options.get("clusters"),
            "CLUSTER_PER_CLUSTER": options.get("per_cluster"),
        }
        for field in GAN_FLAG_NAMES:
            overrides[f"GAN_{field.upper()}"] = options.get(f"gan_{field}")
        return overrides
