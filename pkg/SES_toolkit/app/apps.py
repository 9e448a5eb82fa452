from django.apps import AppConfig
import os
from django.conf import settings


class AppConfig(AppConfig):
    name = "app"

    def ready(self):
        """
        Initialize app-specific requirements when Django starts
        """
        # Default workspace; per-run directories are created by the pipeline
        os.makedirs(settings.SES_WORKSPACE_DIR, exist_ok=True)
