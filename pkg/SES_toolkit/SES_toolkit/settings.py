"""
Django settings for SES_toolkit project.

Generated by 'django-admin startproject' using Django 5.1.4.

The project has no web surface and no database: Django provides the
settings layer, logging configuration, management-command CLI and test
runner for the environment synthesis pipeline.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv("SECRET_KEY", "django-insecure-ses-toolkit-local-only")

DEBUG = os.getenv("DEBUG", "False").lower() in ("1", "true", "yes")

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    # User-defined apps
    "app",
]

MIDDLEWARE = []

# No database: stage artifacts live on disk in the workspace
DATABASES = {}


# Pipeline workspace (maps, traces, environment sets, models, metrics, reports)
SES_WORKSPACE_DIR = os.getenv("SES_WORKSPACE_DIR", os.path.join(BASE_DIR, "workspace"))

# Optional default pipeline config file used when --config is not given
SES_CONFIG_FILE = os.getenv("SES_CONFIG_FILE", "")

SES_LOG_LEVEL = os.getenv("SES_LOG_LEVEL", "INFO").upper()


# Logging
# https://docs.djangoproject.com/en/5.1/topics/logging/

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "colored": {
            "()": "coloredlogs.ColoredFormatter",
            "fmt": "%(asctime)s %(name)s %(levelname)s %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "colored",
        },
    },
    "loggers": {
        "app": {
            "handlers": ["console"],
            "level": SES_LOG_LEVEL,
            "propagate": False,
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "WARNING",
    },
}


# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True
