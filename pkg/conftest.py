import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "SES_toolkit.settings")
django.setup()
