import logging
from functools import wraps

from django.core.management.base import CommandError

from app.controllers.ResponseCodesController import PipelineError, get_exit_status

logger = logging.getLogger(__name__)


def pipeline_command(handle_func):
    """
    Decorator for management-command handlers.

    A PipelineError becomes a CommandError whose return code is the error's
    exit status (2 configuration, 3 data, 4 internal); any other exception
    is reported as an internal error.
    """

    @wraps(handle_func)
    def _wrapped_handle(self, *args, **options):
        try:
            return handle_func(self, *args, **options)
        except CommandError:
            raise
        except PipelineError as e:
            raise CommandError(str(e), returncode=e.exit_status)
        except Exception as e:
            logger.error(f"Error running command: {str(e)}")
            raise CommandError(f"internal error: {type(e).__name__}: {str(e)}", returncode=get_exit_status("INTERNAL_ERROR"))

    return _wrapped_handle
