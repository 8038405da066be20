import functools
import json

from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

from core.exceptions import DimensionMismatch, MemoryGuardExceeded, TensorError
from simulation.io import DatasetFormatError

INVALID_INPUT = 2
RUNTIME_FAILURE = 3


def describe(error):
    if isinstance(error, ValidationError):
        return ' '.join(error.messages)
    return str(error)


def exit_codes(handle):
    """Turn failures inside a command's handle() into CommandErrors with exit codes."""

    @functools.wraps(handle)
    def wrapper(self, *args, **options):
        try:
            return handle(self, *args, **options)
        except CommandError:
            raise
        except (ValidationError, DatasetFormatError, DimensionMismatch, MemoryGuardExceeded,
                json.JSONDecodeError) as e:
            raise CommandError(describe(e), returncode=INVALID_INPUT) from e
        except (TensorError, ArithmeticError, OSError) as e:
            raise CommandError(describe(e), returncode=RUNTIME_FAILURE) from e

    return wrapper
