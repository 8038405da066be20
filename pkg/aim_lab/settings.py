from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Only used by Django internals; nothing here is signed.
SECRET_KEY = config('SECRET_KEY', default='aim-lab-insecure-local-key')

DEBUG = config('DEBUG', default=False, cast=bool)


# Application definition

INSTALLED_APPS = [
    'core',
    'simulation',
    'estimation',
    'experiments',
]

# No database: every app works on in-memory arrays and CSV/JSON files.
DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'


# Numerical defaults

# restarts / iterations of the power-iteration operator norm estimate
AIM_NORM_RESTARTS = config('AIM_NORM_RESTARTS', default=50, cast=int)
AIM_NORM_ITERS = config('AIM_NORM_ITERS', default=100, cast=int)

# largest d for which a dense d x d x d moment tensor is built
AIM_DENSE_MAX_D = config('AIM_DENSE_MAX_D', default=512, cast=int)
AIM_CONCENTRATION_MAX_D = config('AIM_CONCENTRATION_MAX_D', default=64, cast=int)

AIM_DEDUP_RADIUS = config('AIM_DEDUP_RADIUS', default=0.5, cast=float)
AIM_MAX_REDRAWS = config('AIM_MAX_REDRAWS', default=10, cast=int)


# Experiments

AIM_JOBS = config('AIM_JOBS', default=1, cast=int)
AIM_DEFAULT_TRIALS = config('AIM_DEFAULT_TRIALS', default=20, cast=int)
AIM_FULL_TRIALS = config('AIM_FULL_TRIALS', default=100, cast=int)

# wall_ms is written as 0 unless enabled, so reruns stay byte-identical
AIM_RECORD_WALL_TIME = config('AIM_RECORD_WALL_TIME', default=False, cast=bool)


# Logging

AIM_LOG_LEVEL = config('AIM_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        name: {'handlers': ['console'], 'level': AIM_LOG_LEVEL, 'propagate': False}
        for name in INSTALLED_APPS
    },
}
