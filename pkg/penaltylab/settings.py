"""
Django settings for penaltylab project.

penaltylab has no web surface and no database: Django provides the settings
layer, the management-command CLI, logging bootstrap and the test runner.

Every numerical default used by the command line lives here and can be
overridden through the environment (or a .env file next to manage.py).
"""
from pathlib import Path
import os
import environ

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Initialize environment variables
env = environ.Env()
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = env('DJANGO_SECRET_KEY', default='penaltylab-development-key')

DEBUG = env.bool('DEBUG', default=True)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'estimation',
    'simlab',
    'cli',
]

# No models anywhere in the project
DATABASES = {}


LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

CELERY_ENABLE_UTC = True
CELERY_TIMEZONE = "UTC"

CELERY_BROKER_URL = env('CELERY_BROKER_URL', default='redis://localhost:6379/0')
CELERY_RESULT_BACKEND = env('CELERY_RESULT_BACKEND', default='redis://localhost:6379/0')
CELERY_TASK_ALWAYS_EAGER = env.bool('CELERY_TASK_ALWAYS_EAGER', default=False)
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_ACCEPT_CONTENT = ['json']

# 'local' runs replications in-process (serial or a process pool),
# 'celery' fans them out as a task group.
SIMLAB_DISPATCH = env('SIMLAB_DISPATCH', default='local')
SIMLAB_RESULT_TIMEOUT = env.int('SIMLAB_RESULT_TIMEOUT', default=3600)


# Estimation defaults

PENALTYLAB_C0 = env.float('PENALTYLAB_C0', default=1.1)
PENALTYLAB_FOLDS = env.int('PENALTYLAB_FOLDS', default=10)
PENALTYLAB_FOLD_SCHEME = env('PENALTYLAB_FOLD_SCHEME', default='even')
PENALTYLAB_GRID_SIZE = env.int('PENALTYLAB_GRID_SIZE', default=100)
PENALTYLAB_GRID_RATIO = env.float('PENALTYLAB_GRID_RATIO', default=1e-4)
PENALTYLAB_BOOT_DRAWS = env.int('PENALTYLAB_BOOT_DRAWS', default=1000)
PENALTYLAB_KKT_TOL = env.float('PENALTYLAB_KKT_TOL', default=1e-6)
PENALTYLAB_MAX_ITER = env.int('PENALTYLAB_MAX_ITER', default=10000)
PENALTYLAB_STEP_SHRINK = env.float('PENALTYLAB_STEP_SHRINK', default=0.5)
PENALTYLAB_WORKERS = env.int('PENALTYLAB_WORKERS', default=1)
PENALTYLAB_SEED = env.int('PENALTYLAB_SEED', default=0)
PENALTYLAB_Q_GRID = env.list('PENALTYLAB_Q_GRID', cast=float, default=[1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 8.0, float('inf')])

# Monte Carlo desk-scale defaults
PENALTYLAB_SIM_REPS = env.int('PENALTYLAB_SIM_REPS', default=200)
PENALTYLAB_SIM_BOOT_DRAWS = env.int('PENALTYLAB_SIM_BOOT_DRAWS', default=500)
PENALTYLAB_SIM_N = env.int('PENALTYLAB_SIM_N', default=100)
PENALTYLAB_SIM_RHO_GRID = env.list('PENALTYLAB_SIM_RHO_GRID', cast=float, default=[0.0, 0.3, 0.6])
PENALTYLAB_SIM_METHODS = env.list('PENALTYLAB_SIM_METHODS', default=['am', 'bam', 'bcv', 'cv', 'vdg16', 'oracle', 'zeros'])

PENALTYLAB_OUTPUT_DIR = env('PENALTYLAB_OUTPUT_DIR', default='output')

PENALTYLAB_VERSION = '1.0.0'


LOG_DIR = BASE_DIR / 'logs'
os.makedirs(LOG_DIR, exist_ok=True)

LOG_LEVEL = env('PENALTYLAB_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {asctime} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
            'level': 'WARNING',
        },
        'rotating_file': {
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOG_DIR / 'penaltylab.log',
            'maxBytes': 10*1024*1024,  # 10MB
            'backupCount': 5,
            'formatter': 'verbose',
        },
        'celery_file': {
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOG_DIR / 'celery.log',
            'maxBytes': 10*1024*1024,  # 10MB
            'backupCount': 5,
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'estimation': {
            'handlers': ['console', 'rotating_file'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'simlab': {
            'handlers': ['console', 'rotating_file'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'simlab.tasks': {
            'handlers': ['console', 'rotating_file', 'celery_file'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'cli': {
            'handlers': ['console', 'rotating_file'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'celery': {
            'handlers': ['console', 'celery_file'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}
