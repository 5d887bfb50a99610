"""
Process-level settings for the mean-field flow laboratory.

Values come from the environment (or a .env file next to the repository root)
so that run configurations stay free of machine-specific details.
"""

import logging.config
from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Worker threads for FFTs, independent Green solves and epsilon scans
THREADS = config('KWLAB_THREADS', default=1, cast=int)

# Default grid resolution when a run configuration does not name one
DEFAULT_N = config('KWLAB_DEFAULT_N', default=128, cast=int)

# Where run artifacts go unless the configuration says otherwise
OUTPUT_DIR = Path(config('KWLAB_OUTPUT_DIR', default='runs'))

LOG_LEVEL = config('KWLAB_LOG_LEVEL', default='INFO')
LOG_FILE = config('KWLAB_LOG_FILE', default='')

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
            'stream': 'ext://sys.stderr',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': True,
        },
        'meanfield_lab': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': True,
        },
    },
}

if LOG_FILE:
    LOGGING['handlers']['file'] = {
        'level': 'INFO',
        'class': 'logging.FileHandler',
        'filename': LOG_FILE,
        'formatter': 'verbose',
    }
    for logger_config in LOGGING['loggers'].values():
        logger_config['handlers'].append('file')


def configure_logging():
    """Install the LOGGING dictConfig; called once by the command-line entry point."""
    logging.config.dictConfig(LOGGING)
