import os

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


# The pipeline serves no requests; the key only satisfies Django's checks.
SECRET_KEY = os.environ.get('INSIGHT_SECRET_KEY', 'insight3d-offline-pipeline')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',

    'insight3d',
]

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Database: the normalized detection / instance store

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get(
            'INSIGHT_DB', os.path.join(BASE_DIR, 'insight.sqlite3')
        ),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging

LOG_LEVEL = os.environ.get('INSIGHT_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'pipeline': {
            'format': '%(asctime)s %(levelname)-7s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'pipeline',
        },
    },
    'loggers': {
        'insight3d': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Pipeline configuration; see insight3d/conf.py for the keys and defaults.
# A JSON file named by INSIGHT_CONFIG (or passed with --config) wins over
# anything set here.

INSIGHT = {
    'config': os.environ.get('INSIGHT_CONFIG') or None,
}
