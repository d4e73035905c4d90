"""
Django settings for radiobench project.
"""
import os
from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-radiobench-local-key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1').split(',')

# Application definition
DJANGO_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.staticfiles',
]

THIRD_PARTY_APPS = [
    'rest_framework',
    'drf_spectacular',
]

LOCAL_APPS = [
    'apps.common',
    'apps.signal',
    'apps.detector',
    'apps.waterfill',
    'apps.prompting',
    'apps.ragstore',
    'apps.llm',
    'apps.harness',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'radiobench.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
            ],
        },
    },
]

WSGI_APPLICATION = 'radiobench.wsgi.application'

# Database (nothing is persisted in it; Django only needs a configured default)
DATABASES = {
    'default': {
        'ENGINE': config('DB_ENGINE', default='django.db.backends.sqlite3'),
        'NAME': config('DB_NAME', default=str(BASE_DIR / 'radiobench.sqlite3')),
    }
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

# Static files
STATIC_URL = '/static/'
STATIC_ROOT = os.path.join(BASE_DIR, 'staticfiles')

# Django REST Framework settings
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'EXCEPTION_HANDLER': 'apps.common.exceptions.toolkit_exception_handler',
    'DEFAULT_SCHEMA_CLASS': 'drf_spectacular.openapi.AutoSchema',
}

# Spectacular settings for API documentation
SPECTACULAR_SETTINGS = {
    'TITLE': 'radiobench API',
    'DESCRIPTION': 'Spectrum sensing, water-filling and protocol QA toolkit',
    'VERSION': '1.0.0',
    'SERVE_INCLUDE_SCHEMA': False,
    'COMPONENT_SPLIT_REQUEST': True,
}

# In-process cache, holds loaded retrieval indexes for the REST endpoint
CACHES = {
    'default': {
        'BACKEND': 'django.core.cache.backends.locmem.LocMemCache',
        'LOCATION': 'radiobench',
    }
}

CACHE_TTL = config('CACHE_TTL', default=3600, cast=int)

# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {message}',
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
        'apps': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Spectrum sensing defaults
RADIOBENCH_SENSING = {
    'STRIDE': config('SENSING_STRIDE', default=5, cast=int),
    'PRECISION_DIGITS': config('SENSING_PRECISION_DIGITS', default=4, cast=int),
    'MC_BATCH_SIZE': config('SENSING_MC_BATCH_SIZE', default=8192, cast=int),
    'MC_WORKERS': config('SENSING_MC_WORKERS', default=1, cast=int),
}

# Retrieval defaults
RADIOBENCH_RAG = {
    'CHUNK_TOKENS': config('RAG_CHUNK_TOKENS', default=256, cast=int),
    'OVERLAP_TOKENS': config('RAG_OVERLAP_TOKENS', default=64, cast=int),
    'TOP_K': config('RAG_TOP_K', default=5, cast=int),
    'BM25_K1': config('RAG_BM25_K1', default=1.2, cast=float),
    'BM25_B': config('RAG_BM25_B', default=0.75, cast=float),
    'INDEX_PATH': config('RAG_INDEX_PATH', default=''),
}

# Chat-completion backend defaults. Only the *name* of the credential variable lives here.
RADIOBENCH_LLM = {
    'BACKEND': config('LLM_BACKEND', default='oracle-sensing'),
    'ENDPOINT_URL': config('LLM_ENDPOINT_URL', default='https://api.openai.com/v1/chat/completions'),
    'MODEL_NAME': config('LLM_MODEL_NAME', default='gpt-4'),
    'AUTH_TOKEN_ENV': config('LLM_AUTH_TOKEN_ENV', default='RADIOBENCH_LLM_TOKEN'),
    'TEMPERATURE': config('LLM_TEMPERATURE', default=0.0, cast=float),
    'MAX_TOKENS': config('LLM_MAX_TOKENS', default=512, cast=int),
    'TIMEOUT_MS': config('LLM_TIMEOUT_MS', default=60000, cast=int),
    'MAX_RETRIES': config('LLM_MAX_RETRIES', default=3, cast=int),
    'BACKOFF_BASE_MS': config('LLM_BACKOFF_BASE_MS', default=500, cast=int),
    'CONCURRENCY_LIMIT': config('LLM_CONCURRENCY_LIMIT', default=4, cast=int),
}

# Water-filling validator tolerance
RADIOBENCH_WATERFILL_TOL = config('WATERFILL_TOL', default=1e-8, cast=float)
