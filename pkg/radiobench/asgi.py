"""
ASGI config for radiobench project.
"""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'radiobench.settings')

application = get_asgi_application()