"""
WSGI config for radiobench project.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'radiobench.settings')

application = get_wsgi_application()