from django.apps import AppConfig


class DetectorConfig(AppConfig):
    verbose_name = 'Energy detector'
    name = 'apps.detector'
