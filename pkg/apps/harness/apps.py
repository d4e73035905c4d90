from django.apps import AppConfig


class HarnessConfig(AppConfig):
    verbose_name = 'Experiment harness'
    name = 'apps.harness'
