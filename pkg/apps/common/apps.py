from django.apps import AppConfig


class CommonConfig(AppConfig):
    verbose_name = 'Common'
    name = 'apps.common'
