from django.apps import AppConfig


class WaterfillConfig(AppConfig):
    verbose_name = 'Water-filling'
    name = 'apps.waterfill'
