from django.apps import AppConfig


class SignalConfig(AppConfig):
    verbose_name = 'Signal simulation'
    name = 'apps.signal'
