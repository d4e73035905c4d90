from django.apps import AppConfig


class LlmConfig(AppConfig):
    verbose_name = 'Chat backends'
    name = 'apps.llm'
