from django.apps import AppConfig


class PromptingConfig(AppConfig):
    verbose_name = 'Prompting'
    name = 'apps.prompting'
