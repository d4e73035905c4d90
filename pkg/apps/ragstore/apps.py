from django.apps import AppConfig


class RagstoreConfig(AppConfig):
    verbose_name = 'Retrieval store'
    name = 'apps.ragstore'
