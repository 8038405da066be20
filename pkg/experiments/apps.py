from django.apps import AppConfig


class ExperimentsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'experiments'

    # Register signal receivers
    def ready(self):
        import experiments.signals  # noqa: F401
