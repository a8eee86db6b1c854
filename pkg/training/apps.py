from django.apps import AppConfig


class TrainingConfig(AppConfig):
    name = 'training'
    verbose_name = 'Self-supervised lifting networks and training'

    def ready(self):
        import training.signals  # noqa: F401
