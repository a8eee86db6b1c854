from django.apps import AppConfig


class PriorsConfig(AppConfig):
    name = 'priors'
    verbose_name = '2D pose prior (PCA + normalizing flow)'
