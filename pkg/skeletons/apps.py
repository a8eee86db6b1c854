from django.apps import AppConfig


class SkeletonsConfig(AppConfig):
    name = 'skeletons'
    verbose_name = 'Skeleton model, renderer and camera geometry'
