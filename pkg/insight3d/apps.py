from django.apps import AppConfig


class InsightConfig(AppConfig):
    name = 'insight3d'
    verbose_name = 'INSIGHT 3D back end'
    default_auto_field = 'django.db.models.BigAutoField'
