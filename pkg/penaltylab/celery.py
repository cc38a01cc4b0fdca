# penaltylab/celery.py
import os

from celery import Celery
from celery.signals import setup_logging

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'penaltylab.settings')

app = Celery('penaltylab')
app.config_from_object('django.conf:settings', namespace='CELERY')
app.autodiscover_tasks()

# One replication can run for minutes: hand them out one at a time and
# only acknowledge once the row dict is back.
app.conf.worker_prefetch_multiplier = 1
app.conf.task_acks_late = True


@setup_logging.connect
def configure_worker_logging(*args, **kwargs):
    """Workers log through settings.LOGGING (logs/celery.log for simlab.tasks)."""
    import logging.config

    from django.conf import settings

    logging.config.dictConfig(settings.LOGGING)
