# simlab/tasks.py
import logging

from celery import shared_task

from simlab.runner import execute_job

logger = logging.getLogger(__name__)


@shared_task(bind=True, name="simlab.run_replication")
def run_replication(self, job):
    """Celery task computing one Monte Carlo replication; returns the row dict."""
    logger.info(f"Task {self.request.id}: replication {job['replication']} at rho={job['design']['rho']}")
    out = execute_job(job)
    if 'error' in out:
        logger.warning(f"Task {self.request.id}: replication {job['replication']} failed: {out['error']}")
    else:
        logger.debug(f"Task {self.request.id}: {len(out['rows'])} method rows")
    return out
