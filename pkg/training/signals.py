"""Per-step training notifications.

``step_completed`` is sent after every training step with the step's metrics ``record``
and, when the run writes one, the ``metrics_path`` of its JSON-lines log.
"""
import json
import logging
from pathlib import Path

from django.dispatch import Signal, receiver

logger = logging.getLogger(__name__)

step_completed = Signal()


@receiver(step_completed, dispatch_uid='training.append_metrics_record')
def append_metrics_record(sender, record, metrics_path=None, **kwargs):
    if metrics_path is None:
        return
    path = Path(metrics_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('a') as handle:
        handle.write(json.dumps(record, sort_keys=True) + '\n')


@receiver(step_completed, dispatch_uid='training.log_validation')
def log_validation(sender, record, **kwargs):
    if record.get('validation_p_mpjpe') is not None:
        logger.info('step %d: validation P-MPJPE %.3f', record['step'], record['validation_p_mpjpe'])
