import logging

from django.dispatch import Signal, receiver

logger = logging.getLogger(__name__)

# sent once per finished trial with record=<TrialRecord>
trial_completed = Signal()


@receiver(trial_completed)
def log_trial(sender, record, **kwargs):
    logger.info(
        "trial %d: k=%d n=%d error=%.4f inv_signal=%.4g%s",
        record.trial_id, record.k, record.n, record.matching_error,
        record.inverse_signal_strength, ' (exhausted)' if record.exhausted else '',
    )
