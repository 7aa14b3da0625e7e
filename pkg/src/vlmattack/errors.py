"""Exception types shared across the toolkit."""


class VlmAttackError(Exception):
    """Base class for all vlmattack errors."""


class ConfigError(VlmAttackError):
    """Invalid configuration; the message names the offending field."""


class DivergenceError(VlmAttackError):
    """A surrogate loss returned a non-finite value during optimization."""

    def __init__(self, message, iteration=None, surrogate_id=None):
        super().__init__(message)
        self.iteration = iteration
        self.surrogate_id = surrogate_id


class UnsupportedSurrogateError(VlmAttackError):
    """An adapter does not expose the interface an objective requires."""


class RegistryError(VlmAttackError):
    """Unknown surrogate id or malformed registry entry."""


class SurrogateLoadError(VlmAttackError):
    """Weights locator could not be resolved or loaded."""


class IngestionError(VlmAttackError):
    """Dataset missing or not in the documented layout."""


class PendingVerdictError(VlmAttackError):
    """Metrics were requested over records that still await adjudication."""

    def __init__(self, record_ids):
        ids = list(record_ids)
        super().__init__(
            "records with pending verdicts: %s" % ", ".join(ids)
        )
        self.record_ids = ids


class ManifestError(VlmAttackError):
    """Review manifest is malformed or references unknown records."""


class TargetError(VlmAttackError):
    """Base class for black-box target client failures."""


class TargetAuthError(TargetError):
    """Credentials missing or refused by the target."""


class TargetRateLimitError(TargetError):
    """Rate limit still exhausted after bounded retries."""


class TargetTransportError(TargetError):
    """Transport failure persisted after bounded retries."""
