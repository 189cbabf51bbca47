"""Exception types shared across the package."""


class LipviError(Exception):
    """Base class for all lipvi errors."""


class DimensionMismatch(LipviError):
    pass


class EmptyInput(LipviError):
    pass


class FeatureLookupMiss(LipviError):
    """A feature-table metric was queried at an unknown point with fallback disabled."""


class InvalidGamma(LipviError):
    pass


class IndexOutOfRange(LipviError):
    pass


class LengthMismatch(LipviError):
    pass


class EmptySubset(LipviError):
    pass


class EtaExhausted(LipviError):
    """Diagnosis still rejects after the configured number of escalations.

    The partially filled report (diagnosis == "exhausted") is attached so
    callers can still persist it; no interval is asserted.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DuplicateConflict(LipviError):
    """Two rows share a state-action point but disagree on the labelled value."""


class TooFewRows(LipviError):
    pass


class ContractionViolated(LipviError):
    """The propagation formula's contraction hypothesis fails."""


class SeparabilityRequired(LipviError):
    """The active metric does not assert separability, so propagation refuses."""


class InstanceTooLarge(LipviError):
    pass


class Infeasible(LipviError):
    pass


class Unbounded(LipviError):
    pass


class ZeroBehaviorDensity(LipviError):
    pass


class InvalidDelta(LipviError):
    pass
