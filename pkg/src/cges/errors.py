"""Exception types shared across the package."""


class CGESError(Exception):
    """Base class for all errors raised by this library."""


class ConfigurationError(CGESError, ValueError):
    """A config value or combination of values is unusable."""


class CandidateCountError(CGESError, ValueError):
    """Effective candidate count is below 2 or a fixed K cannot hold the observed labels."""


class EmptySamplesError(CGESError, ValueError):
    """An operation that needs at least one sample received none."""


class EmptyResponseError(CGESError, ValueError):
    """A tokenized response carries no tokens."""


class ContradictoryHypothesesError(CGESError, ValueError):
    """A sample cannot match two distinct hypotheses at once."""


class UnknownLabelError(CGESError, ValueError):
    """A sample label is missing from a fixed candidate set."""


class InvalidScoreError(CGESError, ValueError):
    """A reward score is not a finite number."""


class SamplerError(CGESError, RuntimeError):
    """Sampling a response failed definitively (retries exhausted or record unusable)."""


class ReplayMissError(CGESError, LookupError):
    """A replay store has no record for the requested (question, round) key."""


class DuplicateRecordError(CGESError, ValueError):
    """A record store already holds a record for this (question, round) key."""


class KeyMismatchError(CGESError, ValueError):
    """Prediction and gold maps do not cover the same question ids."""
