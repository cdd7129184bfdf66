"""Exception types shared across the package."""

from __future__ import annotations


class ClaimCheckError(Exception):
    """Base class for every error raised by this package."""


# --- corpus / index ---------------------------------------------------------


class DocNotFoundError(ClaimCheckError, KeyError):
    """A doc_id was requested that the corpus does not contain."""


class EmptyCorpusError(ClaimCheckError):
    """An index build was attempted over a corpus with no documents."""


class VersionMismatchError(ClaimCheckError):
    """A persisted directory declares a format version this code does not read."""


class CorruptIndexError(ClaimCheckError):
    """A persisted corpus or index directory is missing files or unparseable."""


# --- entity extraction ------------------------------------------------------


class ExtractorUnavailableError(ClaimCheckError):
    """The remote entity extractor could not be reached or answered abnormally."""


# --- LLM backends -----------------------------------------------------------


class TransientBackendError(ClaimCheckError):
    """A backend failure worth retrying: timeout, 429, or a 5xx response."""


class PermanentBackendError(ClaimCheckError):
    """A backend failure retries cannot fix, e.g. a 400/401 response."""


class BackendExhaustedError(ClaimCheckError):
    """Every allowed attempt against the backend failed transiently."""


class BackendRejectedError(ClaimCheckError):
    """The backend rejected the request in a way retries cannot fix."""


class ConfigError(ClaimCheckError):
    """A config value is missing, out of range, or inconsistent."""


class ParseFailureError(ClaimCheckError):
    """A model response did not contain the structure a stage demanded.

    ``reason`` is one of: "no-json", "bad-label", "confidence-out-of-range",
    "missing-field".
    """

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason


class VerdictUnparseableError(ClaimCheckError):
    """The verifier's response stayed unparseable after the re-prompt."""


class CalibrationUnparseableError(ClaimCheckError):
    """The calibrator's response stayed unparseable after the re-prompt."""


class JudgeUnparseableError(ClaimCheckError):
    """A judge response for one quality dimension stayed unparseable."""


# --- evaluation -------------------------------------------------------------


class MissingGoldError(ClaimCheckError):
    """A prediction refers to a claim_id with no gold label."""
