"""Exception hierarchy shared across the pipeline.

Every error the pipeline raises deliberately derives from PipelineError so the
CLI can turn any of them into a machine-readable error record with a stable
name.
"""


class PipelineError(Exception):
    """Base class for all deliberate pipeline errors."""


# --- backend ---------------------------------------------------------------

class BackendError(PipelineError):
    """Base class for text-completion backend failures."""


class AuthError(BackendError):
    """Credential missing or rejected before/at the provider."""


class RateLimited(BackendError):
    """Transient failures persisted past the retry budget."""


class MalformedResponse(BackendError):
    """Provider payload could not be parsed into a completion."""


# --- corpus ----------------------------------------------------------------

class EmptyCorpus(PipelineError):
    """No files matched the corpus glob."""


class BadParams(PipelineError):
    """Chunking parameters violate chunk_tokens > overlap_tokens >= 0."""


# --- graph -----------------------------------------------------------------

class ExtractionParseError(PipelineError):
    """A remote extraction reply contained zero parsable tuples."""


class EmptyGraph(PipelineError):
    """Operation requires at least one weighted relation."""


# --- dataset ---------------------------------------------------------------

class EmptyDataset(PipelineError):
    """Zero pairs survived assembly."""


class BadOverride(PipelineError):
    """Training-config override failed validation."""


# --- judge -----------------------------------------------------------------

class MissingItem(PipelineError):
    """A verdict references a query_id with no eval item."""


class KeyMismatch(PipelineError):
    """Judge and human winner maps cover different query ids."""


class UnparsableVerdict(PipelineError):
    """Judge reply carried no decodable winner line."""


# --- cli -------------------------------------------------------------------

class MissingArtifact(PipelineError):
    """An upstream artifact file required by this command is absent."""


class ConfigMismatch(PipelineError):
    """An upstream artifact was produced under a different config hash."""
